#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tubeh/lab.hpp"

using namespace tubeh;

namespace {

struct Options {
    Index n = 16;
    double eps = 1.0;
    std::string field = "const";
    std::string bc = "dirichlet";
    std::string clustering = "tube";
    double eta = 1.0;
    double tol = 1e-6;
    Index nmin = 0;
    double delta = 0.0;
    double band_delta = 0.25;
    std::string out;
    std::string json_tree;
    std::uint64_t seed = 42;
    // bench: sweep axes the user pinned on the command line
    bool pin_eps = false, pin_field = false, pin_bc = false, pin_clustering = false;
};

void add_common(CLI::App* sub, Options& o) {
    sub->add_option("--n", o.n, "cells per side")->check(CLI::PositiveNumber);
    sub->add_option("--eps", o.eps, "diffusion coefficient")->check(CLI::PositiveNumber);
    sub->add_option("--field", o.field, "convection field")->check(CLI::IsMember({"const", "cos", "exp"}));
    sub->add_option("--bc", o.bc, "boundary condition")->check(CLI::IsMember({"dirichlet", "neumann"}));
    sub->add_option("--clustering", o.clustering, "cluster tree")->check(CLI::IsMember({"tube", "geometric"}));
    sub->add_option("--eta", o.eta, "admissibility parameter")->check(CLI::PositiveNumber);
    sub->add_option("--tol", o.tol, "relative compression tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--nmin", o.nmin, "leaf size (default from the mesh size)")->check(CLI::PositiveNumber);
    sub->add_option("--delta", o.delta, "streamline tracing step (default h/2)")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "output path");
    sub->add_option("--json-tree", o.json_tree, "write the cluster tree as JSON");
    sub->add_option("--seed", o.seed, "seed for random test vectors");
}

CellConfig cell_config(const Options& o) {
    CellConfig c;
    c.n = o.n;
    c.epsilon = o.eps;
    c.field = *parse_field(o.field);
    c.bc = *parse_bc(o.bc);
    c.clustering = *parse_clustering(o.clustering);
    c.eta = o.eta;
    c.tol = o.tol;
    c.nmin = o.nmin;
    c.delta = o.delta;
    c.seed = o.seed;
    return c;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f)
        throw std::invalid_argument("cannot open " + path);
    return f;
}

void dump_tree(const Options& o, const ClusterTree& tree) {
    if (o.json_tree.empty())
        return;
    std::ofstream f = open_out(o.json_tree);
    write_tree_json(f, tree);
}

int cmd_mesh(const Options& o) {
    const Mesh m = build_structured_mesh(o.n);
    if (o.out.empty()) {
        write_mesh(std::cout, m);
    } else {
        std::ofstream f = open_out(o.out);
        write_mesh(f, m);
    }
    std::cerr << "vertices " << m.vertices.size() << " triangles " << m.triangles.size() << '\n';
    return 0;
}

int cmd_assemble(const Options& o) {
    const CellConfig c = cell_config(o);
    ProblemSpec spec;
    spec.epsilon = c.epsilon;
    spec.field = c.field;
    spec.bc = c.bc;
    const SparseSystem s = assemble(build_structured_mesh(c.n), spec);
    std::cout << "N " << s.n_dof() << "\nnnz " << s.A.nnz() << '\n';
    if (!o.out.empty()) {
        std::ofstream f = open_out(o.out);
        write_coordinate(f, s.A);
    }
    return 0;
}

void print_record(const ExperimentRecord& r) {
    std::cout << "N " << r.N << "\nt_tree_s " << r.t_tree << "\nt_compress_s " << r.t_compress << "\nt_lu_s "
              << r.t_lu << "\ncompression " << r.compression << "\nerr " << r.err << '\n';
    if (r.unconverged_blocks > 0)
        std::cout << "unconverged_blocks " << r.unconverged_blocks << '\n';
}

int cmd_factor(const Options& o) {
    const CellConfig c = cell_config(o);
    Factorization f = factorize(c);
    f.record.err = max_solve_error(*f.lu, f.permuted.A, c.err_samples, c.seed);
    dump_tree(o, *f.partition.tree);
    print_record(f.record);
    if (!o.out.empty()) {
        std::ofstream out = open_out(o.out);
        write_structure_json(out, f.lu->packed());
    }
    return 0;
}

int cmd_solve(const Options& o) {
    const CellConfig c = cell_config(o);
    Factorization f = factorize(c);
    dump_tree(o, *f.partition.tree);

    const std::vector<double> load = assemble_rhs(f.mesh, c.bc);
    const ClusterTree& tree = *f.partition.tree;
    std::vector<double> b(load.size());
    for (std::size_t p = 0; p < b.size(); ++p)
        b[p] = load[static_cast<std::size_t>(tree.dof_at[p])];
    const std::vector<double> xp = h_lu_solve(*f.lu, b);

    const std::vector<double> r = f.permuted.A.multiply(xp);
    double res = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i)
        res += (r[i] - b[i]) * (r[i] - b[i]);
    std::cout << "N " << xp.size() << "\nresidual " << std::sqrt(res) / norm2(b) << "\nmax_u "
              << *std::max_element(xp.begin(), xp.end()) << '\n';

    if (!o.out.empty()) {
        std::ofstream out = open_out(o.out);
        out << std::setprecision(17);
        for (std::size_t p = 0; p < xp.size(); ++p) {
            const Point2& q = f.permuted.dof_points[p];
            out << q.x << ' ' << q.y << ' ' << xp[p] << '\n';
        }
    }
    return 0;
}

int cmd_rankstudy(const Options& o) {
    const CellConfig c = cell_config(o);
    const auto rows = rank_study(c, kEpsilonSweep);
    std::ofstream file;
    std::ostream* os = &std::cout;
    if (!o.out.empty()) {
        file = open_out(o.out);
        os = &file;
    }
    *os << "eps,clustering,row_begin,row_end,col_begin,col_end,gap,rank\n";
    for (const RankStudyRow& r : rows)
        *os << r.epsilon << ',' << to_string(r.clustering) << ',' << r.row_begin << ',' << r.row_end << ','
            << r.col_begin << ',' << r.col_end << ',' << r.gap << ',' << r.rank << '\n';
    return 0;
}

int cmd_poincare(const Options& o) {
    const Mesh m = build_structured_mesh(o.n);
    struct Case {
        const char* name;
        double (*f)(double, double);
    };
    const std::vector<Case> corpus{
        {"one", [](double, double) { return 1.0; }},
        {"x", [](double x, double) { return x; }},
        {"x+2y", [](double x, double y) { return x + 2.0 * y; }},
        {"sin", [](double x, double y) { return std::sin(std::numbers::pi * x) * std::sin(std::numbers::pi * y); }},
    };
    const BoundingBox region{0.0, 1.0, 0.0, 1.0};
    std::cout << "u,ell,lhs,rhs,holds\n";
    bool all = true;
    for (const Case& cs : corpus) {
        std::vector<double> u(m.vertices.size());
        for (std::size_t v = 0; v < u.size(); ++v)
            u[v] = cs.f(m.vertices[v].x, m.vertices[v].y);
        for (int ell : {1, 2, 4}) {
            const PoincareResult r = poincare_oracle(m, u, region, ell);
            const bool holds = r.lhs <= r.rhs;
            all = all && holds;
            std::cout << cs.name << ',' << ell << ',' << r.lhs << ',' << r.rhs << ',' << (holds ? "yes" : "no")
                      << '\n';
        }
    }
    return all ? 0 : 2;
}

int cmd_caccioppoli(const Options& o) {
    CaccioppoliConfig cfg;
    cfg.n = o.n;
    cfg.field = *parse_field(o.field);
    cfg.bc = *parse_bc(o.bc);
    cfg.band_delta = o.band_delta;
    cfg.trace_delta = o.delta;
    const auto ratios = caccioppoli_check(cfg, kEpsilonSweep);
    std::cout << "eps,ratio,relative\n";
    for (std::size_t i = 0; i < ratios.size(); ++i)
        std::cout << kEpsilonSweep[i] << ',' << ratios[i] << ',' << ratios[i] / ratios[0] << '\n';
    return 0;
}

int cmd_bench(const Options& o) {
    BenchConfig cfg;
    cfg.base = cell_config(o);
    cfg.sizes = {o.n};
    if (o.pin_eps)
        cfg.epsilons = {cfg.base.epsilon};
    if (o.pin_field)
        cfg.fields = {cfg.base.field};
    if (o.pin_bc)
        cfg.bcs = {cfg.base.bc};
    if (o.pin_clustering)
        cfg.clusterings = {cfg.base.clustering};
    std::ofstream file;
    std::ostream* os = &std::cout;
    if (!o.out.empty()) {
        file = open_out(o.out);
        os = &file;
    }
    const auto records = bench(cfg, os);
    int failed = 0;
    for (const ExperimentRecord& r : records)
        if (!r.failure.empty()) {
            ++failed;
            std::cerr << "cell N=" << r.N << " eps=" << r.epsilon << ' ' << to_string(r.field) << ' '
                      << to_string(r.bc) << ' ' << to_string(r.clustering) << ": " << r.failure << '\n';
        }
    return failed > 0 ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical LU for convection-dominated problems"};
    app.require_subcommand(1);
    Options o;

    struct Sub {
        const char* name;
        const char* help;
        int (*run)(const Options&);
    };
    const std::vector<Sub> subs{
        {"mesh", "write the structured mesh", cmd_mesh},
        {"assemble", "assemble the sparse system", cmd_assemble},
        {"factor", "build and factor the H-matrix; print compression and err", cmd_factor},
        {"solve", "solve the model problem with the H-LU factors", cmd_solve},
        {"rankstudy", "ranks of inverse blocks over the epsilon sweep", cmd_rankstudy},
        {"poincare", "piecewise-constant approximation oracle", cmd_poincare},
        {"caccioppoli", "interior gradient estimate over the epsilon sweep", cmd_caccioppoli},
        {"bench", "epsilon, field, boundary and clustering sweep as CSV", cmd_bench},
    };
    std::vector<CLI::App*> handles;
    for (const Sub& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        add_common(sub, o);
        handles.push_back(sub);
    }
    handles[6]->add_option("--band-delta", o.band_delta, "transverse inflation of the band")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    CLI::App* b = handles[7];
    o.pin_eps = b->count("--eps") > 0;
    o.pin_field = b->count("--field") > 0;
    o.pin_bc = b->count("--bc") > 0;
    o.pin_clustering = b->count("--clustering") > 0;

    try {
        for (std::size_t i = 0; i < subs.size(); ++i)
            if (handles[i]->parsed())
                return subs[i].run(o);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
