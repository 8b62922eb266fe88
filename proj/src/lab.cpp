#include "tubeh/lab.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>

namespace tubeh {

DenseMatrix dense_inverse(const CsrMatrix& a) {
    if (a.rows != a.cols)
        throw std::invalid_argument("dense_inverse: matrix is not square");
    if (a.rows > kDenseGuard)
        throw std::invalid_argument("dense_inverse: " + std::to_string(a.rows) + " rows exceed the dense guard");
    const Index n = a.rows;
    const PivotedLU f = dense_lu(a.to_dense());
    DenseMatrix x(n, n);
    for (Index i = 0; i < n; ++i)
        x(i, f.perm[static_cast<std::size_t>(i)]) = 1.0;
    solve_unit_lower(f.lu.view(), x.view());
    solve_upper(f.lu.view(), x.view());
    return x;
}

DenseMatrix dense_inverse(const SparseSystem& s) { return dense_inverse(s.A); }

//
// pipeline
//

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Index dof_count(Index n, BoundaryCondition bc) {
    const Index side = bc == BoundaryCondition::Dirichlet ? n - 1 : n + 1;
    return side * side;
}

std::vector<double> transverse_coordinates(const std::vector<Point2>& points, FieldId field, double delta) {
    if (field == FieldId::Const) {
        std::vector<double> s(points.size());
        std::transform(points.begin(), points.end(), s.begin(), [](const Point2& p) { return p.y; });
        return s;
    }
    return project_all(points, field, delta);
}

}  // namespace

Partition build_partition(const SparseSystem& s, const CellConfig& cfg) {
    const double h = 2.0 / static_cast<double>(cfg.n);
    const double delta = cfg.delta > 0.0 ? cfg.delta : 0.5 * h;
    const Index nmin = cfg.nmin > 0 ? cfg.nmin : default_nmin(cfg.n, cfg.bc);

    Partition p;
    if (cfg.clustering == TreeKind::Tube) {
        p.transverse = transverse_coordinates(s.dof_points, cfg.field, delta);
        std::vector<double> along(s.dof_points.size());
        std::transform(s.dof_points.begin(), s.dof_points.end(), along.begin(),
                       [](const Point2& q) { return q.x; });
        p.tree = std::make_unique<ClusterTree>(build_tube_tree(s.dof_points, p.transverse, along, nmin));
        p.pad = transverse_support_pad(s.A, p.transverse);
        p.blocks = build_block_tree(*p.tree, *p.tree, cfg.eta, AdmissibilityMetric::Transverse, p.pad);
    } else {
        p.tree = std::make_unique<ClusterTree>(build_geometric_tree(s.dof_points, nmin));
        p.pad = spatial_support_pad(s.A, s.dof_points);
        p.blocks = build_block_tree(*p.tree, *p.tree, cfg.eta, AdmissibilityMetric::FullSpace, p.pad);
    }
    return p;
}

Factorization factorize(const CellConfig& cfg) {
    Factorization f;
    ExperimentRecord& r = f.record;
    r.N = dof_count(cfg.n, cfg.bc);
    r.epsilon = cfg.epsilon;
    r.field = cfg.field;
    r.bc = cfg.bc;
    r.clustering = cfg.clustering;

    f.mesh = build_structured_mesh(cfg.n);
    ProblemSpec spec;
    spec.epsilon = cfg.epsilon;
    spec.field = cfg.field;
    spec.bc = cfg.bc;
    f.original = assemble(f.mesh, spec);
    r.N = f.original.n_dof();

    auto t0 = Clock::now();
    f.partition = build_partition(f.original, cfg);
    f.permuted = permute_system(f.original, *f.partition.tree);
    r.t_tree = seconds_since(t0);

    t0 = Clock::now();
    HMatrix h = from_sparse(f.permuted.A, f.partition.blocks, cfg.tol);
    r.t_compress = seconds_since(t0);
    r.unconverged_blocks = h.unconverged_blocks;

    t0 = Clock::now();
    f.lu.emplace(h_lu(std::move(h)));
    r.t_lu = seconds_since(t0);
    r.compression = compression(f.lu->packed());
    return f;
}

double max_solve_error(const HLUFactors& f, const CsrMatrix& a, int samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<double> x(static_cast<std::size_t>(a.rows));
    double worst = 0.0;
    for (int k = 0; k < samples; ++k) {
        for (double& v : x)
            v = normal(rng);
        const double nx = norm2(x);
        for (double& v : x)
            v /= nx;
        worst = std::max(worst, err_metric(f, a, x));
    }
    return worst;
}

ExperimentRecord run_cell(const CellConfig& cfg) {
    try {
        Factorization f = factorize(cfg);
        f.record.err = max_solve_error(*f.lu, f.permuted.A, cfg.err_samples, cfg.seed);
        if (!std::isfinite(f.record.err))
            throw NumericalError("run_cell: non-finite solve error");
        return f.record;
    } catch (const std::exception& e) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        ExperimentRecord r;
        r.N = cfg.n >= 1 ? dof_count(cfg.n, cfg.bc) : 0;
        r.epsilon = cfg.epsilon;
        r.field = cfg.field;
        r.bc = cfg.bc;
        r.clustering = cfg.clustering;
        r.t_tree = r.t_compress = r.t_lu = nan;
        r.compression = r.err = nan;
        r.failure = e.what();
        return r;
    }
}

namespace {

std::string shortest(double v) {
    if (std::isnan(v))
        return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

void write_csv_row(std::ostream& os, const ExperimentRecord& r) {
    os << r.N << ',' << shortest(r.epsilon) << ',' << to_string(r.field) << ',' << to_string(r.bc) << ','
       << to_string(r.clustering) << ',' << shortest(r.t_tree) << ',' << shortest(r.t_compress) << ','
       << shortest(r.t_lu) << ',' << shortest(r.compression) << ',' << shortest(r.err) << '\n';
}

std::vector<ExperimentRecord> bench(const BenchConfig& cfg, std::ostream* csv) {
    std::vector<ExperimentRecord> out;
    if (csv)
        *csv << kCsvHeader << '\n';
    for (Index n : cfg.sizes)
        for (BoundaryCondition bc : cfg.bcs)
            for (FieldId field : cfg.fields)
                for (TreeKind kind : cfg.clusterings)
                    for (double eps : cfg.epsilons) {
                        CellConfig c = cfg.base;
                        c.n = n;
                        c.epsilon = eps;
                        c.field = field;
                        c.bc = bc;
                        c.clustering = kind;
                        out.push_back(run_cell(c));
                        if (csv) {
                            write_csv_row(*csv, out.back());
                            csv->flush();
                        }
                    }
    return out;
}

//
// rank study
//

std::vector<Index> shallowest_admissible_leaves(const BlockTree& bt) {
    Index best = std::numeric_limits<Index>::max();
    for (const BlockNode& b : bt.nodes)
        if (b.kind == BlockKind::LowRank)
            best = std::min(best, b.depth);
    std::vector<Index> out;
    for (std::size_t i = 0; i < bt.nodes.size(); ++i)
        if (bt.nodes[i].kind == BlockKind::LowRank && bt.nodes[i].depth == best)
            out.push_back(static_cast<Index>(i));
    return out;
}

std::vector<RankStudyRow> rank_study(const DenseMatrix& ainv, const Partition& part, double epsilon,
                                     double tol) {
    const ClusterTree& tree = *part.tree;
    if (ainv.rows() != tree.size() || ainv.cols() != tree.size())
        throw std::invalid_argument("rank_study: inverse and tree sizes differ");
    std::vector<RankStudyRow> rows;
    for (Index id : shallowest_admissible_leaves(part.blocks)) {
        const BlockNode& b = part.blocks.node(id);
        const ClusterNode& r = tree.node(b.row);
        const ClusterNode& c = tree.node(b.col);
        DenseMatrix sub(r.size(), c.size());
        for (Index i = 0; i < r.size(); ++i)
            for (Index j = 0; j < c.size(); ++j)
                sub(i, j) = ainv(tree.dof_at[static_cast<std::size_t>(r.begin + i)],
                                 tree.dof_at[static_cast<std::size_t>(c.begin + j)]);
        RankStudyRow row;
        row.epsilon = epsilon;
        row.clustering = tree.kind;
        row.row_begin = r.begin;
        row.row_end = r.end;
        row.col_begin = c.begin;
        row.col_end = c.end;
        row.gap = tree.kind == TreeKind::Tube ? r.t_interval.gap(c.t_interval) : r.bbox.distance(c.bbox);
        row.rank = numerical_rank(sub, tol);
        rows.push_back(row);
    }
    return rows;
}

std::vector<RankStudyRow> rank_study(const CellConfig& base, std::span<const double> eps_list) {
    if (eps_list.empty())
        return {};
    const Mesh mesh = build_structured_mesh(base.n);
    ProblemSpec spec;
    spec.field = base.field;
    spec.bc = base.bc;
    spec.epsilon = eps_list.front();
    const Partition part = build_partition(assemble(mesh, spec), base);

    std::vector<RankStudyRow> out;
    for (double eps : eps_list) {
        spec.epsilon = eps;
        const DenseMatrix ainv = dense_inverse(assemble(mesh, spec));
        for (RankStudyRow& r : rank_study(ainv, part, eps, base.tol))
            out.push_back(r);
    }
    return out;
}

//
// Poincare oracle: triangles clipped against the cell rectangles, integrals exact for P1
//

namespace {

using Polygon = std::vector<Point2>;

// keep the part of `poly` with sign * (coord - c) <= 0
Polygon clip(const Polygon& poly, bool along_x, double c, double sign) {
    Polygon out;
    const auto value = [&](const Point2& p) { return sign * ((along_x ? p.x : p.y) - c); };
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Point2& a = poly[i];
        const Point2& b = poly[(i + 1) % poly.size()];
        const double va = value(a), vb = value(b);
        if (va <= 0.0)
            out.push_back(a);
        if ((va < 0.0 && vb > 0.0) || (va > 0.0 && vb < 0.0)) {
            const double t = va / (va - vb);
            out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
        }
    }
    return out;
}

struct Moments {
    double area = 0.0;
    double u1 = 0.0;  // integral of u
    double u2 = 0.0;  // integral of u^2
    double g2 = 0.0;  // integral of |grad u|^2
};

double tri_area(const Point2& a, const Point2& b, const Point2& c) {
    return 0.5 * std::abs((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

}  // namespace

PoincareResult poincare_oracle(const Mesh& m, std::span<const double> u, const BoundingBox& region, int ell) {
    if (ell < 1)
        throw std::invalid_argument("poincare_oracle: ell must be at least 1");
    if (!(region.xmax > region.xmin) || !(region.ymax > region.ymin))
        throw std::invalid_argument("poincare_oracle: empty region");
    if (static_cast<std::size_t>(u.size()) != m.vertices.size())
        throw std::invalid_argument("poincare_oracle: nodal vector length differs from vertex count");

    const double wx = (region.xmax - region.xmin) / ell;
    const double wy = (region.ymax - region.ymin) / ell;
    std::vector<Moments> cells(static_cast<std::size_t>(ell * ell));

    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        const Triangle& tri = m.triangles[t];
        const Point2& v0 = m.vertices[static_cast<std::size_t>(tri[0])];
        const std::array<double, 3> nodal{u[static_cast<std::size_t>(tri[0])], u[static_cast<std::size_t>(tri[1])],
                                          u[static_cast<std::size_t>(tri[2])]};
        const Vec2 g = p1_gradient(m, static_cast<Index>(t), nodal);
        const auto value = [&](const Point2& p) { return nodal[0] + g[0] * (p.x - v0.x) + g[1] * (p.y - v0.y); };

        double xlo = v0.x, xhi = v0.x, ylo = v0.y, yhi = v0.y;
        for (Index k : tri) {
            const Point2& p = m.vertices[static_cast<std::size_t>(k)];
            xlo = std::min(xlo, p.x);
            xhi = std::max(xhi, p.x);
            ylo = std::min(ylo, p.y);
            yhi = std::max(yhi, p.y);
        }
        const int i0 = std::max(0, static_cast<int>(std::floor((xlo - region.xmin) / wx)));
        const int i1 = std::min(ell - 1, static_cast<int>(std::floor((xhi - region.xmin) / wx)));
        const int j0 = std::max(0, static_cast<int>(std::floor((ylo - region.ymin) / wy)));
        const int j1 = std::min(ell - 1, static_cast<int>(std::floor((yhi - region.ymin) / wy)));

        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i) {
                const double cx0 = region.xmin + i * wx, cy0 = region.ymin + j * wy;
                Polygon poly{v0, m.vertices[static_cast<std::size_t>(tri[1])],
                             m.vertices[static_cast<std::size_t>(tri[2])]};
                poly = clip(poly, true, cx0, -1.0);
                poly = clip(poly, true, cx0 + wx, 1.0);
                poly = clip(poly, false, cy0, -1.0);
                poly = clip(poly, false, cy0 + wy, 1.0);
                if (poly.size() < 3)
                    continue;
                Moments& mo = cells[static_cast<std::size_t>(j * ell + i)];
                for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
                    const Point2 &a = poly[0], &b = poly[k], &c = poly[k + 1];
                    const double area = tri_area(a, b, c);
                    if (area == 0.0)
                        continue;
                    // edge midpoints integrate quadratics exactly
                    const double ua = value(a), ub = value(b), uc = value(c);
                    const double mab = 0.5 * (ua + ub), mbc = 0.5 * (ub + uc), mca = 0.5 * (uc + ua);
                    mo.area += area;
                    mo.u1 += area * (ua + ub + uc) / 3.0;
                    mo.u2 += area * (mab * mab + mbc * mbc + mca * mca) / 3.0;
                    mo.g2 += area * (g[0] * g[0] + g[1] * g[1]);
                }
            }
    }

    double dev2 = 0.0, grad2 = 0.0, covered = 0.0;
    for (const Moments& mo : cells) {
        covered += mo.area;
        grad2 += mo.g2;
        if (mo.area > 0.0)
            dev2 += std::max(0.0, mo.u2 - mo.u1 * mo.u1 / mo.area);
    }
    const double region_area = (region.xmax - region.xmin) * (region.ymax - region.ymin);
    if (std::abs(covered - region_area) > 1e-9 * region_area)
        throw std::invalid_argument("poincare_oracle: region is not covered by the mesh");

    const double diam = std::hypot(region.xmax - region.xmin, region.ymax - region.ymin);
    PoincareResult r;
    r.lhs = std::sqrt(dev2);
    r.rhs = std::numbers::sqrt2 / std::numbers::pi * (diam / ell) * std::sqrt(grad2);
    return r;
}

//
// Caccioppoli check
//

double caccioppoli_ratio(const Mesh& m, std::span<const double> u_vertex, std::span<const double> s_vertex,
                         Interval omega, double delta) {
    if (!(delta > 0.0))
        throw std::invalid_argument("caccioppoli_ratio: delta must be positive");
    const auto inside = [&](const Triangle& tri, double lo, double hi) {
        return std::all_of(tri.begin(), tri.end(), [&](Index v) {
            const double s = s_vertex[static_cast<std::size_t>(v)];
            return s >= lo && s <= hi;
        });
    };
    double grad2 = 0.0, mass2 = 0.0;
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        const Triangle& tri = m.triangles[t];
        const std::array<double, 3> nodal{u_vertex[static_cast<std::size_t>(tri[0])],
                                          u_vertex[static_cast<std::size_t>(tri[1])],
                                          u_vertex[static_cast<std::size_t>(tri[2])]};
        const double area = m.area(static_cast<Index>(t));
        if (inside(tri, omega.lo, omega.hi)) {
            const Vec2 g = p1_gradient(m, static_cast<Index>(t), nodal);
            grad2 += area * (g[0] * g[0] + g[1] * g[1]);
        }
        if (inside(tri, omega.lo - delta, omega.hi + delta)) {
            // local P1 mass matrix area/12 * (1 + delta_ij)
            const double sum = nodal[0] + nodal[1] + nodal[2];
            const double sq = nodal[0] * nodal[0] + nodal[1] * nodal[1] + nodal[2] * nodal[2];
            mass2 += area / 12.0 * (sum * sum + sq);
        }
    }
    if (!(mass2 > 0.0))
        throw std::invalid_argument("caccioppoli_ratio: u vanishes on the inflated band");
    return delta * std::sqrt(grad2) / std::sqrt(mass2);
}

std::vector<double> caccioppoli_check(const CaccioppoliConfig& cfg, std::span<const double> eps_list) {
    if (cfg.source_min <= cfg.omega.hi + cfg.band_delta)
        throw std::invalid_argument("caccioppoli_check: source overlaps the inflated band");
    const Mesh mesh = build_structured_mesh(cfg.n);
    const double trace = cfg.trace_delta > 0.0 ? cfg.trace_delta : 0.5 * mesh.h;
    const std::vector<double> s_vertex = transverse_coordinates(mesh.vertices, cfg.field, trace);

    std::vector<double> ratios;
    for (double eps : eps_list) {
        ProblemSpec spec;
        spec.epsilon = eps;
        spec.field = cfg.field;
        spec.bc = cfg.bc;
        const SparseSystem sys = assemble(mesh, spec);

        std::vector<double> rhs(static_cast<std::size_t>(sys.n_dof()), 0.0);
        bool any = false;
        for (Index i = 0; i < sys.n_dof(); ++i)
            if (s_vertex[static_cast<std::size_t>(sys.dof_vertices[static_cast<std::size_t>(i)])] >= cfg.source_min) {
                rhs[static_cast<std::size_t>(i)] = 1.0;
                any = true;
            }
        if (!any)
            throw std::invalid_argument("caccioppoli_check: no dof in the source region");

        if (sys.n_dof() > kDenseGuard)
            throw std::invalid_argument("caccioppoli_check: system exceeds the dense guard");
        const std::vector<double> u = lu_solve(dense_lu(sys.A.to_dense()), rhs);
        std::vector<double> u_vertex(mesh.vertices.size(), 0.0);
        for (Index i = 0; i < sys.n_dof(); ++i)
            u_vertex[static_cast<std::size_t>(sys.dof_vertices[static_cast<std::size_t>(i)])] =
                u[static_cast<std::size_t>(i)];
        ratios.push_back(caccioppoli_ratio(mesh, u_vertex, s_vertex, cfg.omega, cfg.band_delta));
    }
    return ratios;
}

}  // namespace tubeh
