#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "tubeh/lab.hpp"

using namespace tubeh;

namespace {

CsrMatrix csr_from_dense(const DenseMatrix& a) {
    CsrMatrix m;
    m.rows = a.rows();
    m.cols = a.cols();
    m.row_ptr.push_back(0);
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < a.cols(); ++j)
            if (a(i, j) != 0.0) {
                m.col_idx.push_back(j);
                m.values.push_back(a(i, j));
            }
        m.row_ptr.push_back(static_cast<Index>(m.col_idx.size()));
    }
    return m;
}

std::vector<double> nodal(const Mesh& m, double (*f)(double, double)) {
    std::vector<double> u(m.vertices.size());
    for (std::size_t v = 0; v < u.size(); ++v)
        u[v] = f(m.vertices[v].x, m.vertices[v].y);
    return u;
}

double sinsin(double x, double y) { return std::sin(std::numbers::pi * x) * std::sin(std::numbers::pi * y); }

// continuum ||u - cell mean|| on [0,1]^2 by a 512^2 midpoint rule
double midpoint_deviation(double (*f)(double, double), int ell) {
    const int n = 512, c = n / ell;
    double total = 0.0;
    for (int bi = 0; bi < ell; ++bi)
        for (int bj = 0; bj < ell; ++bj) {
            double sum = 0.0, sq = 0.0;
            for (int i = bi * c; i < (bi + 1) * c; ++i)
                for (int j = bj * c; j < (bj + 1) * c; ++j) {
                    const double v = f((i + 0.5) / n, (j + 0.5) / n);
                    sum += v;
                    sq += v * v;
                }
            const double cnt = static_cast<double>(c) * c;
            total += (sq / cnt - (sum / cnt) * (sum / cnt)) * cnt;
        }
    return std::sqrt(total / (static_cast<double>(n) * n));
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
        out.push_back(cell);
    return out;
}

}  // namespace

TEST_CASE("dense_inverse") {
    const DenseMatrix i3 = dense_inverse(csr_from_dense(DenseMatrix::identity(3)));
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 3; ++j)
            CHECK(i3(i, j) == (i == j ? 1.0 : 0.0));

    DenseMatrix d(2, 2);
    d(0, 0) = 2.0;
    d(1, 1) = 4.0;
    const DenseMatrix di = dense_inverse(csr_from_dense(d));
    CHECK(di(0, 0) == 0.5);
    CHECK(di(1, 1) == 0.25);
    CHECK(di(0, 1) == 0.0);

    ProblemSpec spec;
    spec.epsilon = 1e-2;
    spec.field = FieldId::CosShear;
    const SparseSystem s = assemble(build_structured_mesh(16), spec);
    const DenseMatrix inv = dense_inverse(s);
    const DenseMatrix prod = multiply(s.A.to_dense(), inv);
    double worst = 0.0;
    for (Index i = 0; i < prod.rows(); ++i)
        for (Index j = 0; j < prod.cols(); ++j)
            worst = std::max(worst, std::abs(prod(i, j) - (i == j ? 1.0 : 0.0)));
    CHECK(worst <= 1e-9);

    CsrMatrix big;
    big.rows = big.cols = kDenseGuard + 1;
    big.row_ptr.assign(static_cast<std::size_t>(kDenseGuard + 2), 0);
    CHECK_THROWS_AS(dense_inverse(big), std::invalid_argument);
    CHECK_THROWS_AS(dense_inverse(csr_from_dense(DenseMatrix(3, 3))), NumericalError);
}

TEST_CASE("factorize and run_cell") {
    CellConfig c;
    c.n = 16;
    c.epsilon = 1e-4;
    c.field = FieldId::ExpShear;
    Factorization f = factorize(c);
    CHECK(f.record.N == 225);
    CHECK(f.permuted.n_dof() == 225);
    CHECK(max_solve_error(*f.lu, f.permuted.A, 5, 7) <= 1e-5);
    CHECK(f.record.compression >= 0.0);
    CHECK(f.record.compression < 1.0);
    CHECK(f.record.t_lu >= 0.0);

    const ExperimentRecord r = run_cell(c);
    CHECK(r.failure.empty());
    CHECK(r.err <= 1e-5);

    c.bc = BoundaryCondition::Neumann;
    c.clustering = TreeKind::Geometric;
    c.epsilon = 1.0;
    const ExperimentRecord rn = run_cell(c);
    CHECK(rn.N == 289);
    CHECK(rn.err <= 1e-5);

    CellConfig bad;
    bad.n = 0;
    const ExperimentRecord rb = run_cell(bad);
    CHECK_FALSE(rb.failure.empty());
    CHECK(std::isnan(rb.err));
    CHECK(std::isnan(rb.compression));
}

TEST_CASE("exactness limit over small grids") {
    for (Index n : {4, 8, 12})
        for (FieldId field : {FieldId::Const, FieldId::CosShear, FieldId::ExpShear})
            for (BoundaryCondition bc : {BoundaryCondition::Dirichlet, BoundaryCondition::Neumann})
                for (double eps : kEpsilonSweep) {
                    CellConfig c;
                    c.n = n;
                    c.epsilon = eps;
                    c.field = field;
                    c.bc = bc;
                    c.tol = 1e-12;
                    const ExperimentRecord r = run_cell(c);
                    CHECK(r.failure.empty());
                    CHECK(r.err <= 1e-9);
                }
}

TEST_CASE("bench CSV") {
    BenchConfig cfg;
    cfg.sizes = {4};
    std::ostringstream os;
    const auto records = bench(cfg, &os);
    CHECK(records.size() == 48);

    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == kCsvHeader);
    std::size_t k = 0;
    while (std::getline(in, line)) {
        const auto cells = split(line);
        REQUIRE(cells.size() == 10);
        REQUIRE(k < records.size());
        const ExperimentRecord& r = records[k++];
        CHECK(std::stoll(cells[0]) == r.N);
        CHECK(std::stod(cells[1]) == r.epsilon);
        CHECK(cells[2] == to_string(r.field));
        CHECK(cells[3] == to_string(r.bc));
        CHECK(cells[4] == to_string(r.clustering));
        CHECK(std::stod(cells[8]) == r.compression);
        CHECK(std::stod(cells[9]) == r.err);
        CHECK(r.failure.empty());
    }
    CHECK(k == records.size());

    ExperimentRecord failed;
    failed.N = 9;
    failed.epsilon = 1e-2;
    failed.compression = failed.err = std::numeric_limits<double>::quiet_NaN();
    std::ostringstream f;
    write_csv_row(f, failed);
    const auto cells = split(f.str().substr(0, f.str().size() - 1));
    CHECK(cells[9] == "nan");
    CHECK(cells[8] == "nan");
    CHECK(cells[1] == "0.01");
}

TEST_CASE("rank study") {
    CellConfig c;
    c.n = 12;
    const std::vector<double> eps{1.0, 1e-4};
    const auto a = rank_study(c, eps);
    const auto b = rank_study(c, eps);
    REQUIRE_FALSE(a.empty());
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].rank == b[i].rank);
        CHECK(a[i].row_begin == b[i].row_begin);
        CHECK(a[i].gap > 0.0);
        CHECK(a[i].rank >= 0);
        CHECK(a[i].rank <= std::min(a[i].row_end - a[i].row_begin, a[i].col_end - a[i].col_begin));
    }
    CHECK(a.front().epsilon == 1.0);
    CHECK(a.back().epsilon == 1e-4);

    // rank agrees with an SVD of the extracted block
    ProblemSpec spec;
    const Mesh mesh = build_structured_mesh(12);
    const SparseSystem s = assemble(mesh, spec);
    const Partition part = build_partition(s, c);
    const DenseMatrix inv = dense_inverse(s);
    const auto rows = rank_study(inv, part, 1.0, 1e-6);
    const RankStudyRow& r = rows.front();
    DenseMatrix sub(r.row_end - r.row_begin, r.col_end - r.col_begin);
    for (Index i = 0; i < sub.rows(); ++i)
        for (Index j = 0; j < sub.cols(); ++j)
            sub(i, j) = inv(part.tree->dof_at[static_cast<std::size_t>(r.row_begin + i)],
                            part.tree->dof_at[static_cast<std::size_t>(r.col_begin + j)]);
    const auto sigma = svd(sub).sigma;
    Index k = 0;
    for (double sv : sigma)
        if (sv > 1e-6 * sigma.front())
            ++k;
    CHECK(r.rank == k);

    for (Index id : shallowest_admissible_leaves(part.blocks))
        CHECK(part.blocks.node(id).kind == BlockKind::LowRank);
}

TEST_CASE("Poincare oracle") {
    const Mesh m = build_structured_mesh(32);
    const BoundingBox unit{0.0, 1.0, 0.0, 1.0};

    const auto one = poincare_oracle(m, nodal(m, [](double, double) { return 1.0; }), unit, 2);
    CHECK(one.lhs <= 1e-12);
    CHECK(one.rhs <= 1e-12);

    const auto ux = poincare_oracle(m, nodal(m, [](double x, double) { return x; }), unit, 1);
    CHECK(ux.lhs == doctest::Approx(std::sqrt(1.0 / 12.0)).epsilon(1e-3));
    CHECK(ux.rhs == doctest::Approx(2.0 / std::numbers::pi).epsilon(1e-12));

    // linear u: each cell of width w contributes (a^2 + b^2) w^2 / 12 per unit area
    for (int ell : {1, 2, 4}) {
        const auto r = poincare_oracle(m, nodal(m, [](double x, double y) { return x + 2.0 * y; }), unit, ell);
        CHECK(r.lhs == doctest::Approx(std::sqrt(5.0 / 12.0) / ell).epsilon(1e-10));
        CHECK(r.lhs <= r.rhs);
    }

    // sin(pi x) sin(pi y): lhs^2 = 1/4 - 16/pi^4 and rhs = sqrt 2 at ell = 1 in the continuum
    const Mesh fine = build_structured_mesh(64);
    const auto s1 = poincare_oracle(fine, nodal(fine, sinsin), unit, 1);
    const double pi4 = std::pow(std::numbers::pi, 4);
    CHECK(s1.lhs == doctest::Approx(std::sqrt(0.25 - 16.0 / pi4)).epsilon(1e-2));
    CHECK(s1.rhs == doctest::Approx(std::sqrt(2.0)).epsilon(1e-2));
    for (int ell : {1, 2, 4}) {
        const auto r = poincare_oracle(fine, nodal(fine, sinsin), unit, ell);
        CHECK(r.lhs <= r.rhs);
        CHECK(r.lhs == doctest::Approx(midpoint_deviation(sinsin, ell)).epsilon(1e-2));
    }
    CHECK(poincare_oracle(fine, nodal(fine, sinsin), unit, 4).lhs < 0.6 * s1.lhs);

    // unaligned region, FEM solution
    ProblemSpec spec;
    spec.epsilon = 1e-2;
    spec.field = FieldId::CosShear;
    const SparseSystem sys = assemble(m, spec);
    const auto u = lu_solve(dense_lu(sys.A.to_dense()), assemble_rhs(m, spec.bc));
    std::vector<double> uv(m.vertices.size(), 0.0);
    for (Index i = 0; i < sys.n_dof(); ++i)
        uv[static_cast<std::size_t>(sys.dof_vertices[static_cast<std::size_t>(i)])] = u[static_cast<std::size_t>(i)];
    for (int ell : {1, 2, 4}) {
        const auto r = poincare_oracle(m, uv, BoundingBox{-0.9, 0.7, -0.3, 0.33}, ell);
        CHECK(r.lhs <= r.rhs);
        CHECK(r.lhs > 0.0);
    }

    CHECK_THROWS_AS(poincare_oracle(m, nodal(m, sinsin), unit, 0), std::invalid_argument);
    CHECK_THROWS_AS(poincare_oracle(m, nodal(m, sinsin), BoundingBox{0.2, 0.2, 0.0, 1.0}, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(poincare_oracle(m, nodal(m, sinsin), BoundingBox{0.0, 2.0, 0.0, 1.0}, 1),
                    std::invalid_argument);
}

TEST_CASE("Caccioppoli ratio") {
    const Mesh m = build_structured_mesh(32);
    std::vector<double> s(m.vertices.size());
    for (std::size_t v = 0; v < s.size(); ++v)
        s[v] = m.vertices[v].y;

    // u = y: ||grad u|| = 1 on the band of area 1, ||u||^2 = 1/6 on the inflated band
    const double r = caccioppoli_ratio(m, s, s, Interval{-0.25, 0.25}, 0.25);
    CHECK(r == doctest::Approx(0.25 * std::sqrt(6.0)).epsilon(1e-12));

    const std::vector<double> zero(m.vertices.size(), 0.0);
    CHECK_THROWS_AS(caccioppoli_ratio(m, zero, s, Interval{-0.25, 0.25}, 0.25), std::invalid_argument);
    CHECK_THROWS_AS(caccioppoli_ratio(m, s, s, Interval{-0.25, 0.25}, 0.0), std::invalid_argument);

    CaccioppoliConfig cfg;
    cfg.n = 16;
    const std::vector<double> eps{1.0};
    const auto ratios = caccioppoli_check(cfg, eps);
    REQUIRE(ratios.size() == 1);
    CHECK(std::isfinite(ratios[0]));
    CHECK(ratios[0] > 0.0);

    cfg.source_min = 0.4;
    CHECK_THROWS_AS(caccioppoli_check(cfg, eps), std::invalid_argument);
}
