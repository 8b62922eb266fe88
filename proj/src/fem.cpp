#include "tubeh/fem.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <random>

namespace tubeh {

std::string_view to_string(BoundaryCondition bc) {
    return bc == BoundaryCondition::Dirichlet ? "dirichlet" : "neumann";
}

std::optional<BoundaryCondition> parse_bc(std::string_view s) {
    if (s == "dirichlet")
        return BoundaryCondition::Dirichlet;
    if (s == "neumann")
        return BoundaryCondition::Neumann;
    return std::nullopt;
}

double CsrMatrix::at(Index i, Index j) const {
    const auto begin = col_idx.begin() + row_ptr[static_cast<std::size_t>(i)];
    const auto end = col_idx.begin() + row_ptr[static_cast<std::size_t>(i) + 1];
    const auto it = std::lower_bound(begin, end, j);
    if (it == end || *it != j)
        return 0.0;
    return values[static_cast<std::size_t>(it - col_idx.begin())];
}

std::vector<double> CsrMatrix::multiply(std::span<const double> x) const {
    if (static_cast<Index>(x.size()) != cols)
        throw std::invalid_argument("CsrMatrix::multiply: size mismatch");
    std::vector<double> y(static_cast<std::size_t>(rows), 0.0);
    for (Index i = 0; i < rows; ++i) {
        double s = 0.0;
        for (Index k = row_ptr[static_cast<std::size_t>(i)]; k < row_ptr[static_cast<std::size_t>(i) + 1]; ++k)
            s += values[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(col_idx[static_cast<std::size_t>(k)])];
        y[static_cast<std::size_t>(i)] = s;
    }
    return y;
}

DenseMatrix CsrMatrix::to_dense() const {
    DenseMatrix d(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index k = row_ptr[static_cast<std::size_t>(i)]; k < row_ptr[static_cast<std::size_t>(i) + 1]; ++k)
            d(i, col_idx[static_cast<std::size_t>(k)]) = values[static_cast<std::size_t>(k)];
    return d;
}

namespace {

struct DofMap {
    std::vector<Index> dof_of_vertex;  // -1 for eliminated vertices
    std::vector<Index> vertex_of_dof;
};

DofMap make_dof_map(const Mesh& m, BoundaryCondition bc) {
    DofMap map;
    map.dof_of_vertex.assign(m.vertices.size(), -1);
    for (std::size_t v = 0; v < m.vertices.size(); ++v) {
        if (bc == BoundaryCondition::Dirichlet && m.boundary_mask[v])
            continue;
        map.dof_of_vertex[v] = static_cast<Index>(map.vertex_of_dof.size());
        map.vertex_of_dof.push_back(static_cast<Index>(v));
    }
    return map;
}

std::array<Vec2, 3> basis_gradients(const Mesh& m, Index t) {
    return {p1_gradient(m, t, {1.0, 0.0, 0.0}), p1_gradient(m, t, {0.0, 1.0, 0.0}),
            p1_gradient(m, t, {0.0, 0.0, 1.0})};
}

// eps K + (b.grad) + beta M with b given per triangle (nullopt: no convection)
SparseSystem assemble_form(const Mesh& m, BoundaryCondition bc, double epsilon, double beta,
                           std::optional<FieldId> field) {
    const DofMap map = make_dof_map(m, bc);
    const auto n = static_cast<Index>(map.vertex_of_dof.size());
    std::vector<std::map<Index, double>> rows(static_cast<std::size_t>(n));

    for (Index t = 0; t < static_cast<Index>(m.triangles.size()); ++t) {
        const Triangle& tri = m.triangles[static_cast<std::size_t>(t)];
        const double area = m.area(t);
        const auto grads = basis_gradients(m, t);
        const Vec2 b = field ? eval_field(*field, m.centroid(t)) : Vec2{0.0, 0.0};
        for (int a = 0; a < 3; ++a) {
            const Index row = map.dof_of_vertex[static_cast<std::size_t>(tri[static_cast<std::size_t>(a)])];
            if (row < 0)
                continue;
            for (int c = 0; c < 3; ++c) {
                const Index col = map.dof_of_vertex[static_cast<std::size_t>(tri[static_cast<std::size_t>(c)])];
                if (col < 0)
                    continue;
                const Vec2& ga = grads[static_cast<std::size_t>(a)];
                const Vec2& gc = grads[static_cast<std::size_t>(c)];
                const double stiffness = area * (ga[0] * gc[0] + ga[1] * gc[1]);
                const double convection = area / 3.0 * (b[0] * gc[0] + b[1] * gc[1]);
                const double mass = area / 12.0 * (a == c ? 2.0 : 1.0);
                rows[static_cast<std::size_t>(row)][col] += epsilon * stiffness + convection + beta * mass;
            }
        }
    }

    SparseSystem s;
    s.A.rows = s.A.cols = n;
    s.A.row_ptr.reserve(static_cast<std::size_t>(n) + 1);
    s.A.row_ptr.push_back(0);
    for (const auto& row : rows) {
        for (const auto& [col, value] : row) {
            s.A.col_idx.push_back(col);
            s.A.values.push_back(value);
        }
        s.A.row_ptr.push_back(static_cast<Index>(s.A.col_idx.size()));
    }
    s.dof_vertices = map.vertex_of_dof;
    s.dof_points.reserve(static_cast<std::size_t>(n));
    for (Index v : map.vertex_of_dof)
        s.dof_points.push_back(m.vertices[static_cast<std::size_t>(v)]);
    return s;
}

}  // namespace

SparseSystem assemble(const Mesh& m, const ProblemSpec& spec) {
    if (!(spec.epsilon > 0.0))
        throw std::invalid_argument("assemble: epsilon must be positive");
    const ConditionCheck cond = check_condition(spec.field, spec.beta);
    if (!cond.holds)
        throw CoercivityError("assemble: div(b)/2 - beta < 0 violated (margin " + std::to_string(cond.margin) +
                              ")");
    return assemble_form(m, spec.bc, spec.epsilon, spec.beta, spec.field);
}

SparseSystem assemble_symmetric(const Mesh& m, BoundaryCondition bc, double epsilon, double beta) {
    return assemble_form(m, bc, epsilon, beta, std::nullopt);
}

SparseSystem assemble_convection(const Mesh& m, BoundaryCondition bc, FieldId field) {
    return assemble_form(m, bc, 0.0, 0.0, field);
}

double load_function(Point2 p) { return (1.0 - std::abs(p.x)) * (1.0 - std::abs(p.y)); }

std::vector<double> assemble_rhs(const Mesh& m, BoundaryCondition bc) {
    const DofMap map = make_dof_map(m, bc);
    std::vector<double> rhs(map.vertex_of_dof.size(), 0.0);
    for (Index t = 0; t < static_cast<Index>(m.triangles.size()); ++t) {
        const Triangle& tri = m.triangles[static_cast<std::size_t>(t)];
        const double w = m.area(t) / 3.0;
        std::array<double, 3> fmid{};  // f at the midpoint of edge (a, a+1)
        for (std::size_t a = 0; a < 3; ++a) {
            const Point2& p = m.vertices[static_cast<std::size_t>(tri[a])];
            const Point2& q = m.vertices[static_cast<std::size_t>(tri[(a + 1) % 3])];
            fmid[a] = load_function({0.5 * (p.x + q.x), 0.5 * (p.y + q.y)});
        }
        for (std::size_t a = 0; a < 3; ++a) {
            const Index dof = map.dof_of_vertex[static_cast<std::size_t>(tri[a])];
            if (dof < 0)
                continue;
            // phi_a is 1/2 on both edges touching vertex a, 0 on the opposite one
            rhs[static_cast<std::size_t>(dof)] += w * 0.5 * (fmid[a] + fmid[(a + 2) % 3]);
        }
    }
    return rhs;
}

std::vector<double> apply_operator(const SparseSystem& s, std::span<const double> x) { return s.A.multiply(x); }

double discrete_coercivity_probe(const SparseSystem& s, int trials, std::uint64_t seed) {
    if (trials < 1)
        throw std::invalid_argument("discrete_coercivity_probe: trials must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    const auto n = static_cast<std::size_t>(s.n_dof());
    std::vector<double> v(n);
    double best = std::numeric_limits<double>::infinity();
    for (int t = 0; t < trials; ++t) {
        for (double& x : v)
            x = normal(rng);
        const double nv = norm2(v);
        for (double& x : v)
            x /= nv;
        const std::vector<double> av = s.A.multiply(v);
        double q = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            q += v[i] * av[i];
        best = std::min(best, q);
    }
    return best;
}

void write_coordinate(std::ostream& os, const CsrMatrix& a) {
    os.precision(17);
    for (Index i = 0; i < a.rows; ++i)
        for (Index k = a.row_ptr[static_cast<std::size_t>(i)]; k < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++k)
            os << i << ' ' << a.col_idx[static_cast<std::size_t>(k)] << ' ' << a.values[static_cast<std::size_t>(k)]
               << '\n';
}

}  // namespace tubeh
