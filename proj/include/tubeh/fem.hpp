#ifndef TUBEH_FEM_HPP
#define TUBEH_FEM_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "tubeh/flow.hpp"
#include "tubeh/mesh.hpp"

namespace tubeh {

enum class BoundaryCondition { Dirichlet, Neumann };

std::string_view to_string(BoundaryCondition bc);
std::optional<BoundaryCondition> parse_bc(std::string_view s);

struct ProblemSpec {
    double epsilon = 1.0;
    double beta = 2.0;
    FieldId field = FieldId::Const;
    BoundaryCondition bc = BoundaryCondition::Dirichlet;
};

// Compressed sparse row matrix with sorted column indices per row.
struct CsrMatrix {
    Index rows = 0;
    Index cols = 0;
    std::vector<Index> row_ptr;
    std::vector<Index> col_idx;
    std::vector<double> values;

    Index nnz() const { return static_cast<Index>(values.size()); }
    double at(Index i, Index j) const;
    std::vector<double> multiply(std::span<const double> x) const;
    DenseMatrix to_dense() const;
};

struct SparseSystem {
    CsrMatrix A;
    std::vector<Point2> dof_points;
    // mesh vertex behind each dof
    std::vector<Index> dof_vertices;

    Index n_dof() const { return A.rows; }
};

// Thrown when div(b)/2 - beta < 0 fails for the requested problem.
class CoercivityError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// P1 Galerkin matrix of eps (grad u, grad v) + (b.grad u, v) + beta (u, v);
// b sampled at triangle centroids. Dirichlet eliminates boundary vertices,
// Neumann keeps every vertex with natural boundary conditions.
SparseSystem assemble(const Mesh& m, const ProblemSpec& spec);

// eps K + beta M without convection (b = 0); eps = 1, beta = 0 gives the
// stiffness matrix K, eps = 0, beta = 1 the mass matrix M.
SparseSystem assemble_symmetric(const Mesh& m, BoundaryCondition bc, double epsilon, double beta);
// convection part (b.grad u, v) alone
SparseSystem assemble_convection(const Mesh& m, BoundaryCondition bc, FieldId field);

// f(x, y) = (1 - |x|)(1 - |y|)
double load_function(Point2 p);

// l_i = int f phi_i with edge-midpoint quadrature, restricted to interior dofs under Dirichlet
std::vector<double> assemble_rhs(const Mesh& m, BoundaryCondition bc);

std::vector<double> apply_operator(const SparseSystem& s, std::span<const double> x);

// min over `trials` random unit vectors of v^T A v
double discrete_coercivity_probe(const SparseSystem& s, int trials, std::uint64_t seed = 42);

// "i j value" rows, 0-based
void write_coordinate(std::ostream& os, const CsrMatrix& a);

}  // namespace tubeh

#endif  // TUBEH_FEM_HPP
