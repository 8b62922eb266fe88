#ifndef TUBEH_LAB_HPP
#define TUBEH_LAB_HPP

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tubeh/clustering.hpp"
#include "tubeh/hmatrix.hpp"

namespace tubeh {

inline constexpr std::array<double, 4> kEpsilonSweep{1.0, 1e-2, 1e-4, 1e-6};

// Largest system dense_inverse accepts.
inline constexpr Index kDenseGuard = 5000;

DenseMatrix dense_inverse(const CsrMatrix& a);
DenseMatrix dense_inverse(const SparseSystem& s);

//
// problem pipeline: mesh -> assembly -> clustering -> H-matrix -> H-LU
//

struct CellConfig {
    Index n = 16;
    double epsilon = 1.0;
    FieldId field = FieldId::Const;
    BoundaryCondition bc = BoundaryCondition::Dirichlet;
    TreeKind clustering = TreeKind::Tube;
    double eta = 1.0;
    double tol = 1e-6;
    Index nmin = 0;      // 0: default_nmin
    double delta = 0.0;  // tracing step, 0: h/2
    std::uint64_t seed = 42;
    int err_samples = 5;
};

// Clusters and block tree for one system; the block tree points into `tree`.
struct Partition {
    std::unique_ptr<ClusterTree> tree;
    BlockTree blocks;
    std::vector<double> transverse;  // s per original dof (tube trees only)
    double pad = 0.0;
};

Partition build_partition(const SparseSystem& s, const CellConfig& cfg);

struct ExperimentRecord {
    Index N = 0;
    double epsilon = 0.0;
    FieldId field = FieldId::Const;
    BoundaryCondition bc = BoundaryCondition::Dirichlet;
    TreeKind clustering = TreeKind::Tube;
    double t_tree = 0.0;
    double t_compress = 0.0;
    double t_lu = 0.0;
    double compression = 0.0;
    double err = 0.0;
    Index unconverged_blocks = 0;
    std::string failure;  // empty on success
};

struct Factorization {
    Mesh mesh;
    SparseSystem original;
    SparseSystem permuted;
    Partition partition;
    std::optional<HLUFactors> lu;
    ExperimentRecord record;
};

// Runs the full pipeline; numerical failures propagate.
Factorization factorize(const CellConfig& cfg);

// factorize() plus the err estimate; failures are caught into record.failure
// with NaN metrics.
ExperimentRecord run_cell(const CellConfig& cfg);

// max over `samples` seeded random unit x of ||x - solve(LU, A x)|| / ||x||
double max_solve_error(const HLUFactors& f, const CsrMatrix& a, int samples, std::uint64_t seed);

struct BenchConfig {
    std::vector<Index> sizes{16};
    std::vector<double> epsilons{kEpsilonSweep.begin(), kEpsilonSweep.end()};
    std::vector<FieldId> fields{FieldId::Const, FieldId::CosShear, FieldId::ExpShear};
    std::vector<BoundaryCondition> bcs{BoundaryCondition::Dirichlet, BoundaryCondition::Neumann};
    std::vector<TreeKind> clusterings{TreeKind::Tube, TreeKind::Geometric};
    CellConfig base;  // eta, tol, nmin, delta, seed
};

std::vector<ExperimentRecord> bench(const BenchConfig& cfg, std::ostream* csv = nullptr);

inline constexpr const char* kCsvHeader = "N,eps,field,bc,clustering,t_tree_s,t_compress_s,t_lu_s,compression,err";
void write_csv_row(std::ostream& os, const ExperimentRecord& r);

//
// rank study
//

struct RankStudyRow {
    double epsilon = 0.0;
    TreeKind clustering = TreeKind::Tube;
    Index row_begin = 0, row_end = 0;  // positions in the tree ordering
    Index col_begin = 0, col_end = 0;
    double gap = 0.0;  // transverse gap (tube) or box distance (geometric)
    Index rank = 0;
};

// Low-rank leaves of the block tree at the smallest depth that has any.
std::vector<Index> shallowest_admissible_leaves(const BlockTree& bt);

// Ranks of A^{-1} restricted to each shallowest admissible pair; `ainv` is in
// the original dof ordering.
std::vector<RankStudyRow> rank_study(const DenseMatrix& ainv, const Partition& part, double epsilon,
                                     double tol);

// Reassembles per epsilon on a fixed partition (built from the first epsilon).
std::vector<RankStudyRow> rank_study(const CellConfig& base, std::span<const double> eps_list);

//
// Poincare and Caccioppoli oracles
//

struct PoincareResult {
    double lhs = 0.0;
    double rhs = 0.0;
};

// ||u - Pi u||_{L2(region)} against (sqrt 2 / pi)(diam / ell)||grad u||, Pi the
// ell x ell cell-mean approximant. u is nodal on the mesh.
PoincareResult poincare_oracle(const Mesh& m, std::span<const double> u, const BoundingBox& region, int ell);

struct CaccioppoliConfig {
    Index n = 32;
    FieldId field = FieldId::Const;
    BoundaryCondition bc = BoundaryCondition::Dirichlet;
    Interval omega{-0.25, 0.25};  // transverse band
    double band_delta = 0.25;
    double source_min = 0.75;  // unit loads on dofs with s >= source_min
    double trace_delta = 0.0;  // 0: h/2
};

// delta ||grad u||_{L2(omega)} / ||u||_{L2(omega_delta)} for a vertex function u.
// Triangles count as inside a band when all three vertices are.
double caccioppoli_ratio(const Mesh& m, std::span<const double> u_vertex, std::span<const double> s_vertex,
                         Interval omega, double delta);

std::vector<double> caccioppoli_check(const CaccioppoliConfig& cfg, std::span<const double> eps_list);

}  // namespace tubeh

#endif  // TUBEH_LAB_HPP
