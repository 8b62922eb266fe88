#ifndef TUBEH_HMATRIX_HPP
#define TUBEH_HMATRIX_HPP

#include <array>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "tubeh/clustering.hpp"
#include "tubeh/linalg.hpp"

namespace tubeh {

//
// One block of an H-matrix: a dense leaf, a low-rank leaf U V^T or a 2 x 2
// grid of sub-blocks. Offsets are positions in the permuted (cluster) ordering.
//
class HBlock {
public:
    Index row_begin = 0;
    Index col_begin = 0;
    Index rows = 0;
    Index cols = 0;
    BlockKind kind = BlockKind::Dense;

    DenseMatrix dense;
    LowRank lowrank;
    std::array<std::unique_ptr<HBlock>, 4> children;  // (0,0) (0,1) (1,0) (1,1)

    // row permutation of a factored dense diagonal leaf (position -> original row)
    std::vector<Index> pivots;

    static HBlock dense_leaf(DenseMatrix d, Index row_begin = 0, Index col_begin = 0);
    static HBlock lowrank_leaf(LowRank lr, Index row_begin = 0, Index col_begin = 0);

    bool is_leaf() const { return kind != BlockKind::Inner; }
    HBlock& child(int i, int j) { return *children[static_cast<std::size_t>(2 * i + j)]; }
    const HBlock& child(int i, int j) const { return *children[static_cast<std::size_t>(2 * i + j)]; }

    std::unique_ptr<HBlock> clone() const;
};

class HMatrix {
public:
    HMatrix() = default;
    HMatrix(std::unique_ptr<HBlock> root, double tol_rel);

    HMatrix(HMatrix&&) noexcept = default;
    HMatrix& operator=(HMatrix&&) noexcept = default;
    HMatrix clone() const;

    Index rows() const { return root_->rows; }
    Index cols() const { return root_->cols; }
    double tolerance() const { return tol_; }
    const HBlock& root() const { return *root_; }
    HBlock& root() { return *root_; }

    // low-rank leaves whose compression stopped at max_rank
    Index unconverged_blocks = 0;

    std::vector<double> matvec(std::span<const double> x) const;
    DenseMatrix to_dense() const;

private:
    std::unique_ptr<HBlock> root_;
    double tol_ = 1e-6;
};

// Dense leaves copied from A, low-rank leaves compressed by ACA (zero blocks give rank 0).
HMatrix from_sparse(const CsrMatrix& a, const BlockTree& bt, double tol_rel);
HMatrix from_dense(const DenseMatrix& a, const BlockTree& bt, double tol_rel);

//
// block kernels; operands may be any HBlock (wrap plain matrices with
// HBlock::dense_leaf / HBlock::lowrank_leaf)
//

// Y += alpha * H * X
void h_gemm(double alpha, const HBlock& h, ConstMatrixView x, MatrixView y);
// Y += alpha * H^T * X
void h_gemm_transposed(double alpha, const HBlock& h, ConstMatrixView x, MatrixView y);
// Y += alpha * X * H
void h_gemm_right(double alpha, ConstMatrixView x, const HBlock& h, MatrixView y);

DenseMatrix densify(const HBlock& b);

// C <- C + alpha * R, formatted into the structure of C
void add_lowrank(HBlock& c, double alpha, const LowRank& r, double tol_rel);

// X * Y as a truncated low-rank matrix
LowRank product_lowrank(const HBlock& x, const HBlock& y, double tol_rel);

// C <- C - X * Y formatted into the structure of C
void multiply_update(HBlock& c, const HBlock& x, const HBlock& y, double tol_rel);

// B <- L^{-1} B for a factored diagonal block L (unit lower part, leaf pivots applied)
void solve_lower_into(const HBlock& l, HBlock& b, double tol_rel);
// B <- B U^{-1} for a factored diagonal block U (upper part)
void solve_upper_right_into(const HBlock& u, HBlock& b, double tol_rel);

// dense right-hand sides
void solve_lower_dense(const HBlock& l, MatrixView b);
void solve_upper_dense(const HBlock& u, MatrixView b);
void solve_upper_right_dense(const HBlock& u, MatrixView b);

// L\U stored in place; pivots live in the dense diagonal leaves.
class HLUFactors {
public:
    explicit HLUFactors(HMatrix lu) : lu_(std::move(lu)) {}

    const HMatrix& packed() const { return lu_; }
    Index size() const { return lu_.rows(); }

    // product of the factors, densified (for verification on small systems)
    DenseMatrix reconstruct() const;

private:
    HMatrix lu_;
};

// Recursive block LU; throws NumericalError naming the failing diagonal range.
HLUFactors h_lu(HMatrix h);
void h_lu_in_place(HBlock& a, double tol_rel);

std::vector<double> h_lu_solve(const HLUFactors& f, std::span<const double> b);

// 1 - (sum_lowrank rank*(rows+cols) + sum_dense rows*cols) / (rows*cols)
double compression(const HMatrix& h);

// ||x - solve(LU, A x)|| / ||x||
double err_metric(const HLUFactors& f, const CsrMatrix& a, std::span<const double> x);

// {"rows", "cols", "leaves": [{kind, row, col, rows, cols, rank}]}
void write_structure_json(std::ostream& os, const HMatrix& h);

}  // namespace tubeh

#endif  // TUBEH_HMATRIX_HPP
