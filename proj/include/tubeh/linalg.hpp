#ifndef TUBEH_LINALG_HPP
#define TUBEH_LINALG_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tubeh {

using Index = std::ptrdiff_t;

// Raised when a factorization or iteration breaks down numerically
// (singular pivot, non-convergence, non-finite values).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

//
// non-owning row-major views with a leading dimension
//

struct ConstMatrixView {
    const double* data = nullptr;
    Index rows = 0;
    Index cols = 0;
    Index ld = 0;

    const double& operator()(Index i, Index j) const { return data[i * ld + j]; }
    ConstMatrixView block(Index r0, Index c0, Index nr, Index nc) const {
        return {data + r0 * ld + c0, nr, nc, ld};
    }
};

struct MatrixView {
    double* data = nullptr;
    Index rows = 0;
    Index cols = 0;
    Index ld = 0;

    double& operator()(Index i, Index j) const { return data[i * ld + j]; }
    MatrixView block(Index r0, Index c0, Index nr, Index nc) const {
        return {data + r0 * ld + c0, nr, nc, ld};
    }
    operator ConstMatrixView() const { return {data, rows, cols, ld}; }
};

class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(Index rows, Index cols, double value = 0.0);

    static DenseMatrix identity(Index n);

    Index rows() const { return rows_; }
    Index cols() const { return cols_; }
    bool empty() const { return rows_ == 0 || cols_ == 0; }

    double& operator()(Index i, Index j) { return data_[static_cast<std::size_t>(i * cols_ + j)]; }
    double operator()(Index i, Index j) const { return data_[static_cast<std::size_t>(i * cols_ + j)]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> row(Index i) { return {data_.data() + i * cols_, static_cast<std::size_t>(cols_)}; }
    std::span<const double> row(Index i) const {
        return {data_.data() + i * cols_, static_cast<std::size_t>(cols_)};
    }

    MatrixView view() { return {data_.data(), rows_, cols_, cols_}; }
    ConstMatrixView view() const { return {data_.data(), rows_, cols_, cols_}; }
    ConstMatrixView cview() const { return view(); }

    DenseMatrix transposed() const;
    double frobenius_norm() const;

    static DenseMatrix from_view(ConstMatrixView v);

private:
    Index rows_ = 0;
    Index cols_ = 0;
    std::vector<double> data_;
};

// U * V^T with U (m x k), V (n x k). k = 0 is the zero block.
struct LowRank {
    DenseMatrix U;
    DenseMatrix V;

    LowRank() = default;
    LowRank(DenseMatrix u, DenseMatrix v);
    static LowRank zero(Index rows, Index cols);

    Index rows() const { return U.rows(); }
    Index cols() const { return V.rows(); }
    Index rank() const { return U.cols(); }

    DenseMatrix to_dense() const;
    double frobenius_norm() const;
};

// Packed L\U factors of P*A = L*U; perm[i] is the original row placed at position i.
struct PivotedLU {
    DenseMatrix lu;
    std::vector<Index> perm;
};

struct SvdResult {
    DenseMatrix U;              // m x p
    std::vector<double> sigma;  // p = min(m, n), non-increasing
    DenseMatrix V;              // n x p
};

struct AcaResult {
    LowRank approx;
    bool converged = true;  // false when max_rank stopped the iteration
};

using EntryFunction = std::function<double(Index, Index)>;

//
// BLAS-like kernels on views
//

// C = beta*C + alpha*op(A)*op(B)
void gemm(double alpha, ConstMatrixView a, bool trans_a, ConstMatrixView b, bool trans_b, double beta,
          MatrixView c);
DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b);

// B <- L^{-1} B with L unit lower triangular (strict lower part of `lu`)
void solve_unit_lower(ConstMatrixView lu, MatrixView b);
// B <- U^{-1} B with U the upper part of `lu` (including diagonal)
void solve_upper(ConstMatrixView lu, MatrixView b);
// B <- B U^{-1}
void solve_upper_right(ConstMatrixView lu, MatrixView b);

// In-place partial pivoting LU of a square view; returns the row permutation
// (position -> original row). Throws NumericalError on an exactly zero pivot column.
std::vector<Index> lu_in_place(MatrixView a);

//
// dense operations
//

PivotedLU dense_lu(DenseMatrix a);
std::vector<double> lu_solve(const PivotedLU& f, std::span<const double> b);

SvdResult svd(const DenseMatrix& a);
Index numerical_rank(const DenseMatrix& a, double tol_rel);

// Householder QR of an m x k matrix: Q is m x p, R is p x k, p = min(m, k).
void qr(const DenseMatrix& a, DenseMatrix& q, DenseMatrix& r);

//
// low-rank arithmetic
//

AcaResult aca(const EntryFunction& entry, Index rows, Index cols, double tol_rel, Index max_rank);
AcaResult aca(const DenseMatrix& block, double tol_rel, Index max_rank);
Index default_max_rank(Index rows, Index cols);

// Drops the trailing singular triplets while ||lr - result||_F <= tol_rel * max(||lr||_F, reference_norm).
LowRank truncate(const LowRank& lr, double tol_rel, double reference_norm = 0.0);
// (a + b) truncated against sqrt(||a||^2 + ||b||^2)
LowRank lowrank_add(const LowRank& a, const LowRank& b, double tol_rel);

// best rank approximation of a dense block at relative Frobenius tolerance
LowRank compress_dense(const DenseMatrix& a, double tol_rel);

double norm2(std::span<const double> x);

}  // namespace tubeh

#endif  // TUBEH_LINALG_HPP
