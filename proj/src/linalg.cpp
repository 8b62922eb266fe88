#include "tubeh/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

namespace tubeh {

DenseMatrix::DenseMatrix(Index rows, Index cols, double value)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), value) {
    if (rows < 0 || cols < 0)
        throw std::invalid_argument("DenseMatrix: negative dimension");
}

DenseMatrix DenseMatrix::identity(Index n) {
    DenseMatrix m(n, n);
    for (Index i = 0; i < n; ++i)
        m(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::transposed() const {
    DenseMatrix t(cols_, rows_);
    for (Index i = 0; i < rows_; ++i)
        for (Index j = 0; j < cols_; ++j)
            t(j, i) = (*this)(i, j);
    return t;
}

double DenseMatrix::frobenius_norm() const {
    double s = 0.0;
    for (double v : data_)
        s += v * v;
    return std::sqrt(s);
}

DenseMatrix DenseMatrix::from_view(ConstMatrixView v) {
    DenseMatrix m(v.rows, v.cols);
    for (Index i = 0; i < v.rows; ++i)
        std::copy_n(v.data + i * v.ld, v.cols, m.data() + i * v.cols);
    return m;
}

LowRank::LowRank(DenseMatrix u, DenseMatrix v) : U(std::move(u)), V(std::move(v)) {
    if (U.cols() != V.cols())
        throw std::invalid_argument("LowRank: factor ranks differ");
}

LowRank LowRank::zero(Index rows, Index cols) { return LowRank(DenseMatrix(rows, 0), DenseMatrix(cols, 0)); }

DenseMatrix LowRank::to_dense() const {
    DenseMatrix d(rows(), cols());
    if (rank() > 0)
        gemm(1.0, U.view(), false, V.view(), true, 0.0, d.view());
    return d;
}

double LowRank::frobenius_norm() const {
    // ||U V^T||_F^2 = trace((U^T U)(V^T V))
    const Index k = rank();
    if (k == 0)
        return 0.0;
    DenseMatrix gu(k, k), gv(k, k);
    gemm(1.0, U.view(), true, U.view(), false, 0.0, gu.view());
    gemm(1.0, V.view(), true, V.view(), false, 0.0, gv.view());
    double s = 0.0;
    for (Index i = 0; i < k; ++i)
        for (Index j = 0; j < k; ++j)
            s += gu(i, j) * gv(j, i);
    return std::sqrt(std::max(s, 0.0));
}

double norm2(std::span<const double> x) {
    double s = 0.0;
    for (double v : x)
        s += v * v;
    return std::sqrt(s);
}

//
// kernels
//

void gemm(double alpha, ConstMatrixView a, bool trans_a, ConstMatrixView b, bool trans_b, double beta,
          MatrixView c) {
    const Index m = trans_a ? a.cols : a.rows;
    const Index k = trans_a ? a.rows : a.cols;
    const Index kb = trans_b ? b.cols : b.rows;
    const Index n = trans_b ? b.rows : b.cols;
    if (k != kb || c.rows != m || c.cols != n)
        throw std::invalid_argument("gemm: shape mismatch");

    if (beta != 1.0) {
        for (Index i = 0; i < m; ++i) {
            double* ci = c.data + i * c.ld;
            if (beta == 0.0)
                std::fill_n(ci, n, 0.0);
            else
                for (Index j = 0; j < n; ++j)
                    ci[j] *= beta;
        }
    }
    if (alpha == 0.0 || k == 0)
        return;

    if (!trans_a && !trans_b) {
        for (Index i = 0; i < m; ++i) {
            double* ci = c.data + i * c.ld;
            const double* ai = a.data + i * a.ld;
            for (Index l = 0; l < k; ++l) {
                const double s = alpha * ai[l];
                if (s == 0.0)
                    continue;
                const double* bl = b.data + l * b.ld;
                for (Index j = 0; j < n; ++j)
                    ci[j] += s * bl[j];
            }
        }
    } else if (trans_a && !trans_b) {
        for (Index l = 0; l < k; ++l) {
            const double* al = a.data + l * a.ld;
            const double* bl = b.data + l * b.ld;
            for (Index i = 0; i < m; ++i) {
                const double s = alpha * al[i];
                if (s == 0.0)
                    continue;
                double* ci = c.data + i * c.ld;
                for (Index j = 0; j < n; ++j)
                    ci[j] += s * bl[j];
            }
        }
    } else if (!trans_a && trans_b) {
        for (Index i = 0; i < m; ++i) {
            const double* ai = a.data + i * a.ld;
            double* ci = c.data + i * c.ld;
            for (Index j = 0; j < n; ++j) {
                const double* bj = b.data + j * b.ld;
                double s = 0.0;
                for (Index l = 0; l < k; ++l)
                    s += ai[l] * bj[l];
                ci[j] += alpha * s;
            }
        }
    } else {
        for (Index i = 0; i < m; ++i)
            for (Index j = 0; j < n; ++j) {
                double s = 0.0;
                for (Index l = 0; l < k; ++l)
                    s += a(l, i) * b(j, l);
                c(i, j) += alpha * s;
            }
    }
}

DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix c(a.rows(), b.cols());
    gemm(1.0, a.view(), false, b.view(), false, 0.0, c.view());
    return c;
}

void solve_unit_lower(ConstMatrixView lu, MatrixView b) {
    const Index n = lu.rows;
    for (Index i = 1; i < n; ++i) {
        double* bi = b.data + i * b.ld;
        for (Index l = 0; l < i; ++l) {
            const double s = lu(i, l);
            if (s == 0.0)
                continue;
            const double* bl = b.data + l * b.ld;
            for (Index j = 0; j < b.cols; ++j)
                bi[j] -= s * bl[j];
        }
    }
}

void solve_upper(ConstMatrixView lu, MatrixView b) {
    const Index n = lu.rows;
    for (Index i = n - 1; i >= 0; --i) {
        double* bi = b.data + i * b.ld;
        for (Index l = i + 1; l < n; ++l) {
            const double s = lu(i, l);
            if (s == 0.0)
                continue;
            const double* bl = b.data + l * b.ld;
            for (Index j = 0; j < b.cols; ++j)
                bi[j] -= s * bl[j];
        }
        const double d = lu(i, i);
        if (d == 0.0)
            throw NumericalError("solve_upper: zero diagonal");
        for (Index j = 0; j < b.cols; ++j)
            bi[j] /= d;
    }
}

void solve_upper_right(ConstMatrixView lu, MatrixView b) {
    const Index n = lu.rows;
    for (Index r = 0; r < b.rows; ++r) {
        double* x = b.data + r * b.ld;
        for (Index j = 0; j < n; ++j) {
            const double d = lu(j, j);
            if (d == 0.0)
                throw NumericalError("solve_upper_right: zero diagonal");
            x[j] /= d;
            const double xj = x[j];
            if (xj == 0.0)
                continue;
            const double* uj = lu.data + j * lu.ld;
            for (Index l = j + 1; l < n; ++l)
                x[l] -= xj * uj[l];
        }
    }
}

std::vector<Index> lu_in_place(MatrixView a) {
    if (a.rows != a.cols)
        throw std::invalid_argument("lu: matrix not square");
    const Index n = a.rows;
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});

    for (Index k = 0; k < n; ++k) {
        Index p = k;
        double best = std::abs(a(k, k));
        for (Index i = k + 1; i < n; ++i)
            if (std::abs(a(i, k)) > best) {
                best = std::abs(a(i, k));
                p = i;
            }
        if (best == 0.0 || !std::isfinite(best))
            throw NumericalError("lu: singular pivot column " + std::to_string(k));
        if (p != k) {
            std::swap_ranges(a.data + k * a.ld, a.data + k * a.ld + n, a.data + p * a.ld);
            std::swap(perm[static_cast<std::size_t>(k)], perm[static_cast<std::size_t>(p)]);
        }
        const double pivot = a(k, k);
        const double* ak = a.data + k * a.ld;
        for (Index i = k + 1; i < n; ++i) {
            double* ai = a.data + i * a.ld;
            const double l = ai[k] / pivot;
            ai[k] = l;
            if (l == 0.0)
                continue;
            for (Index j = k + 1; j < n; ++j)
                ai[j] -= l * ak[j];
        }
    }
    return perm;
}

PivotedLU dense_lu(DenseMatrix a) {
    PivotedLU f;
    f.perm = lu_in_place(a.view());
    f.lu = std::move(a);
    return f;
}

std::vector<double> lu_solve(const PivotedLU& f, std::span<const double> b) {
    const Index n = f.lu.rows();
    if (static_cast<Index>(b.size()) != n)
        throw std::invalid_argument("lu_solve: size mismatch");
    std::vector<double> x(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        x[static_cast<std::size_t>(i)] = b[static_cast<std::size_t>(f.perm[static_cast<std::size_t>(i)])];
    MatrixView xv{x.data(), n, 1, 1};
    solve_unit_lower(f.lu.view(), xv);
    solve_upper(f.lu.view(), xv);
    return x;
}

//
// SVD: one-sided Jacobi on the rows of A^T (columns of A stored contiguously)
//

namespace {

SvdResult jacobi_svd_tall(const DenseMatrix& a) {
    const Index m = a.rows();
    const Index n = a.cols();
    DenseMatrix w = a.transposed();  // n x m, row j = column j of A
    DenseMatrix vt = DenseMatrix::identity(n);

    constexpr int max_sweeps = 80;
    constexpr double eps = std::numeric_limits<double>::epsilon();
    // columns below this are numerically zero against the whole matrix
    const double floor = eps * eps * eps * std::max(1.0, static_cast<double>(n)) *
                         std::pow(a.frobenius_norm(), 2);
    const double rot_tol = eps * std::sqrt(static_cast<double>(m));
    bool done = false;
    for (int sweep = 0; sweep < max_sweeps && !done; ++sweep) {
        done = true;
        for (Index p = 0; p < n - 1; ++p) {
            double* wp = w.data() + p * m;
            for (Index q = p + 1; q < n; ++q) {
                double* wq = w.data() + q * m;
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (Index i = 0; i < m; ++i) {
                    alpha += wp[i] * wp[i];
                    beta += wq[i] * wq[i];
                    gamma += wp[i] * wq[i];
                }
                if (gamma == 0.0 || alpha <= floor || beta <= floor ||
                    std::abs(gamma) <= rot_tol * std::sqrt(alpha) * std::sqrt(beta))
                    continue;
                done = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (Index i = 0; i < m; ++i) {
                    const double x = wp[i], y = wq[i];
                    wp[i] = c * x - s * y;
                    wq[i] = s * x + c * y;
                }
                double* vp = vt.data() + p * n;
                double* vq = vt.data() + q * n;
                for (Index i = 0; i < n; ++i) {
                    const double x = vp[i], y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
            }
        }
    }
    if (!done)
        throw NumericalError("svd: Jacobi sweeps did not converge");

    std::vector<double> norms(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j)
        norms[static_cast<std::size_t>(j)] = norm2(w.row(j));
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) {
        return norms[static_cast<std::size_t>(x)] > norms[static_cast<std::size_t>(y)];
    });

    SvdResult r;
    r.U = DenseMatrix(m, n);
    r.V = DenseMatrix(n, n);
    r.sigma.resize(static_cast<std::size_t>(n));
    for (Index jj = 0; jj < n; ++jj) {
        const Index j = order[static_cast<std::size_t>(jj)];
        const double s = norms[static_cast<std::size_t>(j)];
        r.sigma[static_cast<std::size_t>(jj)] = s;
        for (Index i = 0; i < m; ++i)
            r.U(i, jj) = s > 0.0 ? w(j, i) / s : 0.0;
        for (Index i = 0; i < n; ++i)
            r.V(i, jj) = vt(j, i);
    }
    return r;
}

}  // namespace

SvdResult svd(const DenseMatrix& a) {
    for (Index i = 0; i < a.rows(); ++i)
        for (double v : a.row(i))
            if (!std::isfinite(v))
                throw NumericalError("svd: non-finite entry");
    if (a.rows() >= a.cols())
        return jacobi_svd_tall(a);
    SvdResult t = jacobi_svd_tall(a.transposed());
    std::swap(t.U, t.V);
    return t;
}

Index numerical_rank(const DenseMatrix& a, double tol_rel) {
    if (a.empty())
        return 0;
    const SvdResult s = svd(a);
    if (s.sigma.empty() || s.sigma.front() == 0.0)
        return 0;
    const double cut = tol_rel * s.sigma.front();
    return static_cast<Index>(std::count_if(s.sigma.begin(), s.sigma.end(), [&](double v) { return v > cut; }));
}

void qr(const DenseMatrix& a, DenseMatrix& q, DenseMatrix& r) {
    const Index m = a.rows();
    const Index k = a.cols();
    const Index p = std::min(m, k);
    DenseMatrix w = a;
    std::vector<std::vector<double>> reflectors(static_cast<std::size_t>(p));
    std::vector<double> betas(static_cast<std::size_t>(p), 0.0);

    for (Index j = 0; j < p; ++j) {
        std::vector<double> v(static_cast<std::size_t>(m - j));
        for (Index i = j; i < m; ++i)
            v[static_cast<std::size_t>(i - j)] = w(i, j);
        const double xnorm = norm2(v);
        if (xnorm == 0.0) {
            reflectors[static_cast<std::size_t>(j)] = std::move(v);
            continue;
        }
        const double alpha = v[0] >= 0.0 ? -xnorm : xnorm;
        v[0] -= alpha;
        const double vnorm2 = std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
        const double beta = vnorm2 > 0.0 ? 2.0 / vnorm2 : 0.0;
        for (Index c = j; c < k; ++c) {
            double s = 0.0;
            for (Index i = j; i < m; ++i)
                s += v[static_cast<std::size_t>(i - j)] * w(i, c);
            s *= beta;
            for (Index i = j; i < m; ++i)
                w(i, c) -= s * v[static_cast<std::size_t>(i - j)];
        }
        reflectors[static_cast<std::size_t>(j)] = std::move(v);
        betas[static_cast<std::size_t>(j)] = beta;
    }

    r = DenseMatrix(p, k);
    for (Index i = 0; i < p; ++i)
        for (Index c = i; c < k; ++c)
            r(i, c) = w(i, c);

    q = DenseMatrix(m, p);
    for (Index i = 0; i < p; ++i)
        q(i, i) = 1.0;
    for (Index j = p - 1; j >= 0; --j) {
        const auto& v = reflectors[static_cast<std::size_t>(j)];
        const double beta = betas[static_cast<std::size_t>(j)];
        if (beta == 0.0)
            continue;
        for (Index c = 0; c < p; ++c) {
            double s = 0.0;
            for (Index i = j; i < m; ++i)
                s += v[static_cast<std::size_t>(i - j)] * q(i, c);
            s *= beta;
            for (Index i = j; i < m; ++i)
                q(i, c) -= s * v[static_cast<std::size_t>(i - j)];
        }
    }
}

//
// low-rank arithmetic
//

Index default_max_rank(Index rows, Index cols) { return std::max<Index>(1, std::min(rows, cols) / 2); }

AcaResult aca(const DenseMatrix& block, double tol_rel, Index max_rank) {
    if (tol_rel <= 0.0)
        throw std::invalid_argument("aca: tolerance must be positive");
    if (max_rank < 1)
        throw std::invalid_argument("aca: max_rank must be at least 1");
    const Index m = block.rows();
    const Index n = block.cols();
    DenseMatrix residual = block;
    std::vector<std::vector<double>> us, vs;
    double approx_norm2 = 0.0;
    const double scale = std::sqrt(static_cast<double>(m) * static_cast<double>(n));

    AcaResult result;
    while (true) {
        Index pi = 0, pj = 0;
        double best = 0.0;
        for (Index i = 0; i < m; ++i)
            for (Index j = 0; j < n; ++j)
                if (std::abs(residual(i, j)) > best) {
                    best = std::abs(residual(i, j));
                    pi = i;
                    pj = j;
                }
        if (!std::isfinite(best))
            throw NumericalError("aca: non-finite residual");
        if (best == 0.0 || best * scale <= tol_rel * std::sqrt(approx_norm2))
            break;
        if (static_cast<Index>(us.size()) >= max_rank) {
            result.converged = false;
            break;
        }
        std::vector<double> u(static_cast<std::size_t>(m)), v(static_cast<std::size_t>(n));
        const double pivot = residual(pi, pj);
        for (Index i = 0; i < m; ++i)
            u[static_cast<std::size_t>(i)] = residual(i, pj);
        for (Index j = 0; j < n; ++j)
            v[static_cast<std::size_t>(j)] = residual(pi, j) / pivot;

        double cross = 0.0;
        for (std::size_t l = 0; l < us.size(); ++l)
            cross += std::inner_product(u.begin(), u.end(), us[l].begin(), 0.0) *
                     std::inner_product(v.begin(), v.end(), vs[l].begin(), 0.0);
        const double nu = std::inner_product(u.begin(), u.end(), u.begin(), 0.0);
        const double nv = std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
        approx_norm2 = std::max(0.0, approx_norm2 + 2.0 * cross + nu * nv);

        for (Index i = 0; i < m; ++i) {
            const double ui = u[static_cast<std::size_t>(i)];
            if (ui == 0.0)
                continue;
            for (Index j = 0; j < n; ++j)
                residual(i, j) -= ui * v[static_cast<std::size_t>(j)];
        }
        us.push_back(std::move(u));
        vs.push_back(std::move(v));
    }

    const Index k = static_cast<Index>(us.size());
    DenseMatrix U(m, k), V(n, k);
    for (Index l = 0; l < k; ++l) {
        for (Index i = 0; i < m; ++i)
            U(i, l) = us[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
        for (Index j = 0; j < n; ++j)
            V(j, l) = vs[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)];
    }
    result.approx = LowRank(std::move(U), std::move(V));
    return result;
}

AcaResult aca(const EntryFunction& entry, Index rows, Index cols, double tol_rel, Index max_rank) {
    DenseMatrix block(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j)
            block(i, j) = entry(i, j);
    return aca(block, tol_rel, max_rank);
}

namespace {

// smallest r with sum_{i >= r} sigma_i^2 <= tol^2 * max(sum_i sigma_i^2, ref^2)
Index truncation_rank(const std::vector<double>& sigma, double tol_rel, double reference_norm = 0.0) {
    double total = 0.0;
    for (double s : sigma)
        total += s * s;
    if (total == 0.0)
        return 0;
    const double allowed = tol_rel * tol_rel * std::max(total, reference_norm * reference_norm);
    double tail = 0.0;
    Index r = static_cast<Index>(sigma.size());
    while (r > 0) {
        const double s = sigma[static_cast<std::size_t>(r - 1)];
        if (tail + s * s > allowed)
            break;
        tail += s * s;
        --r;
    }
    return r;
}

}  // namespace

LowRank truncate(const LowRank& lr, double tol_rel, double reference_norm) {
    const Index m = lr.rows();
    const Index n = lr.cols();
    if (lr.rank() == 0)
        return LowRank::zero(m, n);

    DenseMatrix qu, ru, qv, rv;
    qr(lr.U, qu, ru);
    qr(lr.V, qv, rv);
    DenseMatrix core(ru.rows(), rv.rows());
    gemm(1.0, ru.view(), false, rv.view(), true, 0.0, core.view());
    const SvdResult s = svd(core);
    const Index r = truncation_rank(s.sigma, tol_rel, reference_norm);
    if (r == 0)
        return LowRank::zero(m, n);

    DenseMatrix x(core.rows(), r), y(core.cols(), r);
    for (Index i = 0; i < core.rows(); ++i)
        for (Index j = 0; j < r; ++j)
            x(i, j) = s.U(i, j) * s.sigma[static_cast<std::size_t>(j)];
    for (Index i = 0; i < core.cols(); ++i)
        for (Index j = 0; j < r; ++j)
            y(i, j) = s.V(i, j);
    return LowRank(multiply(qu, x), multiply(qv, y));
}

LowRank lowrank_add(const LowRank& a, const LowRank& b, double tol_rel) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("lowrank_add: shape mismatch");
    const Index m = a.rows(), n = a.cols();
    const Index ka = a.rank(), kb = b.rank();
    DenseMatrix U(m, ka + kb), V(n, ka + kb);
    for (Index i = 0; i < m; ++i) {
        std::copy_n(a.U.data() + i * ka, ka, U.data() + i * (ka + kb));
        std::copy_n(b.U.data() + i * kb, kb, U.data() + i * (ka + kb) + ka);
    }
    for (Index i = 0; i < n; ++i) {
        std::copy_n(a.V.data() + i * ka, ka, V.data() + i * (ka + kb));
        std::copy_n(b.V.data() + i * kb, kb, V.data() + i * (ka + kb) + ka);
    }
    // measured against the operands so that cancellation truncates to rank 0
    return truncate(LowRank(std::move(U), std::move(V)), tol_rel,
                    std::hypot(a.frobenius_norm(), b.frobenius_norm()));
}

LowRank compress_dense(const DenseMatrix& a, double tol_rel) {
    if (a.empty())
        return LowRank::zero(a.rows(), a.cols());
    const SvdResult s = svd(a);
    const Index r = truncation_rank(s.sigma, tol_rel);
    DenseMatrix U(a.rows(), r), V(a.cols(), r);
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < r; ++j)
            U(i, j) = s.U(i, j) * s.sigma[static_cast<std::size_t>(j)];
    for (Index i = 0; i < a.cols(); ++i)
        for (Index j = 0; j < r; ++j)
            V(i, j) = s.V(i, j);
    return LowRank(std::move(U), std::move(V));
}

}  // namespace tubeh
