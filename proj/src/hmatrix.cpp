#include "tubeh/hmatrix.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "json.hpp"

namespace tubeh {

HBlock HBlock::dense_leaf(DenseMatrix d, Index row_begin, Index col_begin) {
    HBlock b;
    b.row_begin = row_begin;
    b.col_begin = col_begin;
    b.rows = d.rows();
    b.cols = d.cols();
    b.kind = BlockKind::Dense;
    b.dense = std::move(d);
    return b;
}

HBlock HBlock::lowrank_leaf(LowRank lr, Index row_begin, Index col_begin) {
    HBlock b;
    b.row_begin = row_begin;
    b.col_begin = col_begin;
    b.rows = lr.rows();
    b.cols = lr.cols();
    b.kind = BlockKind::LowRank;
    b.lowrank = std::move(lr);
    return b;
}

std::unique_ptr<HBlock> HBlock::clone() const {
    auto c = std::make_unique<HBlock>();
    c->row_begin = row_begin;
    c->col_begin = col_begin;
    c->rows = rows;
    c->cols = cols;
    c->kind = kind;
    c->dense = dense;
    c->lowrank = lowrank;
    c->pivots = pivots;
    for (std::size_t i = 0; i < 4; ++i)
        if (children[i])
            c->children[i] = children[i]->clone();
    return c;
}

HMatrix::HMatrix(std::unique_ptr<HBlock> root, double tol_rel) : root_(std::move(root)), tol_(tol_rel) {}

HMatrix HMatrix::clone() const {
    HMatrix h(root_->clone(), tol_);
    h.unconverged_blocks = unconverged_blocks;
    return h;
}

namespace {

Index row_offset(const HBlock& parent, int i) { return parent.child(i, 0).row_begin - parent.row_begin; }
Index col_offset(const HBlock& parent, int j) { return parent.child(0, j).col_begin - parent.col_begin; }

void check_shape(bool ok, const char* what) {
    if (!ok)
        throw std::invalid_argument(std::string("hmatrix: shape mismatch in ") + what);
}

}  // namespace

//
// products with dense blocks of vectors
//

void h_gemm(double alpha, const HBlock& h, ConstMatrixView x, MatrixView y) {
    check_shape(x.rows == h.cols && y.rows == h.rows && x.cols == y.cols, "h_gemm");
    switch (h.kind) {
    case BlockKind::Dense:
        gemm(alpha, h.dense.view(), false, x, false, 1.0, y);
        break;
    case BlockKind::LowRank: {
        const Index k = h.lowrank.rank();
        if (k == 0)
            break;
        DenseMatrix t(k, x.cols);
        gemm(1.0, h.lowrank.V.view(), true, x, false, 0.0, t.view());
        gemm(alpha, h.lowrank.U.view(), false, t.view(), false, 1.0, y);
        break;
    }
    case BlockKind::Inner:
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                const HBlock& c = h.child(i, j);
                h_gemm(alpha, c, x.block(col_offset(h, j), 0, c.cols, x.cols),
                       y.block(row_offset(h, i), 0, c.rows, y.cols));
            }
        break;
    }
}

void h_gemm_transposed(double alpha, const HBlock& h, ConstMatrixView x, MatrixView y) {
    check_shape(x.rows == h.rows && y.rows == h.cols && x.cols == y.cols, "h_gemm_transposed");
    switch (h.kind) {
    case BlockKind::Dense:
        gemm(alpha, h.dense.view(), true, x, false, 1.0, y);
        break;
    case BlockKind::LowRank: {
        const Index k = h.lowrank.rank();
        if (k == 0)
            break;
        DenseMatrix t(k, x.cols);
        gemm(1.0, h.lowrank.U.view(), true, x, false, 0.0, t.view());
        gemm(alpha, h.lowrank.V.view(), false, t.view(), false, 1.0, y);
        break;
    }
    case BlockKind::Inner:
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                const HBlock& c = h.child(i, j);
                h_gemm_transposed(alpha, c, x.block(row_offset(h, i), 0, c.rows, x.cols),
                                  y.block(col_offset(h, j), 0, c.cols, y.cols));
            }
        break;
    }
}

void h_gemm_right(double alpha, ConstMatrixView x, const HBlock& h, MatrixView y) {
    check_shape(x.cols == h.rows && y.cols == h.cols && x.rows == y.rows, "h_gemm_right");
    switch (h.kind) {
    case BlockKind::Dense:
        gemm(alpha, x, false, h.dense.view(), false, 1.0, y);
        break;
    case BlockKind::LowRank: {
        const Index k = h.lowrank.rank();
        if (k == 0)
            break;
        DenseMatrix t(x.rows, k);
        gemm(1.0, x, false, h.lowrank.U.view(), false, 0.0, t.view());
        gemm(alpha, t.view(), false, h.lowrank.V.view(), true, 1.0, y);
        break;
    }
    case BlockKind::Inner:
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                const HBlock& c = h.child(i, j);
                h_gemm_right(alpha, x.block(0, row_offset(h, i), x.rows, c.rows), c,
                             y.block(0, col_offset(h, j), y.rows, c.cols));
            }
        break;
    }
}

DenseMatrix densify(const HBlock& b) {
    switch (b.kind) {
    case BlockKind::Dense:
        return b.dense;
    case BlockKind::LowRank:
        return b.lowrank.to_dense();
    case BlockKind::Inner:
        break;
    }
    DenseMatrix d(b.rows, b.cols);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const HBlock& c = b.child(i, j);
            const DenseMatrix sub = densify(c);
            const Index r0 = row_offset(b, i), c0 = col_offset(b, j);
            for (Index r = 0; r < c.rows; ++r)
                std::copy_n(sub.data() + r * c.cols, c.cols, d.data() + (r0 + r) * b.cols + c0);
        }
    return d;
}

//
// formatted arithmetic
//

namespace {

DenseMatrix row_slice(const DenseMatrix& m, Index r0, Index nr) {
    return DenseMatrix::from_view(m.view().block(r0, 0, nr, m.cols()));
}

// A dense m x n product Z as a low-rank pair of rank min(m, n).
LowRank lowrank_of_dense(DenseMatrix z) {
    if (z.rows() <= z.cols())
        return LowRank(DenseMatrix::identity(z.rows()), z.transposed());
    const Index n = z.cols();
    return LowRank(std::move(z), DenseMatrix::identity(n));
}

}  // namespace

void add_lowrank(HBlock& c, double alpha, const LowRank& r, double tol_rel) {
    check_shape(r.rows() == c.rows && r.cols() == c.cols, "add_lowrank");
    if (r.rank() == 0 || alpha == 0.0)
        return;
    switch (c.kind) {
    case BlockKind::Dense:
        gemm(alpha, r.U.view(), false, r.V.view(), true, 1.0, c.dense.view());
        break;
    case BlockKind::LowRank: {
        LowRank scaled = r;
        if (alpha != 1.0)
            for (Index i = 0; i < scaled.U.rows(); ++i)
                for (double& v : scaled.U.row(i))
                    v *= alpha;
        c.lowrank = lowrank_add(c.lowrank, scaled, tol_rel);
        break;
    }
    case BlockKind::Inner:
        for (int i = 0; i < 2; ++i) {
            const DenseMatrix u = row_slice(r.U, row_offset(c, i), c.child(i, 0).rows);
            for (int j = 0; j < 2; ++j) {
                HBlock& sub = c.child(i, j);
                add_lowrank(sub, alpha, LowRank(u, row_slice(r.V, col_offset(c, j), sub.cols)), tol_rel);
            }
        }
        break;
    }
}

LowRank product_lowrank(const HBlock& x, const HBlock& y, double tol_rel) {
    check_shape(x.cols == y.rows, "product_lowrank");
    const Index m = x.rows, n = y.cols;

    if (x.kind == BlockKind::LowRank) {
        const Index k = x.lowrank.rank();
        if (k == 0)
            return LowRank::zero(m, n);
        DenseMatrix w(n, k);
        h_gemm_transposed(1.0, y, x.lowrank.V.view(), w.view());
        return LowRank(x.lowrank.U, std::move(w));
    }
    if (y.kind == BlockKind::LowRank) {
        const Index k = y.lowrank.rank();
        if (k == 0)
            return LowRank::zero(m, n);
        DenseMatrix t(m, k);
        h_gemm(1.0, x, y.lowrank.U.view(), t.view());
        return LowRank(std::move(t), y.lowrank.V);
    }
    if (x.kind == BlockKind::Dense && y.kind == BlockKind::Dense) {
        if (x.cols <= std::min(m, n))
            return LowRank(x.dense, y.dense.transposed());
        return lowrank_of_dense(multiply(x.dense, y.dense));
    }
    if (x.kind == BlockKind::Dense) {
        DenseMatrix z(m, n);
        h_gemm_right(1.0, x.dense.view(), y, z.view());
        return lowrank_of_dense(std::move(z));
    }
    if (y.kind == BlockKind::Dense) {
        DenseMatrix z(m, n);
        h_gemm(1.0, x, y.dense.view(), z.view());
        return lowrank_of_dense(std::move(z));
    }

    // both hierarchical: agglomerate the four sub-products
    std::array<LowRank, 4> parts;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            LowRank acc = LowRank::zero(x.child(i, 0).rows, y.child(0, j).cols);
            for (int k = 0; k < 2; ++k) {
                LowRank p = product_lowrank(x.child(i, k), y.child(k, j), tol_rel);
                acc = acc.rank() == 0 ? truncate(p, tol_rel) : lowrank_add(acc, p, tol_rel);
            }
            parts[static_cast<std::size_t>(2 * i + j)] = std::move(acc);
        }
    Index total = 0;
    for (const LowRank& p : parts)
        total += p.rank();
    DenseMatrix U(m, total), V(n, total);
    Index col = 0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const LowRank& p = parts[static_cast<std::size_t>(2 * i + j)];
            const Index r0 = x.child(i, 0).row_begin - x.row_begin;
            const Index c0 = y.child(0, j).col_begin - y.col_begin;
            for (Index a = 0; a < p.U.rows(); ++a)
                for (Index l = 0; l < p.rank(); ++l)
                    U(r0 + a, col + l) = p.U(a, l);
            for (Index b = 0; b < p.V.rows(); ++b)
                for (Index l = 0; l < p.rank(); ++l)
                    V(c0 + b, col + l) = p.V(b, l);
            col += p.rank();
        }
    return truncate(LowRank(std::move(U), std::move(V)), tol_rel);
}

namespace {

// exactly zero: rank-0 or all-zero leaves throughout
bool is_null(const HBlock& b) {
    switch (b.kind) {
    case BlockKind::LowRank:
        return b.lowrank.rank() == 0;
    case BlockKind::Dense:
        return std::all_of(b.dense.data(), b.dense.data() + b.rows * b.cols, [](double v) { return v == 0.0; });
    case BlockKind::Inner:
        break;
    }
    for (const auto& ch : b.children)
        if (!is_null(*ch))
            return false;
    return true;
}

}  // namespace

void multiply_update(HBlock& c, const HBlock& x, const HBlock& y, double tol_rel) {
    check_shape(x.rows == c.rows && y.cols == c.cols && x.cols == y.rows, "multiply_update");
    if (is_null(x) || is_null(y))
        return;

    if (x.kind == BlockKind::LowRank || y.kind == BlockKind::LowRank) {
        add_lowrank(c, -1.0, product_lowrank(x, y, tol_rel), tol_rel);
        return;
    }
    if (c.kind == BlockKind::Inner && x.kind == BlockKind::Inner && y.kind == BlockKind::Inner) {
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k)
                    multiply_update(c.child(i, j), x.child(i, k), y.child(k, j), tol_rel);
        return;
    }
    if (c.kind == BlockKind::Dense) {
        if (x.kind == BlockKind::Dense && y.kind == BlockKind::Dense) {
            gemm(-1.0, x.dense.view(), false, y.dense.view(), false, 1.0, c.dense.view());
        } else if (x.kind == BlockKind::Dense) {
            h_gemm_right(-1.0, x.dense.view(), y, c.dense.view());
        } else if (y.kind == BlockKind::Dense) {
            h_gemm(-1.0, x, y.dense.view(), c.dense.view());
        } else {
            const DenseMatrix yd = densify(y);
            h_gemm(-1.0, x, yd.view(), c.dense.view());
        }
        return;
    }
    add_lowrank(c, -1.0, product_lowrank(x, y, tol_rel), tol_rel);
}

//
// triangular solves
//

void solve_lower_dense(const HBlock& l, MatrixView b) {
    check_shape(b.rows == l.rows && l.rows == l.cols, "solve_lower_dense");
    switch (l.kind) {
    case BlockKind::Dense: {
        if (!l.pivots.empty()) {
            DenseMatrix tmp = DenseMatrix::from_view(b);
            for (Index i = 0; i < b.rows; ++i)
                std::copy_n(tmp.data() + l.pivots[static_cast<std::size_t>(i)] * b.cols, b.cols, b.data + i * b.ld);
        }
        solve_unit_lower(l.dense.view(), b);
        break;
    }
    case BlockKind::LowRank:
        throw std::invalid_argument("solve_lower_dense: low-rank diagonal block");
    case BlockKind::Inner: {
        const Index n0 = l.child(0, 0).rows;
        MatrixView b0 = b.block(0, 0, n0, b.cols);
        MatrixView b1 = b.block(n0, 0, b.rows - n0, b.cols);
        solve_lower_dense(l.child(0, 0), b0);
        h_gemm(-1.0, l.child(1, 0), b0, b1);
        solve_lower_dense(l.child(1, 1), b1);
        break;
    }
    }
}

void solve_upper_dense(const HBlock& u, MatrixView b) {
    check_shape(b.rows == u.rows && u.rows == u.cols, "solve_upper_dense");
    switch (u.kind) {
    case BlockKind::Dense:
        solve_upper(u.dense.view(), b);
        break;
    case BlockKind::LowRank:
        throw std::invalid_argument("solve_upper_dense: low-rank diagonal block");
    case BlockKind::Inner: {
        const Index n0 = u.child(0, 0).rows;
        MatrixView b0 = b.block(0, 0, n0, b.cols);
        MatrixView b1 = b.block(n0, 0, b.rows - n0, b.cols);
        solve_upper_dense(u.child(1, 1), b1);
        h_gemm(-1.0, u.child(0, 1), b1, b0);
        solve_upper_dense(u.child(0, 0), b0);
        break;
    }
    }
}

void solve_upper_right_dense(const HBlock& u, MatrixView b) {
    check_shape(b.cols == u.rows && u.rows == u.cols, "solve_upper_right_dense");
    switch (u.kind) {
    case BlockKind::Dense:
        solve_upper_right(u.dense.view(), b);
        break;
    case BlockKind::LowRank:
        throw std::invalid_argument("solve_upper_right_dense: low-rank diagonal block");
    case BlockKind::Inner: {
        const Index n0 = u.child(0, 0).cols;
        MatrixView b0 = b.block(0, 0, b.rows, n0);
        MatrixView b1 = b.block(0, n0, b.rows, b.cols - n0);
        solve_upper_right_dense(u.child(0, 0), b0);
        h_gemm_right(-1.0, b0, u.child(0, 1), b1);
        solve_upper_right_dense(u.child(1, 1), b1);
        break;
    }
    }
}

void solve_lower_into(const HBlock& l, HBlock& b, double tol_rel) {
    check_shape(b.rows == l.rows, "solve_lower_into");
    switch (b.kind) {
    case BlockKind::LowRank:
        if (b.lowrank.rank() > 0)
            solve_lower_dense(l, b.lowrank.U.view());
        break;
    case BlockKind::Dense:
        solve_lower_dense(l, b.dense.view());
        break;
    case BlockKind::Inner:
        if (l.kind != BlockKind::Inner)
            throw std::invalid_argument("solve_lower_into: hierarchical block under a leaf diagonal");
        for (int j = 0; j < 2; ++j) {
            solve_lower_into(l.child(0, 0), b.child(0, j), tol_rel);
            multiply_update(b.child(1, j), l.child(1, 0), b.child(0, j), tol_rel);
            solve_lower_into(l.child(1, 1), b.child(1, j), tol_rel);
        }
        break;
    }
}

void solve_upper_right_into(const HBlock& u, HBlock& b, double tol_rel) {
    check_shape(b.cols == u.rows, "solve_upper_right_into");
    switch (b.kind) {
    case BlockKind::LowRank:
        if (b.lowrank.rank() > 0) {
            DenseMatrix vt = b.lowrank.V.transposed();
            solve_upper_right_dense(u, vt.view());
            b.lowrank.V = vt.transposed();
        }
        break;
    case BlockKind::Dense:
        solve_upper_right_dense(u, b.dense.view());
        break;
    case BlockKind::Inner:
        if (u.kind != BlockKind::Inner)
            throw std::invalid_argument("solve_upper_right_into: hierarchical block under a leaf diagonal");
        for (int i = 0; i < 2; ++i) {
            solve_upper_right_into(u.child(0, 0), b.child(i, 0), tol_rel);
            multiply_update(b.child(i, 1), b.child(i, 0), u.child(0, 1), tol_rel);
            solve_upper_right_into(u.child(1, 1), b.child(i, 1), tol_rel);
        }
        break;
    }
}

//
// H-LU
//

void h_lu_in_place(HBlock& a, double tol_rel) {
    check_shape(a.rows == a.cols, "h_lu");
    switch (a.kind) {
    case BlockKind::Dense:
        try {
            a.pivots = lu_in_place(a.dense.view());
        } catch (const NumericalError& e) {
            throw NumericalError("h_lu: singular diagonal leaf [" + std::to_string(a.row_begin) + ", " +
                                 std::to_string(a.row_begin + a.rows) + "): " + e.what());
        }
        break;
    case BlockKind::LowRank:
        throw NumericalError("h_lu: low-rank diagonal block at " + std::to_string(a.row_begin));
    case BlockKind::Inner:
        h_lu_in_place(a.child(0, 0), tol_rel);
        solve_lower_into(a.child(0, 0), a.child(0, 1), tol_rel);
        solve_upper_right_into(a.child(0, 0), a.child(1, 0), tol_rel);
        multiply_update(a.child(1, 1), a.child(1, 0), a.child(0, 1), tol_rel);
        h_lu_in_place(a.child(1, 1), tol_rel);
        break;
    }
}

HLUFactors h_lu(HMatrix h) {
    h_lu_in_place(h.root(), h.tolerance());
    return HLUFactors(std::move(h));
}

std::vector<double> h_lu_solve(const HLUFactors& f, std::span<const double> b) {
    if (static_cast<Index>(b.size()) != f.size())
        throw std::invalid_argument("h_lu_solve: size mismatch");
    std::vector<double> x(b.begin(), b.end());
    MatrixView xv{x.data(), f.size(), 1, 1};
    solve_lower_dense(f.packed().root(), xv);
    solve_upper_dense(f.packed().root(), xv);
    return x;
}

namespace {

// B <- (unit lower factor with leaf pivots) * B
void apply_lower(const HBlock& l, MatrixView b) {
    if (l.kind == BlockKind::Dense) {
        for (Index i = b.rows - 1; i >= 0; --i)
            for (Index k = 0; k < i; ++k)
                for (Index j = 0; j < b.cols; ++j)
                    b(i, j) += l.dense(i, k) * b(k, j);
        if (!l.pivots.empty()) {
            DenseMatrix tmp = DenseMatrix::from_view(b);
            for (Index i = 0; i < b.rows; ++i)
                std::copy_n(tmp.data() + i * b.cols, b.cols, b.data + l.pivots[static_cast<std::size_t>(i)] * b.ld);
        }
        return;
    }
    const Index n0 = l.child(0, 0).rows;
    MatrixView b0 = b.block(0, 0, n0, b.cols);
    MatrixView b1 = b.block(n0, 0, b.rows - n0, b.cols);
    apply_lower(l.child(1, 1), b1);
    h_gemm(1.0, l.child(1, 0), b0, b1);
    apply_lower(l.child(0, 0), b0);
}

// B <- (upper factor) * B
void apply_upper(const HBlock& u, MatrixView b) {
    if (u.kind == BlockKind::Dense) {
        for (Index i = 0; i < b.rows; ++i)
            for (Index j = 0; j < b.cols; ++j) {
                double s = 0.0;
                for (Index k = i; k < b.rows; ++k)
                    s += u.dense(i, k) * b(k, j);
                b(i, j) = s;
            }
        return;
    }
    const Index n0 = u.child(0, 0).rows;
    MatrixView b0 = b.block(0, 0, n0, b.cols);
    MatrixView b1 = b.block(n0, 0, b.rows - n0, b.cols);
    apply_upper(u.child(0, 0), b0);
    h_gemm(1.0, u.child(0, 1), b1, b0);
    apply_upper(u.child(1, 1), b1);
}

}  // namespace

DenseMatrix HLUFactors::reconstruct() const {
    DenseMatrix x = DenseMatrix::identity(size());
    apply_upper(lu_.root(), x.view());
    apply_lower(lu_.root(), x.view());
    return x;
}

//
// construction and metrics
//

namespace {

std::unique_ptr<HBlock> build_from(const BlockTree& bt, Index id, double tol_rel, Index& unconverged,
                                   const std::function<DenseMatrix(Index, Index, Index, Index)>& extract,
                                   const std::function<bool(Index, Index, Index, Index)>& is_zero) {
    const BlockNode& node = bt.node(id);
    const ClusterNode& r = bt.rows->node(node.row);
    const ClusterNode& c = bt.cols->node(node.col);
    auto b = std::make_unique<HBlock>();
    b->row_begin = r.begin;
    b->col_begin = c.begin;
    b->rows = r.size();
    b->cols = c.size();
    b->kind = node.kind;
    switch (node.kind) {
    case BlockKind::Dense:
        b->dense = extract(r.begin, r.size(), c.begin, c.size());
        break;
    case BlockKind::LowRank:
        if (is_zero(r.begin, r.size(), c.begin, c.size())) {
            b->lowrank = LowRank::zero(r.size(), c.size());
        } else {
            AcaResult res = aca(extract(r.begin, r.size(), c.begin, c.size()), tol_rel,
                                default_max_rank(r.size(), c.size()));
            if (!res.converged)
                ++unconverged;
            b->lowrank = std::move(res.approx);
        }
        break;
    case BlockKind::Inner:
        for (std::size_t k = 0; k < 4; ++k)
            b->children[k] = build_from(bt, node.children[k], tol_rel, unconverged, extract, is_zero);
        break;
    }
    return b;
}

}  // namespace

HMatrix from_sparse(const CsrMatrix& a, const BlockTree& bt, double tol_rel) {
    if (a.rows != bt.rows->size() || a.cols != bt.cols->size())
        throw std::invalid_argument("from_sparse: matrix and block tree sizes differ");
    // scans the columns of rows [r0, r0+nr) that fall into [c0, c0+nc)
    auto for_each_entry = [&a](Index r0, Index nr, Index c0, Index nc, auto&& fn) {
        for (Index i = r0; i < r0 + nr; ++i) {
            const auto first = a.col_idx.begin() + a.row_ptr[static_cast<std::size_t>(i)];
            const auto last = a.col_idx.begin() + a.row_ptr[static_cast<std::size_t>(i) + 1];
            for (auto it = std::lower_bound(first, last, c0); it != last && *it < c0 + nc; ++it)
                if (!fn(i - r0, *it - c0, a.values[static_cast<std::size_t>(it - a.col_idx.begin())]))
                    return;
        }
    };
    auto extract = [&](Index r0, Index nr, Index c0, Index nc) {
        DenseMatrix d(nr, nc);
        for_each_entry(r0, nr, c0, nc, [&](Index i, Index j, double v) {
            d(i, j) = v;
            return true;
        });
        return d;
    };
    auto is_zero = [&](Index r0, Index nr, Index c0, Index nc) {
        bool zero = true;
        for_each_entry(r0, nr, c0, nc, [&](Index, Index, double v) {
            zero = v == 0.0;
            return zero;
        });
        return zero;
    };
    Index unconverged = 0;
    HMatrix h(build_from(bt, 0, tol_rel, unconverged, extract, is_zero), tol_rel);
    h.unconverged_blocks = unconverged;
    return h;
}

HMatrix from_dense(const DenseMatrix& a, const BlockTree& bt, double tol_rel) {
    if (a.rows() != bt.rows->size() || a.cols() != bt.cols->size())
        throw std::invalid_argument("from_dense: matrix and block tree sizes differ");
    auto extract = [&](Index r0, Index nr, Index c0, Index nc) {
        return DenseMatrix::from_view(a.view().block(r0, c0, nr, nc));
    };
    auto is_zero = [&](Index r0, Index nr, Index c0, Index nc) {
        for (Index i = r0; i < r0 + nr; ++i)
            for (Index j = c0; j < c0 + nc; ++j)
                if (a(i, j) != 0.0)
                    return false;
        return true;
    };
    Index unconverged = 0;
    HMatrix h(build_from(bt, 0, tol_rel, unconverged, extract, is_zero), tol_rel);
    h.unconverged_blocks = unconverged;
    return h;
}

std::vector<double> HMatrix::matvec(std::span<const double> x) const {
    if (static_cast<Index>(x.size()) != cols())
        throw std::invalid_argument("matvec: size mismatch");
    std::vector<double> y(static_cast<std::size_t>(rows()), 0.0);
    h_gemm(1.0, *root_, ConstMatrixView{x.data(), cols(), 1, 1}, MatrixView{y.data(), rows(), 1, 1});
    return y;
}

DenseMatrix HMatrix::to_dense() const { return densify(*root_); }

namespace {

void storage(const HBlock& b, double& stored) {
    switch (b.kind) {
    case BlockKind::Dense:
        stored += static_cast<double>(b.rows) * static_cast<double>(b.cols);
        break;
    case BlockKind::LowRank:
        stored += static_cast<double>(b.lowrank.rank()) * static_cast<double>(b.rows + b.cols);
        break;
    case BlockKind::Inner:
        for (const auto& c : b.children)
            storage(*c, stored);
        break;
    }
}

void leaves_json(const HBlock& b, nlohmann::json& out) {
    if (b.kind == BlockKind::Inner) {
        for (const auto& c : b.children)
            leaves_json(*c, out);
        return;
    }
    out.push_back({{"kind", b.kind == BlockKind::Dense ? "dense" : "lowrank"},
                   {"row", b.row_begin},
                   {"col", b.col_begin},
                   {"rows", b.rows},
                   {"cols", b.cols},
                   {"rank", b.kind == BlockKind::Dense ? std::min(b.rows, b.cols) : b.lowrank.rank()}});
}

}  // namespace

double compression(const HMatrix& h) {
    double stored = 0.0;
    storage(h.root(), stored);
    return 1.0 - stored / (static_cast<double>(h.rows()) * static_cast<double>(h.cols()));
}

double err_metric(const HLUFactors& f, const CsrMatrix& a, std::span<const double> x) {
    const double nx = norm2(x);
    if (nx == 0.0)
        throw std::invalid_argument("err_metric: zero vector");
    const std::vector<double> y = a.multiply(x);
    const std::vector<double> sol = h_lu_solve(f, y);
    double s = 0.0;
    for (std::size_t i = 0; i < sol.size(); ++i)
        s += (x[i] - sol[i]) * (x[i] - sol[i]);
    return std::sqrt(s) / nx;
}

void write_structure_json(std::ostream& os, const HMatrix& h) {
    nlohmann::json j;
    j["rows"] = h.rows();
    j["cols"] = h.cols();
    j["compression"] = compression(h);
    j["leaves"] = nlohmann::json::array();
    leaves_json(h.root(), j["leaves"]);
    os << j.dump() << '\n';
}

}  // namespace tubeh
