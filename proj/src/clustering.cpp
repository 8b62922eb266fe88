#include "tubeh/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "json.hpp"

namespace tubeh {

std::string_view to_string(TreeKind k) { return k == TreeKind::Tube ? "tube" : "geometric"; }

std::optional<TreeKind> parse_clustering(std::string_view s) {
    if (s == "tube")
        return TreeKind::Tube;
    if (s == "geometric")
        return TreeKind::Geometric;
    return std::nullopt;
}

double BoundingBox::diameter() const { return std::hypot(xmax - xmin, ymax - ymin); }

double BoundingBox::distance(const BoundingBox& o) const {
    const double dx = std::max({0.0, o.xmin - xmax, xmin - o.xmax});
    const double dy = std::max({0.0, o.ymin - ymax, ymin - o.ymax});
    return std::hypot(dx, dy);
}

Index ClusterTree::depth() const {
    Index d = 0;
    for (const ClusterNode& n : nodes)
        d = std::max(d, n.depth);
    return d;
}

std::vector<Index> ClusterTree::leaves() const {
    std::vector<Index> out;
    std::vector<Index> stack{0};
    while (!stack.empty()) {
        const Index id = stack.back();
        stack.pop_back();
        const ClusterNode& n = node(id);
        if (n.is_leaf()) {
            out.push_back(id);
        } else {
            stack.push_back(n.right);
            stack.push_back(n.left);
        }
    }
    return out;
}

namespace {

void check_inputs(std::size_t n, Index n_min) {
    if (n == 0)
        throw std::invalid_argument("cluster tree: empty point set");
    if (n_min < 1)
        throw std::invalid_argument("cluster tree: n_min must be at least 1");
}

// Fills geometry of node `id` from the members dof_at[begin, end).
void fill_geometry(ClusterNode& node, std::span<const Point2> points, std::span<const double> t,
                   const std::vector<Index>& dof_at) {
    const auto first = static_cast<std::size_t>(dof_at[static_cast<std::size_t>(node.begin)]);
    node.bbox = {points[first].x, points[first].x, points[first].y, points[first].y};
    node.t_interval = {t[first], t[first]};
    for (Index p = node.begin; p < node.end; ++p) {
        const auto d = static_cast<std::size_t>(dof_at[static_cast<std::size_t>(p)]);
        node.bbox.xmin = std::min(node.bbox.xmin, points[d].x);
        node.bbox.xmax = std::max(node.bbox.xmax, points[d].x);
        node.bbox.ymin = std::min(node.bbox.ymin, points[d].y);
        node.bbox.ymax = std::max(node.bbox.ymax, points[d].y);
        node.t_interval.lo = std::min(node.t_interval.lo, t[d]);
        node.t_interval.hi = std::max(node.t_interval.hi, t[d]);
    }
}

// Recursive median bisection of [begin, end); `order` reorders a sub-range for node `id`.
template <typename Order>
void bisect(ClusterTree& tree, Index id, std::span<const Point2> points, std::span<const double> t, Order&& order) {
    ClusterNode node = tree.nodes[static_cast<std::size_t>(id)];
    fill_geometry(node, points, t, tree.dof_at);
    tree.nodes[static_cast<std::size_t>(id)] = node;
    if (node.size() <= tree.n_min)
        return;

    order(node);
    const Index mid = node.begin + (node.size() + 1) / 2;
    const auto left = static_cast<Index>(tree.nodes.size());
    tree.nodes.push_back({node.begin, mid, {}, {}, -1, -1, node.depth + 1});
    tree.nodes.push_back({mid, node.end, {}, {}, -1, -1, node.depth + 1});
    tree.nodes[static_cast<std::size_t>(id)].left = left;
    tree.nodes[static_cast<std::size_t>(id)].right = left + 1;
    bisect(tree, left, points, t, order);
    bisect(tree, left + 1, points, t, order);
}

void finish_permutation(ClusterTree& tree) {
    tree.position_of.assign(tree.dof_at.size(), 0);
    for (std::size_t p = 0; p < tree.dof_at.size(); ++p)
        tree.position_of[static_cast<std::size_t>(tree.dof_at[p])] = static_cast<Index>(p);
}

}  // namespace

ClusterTree build_tube_tree(std::span<const Point2> points, std::span<const double> s,
                            std::span<const double> along, Index n_min) {
    check_inputs(points.size(), n_min);
    if (s.size() != points.size() || along.size() != points.size())
        throw std::invalid_argument("build_tube_tree: input lengths differ");

    ClusterTree tree;
    tree.kind = TreeKind::Tube;
    tree.n_min = n_min;
    tree.dof_at.resize(points.size());
    std::iota(tree.dof_at.begin(), tree.dof_at.end(), Index{0});
    tree.nodes.push_back({0, static_cast<Index>(points.size()), {}, {}, -1, -1, 0});

    // the sort key is the same on every level, so sorting each sub-range is a no-op
    // after the root; it is kept per node to mirror the split definition
    const auto key_less = [&](Index a, Index b) {
        const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
        if (s[ua] != s[ub])
            return s[ua] < s[ub];
        if (along[ua] != along[ub])
            return along[ua] < along[ub];
        return a < b;
    };
    auto order = [&](const ClusterNode& node) {
        std::sort(tree.dof_at.begin() + node.begin, tree.dof_at.begin() + node.end, key_less);
    };
    bisect(tree, 0, points, s, order);
    finish_permutation(tree);
    return tree;
}

ClusterTree build_geometric_tree(std::span<const Point2> points, Index n_min) {
    check_inputs(points.size(), n_min);
    ClusterTree tree;
    tree.kind = TreeKind::Geometric;
    tree.n_min = n_min;
    tree.dof_at.resize(points.size());
    std::iota(tree.dof_at.begin(), tree.dof_at.end(), Index{0});
    tree.nodes.push_back({0, static_cast<Index>(points.size()), {}, {}, -1, -1, 0});

    std::vector<double> ys(points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
        ys[i] = points[i].y;

    auto order = [&](const ClusterNode& node) {
        const bool split_x = (node.bbox.xmax - node.bbox.xmin) >= (node.bbox.ymax - node.bbox.ymin);
        std::sort(tree.dof_at.begin() + node.begin, tree.dof_at.begin() + node.end, [&](Index a, Index b) {
            const Point2& pa = points[static_cast<std::size_t>(a)];
            const Point2& pb = points[static_cast<std::size_t>(b)];
            const double ka = split_x ? pa.x : pa.y, kb = split_x ? pb.x : pb.y;
            if (ka != kb)
                return ka < kb;
            const double sa = split_x ? pa.y : pa.x, sb = split_x ? pb.y : pb.x;
            if (sa != sb)
                return sa < sb;
            return a < b;
        });
    };
    bisect(tree, 0, points, ys, order);
    finish_permutation(tree);
    return tree;
}

bool admissible(const ClusterNode& row, const ClusterNode& col, double eta, AdmissibilityMetric metric,
                double pad) {
    if (!(eta > 0.0))
        throw std::invalid_argument("admissible: eta must be positive");
    double diam = 0.0, dist = 0.0;
    if (metric == AdmissibilityMetric::Transverse) {
        diam = std::min(row.t_interval.width(), col.t_interval.width());
        dist = row.t_interval.gap(col.t_interval);
    } else {
        diam = std::min(row.bbox.diameter(), col.bbox.diameter());
        dist = row.bbox.distance(col.bbox);
    }
    const double separation = dist - pad;
    return separation > 0.0 && diam + pad <= 2.0 * eta * separation;
}

std::vector<Index> BlockTree::leaves() const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].kind != BlockKind::Inner)
            out.push_back(static_cast<Index>(i));
    return out;
}

Index BlockTree::leaf_area() const {
    Index area = 0;
    for (const BlockNode& b : nodes)
        if (b.kind != BlockKind::Inner)
            area += rows->node(b.row).size() * cols->node(b.col).size();
    return area;
}

namespace {

void build_blocks(BlockTree& bt, Index id, double eta, AdmissibilityMetric metric, double pad) {
    const BlockNode b = bt.nodes[static_cast<std::size_t>(id)];
    const ClusterNode& r = bt.rows->node(b.row);
    const ClusterNode& c = bt.cols->node(b.col);
    if (admissible(r, c, eta, metric, pad)) {
        bt.nodes[static_cast<std::size_t>(id)].kind = BlockKind::LowRank;
        return;
    }
    if (r.is_leaf() || c.is_leaf()) {
        bt.nodes[static_cast<std::size_t>(id)].kind = BlockKind::Dense;
        return;
    }
    bt.nodes[static_cast<std::size_t>(id)].kind = BlockKind::Inner;
    const std::array<Index, 2> rs{r.left, r.right};
    const std::array<Index, 2> cs{c.left, c.right};
    std::array<Index, 4> kids{};
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            kids[2 * i + j] = static_cast<Index>(bt.nodes.size());
            BlockNode child;
            child.row = rs[i];
            child.col = cs[j];
            child.depth = b.depth + 1;
            bt.nodes.push_back(child);
        }
    bt.nodes[static_cast<std::size_t>(id)].children = kids;
    for (Index k : kids)
        build_blocks(bt, k, eta, metric, pad);
}

}  // namespace

BlockTree build_block_tree(const ClusterTree& rows, const ClusterTree& cols, double eta,
                           AdmissibilityMetric metric, double pad) {
    if (rows.size() != cols.size())
        throw std::invalid_argument("build_block_tree: trees over different index sets");
    BlockTree bt;
    bt.rows = &rows;
    bt.cols = &cols;
    bt.nodes.push_back({0, 0, BlockKind::Dense, {-1, -1, -1, -1}, 0});
    build_blocks(bt, 0, eta, metric, pad);
    return bt;
}

Index default_nmin(Index n_side, BoundaryCondition bc) {
    if (n_side < 1)
        throw std::invalid_argument("default_nmin: n_side must be positive");
    const Index per_line = bc == BoundaryCondition::Neumann ? n_side + 1 : n_side - 1;
    return std::max<Index>(8, (per_line + 4) / 5);
}

double transverse_support_pad(const CsrMatrix& a, std::span<const double> s) {
    double pad = 0.0;
    for (Index i = 0; i < a.rows; ++i)
        for (Index k = a.row_ptr[static_cast<std::size_t>(i)]; k < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
            const auto j = static_cast<std::size_t>(a.col_idx[static_cast<std::size_t>(k)]);
            pad = std::max(pad, std::abs(s[static_cast<std::size_t>(i)] - s[j]));
        }
    return pad;
}

double spatial_support_pad(const CsrMatrix& a, std::span<const Point2> points) {
    double pad = 0.0;
    for (Index i = 0; i < a.rows; ++i)
        for (Index k = a.row_ptr[static_cast<std::size_t>(i)]; k < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
            const Point2& p = points[static_cast<std::size_t>(i)];
            const Point2& q = points[static_cast<std::size_t>(a.col_idx[static_cast<std::size_t>(k)])];
            pad = std::max(pad, std::hypot(p.x - q.x, p.y - q.y));
        }
    return pad;
}

SparseSystem permute_system(const SparseSystem& s, std::span<const Index> dof_at) {
    const Index n = s.n_dof();
    if (static_cast<Index>(dof_at.size()) != n)
        throw std::invalid_argument("permute_system: size mismatch");
    std::vector<Index> position_of(static_cast<std::size_t>(n), -1);
    for (Index p = 0; p < n; ++p) {
        const Index d = dof_at[static_cast<std::size_t>(p)];
        if (d < 0 || d >= n || position_of[static_cast<std::size_t>(d)] >= 0)
            throw std::invalid_argument("permute_system: not a permutation");
        position_of[static_cast<std::size_t>(d)] = p;
    }

    SparseSystem out;
    out.A.rows = out.A.cols = n;
    out.A.row_ptr.reserve(static_cast<std::size_t>(n) + 1);
    out.A.row_ptr.push_back(0);
    std::vector<std::pair<Index, double>> row;
    for (Index p = 0; p < n; ++p) {
        const auto d = static_cast<std::size_t>(dof_at[static_cast<std::size_t>(p)]);
        row.clear();
        for (Index k = s.A.row_ptr[d]; k < s.A.row_ptr[d + 1]; ++k)
            row.emplace_back(position_of[static_cast<std::size_t>(s.A.col_idx[static_cast<std::size_t>(k)])],
                             s.A.values[static_cast<std::size_t>(k)]);
        std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [c, v] : row) {
            out.A.col_idx.push_back(c);
            out.A.values.push_back(v);
        }
        out.A.row_ptr.push_back(static_cast<Index>(out.A.col_idx.size()));
        out.dof_points.push_back(s.dof_points[d]);
        if (!s.dof_vertices.empty())
            out.dof_vertices.push_back(s.dof_vertices[d]);
    }
    return out;
}

SparseSystem permute_system(const SparseSystem& s, const ClusterTree& tree) {
    return permute_system(s, std::span<const Index>(tree.dof_at));
}

namespace {

nlohmann::json node_json(const ClusterTree& tree, Index id) {
    const ClusterNode& n = tree.node(id);
    nlohmann::json j;
    j["range"] = nlohmann::json::array({n.begin, n.end});
    j["t_interval"] = nlohmann::json::array({n.t_interval.lo, n.t_interval.hi});
    j["bbox"] = nlohmann::json::array({n.bbox.xmin, n.bbox.xmax, n.bbox.ymin, n.bbox.ymax});
    j["children"] = nlohmann::json::array();
    if (!n.is_leaf()) {
        j["children"].push_back(node_json(tree, n.left));
        j["children"].push_back(node_json(tree, n.right));
    }
    return j;
}

}  // namespace

void write_tree_json(std::ostream& os, const ClusterTree& tree) {
    nlohmann::json j;
    j["kind"] = std::string(to_string(tree.kind));
    j["n_min"] = tree.n_min;
    j["size"] = tree.size();
    j["root"] = node_json(tree, 0);
    os << j.dump(1) << '\n';
}

}  // namespace tubeh
