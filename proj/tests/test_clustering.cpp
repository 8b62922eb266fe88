#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "tubeh/clustering.hpp"

using namespace tubeh;

namespace {

SparseSystem dirichlet_system(Index n, FieldId f = FieldId::Const, double eps = 1e-2) {
    ProblemSpec spec;
    spec.field = f;
    spec.epsilon = eps;
    return assemble(build_structured_mesh(n), spec);
}

std::vector<double> ys(const std::vector<Point2>& pts) {
    std::vector<double> out(pts.size());
    std::transform(pts.begin(), pts.end(), out.begin(), [](const Point2& p) { return p.y; });
    return out;
}

std::vector<double> xs(const std::vector<Point2>& pts) {
    std::vector<double> out(pts.size());
    std::transform(pts.begin(), pts.end(), out.begin(), [](const Point2& p) { return p.x; });
    return out;
}

ClusterTree tube_tree(const std::vector<Point2>& pts, Index n_min) { return build_tube_tree(pts, ys(pts), xs(pts), n_min); }

std::vector<Index> members(const ClusterTree& t, Index id) {
    const ClusterNode& n = t.node(id);
    return {t.dof_at.begin() + n.begin, t.dof_at.begin() + n.end};
}

void check_tree_invariants(const ClusterTree& t) {
    const Index n = t.size();
    std::vector<Index> sorted = t.dof_at;
    std::sort(sorted.begin(), sorted.end());
    for (Index i = 0; i < n; ++i) {
        CHECK(sorted[static_cast<std::size_t>(i)] == i);
        CHECK(t.position_of[static_cast<std::size_t>(t.dof_at[static_cast<std::size_t>(i)])] == i);
    }
    Index next = 0;
    for (Index leaf : t.leaves()) {
        CHECK(t.node(leaf).begin == next);
        CHECK(t.node(leaf).size() <= t.n_min);
        next = t.node(leaf).end;
    }
    CHECK(next == n);
    for (const ClusterNode& node : t.nodes) {
        if (node.is_leaf())
            continue;
        CHECK(node.size() > t.n_min);
        const ClusterNode& l = t.node(node.left);
        const ClusterNode& r = t.node(node.right);
        CHECK(l.begin == node.begin);
        CHECK(l.end == r.begin);
        CHECK(r.end == node.end);
        CHECK(l.size() == (node.size() + 1) / 2);
        CHECK(l.depth == node.depth + 1);
    }
    const double bound = std::ceil(std::log2(static_cast<double>(n) / static_cast<double>(t.n_min))) + 1.0;
    CHECK(static_cast<double>(t.depth()) <= std::max(0.0, bound));
}

// independent 1-D bisection on (y, x, index)
void reference_bisection(std::vector<Index> idx, const std::vector<Point2>& pts, Index n_min,
                         std::vector<std::vector<Index>>& out) {
    std::sort(idx.begin(), idx.end(), [&](Index a, Index b) {
        const Point2 &p = pts[static_cast<std::size_t>(a)], &q = pts[static_cast<std::size_t>(b)];
        return std::tie(p.y, p.x, a) < std::tie(q.y, q.x, b);
    });
    out.push_back(idx);
    if (static_cast<Index>(idx.size()) <= n_min)
        return;
    const auto mid = idx.begin() + static_cast<std::ptrdiff_t>((idx.size() + 1) / 2);
    reference_bisection({idx.begin(), mid}, pts, n_min, out);
    reference_bisection({mid, idx.end()}, pts, n_min, out);
}

void preorder(const ClusterTree& t, Index id, std::vector<std::vector<Index>>& out) {
    out.push_back(members(t, id));
    if (!t.node(id).is_leaf()) {
        preorder(t, t.node(id).left, out);
        preorder(t, t.node(id).right, out);
    }
}

ClusterNode interval_node(double lo, double hi) {
    ClusterNode n;
    n.t_interval = {lo, hi};
    return n;
}

}  // namespace

TEST_CASE("tube tree on four points") {
    const std::vector<Point2> pts{{0, 0.1}, {0, 0.9}, {0, 0.5}, {0, 0.3}};
    const ClusterTree t = tube_tree(pts, 2);
    REQUIRE(t.nodes.size() == 3);
    CHECK(members(t, t.root().left) == std::vector<Index>{0, 3});
    CHECK(members(t, t.root().right) == std::vector<Index>{2, 1});
    check_tree_invariants(t);
}

TEST_CASE("single point") {
    const std::vector<Point2> pts{{0.2, 0.3}};
    const ClusterTree t = tube_tree(pts, 1);
    CHECK(t.nodes.size() == 1);
    CHECK(t.depth() == 0);
    CHECK(t.root().is_leaf());
    CHECK(build_geometric_tree(pts, 1).nodes.size() == 1);
    CHECK_THROWS_AS(tube_tree({}, 1), std::invalid_argument);
    CHECK_THROWS_AS(tube_tree(pts, 0), std::invalid_argument);
}

TEST_CASE("49-dof tube tree is made of row bands") {
    const SparseSystem s = dirichlet_system(8);
    REQUIRE(s.n_dof() == 49);
    const ClusterTree t = tube_tree(s.dof_points, 2);
    check_tree_invariants(t);
    const auto lower = members(t, t.root().left);
    const auto upper = members(t, t.root().right);
    CHECK(lower.size() == 25);
    CHECK(upper.size() == 24);
    double max_lower = -9, min_upper = 9;
    for (Index d : lower)
        max_lower = std::max(max_lower, s.dof_points[static_cast<std::size_t>(d)].y);
    for (Index d : upper)
        min_upper = std::min(min_upper, s.dof_points[static_cast<std::size_t>(d)].y);
    CHECK(max_lower <= min_upper);

    // members of a node form a contiguous run in (y, x) order
    std::vector<Index> by_row(49);
    std::iota(by_row.begin(), by_row.end(), 0);
    std::sort(by_row.begin(), by_row.end(), [&](Index a, Index b) {
        const Point2 &p = s.dof_points[static_cast<std::size_t>(a)], &q = s.dof_points[static_cast<std::size_t>(b)];
        return std::tie(p.y, p.x) < std::tie(q.y, q.x);
    });
    for (std::size_t id = 0; id < t.nodes.size(); ++id) {
        const auto m = members(t, static_cast<Index>(id));
        const auto start = std::find(by_row.begin(), by_row.end(), m.front());
        REQUIRE(start + static_cast<std::ptrdiff_t>(m.size()) <= by_row.end());
        CHECK(std::equal(m.begin(), m.end(), start));
    }
}

TEST_CASE("constant-field tube tree equals 1-D bisection node by node") {
    for (Index n : {8, 13, 32}) {
        const SparseSystem s = dirichlet_system(n);
        for (Index n_min : {1, 3, 8}) {
            const ClusterTree t = tube_tree(s.dof_points, n_min);
            std::vector<std::vector<Index>> got, want;
            preorder(t, 0, got);
            std::vector<Index> all(static_cast<std::size_t>(s.n_dof()));
            std::iota(all.begin(), all.end(), 0);
            reference_bisection(all, s.dof_points, n_min, want);
            CHECK(got == want);
        }
    }
}

TEST_CASE("tube property: sibling intervals do not interleave") {
    for (FieldId f : {FieldId::Const, FieldId::CosShear, FieldId::ExpShear}) {
        const SparseSystem s = dirichlet_system(16, f);
        const auto proj = project_all(s.dof_points, f, 1.0 / 16);
        const ClusterTree t = build_tube_tree(s.dof_points, proj, xs(s.dof_points), 4);
        check_tree_invariants(t);
        for (const ClusterNode& node : t.nodes)
            if (!node.is_leaf())
                CHECK(t.node(node.left).t_interval.hi <= t.node(node.right).t_interval.lo);
    }
}

TEST_CASE("geometric tree splits") {
    std::vector<Point2> strip;
    for (int i = 0; i <= 20; ++i)
        for (int j = 0; j <= 2; ++j)
            strip.push_back({0.05 * i, 0.05 * j});
    const ClusterTree a = build_geometric_tree(strip, 4);
    check_tree_invariants(a);
    const ClusterNode& l = a.node(a.root().left);
    const ClusterNode& r = a.node(a.root().right);
    CHECK(l.bbox.xmax <= r.bbox.xmin);
    CHECK(l.bbox.ymax - l.bbox.ymin == doctest::Approx(0.1));

    const SparseSystem s = dirichlet_system(8);
    const ClusterTree g = build_geometric_tree(s.dof_points, 2);
    check_tree_invariants(g);
    const ClusterNode& gl = g.node(g.root().left);
    const ClusterNode& gr = g.node(g.root().right);
    CHECK(gl.bbox.xmax <= gr.bbox.xmin);  // square: tie goes to x
    // second level cuts y
    const ClusterNode& gll = g.node(gl.left);
    const ClusterNode& glr = g.node(gl.right);
    CHECK(gll.bbox.ymax <= glr.bbox.ymin);
    for (Index leaf : g.leaves()) {
        const BoundingBox& b = g.node(leaf).bbox;
        CHECK(b.xmax - b.xmin <= 2.0 * (b.ymax - b.ymin) + 0.25 + 1e-12);
        CHECK(b.ymax - b.ymin <= 2.0 * (b.xmax - b.xmin) + 0.25 + 1e-12);
    }
}

TEST_CASE("admissibility arithmetic") {
    const auto t = [](double lo, double hi) { return interval_node(lo, hi); };
    CHECK(admissible(t(0, 1), t(2, 3), 1.0, AdmissibilityMetric::Transverse));
    CHECK_FALSE(admissible(t(0, 1), t(1, 2), 1.0, AdmissibilityMetric::Transverse));
    CHECK_FALSE(admissible(t(0, 1), t(1.4, 2.4), 1.0, AdmissibilityMetric::Transverse));
    CHECK(admissible(t(0, 1), t(1.4, 2.4), 2.0, AdmissibilityMetric::Transverse));
    CHECK_FALSE(admissible(t(0, 1), t(0.5, 3), 1.0, AdmissibilityMetric::Transverse));
    // with a pad both clusters grow by the stencil reach
    CHECK(admissible(t(0, 1), t(2, 3), 1.0, AdmissibilityMetric::Transverse, 0.2));
    CHECK_FALSE(admissible(t(0, 0), t(0.1, 0.1), 1.0, AdmissibilityMetric::Transverse, 0.1));
    CHECK(admissible(t(0, 0), t(0.1, 0.1), 1.0, AdmissibilityMetric::Transverse));

    ClusterNode a, b;
    a.bbox = {0, 1, 0, 1};
    b.bbox = {3, 4, 0, 1};
    CHECK(admissible(a, b, 1.0, AdmissibilityMetric::FullSpace));  // sqrt 2 <= 4
    b.bbox = {1.5, 2.5, 0, 1};
    CHECK_FALSE(admissible(a, b, 1.0, AdmissibilityMetric::FullSpace));  // sqrt 2 > 1
    CHECK_THROWS_AS(admissible(a, b, 0.0, AdmissibilityMetric::FullSpace), std::invalid_argument);
}

TEST_CASE("block tree structure") {
    const std::vector<Point2> one{{0, 0}};
    const ClusterTree single = tube_tree(one, 1);
    const BlockTree b1 = build_block_tree(single, single, 1.0, AdmissibilityMetric::Transverse);
    REQUIRE(b1.nodes.size() == 1);
    CHECK(b1.root().kind == BlockKind::Dense);

    for (FieldId f : {FieldId::Const, FieldId::ExpShear})
        for (TreeKind kind : {TreeKind::Tube, TreeKind::Geometric}) {
            const SparseSystem s = dirichlet_system(16, f);
            const auto proj = project_all(s.dof_points, f, 1.0 / 16);
            const ClusterTree t = kind == TreeKind::Tube ? build_tube_tree(s.dof_points, proj, xs(s.dof_points), 8)
                                                         : build_geometric_tree(s.dof_points, 8);
            const auto metric = kind == TreeKind::Tube ? AdmissibilityMetric::Transverse : AdmissibilityMetric::FullSpace;
            const double pad = kind == TreeKind::Tube ? transverse_support_pad(s.A, proj)
                                                      : spatial_support_pad(s.A, s.dof_points);
            const BlockTree bt = build_block_tree(t, t, 1.0, metric, pad);
            CHECK(bt.leaf_area() == s.n_dof() * s.n_dof());
            Index low_rank = 0;
            for (const BlockNode& b : bt.nodes) {
                const ClusterNode& r = t.node(b.row);
                const ClusterNode& c = t.node(b.col);
                if (b.row == b.col)
                    CHECK(b.kind != BlockKind::LowRank);
                switch (b.kind) {
                case BlockKind::LowRank:
                    ++low_rank;
                    CHECK(admissible(r, c, 1.0, metric, pad));
                    // admissible blocks of A carry no nonzeros
                    for (Index i = r.begin; i < r.end; ++i)
                        for (Index j = c.begin; j < c.end; ++j)
                            CHECK(s.A.at(t.dof_at[static_cast<std::size_t>(i)], t.dof_at[static_cast<std::size_t>(j)]) == 0.0);
                    break;
                case BlockKind::Dense:
                    CHECK_FALSE(admissible(r, c, 1.0, metric, pad));
                    CHECK((r.is_leaf() || c.is_leaf()));
                    break;
                case BlockKind::Inner:
                    for (int i = 0; i < 2; ++i)
                        for (int j = 0; j < 2; ++j) {
                            const BlockNode& k = bt.node(b.children[static_cast<std::size_t>(2 * i + j)]);
                            CHECK(k.row == (i == 0 ? r.left : r.right));
                            CHECK(k.col == (j == 0 ? c.left : c.right));
                            CHECK(k.depth == b.depth + 1);
                        }
                    break;
                }
            }
            CHECK(low_rank > 0);
        }
}

TEST_CASE("default leaf size") {
    CHECK(default_nmin(64, BoundaryCondition::Dirichlet) == 13);
    CHECK(default_nmin(16, BoundaryCondition::Dirichlet) == 8);
    CHECK(default_nmin(128, BoundaryCondition::Neumann) == 26);
    CHECK(default_nmin(1, BoundaryCondition::Dirichlet) == 8);
    CHECK_THROWS_AS(default_nmin(0, BoundaryCondition::Dirichlet), std::invalid_argument);
}

TEST_CASE("support pads") {
    const SparseSystem s = dirichlet_system(8);
    CHECK(transverse_support_pad(s.A, ys(s.dof_points)) == doctest::Approx(0.25));
    CHECK(spatial_support_pad(s.A, s.dof_points) == doctest::Approx(0.25 * std::sqrt(2.0)));
}

TEST_CASE("permutation of the system") {
    const SparseSystem s = dirichlet_system(6, FieldId::CosShear);
    const auto n = static_cast<std::size_t>(s.n_dof());
    std::vector<Index> id(n);
    std::iota(id.begin(), id.end(), 0);
    const SparseSystem same = permute_system(s, id);
    CHECK(same.A.values == s.A.values);
    CHECK(same.A.col_idx == s.A.col_idx);
    CHECK(same.A.row_ptr == s.A.row_ptr);

    std::vector<Index> perm = id;
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
    std::vector<Index> inverse(n);
    for (std::size_t p = 0; p < n; ++p)
        inverse[static_cast<std::size_t>(perm[p])] = static_cast<Index>(p);
    const SparseSystem p1 = permute_system(s, perm);
    const SparseSystem back = permute_system(p1, inverse);
    CHECK(back.A.values == s.A.values);
    CHECK(back.A.col_idx == s.A.col_idx);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(back.dof_points[i].x == s.dof_points[i].x);
        CHECK(p1.dof_points[i].y == s.dof_points[static_cast<std::size_t>(perm[i])].y);
    }

    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    std::vector<double> x(n), xp(n);
    for (double& v : x)
        v = g(rng);
    for (std::size_t p = 0; p < n; ++p)
        xp[p] = x[static_cast<std::size_t>(perm[p])];
    const auto y = s.A.multiply(x);
    const auto yp = p1.A.multiply(xp);
    for (std::size_t p = 0; p < n; ++p)
        CHECK(std::abs(yp[p] - y[static_cast<std::size_t>(perm[p])]) <= 1e-14);

    std::vector<Index> bad = id;
    bad[0] = 1;
    CHECK_THROWS_AS(permute_system(s, bad), std::invalid_argument);
    CHECK_THROWS_AS(permute_system(s, std::vector<Index>(n - 1)), std::invalid_argument);
}

TEST_CASE("tree JSON dump") {
    const SparseSystem s = dirichlet_system(8);
    const ClusterTree t = tube_tree(s.dof_points, 8);
    std::ostringstream os;
    write_tree_json(os, t);
    const auto doc = nlohmann::json::parse(os.str());
    CHECK(doc["kind"] == "tube");
    CHECK(doc["size"] == 49);
    const auto& j = doc["root"];
    CHECK(j["range"][0] == 0);
    CHECK(j["range"][1] == 49);
    CHECK(j["children"].size() == 2);
    CHECK(j["t_interval"][0].get<double>() == doctest::Approx(-0.75));
    CHECK(j["bbox"].size() == 4);
}

TEST_CASE("clustering names") {
    CHECK(parse_clustering("tube") == TreeKind::Tube);
    CHECK(parse_clustering("geometric") == TreeKind::Geometric);
    CHECK_FALSE(parse_clustering("pca").has_value());
}
