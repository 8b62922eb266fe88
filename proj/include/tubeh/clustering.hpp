#ifndef TUBEH_CLUSTERING_HPP
#define TUBEH_CLUSTERING_HPP

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tubeh/fem.hpp"

namespace tubeh {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double width() const { return hi - lo; }
    // 0 when the intervals touch or overlap
    double gap(const Interval& o) const { return std::max({0.0, o.lo - hi, lo - o.hi}); }
};

struct BoundingBox {
    double xmin = 0.0, xmax = 0.0, ymin = 0.0, ymax = 0.0;

    double diameter() const;
    double distance(const BoundingBox& o) const;
};

struct ClusterNode {
    Index begin = 0;  // [begin, end) in the permuted ordering
    Index end = 0;
    BoundingBox bbox;
    Interval t_interval;  // transverse (projected) coordinates of the members
    Index left = -1;
    Index right = -1;
    Index depth = 0;

    Index size() const { return end - begin; }
    bool is_leaf() const { return left < 0; }
};

enum class TreeKind { Tube, Geometric };
enum class AdmissibilityMetric { Transverse, FullSpace };

std::string_view to_string(TreeKind k);
std::optional<TreeKind> parse_clustering(std::string_view s);

struct ClusterTree {
    std::vector<ClusterNode> nodes;  // nodes[0] is the root
    std::vector<Index> dof_at;       // position -> original dof
    std::vector<Index> position_of;  // original dof -> position
    Index n_min = 1;
    TreeKind kind = TreeKind::Tube;

    const ClusterNode& root() const { return nodes.front(); }
    const ClusterNode& node(Index i) const { return nodes[static_cast<std::size_t>(i)]; }
    Index size() const { return static_cast<Index>(dof_at.size()); }
    Index depth() const;
    // leaf node ids, left to right
    std::vector<Index> leaves() const;
};

// Median bisection in the transverse coordinate `s` (ties by `along`, then by index).
ClusterTree build_tube_tree(std::span<const Point2> points, std::span<const double> s,
                            std::span<const double> along, Index n_min);

// Median bisection across the longest bounding-box axis (x on ties). The
// t_interval of each node records the y-extent of its members.
ClusterTree build_geometric_tree(std::span<const Point2> points, Index n_min);

// Two-sided admissibility min(diam) <= 2 eta dist. `pad` widens every cluster by
// the support extent of a basis function: diam + pad <= 2 eta (dist - pad), dist > pad.
bool admissible(const ClusterNode& row, const ClusterNode& col, double eta, AdmissibilityMetric metric,
                double pad = 0.0);

enum class BlockKind { LowRank, Dense, Inner };

struct BlockNode {
    Index row = 0;  // cluster node ids
    Index col = 0;
    BlockKind kind = BlockKind::Dense;
    std::array<Index, 4> children{-1, -1, -1, -1};  // (0,0) (0,1) (1,0) (1,1)
    Index depth = 0;
};

// Non-owning: the cluster trees must outlive the block tree.
struct BlockTree {
    const ClusterTree* rows = nullptr;
    const ClusterTree* cols = nullptr;
    std::vector<BlockNode> nodes;  // nodes[0] is the root

    const BlockNode& root() const { return nodes.front(); }
    const BlockNode& node(Index i) const { return nodes[static_cast<std::size_t>(i)]; }
    std::vector<Index> leaves() const;
    Index leaf_area() const;
};

BlockTree build_block_tree(const ClusterTree& rows, const ClusterTree& cols, double eta,
                           AdmissibilityMetric metric, double pad = 0.0);

// max(8, ceil(points per streamline / 5)); n+1 points per line for Neumann, n-1 for Dirichlet
Index default_nmin(Index n_side, BoundaryCondition bc);

// Largest transverse distance |s_i - s_j| over the nonzeros of A.
double transverse_support_pad(const CsrMatrix& a, std::span<const double> s);
// Largest Euclidean distance between coupled dofs.
double spatial_support_pad(const CsrMatrix& a, std::span<const Point2> points);

// P A P^T with dof_points reordered; dof_at[new] = old.
SparseSystem permute_system(const SparseSystem& s, std::span<const Index> dof_at);
SparseSystem permute_system(const SparseSystem& s, const ClusterTree& tree);

// Nested JSON nodes {range, t_interval, bbox, children}
void write_tree_json(std::ostream& os, const ClusterTree& tree);

}  // namespace tubeh

#endif  // TUBEH_CLUSTERING_HPP
