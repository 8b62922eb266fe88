#ifndef TUBEH_MESH_HPP
#define TUBEH_MESH_HPP

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include "tubeh/linalg.hpp"

namespace tubeh {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

using Triangle = std::array<Index, 3>;
using Vec2 = std::array<double, 2>;

// Structured triangulation of [-1,1]^2: (n+1)^2 vertices numbered row by row
// (vertex (i,j) at x = -1 + 2i/n, y = -1 + 2j/n has index j*(n+1) + i), every
// cell split along its lower-left to upper-right diagonal.
struct Mesh {
    std::vector<Point2> vertices;
    std::vector<Triangle> triangles;
    std::vector<bool> boundary_mask;
    Index side_count = 0;
    double h = 0.0;

    double area(Index t) const;
    Point2 centroid(Index t) const;
    Index vertex_index(Index i, Index j) const { return j * (side_count + 1) + i; }

    // triangle containing p (points outside the square are clamped onto it)
    Index locate(Point2 p) const;
    // value of the P1 interpolant of `nodal` at p
    double interpolate(std::span<const double> nodal, Point2 p) const;
};

Mesh build_structured_mesh(Index n);

std::vector<Index> interior_indices(const Mesh& m);

// Constant gradient of the linear interpolant of the three nodal values on triangle t.
Vec2 p1_gradient(const Mesh& m, Index t, std::array<double, 3> nodal);

// "v x y" and "t i j k" rows
void write_mesh(std::ostream& os, const Mesh& m);

}  // namespace tubeh

#endif  // TUBEH_MESH_HPP
