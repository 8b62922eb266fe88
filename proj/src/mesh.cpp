#include "tubeh/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace tubeh {

namespace {

double signed_area(const Point2& a, const Point2& b, const Point2& c) {
    return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

}  // namespace

Mesh build_structured_mesh(Index n) {
    if (n < 1)
        throw std::invalid_argument("build_structured_mesh: n must be positive");
    Mesh m;
    m.side_count = n;
    m.h = 2.0 / static_cast<double>(n);
    m.vertices.reserve(static_cast<std::size_t>((n + 1) * (n + 1)));
    m.boundary_mask.reserve(static_cast<std::size_t>((n + 1) * (n + 1)));
    for (Index j = 0; j <= n; ++j)
        for (Index i = 0; i <= n; ++i) {
            m.vertices.push_back({-1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n),
                                  -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(n)});
            m.boundary_mask.push_back(i == 0 || j == 0 || i == n || j == n);
        }

    m.triangles.reserve(static_cast<std::size_t>(2 * n * n));
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) {
            const Index v00 = m.vertex_index(i, j);
            const Index v10 = m.vertex_index(i + 1, j);
            const Index v01 = m.vertex_index(i, j + 1);
            const Index v11 = m.vertex_index(i + 1, j + 1);
            m.triangles.push_back({v00, v10, v11});  // below the diagonal
            m.triangles.push_back({v00, v11, v01});  // above the diagonal
        }
    return m;
}

double Mesh::area(Index t) const {
    const Triangle& tri = triangles[static_cast<std::size_t>(t)];
    return signed_area(vertices[static_cast<std::size_t>(tri[0])], vertices[static_cast<std::size_t>(tri[1])],
                       vertices[static_cast<std::size_t>(tri[2])]);
}

Point2 Mesh::centroid(Index t) const {
    const Triangle& tri = triangles[static_cast<std::size_t>(t)];
    Point2 c;
    for (Index v : tri) {
        c.x += vertices[static_cast<std::size_t>(v)].x / 3.0;
        c.y += vertices[static_cast<std::size_t>(v)].y / 3.0;
    }
    return c;
}

Index Mesh::locate(Point2 p) const {
    const auto n = static_cast<double>(side_count);
    const double fx = std::clamp((p.x + 1.0) / h, 0.0, n);
    const double fy = std::clamp((p.y + 1.0) / h, 0.0, n);
    const Index i = std::min<Index>(static_cast<Index>(fx), side_count - 1);
    const Index j = std::min<Index>(static_cast<Index>(fy), side_count - 1);
    const double lx = fx - static_cast<double>(i);
    const double ly = fy - static_cast<double>(j);
    const Index cell = j * side_count + i;
    return 2 * cell + (ly > lx ? 1 : 0);
}

double Mesh::interpolate(std::span<const double> nodal, Point2 p) const {
    const Index t = locate(p);
    const Triangle& tri = triangles[static_cast<std::size_t>(t)];
    const Point2& a = vertices[static_cast<std::size_t>(tri[0])];
    const Point2& b = vertices[static_cast<std::size_t>(tri[1])];
    const Point2& c = vertices[static_cast<std::size_t>(tri[2])];
    const double total = signed_area(a, b, c);
    const double la = signed_area(p, b, c) / total;
    const double lb = signed_area(a, p, c) / total;
    const double lc = 1.0 - la - lb;
    return la * nodal[static_cast<std::size_t>(tri[0])] + lb * nodal[static_cast<std::size_t>(tri[1])] +
           lc * nodal[static_cast<std::size_t>(tri[2])];
}

std::vector<Index> interior_indices(const Mesh& m) {
    std::vector<Index> out;
    for (std::size_t v = 0; v < m.vertices.size(); ++v)
        if (!m.boundary_mask[v])
            out.push_back(static_cast<Index>(v));
    return out;
}

Vec2 p1_gradient(const Mesh& m, Index t, std::array<double, 3> nodal) {
    const Triangle& tri = m.triangles.at(static_cast<std::size_t>(t));
    const Point2& a = m.vertices[static_cast<std::size_t>(tri[0])];
    const Point2& b = m.vertices[static_cast<std::size_t>(tri[1])];
    const Point2& c = m.vertices[static_cast<std::size_t>(tri[2])];
    const double det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    if (det == 0.0)
        throw NumericalError("p1_gradient: degenerate triangle " + std::to_string(t));
    const double du1 = nodal[1] - nodal[0];
    const double du2 = nodal[2] - nodal[0];
    // solve [b-a; c-a] g = [du1; du2]
    return {(du1 * (c.y - a.y) - du2 * (b.y - a.y)) / det, (du2 * (b.x - a.x) - du1 * (c.x - a.x)) / det};
}

void write_mesh(std::ostream& os, const Mesh& m) {
    os.precision(17);
    for (const Point2& p : m.vertices)
        os << "v " << p.x << ' ' << p.y << '\n';
    for (const Triangle& t : m.triangles)
        os << "t " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

}  // namespace tubeh
