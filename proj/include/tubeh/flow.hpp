#ifndef TUBEH_FLOW_HPP
#define TUBEH_FLOW_HPP

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tubeh/mesh.hpp"

namespace tubeh {

// Convection fields, all with unit first component:
//   Const     b = (1, 0)
//   CosShear  b = (1, (0.5 - y) cos(4 pi x))
//   ExpShear  b = (1, 0.5 (y + 0.8) e^x)
enum class FieldId { Const, CosShear, ExpShear };

std::string_view to_string(FieldId f);
std::optional<FieldId> parse_field(std::string_view s);

Vec2 eval_field(FieldId id, Point2 p);
double field_divergence(FieldId id, Point2 p);

struct ConditionCheck {
    bool holds = false;
    double margin = 0.0;  // sup of div(b)/2 - beta over the sample grid
};

// sup of div(b)/2 - beta over a 101 x 101 grid on [-1,1]^2; holds iff the sup is negative
ConditionCheck check_condition(FieldId id, double beta);

// Backward Euler tracing p <- p - delta*b(p) until the inflow line x = -1 is
// reached; the last step is interpolated onto the line. Returns the crossing y.
double trace_to_section(Point2 p, FieldId id, double delta);

// Elementwise trace_to_section. A failure is rethrown with the offending index.
std::vector<double> project_all(const std::vector<Point2>& points, FieldId id, double delta);

}  // namespace tubeh

#endif  // TUBEH_FLOW_HPP
