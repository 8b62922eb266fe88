#include "tubeh/flow.hpp"

#include <cmath>
#include <numbers>

namespace tubeh {

std::string_view to_string(FieldId f) {
    switch (f) {
    case FieldId::Const:
        return "const";
    case FieldId::CosShear:
        return "cos";
    case FieldId::ExpShear:
        return "exp";
    }
    return "?";
}

std::optional<FieldId> parse_field(std::string_view s) {
    if (s == "const")
        return FieldId::Const;
    if (s == "cos")
        return FieldId::CosShear;
    if (s == "exp")
        return FieldId::ExpShear;
    return std::nullopt;
}

Vec2 eval_field(FieldId id, Point2 p) {
    switch (id) {
    case FieldId::Const:
        return {1.0, 0.0};
    case FieldId::CosShear:
        return {1.0, (0.5 - p.y) * std::cos(4.0 * std::numbers::pi * p.x)};
    case FieldId::ExpShear:
        return {1.0, 0.5 * (p.y + 0.8) * std::exp(p.x)};
    }
    return {0.0, 0.0};
}

double field_divergence(FieldId id, Point2 p) {
    switch (id) {
    case FieldId::Const:
        return 0.0;
    case FieldId::CosShear:
        return -std::cos(4.0 * std::numbers::pi * p.x);
    case FieldId::ExpShear:
        return 0.5 * std::exp(p.x);
    }
    return 0.0;
}

ConditionCheck check_condition(FieldId id, double beta) {
    constexpr int samples = 101;
    double sup = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < samples; ++j)
        for (int i = 0; i < samples; ++i) {
            const Point2 p{-1.0 + 2.0 * i / (samples - 1), -1.0 + 2.0 * j / (samples - 1)};
            sup = std::max(sup, 0.5 * field_divergence(id, p) - beta);
        }
    return {sup < 0.0, sup};
}

double trace_to_section(Point2 p, FieldId id, double delta) {
    if (!(delta > 0.0))
        throw std::invalid_argument("trace_to_section: step must be positive");
    const auto cap = static_cast<long>(std::ceil(16.0 / delta));
    long steps = 0;
    while (p.x > -1.0) {
        if (++steps > cap)
            throw NumericalError("trace_to_section: iteration cap exceeded");
        const Vec2 b = eval_field(id, p);
        const Point2 next{p.x - delta * b[0], p.y - delta * b[1]};
        if (!std::isfinite(next.x) || !std::isfinite(next.y))
            throw NumericalError("trace_to_section: non-finite iterate");
        if (next.x <= -1.0) {
            const double t = (p.x + 1.0) / (p.x - next.x);
            return p.y + t * (next.y - p.y);
        }
        p = next;
    }
    return p.y;
}

std::vector<double> project_all(const std::vector<Point2>& points, FieldId id, double delta) {
    std::vector<double> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        try {
            out[i] = trace_to_section(points[i], id, delta);
        } catch (const NumericalError& e) {
            throw NumericalError("project_all: point " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace tubeh
