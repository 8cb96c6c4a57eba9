#include "seps/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace seps {

namespace {

struct Probe {
    double value;
    std::vector<std::size_t> branches;
};

Probe evaluate(const ScalarBuilder& f, const std::vector<Tensor>& points) {
    Graph g;
    std::vector<Var> leaves;
    leaves.reserve(points.size());
    for (const Tensor& p : points) leaves.push_back(g.constant(p));
    const Tensor& out = f(g, leaves).value();
    if (out.size() != 1) throw shape_error("finite_difference_check: function is not scalar");
    if (!std::isfinite(out[0])) throw numeric_error("non-finite evaluation in finite difference");
    return {out[0], g.branches()};
}

}  // namespace

FdReport finite_difference_check(const ScalarBuilder& f, std::span<const Tensor> points,
                                 std::span<const Coordinate> coordinates, double step,
                                 double kink_tolerance) {
    if (!(step > 0.0)) throw shape_error("finite_difference_check: step must be positive");

    Graph g;
    std::vector<Var> leaves;
    leaves.reserve(points.size());
    for (const Tensor& p : points) leaves.push_back(g.leaf(p));
    const Var out = f(g, leaves);
    const Gradients grads = gradient(g, out);

    std::vector<Coordinate> coords(coordinates.begin(), coordinates.end());
    if (coords.empty()) {
        for (std::size_t l = 0; l < points.size(); ++l)
            for (std::size_t i = 0; i < points[l].size(); ++i) coords.push_back({l, i});
    }

    std::vector<Tensor> probe(points.begin(), points.end());
    const Probe center = kink_tolerance > 0.0 ? evaluate(f, probe) : Probe{};
    FdReport report;
    for (const Coordinate& c : coords) {
        if (c.leaf >= probe.size() || c.index >= probe[c.leaf].size()) {
            throw shape_error("finite_difference_check: coordinate out of range");
        }
        const double x0 = probe[c.leaf][c.index];
        probe[c.leaf][c.index] = x0 + step;
        const Probe up = evaluate(f, probe);
        probe[c.leaf][c.index] = x0 - step;
        const Probe down = evaluate(f, probe);
        probe[c.leaf][c.index] = x0;

        const double numeric = (up.value - down.value) / (2.0 * step);
        if (kink_tolerance > 0.0) {
            const double forward = (up.value - center.value) / step;
            const double backward = (center.value - down.value) / step;
            const bool crossed = up.branches != center.branches || down.branches != center.branches;
            if (crossed || std::abs(forward - backward) > kink_tolerance * std::max(1.0, std::abs(numeric))) {
                ++report.excluded;
                continue;
            }
        }
        const double analytic = grads[leaves[c.leaf]][c.index];
        const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
        if (!std::isfinite(err)) throw numeric_error("non-finite evaluation in finite difference");
        if (report.checked == 0 || err > report.max_relative_error) {
            report.max_relative_error = err;
            report.worst = c;
        }
        ++report.checked;
    }
    return report;
}

double finite_difference_check(const std::function<Var(Graph&, Var)>& f, const Tensor& point,
                               double step) {
    const ScalarBuilder wrapped = [&f](Graph& g, std::span<const Var> leaves) {
        return f(g, leaves[0]);
    };
    return finite_difference_check(wrapped, std::span<const Tensor>(&point, 1), {}, step)
        .max_relative_error;
}

}  // namespace seps
