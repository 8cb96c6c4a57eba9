#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "seps/graph.hpp"

namespace seps {

/// Builds a scalar from the given leaves inside a fresh graph.
using ScalarBuilder = std::function<Var(Graph&, std::span<const Var>)>;

struct Coordinate {
    std::size_t leaf = 0;
    std::size_t index = 0;
};

struct FdReport {
    double max_relative_error = 0.0;
    Coordinate worst;
    std::size_t checked = 0;
    /// Coordinates skipped because the perturbation crossed a tie (argmax,
    /// hinge or clip boundary).
    std::size_t excluded = 0;
};

/// Compares reverse-mode gradients against central differences.
///
/// Error per coordinate is |analytic - numeric| / max(1, |analytic|). When
/// `coordinates` is empty every entry of every leaf is checked. Throws
/// numeric_error if a perturbed evaluation is not finite.
///
/// With kink_tolerance > 0, a coordinate is counted in `excluded` instead of
/// being compared when either probe takes a different branch of a non-smooth
/// operation than the unperturbed point (see Graph::branches), or when its
/// forward and backward one-sided slopes differ by more than
/// kink_tolerance * max(1, |central|).
FdReport finite_difference_check(const ScalarBuilder& f, std::span<const Tensor> points,
                                 std::span<const Coordinate> coordinates = {},
                                 double step = NumericConstants::fd_step, double kink_tolerance = 0.0);

/// Single-input convenience form; returns the max relative error.
double finite_difference_check(const std::function<Var(Graph&, Var)>& f, const Tensor& point,
                               double step = NumericConstants::fd_step);

}  // namespace seps
