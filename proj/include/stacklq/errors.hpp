#pragma once

#include <stdexcept>
#include <string>

namespace stacklq {

// Numerical failure tagged with the time point where it occurred.
struct SolveError : std::runtime_error {
    double t;
    SolveError(const std::string& msg, double t_) : std::runtime_error(msg), t(t_) {}
};

// NaN/Inf, or an entry beyond the blow-up bound, produced during integration
// or simulation. Signals finite-time blow-up of a Riccati flow or a diverging
// sample path.
struct NonFiniteError : SolveError {
    explicit NonFiniteError(double t_, const std::string& where = "")
        : SolveError("non-finite value at t=" + std::to_string(t_) +
                         (where.empty() ? "" : " in " + where),
                     t_) {}
};

// One of the invertibility assumptions (A2.1)-(A2.5) failed numerically:
// the named matrix is singular beyond the condition-number threshold.
struct AssumptionViolated : SolveError {
    std::string which;  // "A2.1" .. "A2.5"
    AssumptionViolated(std::string which_, double t_)
        : SolveError("assumption " + which_ + " violated at t=" + std::to_string(t_), t_),
          which(std::move(which_)) {}
};

// The perturbation direction is too weak: all J(eps) agree within MC noise,
// so the quadratic fit carries no information.
struct DegenerateFit : std::runtime_error {
    DegenerateFit()
        : std::runtime_error(
              "perturbation too weak: J(eps) values indistinguishable within MC noise") {}
};

// Entry cap used for blow-up detection everywhere.
inline constexpr double kBlowupBound = 1e12;

// Condition-number threshold beyond which a matrix counts as singular.
inline constexpr double kCondThreshold = 1e12;

}  // namespace stacklq
