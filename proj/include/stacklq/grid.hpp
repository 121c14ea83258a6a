#pragma once

#include <stdexcept>

namespace stacklq {

// Uniform grid on [0, T] with nodes t_k = T * k / n_steps.
// Node 0 is exactly 0 and node n_steps is exactly T.
struct TimeGrid {
    double horizon = 1.0;
    int n_steps = 2;

    TimeGrid() = default;
    TimeGrid(double T, int steps) : horizon(T), n_steps(steps) {
        if (!(T > 0.0)) throw std::invalid_argument("TimeGrid: horizon must be positive");
        if (steps < 2) throw std::invalid_argument("TimeGrid: n_steps must be >= 2");
    }

    double step() const { return horizon / n_steps; }
    double node(int k) const { return horizon * (static_cast<double>(k) / n_steps); }
    int n_nodes() const { return n_steps + 1; }

    bool operator==(const TimeGrid& o) const {
        return horizon == o.horizon && n_steps == o.n_steps;
    }
};

}  // namespace stacklq
