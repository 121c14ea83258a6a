#pragma once

#include <Eigen/Dense>
#include <vector>

#include "stacklq/grid.hpp"

namespace stacklq {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// A time-indexed sequence of equally shaped matrices, one per grid node.
struct MatPath {
    TimeGrid grid;
    std::vector<Mat> values;  // size n_steps + 1

    MatPath() = default;
    MatPath(const TimeGrid& g, int rows, int cols)
        : grid(g), values(static_cast<std::size_t>(g.n_nodes()), Mat::Zero(rows, cols)) {}

    const Mat& at(int k) const { return values[static_cast<std::size_t>(k)]; }
    Mat& at(int k) { return values[static_cast<std::size_t>(k)]; }

    int rows() const { return values.empty() ? 0 : static_cast<int>(values.front().rows()); }
    int cols() const { return values.empty() ? 0 : static_cast<int>(values.front().cols()); }

    // Linear interpolation between nodes; clamps outside [0, T].
    Mat eval_linear(double t) const {
        const double h = grid.step();
        if (t <= 0.0) return values.front();
        if (t >= grid.horizon) return values.back();
        const double s = t / h;
        const int k = std::min(static_cast<int>(s), grid.n_steps - 1);
        const double w = s - k;
        return (1.0 - w) * values[static_cast<std::size_t>(k)] +
               w * values[static_cast<std::size_t>(k) + 1];
    }

    double max_abs() const {
        double m = 0.0;
        for (const Mat& v : values) m = std::max(m, v.cwiseAbs().maxCoeff());
        return m;
    }
};

inline bool all_finite(const Mat& m, double bound = 1e12) {
    return m.allFinite() && m.cwiseAbs().maxCoeff() <= bound;
}

}  // namespace stacklq
