#pragma once

#include <array>
#include <vector>

#include "stacklq/lq_model.hpp"

namespace stacklq {

// Node-indexed matrices of the stacked closed-loop system
// S = [X; Xhat; Xcheck; Xhatcheck] (4 blocks of dimension d = 2n):
//   dS = M(t) S dt + sum_i (D_i S + c_i) dW_i,
// plus the per-node gain rows used to record the controls.
struct CompiledLoop {
    TimeGrid grid;
    int d = 0, k1 = 0, k2 = 0;
    std::vector<Mat> drift;   // per node, 4d x 4d
    std::array<Mat, 3> diff;  // constant, 4d x 4d
    std::array<Vec, 3> add;   // constant, 4d
    std::vector<Mat> g_u1h, g_u1c, g_u2c, g_u2x;
    Vec s0;
    // With no noise at all, every estimate equals the path itself; the
    // simulator then propagates one block and copies it, which keeps the
    // four blocks bit-identical.
    bool deterministic = false;
};

CompiledLoop compile_loop(const LqProblem& pb, const LqSolution& sol);

// One Euler-Maruyama step from node k; `scratch` must have size 4d.
inline void euler_step(const CompiledLoop& cl, int k, const Vec& s, const double dw[3],
                       double h, Vec& snew, Vec& scratch) {
    snew.noalias() = s;
    snew.noalias() += h * (cl.drift[static_cast<std::size_t>(k)] * s);
    for (int i = 0; i < 3; ++i) {
        scratch.noalias() = cl.diff[static_cast<std::size_t>(i)] * s;
        scratch += cl.add[static_cast<std::size_t>(i)];
        snew.noalias() += dw[i] * scratch;
    }
}

}  // namespace stacklq
