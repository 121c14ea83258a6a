#include "stacklq/closed_loop.hpp"

namespace stacklq {

CompiledLoop compile_loop(const LqProblem& pb, const LqSolution& sol) {
    const int d = 2 * pb.n;
    const TimeGrid& grid = sol.grid;
    CompiledLoop cl;
    cl.grid = grid;
    cl.d = d;
    cl.k1 = pb.k1;
    cl.k2 = pb.k2;
    cl.drift.resize(static_cast<std::size_t>(grid.n_nodes()));
    cl.g_u1h.resize(cl.drift.size());
    cl.g_u1c.resize(cl.drift.size());
    cl.g_u2c.resize(cl.drift.size());
    cl.g_u2x.resize(cl.drift.size());

    for (int k = 0; k <= grid.n_steps; ++k) {
        const LqBlocks b = lq_blocks(pb, sol.P.at(k));
        const std::array<Mat, 4> Pc{sol.L.P1.at(k), sol.L.P2.at(k), sol.L.P3.at(k),
                                    sol.L.P4.at(k)};
        const Mat S = b.B0a + b.C0b;
        const Mat sumP = Pc[0] + Pc[1] + Pc[2] + Pc[3];

        Mat M = Mat::Zero(4 * d, 4 * d);
        M.block(0, 0, d, d) = b.A0a + b.B0a * Pc[0];
        M.block(0, d, d, d) = b.Bbar0 + b.B0a * Pc[1];
        M.block(0, 2 * d, d, d) = b.B0a * Pc[2] + b.C0b * (Pc[0] + Pc[2]);
        M.block(0, 3 * d, d, d) = b.Ct0 + b.B0a * Pc[3] + b.C0b * (Pc[1] + Pc[3]);
        M.block(d, d, d, d) = b.A0a + b.Bbar0 + b.B0a * (Pc[0] + Pc[1]);
        M.block(d, 3 * d, d, d) = b.Ct0 + b.B0a * (Pc[2] + Pc[3]) + b.C0b * sumP;
        M.block(2 * d, 2 * d, d, d) = b.A0a + S * (Pc[0] + Pc[2]);
        M.block(2 * d, 3 * d, d, d) = b.Bbar0 + b.Ct0 + S * (Pc[1] + Pc[3]);
        M.block(3 * d, 3 * d, d, d) = b.A0a + b.Bbar0 + b.Ct0 + S * sumP;
        cl.drift[static_cast<std::size_t>(k)] = M;

        cl.g_u1h[static_cast<std::size_t>(k)] = sol.u1_on_xhat.at(k);
        cl.g_u1c[static_cast<std::size_t>(k)] = sol.u1_on_common.at(k);
        cl.g_u2c[static_cast<std::size_t>(k)] = sol.u2_on_xcheck.at(k);
        cl.g_u2x[static_cast<std::size_t>(k)] = sol.u2_on_common.at(k);

        if (k == 0) {
            // Noise routing: dW1 drives X and Xhat, dW2 drives X and Xcheck,
            // dW3 drives all four blocks.
            for (int i = 0; i < 3; ++i) {
                cl.diff[static_cast<std::size_t>(i)] = Mat::Zero(4 * d, 4 * d);
                cl.add[static_cast<std::size_t>(i)] = Vec::Zero(4 * d);
            }
            auto route = [&](int i, int blkrow) {
                cl.diff[static_cast<std::size_t>(i)].block(blkrow * d, blkrow * d, d, d) =
                    b.Aa[static_cast<std::size_t>(i)];
                cl.add[static_cast<std::size_t>(i)].segment(blkrow * d, d) =
                    b.sa[static_cast<std::size_t>(i)];
            };
            route(0, 0);
            route(0, 1);
            route(1, 0);
            route(1, 2);
            route(2, 0);
            route(2, 1);
            route(2, 2);
            route(2, 3);
            cl.s0 = Vec::Zero(4 * d);
            for (int blkrow = 0; blkrow < 4; ++blkrow) cl.s0.segment(blkrow * d, d) = b.X0a;
            cl.deterministic = true;
            for (int i = 0; i < 3; ++i)
                if (cl.diff[static_cast<std::size_t>(i)].cwiseAbs().maxCoeff() > 0 ||
                    cl.add[static_cast<std::size_t>(i)].cwiseAbs().maxCoeff() > 0)
                    cl.deterministic = false;
        }
    }
    return cl;
}

}  // namespace stacklq
