#include "stacklq/lq_model.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "stacklq/errors.hpp"

namespace stacklq {

LqProblem LqProblem::from_cid(const CidSpec& c) {
    LqProblem p;
    p.n = p.k1 = p.k2 = 1;
    auto m = [](double v) { return Mat::Constant(1, 1, v); };
    p.A0 = m(c.A0);
    p.B0 = m(c.B0);
    p.C0 = m(c.C0);
    p.Amul = {m(c.A1), m(c.A2), m(c.A3)};
    p.sigma = {Vec::Zero(1), Vec::Zero(1), Vec::Zero(1)};
    p.Q1 = m(c.Q1);
    p.N1 = m(c.N1);
    p.G1 = m(c.G1);
    p.Q2 = m(c.Q2);
    p.N2 = m(c.N2);
    p.G2 = m(c.G2);
    p.x0 = Vec::Constant(1, c.x0);
    return p;
}

bool LqProblem::additive_noise() const {
    for (const Vec& s : sigma)
        if (s.size() > 0 && s.cwiseAbs().maxCoeff() > 0) return true;
    return false;
}

Mat lq_follower_rhs(const LqProblem& pb, const Mat& P) {
    Mat quad = Mat::Zero(pb.n, pb.n);
    for (const Mat& Ai : pb.Amul) quad += Ai.transpose() * P * Ai;
    const Mat K1 = pb.B0 * pb.N1.partialPivLu().solve(pb.B0.transpose());
    return -(P * pb.A0 + pb.A0.transpose() * P + quad + pb.Q1 - P * K1 * P);
}

LqBlocks lq_blocks(const LqProblem& pb, const Mat& P) {
    const int n = pb.n;
    const Mat Zn = Mat::Zero(n, n);
    const Mat K1 = pb.B0 * pb.N1.partialPivLu().solve(pb.B0.transpose());
    const Mat K2 = pb.C0 * pb.N2.partialPivLu().solve(pb.C0.transpose());
    const Mat lam = pb.A0 - K1 * P;  // drift of the follower's filter

    auto blk = [n](const Mat& ul, const Mat& ur, const Mat& ll, const Mat& lr) {
        Mat m = Mat::Zero(2 * n, 2 * n);
        m.topLeftCorner(n, n) = ul;
        m.topRightCorner(n, n) = ur;
        m.bottomLeftCorner(n, n) = ll;
        m.bottomRightCorner(n, n) = lr;
        return m;
    };

    LqBlocks b;
    b.A0a = blk(pb.A0, Zn, Zn, lam);
    b.Aa[0] = blk(pb.Amul[0], Zn, Zn, pb.Amul[0]);
    b.Aa[1] = blk(pb.Amul[1], Zn, Zn, Zn);
    b.Aa[2] = blk(pb.Amul[2], Zn, Zn, pb.Amul[2]);
    for (int i = 0; i < 3; ++i) {
        b.sa[static_cast<std::size_t>(i)] = Vec::Zero(2 * n);
        b.sa[static_cast<std::size_t>(i)].head(n) = pb.sigma[static_cast<std::size_t>(i)];
    }
    b.B0a = blk(Zn, -K1, -K1.transpose(), Zn);
    b.Bbar0 = blk(-K1 * P, Zn, Zn, Zn);
    b.C0b = blk(-K2, Zn, Zn, Zn);
    b.Ct0 = blk(Zn, -K2 * P, Zn, Zn);
    b.Cb0 = blk(Zn, Zn, Zn, -P * K2 * P);
    b.Q2a = blk(pb.Q2, Zn, Zn, Zn);
    b.G2a = blk(pb.G2, Zn, Zn, Zn);
    b.X0a = Vec::Zero(2 * n);
    b.X0a.head(n) = pb.x0;
    return b;
}

void lq_leader_rhs(const LqProblem& pb, const LqBlocks& b, const std::array<Mat, 4>& Pc,
                   std::array<Mat, 4>& dPc) {
    (void)pb;
    const Mat& P1 = Pc[0];
    const Mat& P2 = Pc[1];
    const Mat& P3 = Pc[2];
    const Mat& P4 = Pc[3];
    const Mat S = b.B0a + b.C0b;
    const Mat W = b.Bbar0 + b.Ct0;

    // Quadrature terms follow the noise routing of each estimate: the full
    // state sees all three noises, the follower's filter W1/W3, the leader's
    // W2/W3, the common estimate W3 only.
    Mat r1 = P1 * b.A0a + b.A0a.transpose() * P1 + P1 * b.B0a * P1 + b.Q2a;
    for (const Mat& Ai : b.Aa) r1 += Ai.transpose() * P1 * Ai;

    const Mat A0B = b.A0a + b.Bbar0;
    Mat r2 = P2 * A0B + A0B.transpose() * P2 + P1 * b.B0a * P2 + P2 * b.B0a * P1 +
             P2 * b.B0a * P2 + P1 * b.Bbar0 + b.Bbar0.transpose() * P1;
    r2 += b.Aa[0].transpose() * P2 * b.Aa[0] + b.Aa[2].transpose() * P2 * b.Aa[2];

    Mat r3 = P3 * b.A0a + b.A0a.transpose() * P3 + P3 * S * P1 + P1 * S * P3 + P3 * S * P3 +
             P1 * b.C0b * P1;
    r3 += b.Aa[1].transpose() * P3 * b.Aa[1] + b.Aa[2].transpose() * P3 * b.Aa[2];

    const Mat A0W = b.A0a + W;
    const Mat P123 = P1 + P2 + P3;
    Mat r4 = P4 * A0W + A0W.transpose() * P4 + P4 * S * P123 + P123 * S * P4 + P4 * S * P4 +
             P3 * W + W.transpose() * P3 + P2 * b.B0a * P3 + P3 * b.B0a * P2 +
             P2 * b.C0b * P3 + P3 * b.C0b * P2 + (P1 + P2) * b.Ct0 +
             b.Ct0.transpose() * (P1 + P2) + P1 * b.C0b * P2 + P2 * b.C0b * P1 +
             P2 * b.C0b * P2 + b.Cb0;
    r4 += b.Aa[2].transpose() * P4 * b.Aa[2];

    dPc[0] = -r1;
    dPc[1] = -r2;
    dPc[2] = -r3;
    dPc[3] = -r4;
}

LqGainsAt lq_gains_at(const LqProblem& pb, const Mat& P, const std::array<Mat, 4>& Pc) {
    const int n = pb.n;
    Eigen::PartialPivLU<Mat> lu1(pb.N1);
    Eigen::PartialPivLU<Mat> lu2(pb.N2);

    Mat b0p = Mat::Zero(pb.k1, 2 * n);  // [B0' P | 0]
    b0p.leftCols(n) = pb.B0.transpose() * P;
    Mat b0r = Mat::Zero(pb.k1, 2 * n);  // [0 | B0']
    b0r.rightCols(n) = pb.B0.transpose();
    Mat c0l = Mat::Zero(pb.k2, 2 * n);  // [C0' | 0]
    c0l.leftCols(n) = pb.C0.transpose();
    Mat c0p = Mat::Zero(pb.k2, 2 * n);  // [0 | C0' P]
    c0p.rightCols(n) = pb.C0.transpose() * P;

    LqGainsAt g;
    g.u1_on_xhat = -lu1.solve(b0p + b0r * (Pc[0] + Pc[1]));
    g.u1_on_common = -lu1.solve(b0r * (Pc[2] + Pc[3]));
    g.u2_on_xcheck = -lu2.solve(c0l * (Pc[0] + Pc[2]));
    g.u2_on_common = -lu2.solve(c0l * (Pc[1] + Pc[3]) + c0p);
    return g;
}

LqSolution lq_solve(const LqProblem& pb, const TimeGrid& grid) {
    const int n = pb.n;
    const int n2 = 2 * n;
    const double h = grid.step();

    {
        Eigen::SelfAdjointEigenSolver<Mat> es1(0.5 * (pb.N1 + pb.N1.transpose()));
        if (es1.eigenvalues().cwiseAbs().minCoeff() < 1e-10)
            throw AssumptionViolated("A2.1", grid.horizon);
    }

    LqSolution sol;
    sol.grid = grid;
    sol.P = MatPath(grid, n, n);
    sol.L.P1 = MatPath(grid, n2, n2);
    sol.L.P2 = MatPath(grid, n2, n2);
    sol.L.P3 = MatPath(grid, n2, n2);
    sol.L.P4 = MatPath(grid, n2, n2);
    sol.u1_on_xhat = MatPath(grid, pb.k1, n2);
    sol.u1_on_common = MatPath(grid, pb.k1, n2);
    sol.u2_on_xcheck = MatPath(grid, pb.k2, n2);
    sol.u2_on_common = MatPath(grid, pb.k2, n2);

    struct State {
        Mat P;
        std::array<Mat, 4> Pc;
    };
    auto rhs = [&pb](double, const State& s) {
        State d;
        d.P = lq_follower_rhs(pb, s.P);
        const LqBlocks blocks = lq_blocks(pb, s.P);
        lq_leader_rhs(pb, blocks, s.Pc, d.Pc);
        return d;
    };
    auto axpy = [](const State& a, double c, const State& b) {
        State r;
        r.P = a.P + c * b.P;
        for (int j = 0; j < 4; ++j) r.Pc[j] = a.Pc[j] + c * b.Pc[j];
        return r;
    };
    auto check = [](const State& s, double t) {
        if (!all_finite(s.P, kBlowupBound)) throw NonFiniteError(t, "follower block");
        static const char* names[4] = {"leader block 1", "leader block 2", "leader block 3",
                                       "leader block 4"};
        for (int j = 0; j < 4; ++j)
            if (!all_finite(s.Pc[j], kBlowupBound)) throw NonFiniteError(t, names[j]);
    };

    State s;
    s.P = pb.G1;
    for (auto& m : s.Pc) m = Mat::Zero(n2, n2);
    s.Pc[0].topLeftCorner(n, n) = pb.G2;

    auto store = [&](int k, const State& st) {
        sol.P.at(k) = st.P;
        sol.L.P1.at(k) = st.Pc[0];
        sol.L.P2.at(k) = st.Pc[1];
        sol.L.P3.at(k) = st.Pc[2];
        sol.L.P4.at(k) = st.Pc[3];
        const LqGainsAt g = lq_gains_at(pb, st.P, st.Pc);
        sol.u1_on_xhat.at(k) = g.u1_on_xhat;
        sol.u1_on_common.at(k) = g.u1_on_common;
        sol.u2_on_xcheck.at(k) = g.u2_on_xcheck;
        sol.u2_on_common.at(k) = g.u2_on_common;
    };
    store(grid.n_steps, s);

    for (int k = grid.n_steps; k > 0; --k) {
        const double t = grid.node(k);
        const State d1 = rhs(t, s);
        const State d2 = rhs(t - 0.5 * h, axpy(s, -0.5 * h, d1));
        const State d3 = rhs(t - 0.5 * h, axpy(s, -0.5 * h, d2));
        const State d4 = rhs(t - h, axpy(s, -h, d3));
        State next = s;
        next.P -= (h / 6.0) * (d1.P + 2 * d2.P + 2 * d3.P + d4.P);
        for (int j = 0; j < 4; ++j)
            next.Pc[j] -= (h / 6.0) * (d1.Pc[j] + 2 * d2.Pc[j] + 2 * d3.Pc[j] + d4.Pc[j]);
        check(next, grid.node(k - 1));
        s = next;
        store(k - 1, s);
    }
    return sol;
}

}  // namespace stacklq
