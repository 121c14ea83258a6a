#include "stacklq/principal_agent.hpp"

namespace stacklq {

namespace {

Mat diag2(double a, double b) {
    Mat m = Mat::Zero(2, 2);
    m(0, 0) = a;
    m(1, 1) = b;
    return m;
}

Mat col2(double a, double b) {
    Mat m(2, 1);
    m(0, 0) = a;
    m(1, 0) = b;
    return m;
}

}  // namespace

Mat PaGame::A0aug(const Mat& P) const {
    const Mat drift = lq.A0 + (Btilde * Btilde.transpose() - alpha1 * alpha1.transpose()) * P;
    Mat m = Mat::Zero(4, 4);
    m.topLeftCorner(2, 2) = lq.A0;
    m.bottomRightCorner(2, 2) = drift;
    return m;
}

Mat PaGame::Abar0aug(const Mat& P) const {
    Mat m = Mat::Zero(4, 4);
    m.topLeftCorner(2, 2) =
        (Btilde * Btilde.transpose() - alpha1 * alpha1.transpose()) * P;
    return m;
}

Mat PaGame::B0aug() const {
    const Mat k = Btilde * Btilde.transpose() - alpha1 * alpha1.transpose();
    Mat m = Mat::Zero(4, 4);
    m.topRightCorner(2, 2) = k;
    m.bottomLeftCorner(2, 2) = k;
    return m;
}

Vec PaGame::abar2(const Mat& P) const {
    Vec v = Vec::Zero(4);
    v.tail(2) = P * alpha2;
    return v;
}

Vec PaGame::abar3(const Mat& P) const {
    Vec v = Vec::Zero(4);
    v.tail(2) = P * alpha3;
    return v;
}

Mat PaGame::G2aug() const {
    Mat m = Mat::Zero(4, 4);
    m.topLeftCorner(2, 2) = G2t;
    return m;
}

PaGame build_pa_game(const PaParams& p) {
    PaGame g;
    g.Btilde = col2(p.B, 0);
    g.alpha1 = col2(0, -1);
    g.alpha2 = col2(-1, 1);
    g.alpha3 = col2(-1, 0);
    g.G1t = diag2(0, 1);
    g.G2t = diag2(1, 0);
    for (int i = 0; i < 3; ++i) {
        g.sigma_tilde[static_cast<std::size_t>(i)] = Vec(2);
        g.sigma_tilde[static_cast<std::size_t>(i)] << p.sigma[static_cast<std::size_t>(i)],
            p.sigma_bar[static_cast<std::size_t>(i)];
    }

    LqProblem& lq = g.lq;
    lq.n = 2;
    lq.k1 = 2;
    lq.k2 = 2;
    lq.A0 = diag2(p.r, p.r);
    lq.B0 = Mat(2, 2);
    lq.B0 << g.Btilde, g.alpha1;  // controls (e, c)
    lq.C0 = Mat(2, 2);
    lq.C0 << g.alpha2, g.alpha3;  // controls (s, d)
    for (int i = 0; i < 3; ++i) {
        lq.Amul[static_cast<std::size_t>(i)] = Mat::Zero(2, 2);
        lq.sigma[static_cast<std::size_t>(i)] = g.sigma_tilde[static_cast<std::size_t>(i)];
    }
    // The quadratic preferences maximize c^2 - e^2 + m^2 (agent) and
    // d^2 - s^2 + y^2 (principal); in solver form this is minimization with
    // the indefinite control weights below.
    lq.Q1 = g.G1t;
    lq.N1 = diag2(-1, 1);
    lq.G1 = g.G1t;
    lq.Q2 = g.G2t;
    lq.N2 = diag2(1, -1);
    lq.G2 = g.G2t;
    lq.x0 = Vec(2);
    lq.x0 << p.y0, p.m0;

    g.X0a = Vec::Zero(4);
    g.X0a.head(2) = lq.x0;
    for (int i = 0; i < 3; ++i) {
        g.Sigma_a[static_cast<std::size_t>(i)] = Vec::Zero(4);
        g.Sigma_a[static_cast<std::size_t>(i)].head(2) =
            g.sigma_tilde[static_cast<std::size_t>(i)];
    }
    g.alpha2_a = Vec::Zero(4);
    g.alpha2_a.head(2) = g.alpha2;
    g.alpha3_a = Vec::Zero(4);
    g.alpha3_a.head(2) = g.alpha3;
    return g;
}

PaSolution solve_pa(const PaParams& params, const TimeGrid& grid) {
    const PaGame game = build_pa_game(params);
    PaSolution sol;
    sol.grid = grid;
    sol.lq = lq_solve(game.lq, grid);
    sol.P = sol.lq.P;
    sol.Pcal1 = sol.lq.L.P1;
    sol.Pcal2 = sol.lq.L.P2;
    sol.Pcal3 = sol.lq.L.P3;
    sol.Pcal4 = sol.lq.L.P4;
    sol.agent_gain_hat = sol.lq.u1_on_xhat;
    sol.agent_gain_cross = sol.lq.u1_on_common;
    sol.principal_gain_check = sol.lq.u2_on_xcheck;
    sol.principal_gain_cross = sol.lq.u2_on_common;
    return sol;
}

PaSimResult simulate_pa(const PaParams& params, const PaSolution& sol, const TimeGrid& grid,
                        int n_paths, std::uint64_t seed, int threads) {
    if (!(sol.grid == grid))
        throw std::invalid_argument("simulate_pa: solution solved on a different grid");
    const PaGame game = build_pa_game(params);
    PaSimResult out;
    out.ensemble = simulate_closed_loop(game.lq, sol.lq, n_paths, seed, threads);
    // Preference values as written: 1/2 E[ int (c^2 - e^2 + m^2) + m(T)^2 ]
    // and 1/2 E[ int (d^2 - s^2 + y^2) + y(T)^2 ].
    out.J1 = evaluate_cost_lq(out.ensemble, game.G1t, diag2(-1, 1), game.G1t,
                              Player::follower);
    out.J2 = evaluate_cost_lq(out.ensemble, game.G2t, diag2(-1, 1), game.G2t, Player::leader);
    return out;
}

}  // namespace stacklq
