#include <doctest.h>

#include <cmath>

#include "stacklq/principal_agent.hpp"
#include "stacklq/riccati.hpp"

using namespace stacklq;

namespace {

PaParams generic_pa() {
    PaParams p;
    p.r = 0.05;
    p.B = 1.0;
    p.sigma = {0.1, 0.1, 0.1};
    p.sigma_bar = {0.1, 0.1, 0.1};
    p.y0 = 1.0;
    p.m0 = 1.0;
    p.T = 1.0;
    return p;
}

}  // namespace

TEST_CASE("pa game construction: block identities") {
    PaParams p = generic_pa();
    const PaGame g = build_pa_game(p);
    // alpha3 alpha3' - alpha2 alpha2' = [[0,1],[1,-1]]
    Mat expect(2, 2);
    expect << 0, 1, 1, -1;
    const Mat lhs =
        g.alpha3 * g.alpha3.transpose() - g.alpha2 * g.alpha2.transpose();
    CHECK((lhs - expect).cwiseAbs().maxCoeff() == 0.0);

    // B = 0 removes the effort channel from the agent drift.
    PaParams p0 = p;
    p0.B = 0;
    const PaGame g0 = build_pa_game(p0);
    CHECK((g0.Btilde * g0.Btilde.transpose()).cwiseAbs().maxCoeff() == 0.0);

    // r = 0: the augmented drift keeps only the P-coupling in the
    // lower-right block.
    PaParams pr = p;
    pr.r = 0;
    const PaGame gr = build_pa_game(pr);
    Mat P(2, 2);
    P << 0.2, 0.1, 0.1, 0.4;
    const Mat A0a = gr.A0aug(P);
    CHECK(A0a.topLeftCorner(2, 2).cwiseAbs().maxCoeff() == 0.0);
    const Mat coupling =
        (gr.Btilde * gr.Btilde.transpose() - gr.alpha1 * gr.alpha1.transpose()) * P;
    CHECK((A0a.bottomRightCorner(2, 2) - coupling).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pa agent Riccati: the constant solution of the B = r = 0 case") {
    PaParams p = generic_pa();
    p.B = 0;
    p.r = 0;
    const TimeGrid grid(1.0, 200);
    const PaSolution sol = solve_pa(p, grid);
    // pdot_22 = p22^2 - 1 with p22(T) = 1 stays at 1; everything else at 0.
    for (int k = 0; k <= grid.n_steps; ++k) {
        CHECK(sol.P.at(k)(1, 1) == doctest::Approx(1.0).epsilon(1e-13));
        CHECK(std::abs(sol.P.at(k)(0, 0)) <= 1e-13);
        CHECK(std::abs(sol.P.at(k)(0, 1)) <= 1e-13);
        CHECK(std::abs(sol.P.at(k)(1, 0)) <= 1e-13);
    }
}

TEST_CASE("pa Riccati residuals stay within the defect bound") {
    const PaParams p = generic_pa();
    const TimeGrid grid(1.0, 400);
    const PaSolution sol = solve_pa(p, grid);
    const PaGame game = build_pa_game(p);
    const double h = grid.step();

    // Agent equation, as displayed: Pdot + P r~ + r~'P + P(BB'-a1a1')P' + G1~ = 0.
    {
        RiccatiField f;
        f.terminal = game.G1t;
        const Mat K = game.Btilde * game.Btilde.transpose() -
                      game.alpha1 * game.alpha1.transpose();
        f.rhs = [&](double, const Mat& P) {
            return Mat(-(P * game.lq.A0 + game.lq.A0.transpose() * P +
                         P * K * P.transpose() + game.G1t));
        };
        const double bound = 10.0 * h * h * std::pow(1.0 + sol.P.max_abs(), 2);
        CHECK(riccati_residual(sol.P, f, grid) <= bound);
    }

    // Principal equations 1..3, as displayed (P-dependent blocks closed over
    // the solved agent path).
    const Mat B0a = game.B0aug();
    Mat K4 = Mat::Zero(4, 4);
    K4.topLeftCorner(2, 2) = game.alpha3 * game.alpha3.transpose() -
                             game.alpha2 * game.alpha2.transpose();
    const Mat S4 = B0a + K4;
    auto at_node = [&](double t) {
        const int k = static_cast<int>(std::lround(t / h));
        return k;
    };
    const double norm = std::max({sol.Pcal1.max_abs(), sol.Pcal2.max_abs(),
                                  sol.Pcal3.max_abs(), sol.Pcal4.max_abs()});
    const double bound = 10.0 * h * h * std::pow(1.0 + norm, 2);
    {
        RiccatiField f;
        f.terminal = game.G2aug();
        f.rhs = [&](double t, const Mat& M) {
            const Mat A0a = game.A0aug(sol.P.at(at_node(t)));
            return Mat(-(M * A0a + A0a.transpose() * M + M * B0a * M + game.G2aug()));
        };
        CHECK(riccati_residual(sol.Pcal1, f, grid) <= bound);
    }
    {
        RiccatiField f;
        f.terminal = Mat::Zero(4, 4);
        f.rhs = [&](double t, const Mat& M) {
            const int k = at_node(t);
            const Mat A0a = game.A0aug(sol.P.at(k));
            const Mat Ab = game.Abar0aug(sol.P.at(k));
            const Mat AB = A0a + Ab;
            const Mat& P1 = sol.Pcal1.at(k);
            return Mat(-(M * AB + AB.transpose() * M + P1 * B0a * M + M * B0a * P1 +
                         M * B0a * M + P1 * Ab + Ab.transpose() * P1));
        };
        CHECK(riccati_residual(sol.Pcal2, f, grid) <= bound);
    }
    {
        RiccatiField f;
        f.terminal = Mat::Zero(4, 4);
        f.rhs = [&](double t, const Mat& M) {
            const int k = at_node(t);
            const Mat A0a = game.A0aug(sol.P.at(k));
            const Mat& P1 = sol.Pcal1.at(k);
            return Mat(-(A0a.transpose() * M + M * A0a + P1 * S4 * M + M * S4 * P1 +
                         M * S4 * M + P1 * K4 * P1));
        };
        CHECK(riccati_residual(sol.Pcal3, f, grid) <= bound);
    }
}

TEST_CASE("pa terminal gain identities") {
    const PaParams p = generic_pa();
    const TimeGrid grid(1.0, 100);
    const PaSolution sol = solve_pa(p, grid);
    const int T = grid.n_steps;
    // Payment gain on the principal's filtered asset at T:
    // s* reads -(alpha2-row of (P1+P3)); with P1(T) = G2aug, P3(T) = 0 the
    // y-check coefficient is (P1+P3)^{11} - (P1+P3)^{21} = 1.
    CHECK(sol.principal_gain_check.at(T)(0, 0) == doctest::Approx(1.0).epsilon(1e-13));
    // Consumption gain d* at T: -(P1+P3)^{11} = -1.
    CHECK(sol.principal_gain_check.at(T)(1, 0) == doctest::Approx(-1.0).epsilon(1e-13));
    // Effort gain at T: e* carries B(P^{11} + (P1cal+P2cal)^{31}) = B*P^{11}.
    CHECK(sol.agent_gain_hat.at(T)(0, 0) ==
          doctest::Approx(p.B * sol.P.at(T)(0, 0)).epsilon(1e-13));
}

TEST_CASE("pa agent block agrees with the general follower solver") {
    const PaParams p = generic_pa();
    const PaGame game = build_pa_game(p);
    const TimeGrid grid(1.0, 200);
    const PaSolution sol = solve_pa(p, grid);

    GameSpec spec = GameSpec::zeros(2, 2, 2);
    spec.A[0] = game.lq.A0;
    spec.B[0] = game.lq.B0;
    spec.C[0] = game.lq.C0;
    spec.Q1 = game.G1t;
    spec.N1 = game.lq.N1;  // diag(-1, 1) for (e, c)
    spec.G1 = game.G1t;
    spec.Q2 = game.G2t;
    spec.N2 = game.lq.N2;
    spec.G2 = game.G2t;
    spec.x0 = game.lq.x0;
    const MatPath P1 = solve_follower_riccati(spec, grid);
    double worst = 0;
    for (int k = 0; k <= grid.n_steps; ++k)
        worst = std::max(worst, (P1.at(k) - sol.P.at(k)).cwiseAbs().maxCoeff());
    CHECK(worst <= 1e-8);
}

TEST_CASE("pa simulation: no noise is deterministic and reproducible") {
    PaParams p = generic_pa();
    p.sigma = {0, 0, 0};
    p.sigma_bar = {0, 0, 0};
    const TimeGrid grid(1.0, 100);
    const PaSolution sol = solve_pa(p, grid);
    const PaSimResult a = simulate_pa(p, sol, grid, 6, 3);
    const PaSimResult b = simulate_pa(p, sol, grid, 6, 3);
    CHECK(a.ensemble.X == b.ensemble.X);
    CHECK(a.J1.mean == b.J1.mean);
    for (int pth = 0; pth < 6; ++pth)
        for (int k = 0; k <= grid.n_steps; ++k)
            for (int c = 0; c < a.ensemble.d; ++c) {
                const double x = a.ensemble.X[a.ensemble.sidx(pth, k, c)];
                CHECK(a.ensemble.Xhat[a.ensemble.sidx(pth, k, c)] == x);
                CHECK(a.ensemble.Xcheck[a.ensemble.sidx(pth, k, c)] == x);
                CHECK(a.ensemble.Xhatcheck[a.ensemble.sidx(pth, k, c)] == x);
            }
    // Both paths of one run coincide: nothing random remains.
    CHECK(a.ensemble.X[a.ensemble.sidx(0, grid.n_steps, 0)] ==
          a.ensemble.X[a.ensemble.sidx(5, grid.n_steps, 0)]);
}

TEST_CASE("pa simulation: zero drift and zero start keep the asset mean at zero") {
    PaParams p = generic_pa();
    p.B = 0;
    p.r = 0;
    p.y0 = 0;
    p.m0 = 0;
    const TimeGrid grid(1.0, 100);
    const PaSolution sol = solve_pa(p, grid);
    const PaSimResult sim = simulate_pa(p, sol, grid, 10000, 17, 2);
    double s = 0, q = 0;
    for (int pth = 0; pth < sim.ensemble.n_paths; ++pth) {
        const double y = sim.ensemble.X[sim.ensemble.sidx(pth, grid.n_steps, 0)];
        s += y;
        q += y * y;
    }
    const double mean = s / sim.ensemble.n_paths;
    const double se = std::sqrt((q / sim.ensemble.n_paths - mean * mean) /
                                sim.ensemble.n_paths);
    CHECK(std::abs(mean) <= 3.0 * se + 1e-12);
}

TEST_CASE("pa preference values match a direct quadrature of the displays") {
    const PaParams p = generic_pa();
    const TimeGrid grid(1.0, 100);
    const PaSolution sol = solve_pa(p, grid);
    const PaSimResult sim = simulate_pa(p, sol, grid, 400, 23);
    const PathEnsemble& e = sim.ensemble;
    const double h = grid.step();
    double j1 = 0, j2 = 0;
    for (int pth = 0; pth < e.n_paths; ++pth) {
        double a1 = 0, a2 = 0;
        for (int k = 0; k <= grid.n_steps; ++k) {
            const double y = e.X[e.sidx(pth, k, 0)];
            const double m = e.X[e.sidx(pth, k, 1)];
            const double eff = e.u1[e.uidx(pth, k, 0, 2)];
            const double con = e.u1[e.uidx(pth, k, 1, 2)];
            const double pay = e.u2[e.uidx(pth, k, 0, 2)];
            const double withdraw = e.u2[e.uidx(pth, k, 1, 2)];
            const double w = (k == 0 || k == grid.n_steps) ? 0.5 : 1.0;
            a1 += w * h * (con * con - eff * eff + m * m);
            a2 += w * h * (withdraw * withdraw - pay * pay + y * y);
        }
        const double yT = e.X[e.sidx(pth, grid.n_steps, 0)];
        const double mT = e.X[e.sidx(pth, grid.n_steps, 1)];
        j1 += 0.5 * (a1 + mT * mT);
        j2 += 0.5 * (a2 + yT * yT);
    }
    j1 /= e.n_paths;
    j2 /= e.n_paths;
    CHECK(sim.J1.mean == doctest::Approx(j1).epsilon(1e-12));
    CHECK(sim.J2.mean == doctest::Approx(j2).epsilon(1e-12));
}

TEST_CASE("pa generic instance passes tower and stationarity") {
    const PaParams p = generic_pa();
    const TimeGrid grid(1.0, 400);
    const PaSolution sol = solve_pa(p, grid);
    const PaGame game = build_pa_game(p);
    const PaSimResult sim = simulate_pa(p, sol, grid, 10000, 5, 4);
    const TowerReport tower = tower_check(sim.ensemble);
    CHECK(tower.pass);

    Vec obs(2), cw_agent(2), cw_principal(2);
    obs << 1, 0;
    cw_agent << 0, 1;      // consumption
    cw_principal << 1, 0;  // payment
    const std::vector<double> eps{-0.04, -0.02, 0.02, 0.04};
    const PerturbReport rf = lq_stationarity_test(
        game.lq, sol.lq, {Player::follower, cw_agent, obs, 1.0}, eps, 30000, 7, 4);
    MESSAGE("agent b=", rf.fit.b, " se=", rf.fit.se_b, " a=", rf.fit.a);
    CHECK(rf.pass);
    const PerturbReport rl = lq_stationarity_test(
        game.lq, sol.lq, {Player::leader, cw_principal, obs, 1.0}, eps, 30000, 7, 4);
    MESSAGE("principal b=", rl.fit.b, " se=", rl.fit.se_b, " a=", rl.fit.a);
    CHECK(rl.pass);
}
