#include <doctest.h>

#include <cmath>

#include "stacklq/equilibrium.hpp"
#include "stacklq/errors.hpp"
#include "stacklq/riccati.hpp"

using namespace stacklq;

namespace {

CidSpec generic_cid() {
    CidSpec c;
    c.A0 = 0.1;
    c.A1 = c.A2 = c.A3 = 0.2;
    c.B0 = 1;
    c.C0 = 1;
    c.Q1 = c.Q2 = c.N1 = c.N2 = c.G1 = c.G2 = 1;
    c.x0 = 1;
    return c;
}

struct Solved {
    LqProblem pb;
    LqSolution sol;
    MatPath P;
    LeaderSystemCid L;
};

Solved solve(const CidSpec& c, const TimeGrid& grid) {
    Solved s{LqProblem::from_cid(c), lq_solve(LqProblem::from_cid(c), grid), {}, {}};
    s.P = s.sol.P;
    s.L = s.sol.L;
    return s;
}

}  // namespace

TEST_CASE("strategies: zero leader weights produce an identically zero leader control") {
    CidSpec c = generic_cid();
    c.Q2 = 0;
    c.G2 = 0;
    const TimeGrid grid(1.0, 100);
    const Solved s = solve(c, grid);
    const PathEnsemble e = simulate_cid_closed_loop(c, s.P, s.L, 200, 42);
    double umax = 0;
    for (int p = 0; p < e.n_paths; ++p)
        for (int k = 0; k <= grid.n_steps; ++k)
            umax = std::max(umax, std::abs(e.u2[e.uidx(p, k, 0, 1)]));
    CHECK(umax == 0.0);
}

TEST_CASE("strategies: zero follower weights reduce the follower gain") {
    CidSpec c = generic_cid();
    c.Q1 = 0;
    c.G1 = 0;
    const TimeGrid grid(1.0, 100);
    const Solved s = solve(c, grid);
    CHECK(s.P.max_abs() == 0.0);
    const StrategyCid strat = build_strategies_cid(c, s.P, s.L);
    for (int k = 0; k <= grid.n_steps; k += 25) {
        // With P == 0 the gain on the follower filter is -N1^{-1} [0, B0] (P1+P2).
        Mat row = Mat::Zero(1, 2);
        row(0, 1) = c.B0;
        const Mat expect = -(row * (s.L.P1.at(k) + s.L.P2.at(k))) / c.N1;
        CHECK((strat.follower_gain_hat.at(k) - expect).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("strategies: terminal leader cross gain carries -N2^{-1} C0 G1 on the adjoint slot") {
    const CidSpec c = generic_cid();
    const TimeGrid grid(1.0, 100);
    const Solved s = solve(c, grid);
    const StrategyCid strat = build_strategies_cid(c, s.P, s.L);
    const Mat& cross = strat.leader_gain_cross.at(grid.n_steps);
    CHECK(cross(0, 1) == doctest::Approx(-c.C0 * c.G1 / c.N2).epsilon(1e-12));
    // P2(T) = P4(T) = 0, so the filter-slot coefficient vanishes at T.
    CHECK(cross(0, 0) == 0.0);
}

TEST_CASE("evaluate_cost: zero weights give an exactly zero estimate") {
    CidSpec c = generic_cid();
    c.Q1 = c.G1 = 0;
    CidSpec all_zero = c;
    all_zero.Q2 = all_zero.G2 = 0;
    const TimeGrid grid(1.0, 50);
    const Solved s = solve(all_zero, grid);
    const PathEnsemble e = simulate_cid_closed_loop(all_zero, s.P, s.L, 150, 8);
    CidSpec zero_weights = all_zero;
    zero_weights.N1 = 1;  // weights used only through Q/N/G below
    const CostEstimate j =
        evaluate_cost_lq(e, Mat::Zero(1, 1), Mat::Zero(1, 1), Mat::Zero(1, 1),
                         Player::follower);
    CHECK(j.mean == 0.0);
    CHECK(j.std_error == 0.0);
}

TEST_CASE("evaluate_cost: deterministic quadrature of a constant state") {
    // Zero diffusion, zero controls, A0 = 0, Q1 = 1, G1 = 0, x0 = 1, T = 1:
    // J1 = 1/2 int_0^1 1 dt = 1/2.
    CidSpec c;
    c.B0 = 1;
    c.C0 = 1;
    c.N1 = c.N2 = 1;
    c.Q1 = 1;
    c.x0 = 1;
    // Q1 enters the follower cost but with G1 = 0 and Q1 = ... the follower
    // Riccati still reacts; freeze controls by zeroing both weight sets in
    // the solved game and evaluating the cost weights directly.
    CidSpec plant = c;
    plant.Q1 = 0;
    const TimeGrid grid(1.0, 200);
    const Solved s = solve(plant, grid);
    const PathEnsemble e = simulate_cid_closed_loop(plant, s.P, s.L, 10, 1);
    const CostEstimate j = evaluate_cost_lq(e, Mat::Identity(1, 1), Mat::Zero(1, 1),
                                            Mat::Zero(1, 1), Player::follower);
    CHECK(std::abs(j.mean - 0.5) <= 1e-4);
}

TEST_CASE("evaluate_cost is deterministic across identical ensembles") {
    const CidSpec c = generic_cid();
    const TimeGrid grid(1.0, 60);
    const Solved s = solve(c, grid);
    const PathEnsemble a = simulate_cid_closed_loop(c, s.P, s.L, 300, 9);
    const PathEnsemble b = simulate_cid_closed_loop(c, s.P, s.L, 300, 9);
    const CostEstimate ja = evaluate_cost(a, Player::leader, c);
    const CostEstimate jb = evaluate_cost(b, Player::leader, c);
    CHECK(ja.mean == jb.mean);
    CHECK(ja.std_error == jb.std_error);
}

TEST_CASE("stationarity: a zero direction is degenerate") {
    const CidSpec c = generic_cid();
    const TimeGrid grid(1.0, 50);
    const Solved s = solve(c, grid);
    PerturbDirection dir{Player::leader, Vec::Ones(1), Vec::Ones(1), 0.0};
    CHECK_THROWS_AS(stationarity_test(c, s.P, s.L, dir, {-0.04, -0.02, 0.02, 0.04}, 500, 4),
                    DegenerateFit);
}

TEST_CASE("stationarity: pure quadratic response under zero leader weights") {
    CidSpec c = generic_cid();
    c.Q2 = 0;
    c.G2 = 0;
    const TimeGrid grid(1.0, 100);
    const Solved s = solve(c, grid);
    PerturbDirection dir{Player::leader, Vec::Ones(1), Vec::Ones(1), 1.0};
    const PerturbReport rep =
        stationarity_test(c, s.P, s.L, dir, {-0.04, -0.02, 0.02, 0.04}, 2000, 4);
    CHECK(rep.fit.a > 0.0);
    CHECK(std::abs(rep.fit.b) <= 1e-10 * std::max(1.0, rep.fit.a));
    CHECK(rep.pass);
}

TEST_CASE("stationarity holds for both players on the generic spec") {
    const CidSpec c = generic_cid();
    const TimeGrid grid(1.0, 500);
    const Solved s = solve(c, grid);
    const std::vector<double> eps{-0.04, -0.02, 0.02, 0.04};
    for (Player who : {Player::follower, Player::leader}) {
        PerturbDirection dir{who, Vec::Ones(1), Vec::Ones(1), 1.0};
        const PerturbReport rep = stationarity_test(c, s.P, s.L, dir, eps, 30000, 99, 4);
        MESSAGE("player=", who == Player::leader ? "leader" : "follower", " b=", rep.fit.b,
                " se_b=", rep.fit.se_b, " a=", rep.fit.a);
        CHECK(rep.fit.a > 0.0);
        CHECK(std::abs(rep.fit.b) <= 3.0 * rep.fit.se_b);
        CHECK(rep.pass);
        // Discrete convexity under common random numbers.
        const auto& em = rep.epsilons;
        int i0 = -1;
        for (std::size_t i = 0; i < em.size(); ++i)
            if (em[i] == 0.0) i0 = static_cast<int>(i);
        REQUIRE(i0 >= 0);
        for (std::size_t i = 0; i < em.size(); ++i) {
            if (em[i] <= 0.0) continue;
            for (std::size_t j = 0; j < em.size(); ++j) {
                if (em[j] != -em[i]) continue;
                const double lhs = rep.J_means[i] + rep.J_means[j] -
                                   2.0 * rep.J_means[static_cast<std::size_t>(i0)];
                const double combined =
                    rep.J_ses[i] + rep.J_ses[j] +
                    2.0 * rep.J_ses[static_cast<std::size_t>(i0)];
                CHECK(lhs >= -3.0 * combined);
            }
        }
    }
}

TEST_CASE("adjoint reconstruction: zero leader weights give a vanishing adjoint") {
    CidSpec c = generic_cid();
    c.Q2 = 0;
    c.G2 = 0;
    const TimeGrid grid(1.0, 80);
    const Solved s = solve(c, grid);
    const PathEnsemble e = simulate_cid_closed_loop(c, s.P, s.L, 50, 4);
    const ReconstructedAdjoint adj = lq_reconstruct_adjoint(e, s.pb, s.sol);
    double worst = 0;
    for (int p = 0; p < e.n_paths; ++p)
        for (int k = 0; k <= grid.n_steps; ++k)
            for (int cc = 0; cc < e.d; ++cc) {
                worst = std::max(worst, std::abs(adj.Y[adj.idx(p, k, cc)]));
                worst = std::max(worst, std::abs(adj.Z1[adj.idx(p, k, cc)]));
                worst = std::max(worst, std::abs(adj.Z3[adj.idx(p, k, cc)]));
            }
    CHECK(worst <= 1e-12);
}

TEST_CASE("adjoint reconstruction: terminal identity is exact by construction") {
    const CidSpec c = generic_cid();
    const TimeGrid grid(1.0, 80);
    const Solved s = solve(c, grid);
    const PathEnsemble e = simulate_cid_closed_loop(c, s.P, s.L, 500, 11);
    const AdjointReport rep = lq_adjoint_consistency(e, s.pb, s.sol);
    CHECK(rep.max_terminal_gap <= 1e-8);
}

TEST_CASE("adjoint drift residual is Euler-consistent") {
    const CidSpec c = generic_cid();
    const TimeGrid grid(1.0, 1000);
    const Solved s = solve(c, grid);
    const AdjointReport rep =
        lq_adjoint_consistency_streaming(s.pb, s.sol, 5000, 2525, 4);
    MESSAGE("terminal=", rep.max_terminal_gap, " max_step_mean=", rep.max_step_mean,
            " studentized=", rep.max_studentized_drift);
    CHECK(rep.max_terminal_gap <= 1e-8);
    CHECK(rep.max_step_mean <= 10.0 * grid.step());
    CHECK(rep.max_studentized_drift <= 4.0);
    CHECK(rep.pass);
}

TEST_CASE("streaming and ensemble adjoint checks agree") {
    const CidSpec c = generic_cid();
    const TimeGrid grid(1.0, 200);
    const Solved s = solve(c, grid);
    const PathEnsemble e = simulate_closed_loop(s.pb, s.sol, 400, 777);
    const AdjointReport a = lq_adjoint_consistency(e, s.pb, s.sol);
    const AdjointReport b = lq_adjoint_consistency_streaming(s.pb, s.sol, 400, 777, 1);
    CHECK(a.max_terminal_gap == doctest::Approx(b.max_terminal_gap).epsilon(1e-12));
    CHECK(a.max_studentized_drift == doctest::Approx(b.max_studentized_drift).epsilon(1e-9));
}
