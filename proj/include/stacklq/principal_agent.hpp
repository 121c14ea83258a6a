#pragma once

#include "stacklq/equilibrium.hpp"
#include "stacklq/filtering.hpp"

namespace stacklq {

// Principal-agent contract data: output productivity B, risk-free rate r,
// additive volatilities of the principal's asset (sigma) and the agent's
// wealth (sigma_bar), initial assets, horizon.
struct PaParams {
    double r = 0.0;
    double B = 1.0;
    std::array<double, 3> sigma{0, 0, 0};
    std::array<double, 3> sigma_bar{0, 0, 0};
    double y0 = 0.0, m0 = 0.0;
    double T = 1.0;
};

// The two-dimensional game the contract problem embeds into. The agent
// controls (e, c) = (effort, consumption), the principal (s, d) =
// (payment, consumption); the state is X = (y, m). Weight matrices carry
// the indefinite +-1 signs of the quadratic preferences.
struct PaGame {
    LqProblem lq;                 // n = 2, k1 = 2, k2 = 2
    Mat Btilde, alpha1, alpha2, alpha3;  // 2 x 1
    Mat G1t, G2t;                        // 2 x 2
    std::array<Vec, 3> sigma_tilde;      // 2
    // Augmented 4-dim quantities; the P-dependent ones are evaluated on
    // demand.
    Vec X0a;                     // 4
    std::array<Vec, 3> Sigma_a;  // 4
    Vec alpha2_a, alpha3_a;      // 4

    Mat A0aug(const Mat& P) const;   // diag(r~, r~ + (BB' - a1 a1')P)
    Mat Abar0aug(const Mat& P) const;
    Mat B0aug() const;
    Vec abar2(const Mat& P) const;   // (0; P alpha2)
    Vec abar3(const Mat& P) const;
    Mat G2aug() const;
};

PaGame build_pa_game(const PaParams& params);

// Solved contract problem: agent Riccati P (2x2), principal system
// Pcal1..Pcal4 (4x4), and the gain tables of (e*, c*, s*, d*).
// agent_gain_* rows are (e, c) over the agent's filter / the common
// estimate; principal_gain_* rows are (s, d) over the principal's filter /
// the common estimate (each over the 4-dim augmented state (y, m, p1, p2)).
struct PaSolution {
    TimeGrid grid;
    MatPath P;                         // 2 x 2
    MatPath Pcal1, Pcal2, Pcal3, Pcal4;  // 4 x 4
    MatPath agent_gain_hat, agent_gain_cross;        // 2 x 4
    MatPath principal_gain_check, principal_gain_cross;  // 2 x 4
    LqSolution lq;  // the same data in solver form
};

PaSolution solve_pa(const PaParams& params, const TimeGrid& grid);

// Euler-Maruyama on the coupled four-block 4-dim system with additive noise,
// plus the preference values of both players evaluated per the quadratic
// preferences (larger is better).
struct PaSimResult {
    PathEnsemble ensemble;
    CostEstimate J1, J2;
};

PaSimResult simulate_pa(const PaParams& params, const PaSolution& sol, const TimeGrid& grid,
                        int n_paths, std::uint64_t seed, int threads = 1);

}  // namespace stacklq
