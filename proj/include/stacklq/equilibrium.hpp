#pragma once

#include "stacklq/filtering.hpp"

namespace stacklq {

enum class Player { follower, leader };

// Feedback gains of the scalar equilibrium strategy pair. The follower's
// control reads the follower filter and the common estimate, the leader's
// the leader filter and the common estimate.
struct StrategyCid {
    MatPath follower_gain_hat;    // k1 x 2n, multiplies Xhat
    MatPath follower_gain_cross;  // k1 x 2n, multiplies Xhatcheck
    MatPath leader_gain_check;    // k2 x 2n, multiplies Xcheck
    MatPath leader_gain_cross;    // k2 x 2n, multiplies Xhatcheck
};

StrategyCid build_strategies_cid(const CidSpec& spec, const MatPath& P,
                                 const LeaderSystemCid& L);

struct CostEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    int n_paths = 0;
};

// Per-path trapezoidal quadrature of 1/2 (x'Qx + u'Nu) plus the terminal
// 1/2 x(T)'Gx(T), averaged over paths. Uses the physical state (top n block
// of the augmented X).
CostEstimate evaluate_cost_lq(const PathEnsemble& ensemble, const Mat& Q, const Mat& N,
                              const Mat& G, Player who);

CostEstimate evaluate_cost(const PathEnsemble& ensemble, Player who, const CidSpec& spec);

// An adapted feedback perturbation of one player's control:
//   v(t) = scale * control_weights * (obs_weights' x_est(t))
// where x_est is the physical part of the player's own equilibrium filter,
// so admissibility is automatic.
struct PerturbDirection {
    Player player = Player::leader;
    Vec control_weights;  // k1 or k2 entries
    Vec obs_weights;      // n entries
    double scale = 1.0;
};

struct QuadFit {
    double a = 0, b = 0, c = 0;
    double se_a = 0, se_b = 0;
};

struct PerturbReport {
    std::vector<double> epsilons;
    std::vector<double> J_means, J_ses;
    QuadFit fit;
    bool pass = false;
};

// Simulates the game at u* + eps * direction for every eps (common random
// numbers across all of them), fits J(eps) ~ a eps^2 + b eps + c per path,
// and reports the averaged coefficients. When the leader deviates, the
// follower's reaction is embedded through an auxiliary backward gain; when
// the follower deviates, the leader's strategy stays frozen at u2*.
// Pass means |b| <= 3 SE(b) and a > 0. Throws DegenerateFit when the J(eps)
// are indistinguishable within MC noise.
PerturbReport lq_stationarity_test(const LqProblem& pb, const LqSolution& sol,
                                   const PerturbDirection& dir,
                                   const std::vector<double>& epsilons, int n_paths,
                                   std::uint64_t seed, int threads = 1);

PerturbReport stationarity_test(const CidSpec& spec, const MatPath& P,
                                const LeaderSystemCid& L, const PerturbDirection& dir,
                                const std::vector<double>& epsilons, int n_paths,
                                std::uint64_t seed, int threads = 1);

// The adjoint pair recovered from the decoupling ansatz
//   Y = Pc1 X + Pc2 Xhat + Pc3 Xcheck + Pc4 Xhatcheck
// and the diffusion-matching identities for Z1..Z3, evaluated on simulated
// paths. Layout like PathEnsemble::X.
struct ReconstructedAdjoint {
    TimeGrid grid;
    int n_paths = 0, d = 0;
    std::vector<double> Y, Z1, Z2, Z3;
    std::size_t idx(int p, int k, int c) const {
        return (static_cast<std::size_t>(p) * static_cast<std::size_t>(grid.n_nodes()) +
                static_cast<std::size_t>(k)) *
                   static_cast<std::size_t>(d) +
               static_cast<std::size_t>(c);
    }
};

ReconstructedAdjoint lq_reconstruct_adjoint(const PathEnsemble& ensemble, const LqProblem& pb,
                                            const LqSolution& sol);

ReconstructedAdjoint reconstruct_adjoint(const PathEnsemble& ensemble, const CidSpec& spec,
                                         const LeaderSystemCid& L);

// Checks the terminal identity Y(T) = G2a X(T) pathwise and the discrete
// residual of the backward equation (realized Y increments against drift
// and Z dW), studentized per node.
struct AdjointReport {
    double max_terminal_gap = 0.0;
    double max_step_mean = 0.0;         // largest |mean residual| over nodes
    double max_studentized_drift = 0.0;
    int argmax_node = -1, argmax_comp = -1;
    double argmax_mean = 0.0, argmax_se = 0.0;
    bool pass = false;                  // terminal <= 1e-8 and studentized <= 4
};

AdjointReport lq_adjoint_consistency(const PathEnsemble& ensemble, const LqProblem& pb,
                                     const LqSolution& sol);

// Re-simulates paths in batches instead of materializing an ensemble;
// identical statistics for the same seed.
AdjointReport lq_adjoint_consistency_streaming(const LqProblem& pb, const LqSolution& sol,
                                               int n_paths, std::uint64_t seed,
                                               int threads = 1);

}  // namespace stacklq
