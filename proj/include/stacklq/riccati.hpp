#pragma once

#include <functional>
#include <optional>
#include <string>

#include "stacklq/game_model.hpp"
#include "stacklq/mat_path.hpp"

namespace stacklq {

// Right-hand side of a matrix ODE dP/dt = rhs(t, P) together with the
// terminal condition P(T). Multi-block systems pack their blocks into one
// matrix before using the integrator.
struct RiccatiField {
    Mat terminal;
    std::function<Mat(double, const Mat&)> rhs;
};

// Classical RK4 on the time-reversed equation, stepping from T down to 0
// with uniform step h. Node n_steps holds the terminal condition bit-exactly.
// Throws NonFiniteError when a stage leaves the blow-up bound.
MatPath integrate_backward(const RiccatiField& field, const TimeGrid& grid);

// Defect of a claimed solution: max over interior nodes of
// || central_difference(path) - rhs(t_k, path_k) ||_inf.
double riccati_residual(const MatPath& path, const RiccatiField& field, const TimeGrid& grid);

// dP1/dt for the follower equation of the general game. Exposed so tests can
// feed it to riccati_residual directly.
Mat follower_riccati_rhs(const GameSpec& spec, const Mat& P1);

// Follower Riccati solution P1 on the grid, P1(T) = G1. At every node (and
// every RK4 stage) Nbar1 = N1 + sum_i Bi^T P1 Bi must have min |eigenvalue|
// >= 1e-10; otherwise AssumptionViolated("A2.1", t) is thrown.
MatPath solve_follower_riccati(const GameSpec& spec, const TimeGrid& grid);

// The four leader Riccati paths for control-independent diffusions,
// terminal conditions (G2-augmented, 0, 0, 0). Blocks are 2n x 2n.
struct LeaderSystemCid {
    MatPath P1, P2, P3, P4;
};

// Integrates the decoupled leader system sequentially (P1, then P2, P3, P4;
// lower-triangular coupling). `P` must be the follower solution on the same
// grid; it is re-derived internally alongside the leader blocks so RK4 stage
// values stay consistent.
LeaderSystemCid solve_cid_leader_system(const CidSpec& spec, const MatPath& P,
                                        const TimeGrid& grid);

// Outcome of integrating the coupled leader system of the general
// (control-in-diffusion) game. Solvability is not guaranteed; failures are
// reported structurally rather than guessed around.
struct GeneralLeaderResult {
    enum class FailureKind { assumption, blowup };
    struct Failure {
        FailureKind kind;
        double t = 0;
        int node = 0;
        std::string which;  // "A2.1".."A2.5" or "blow-up"
    };

    bool ok = false;
    MatPath follower_P;              // n x n
    MatPath P1, P2, P3, P4;          // 2n x 2n
    std::vector<std::array<double, 4>> step_conds;  // per node, Steps 1..4
    std::optional<Failure> failure;
};

// Backward integration of the coupled 2n-dimensional leader system, with the
// Sigma linear-solve chain recomputed at every RK4 stage. Returns either the
// solved paths plus per-node condition numbers of the four step matrices, or
// the first failing node and assumption.
GeneralLeaderResult attempt_general_leader_system(const GameSpec& spec, const TimeGrid& grid);

}  // namespace stacklq
