#pragma once

#include <array>

#include "stacklq/game_model.hpp"
#include "stacklq/mat_path.hpp"

namespace stacklq {

// ---------------------------------------------------------------------------
// Derived coefficients of the general game. The augmented state is
// X = (x, p) with p the leader's forward adjoint; the backward pair is
// Y = (y, phi) with phi the follower's filtered offset process, and
// Z_1..Z_3 are the martingale coefficients of Y. All augmented blocks are
// 2n x 2n. Blocks are named by the argument they multiply:
//   x / xhat / xcommon      -> X, Xhat, Xhatcheck
//   y / ycheck / ycommon    -> Y, Ycheck, Yhatcheck
//   z / zcheck / zcommon[j] -> Z_j, Zcheck_j, Zhatcheck_j
// "check" is the leader's estimate, "hat" the follower's, "common" the
// double (intersection) estimate.
// ---------------------------------------------------------------------------

// Follower gain coefficients at one time, derived from P1(t).
// The table entries L0, L1, L3, L4 follow the printed sign convention
// (L0 = S W B0' - A0' and so on); the filter drift uses their negatives,
// which is what the *_drift accessors return.
struct FollowerGainsAt {
    Mat Nbar1;                    // k1 x k1
    Mat L0, L1, L3;               // n x n
    Mat L4;                       // n x k2
    Mat fx, fphi, fb1, fb3;       // k1 x n feedback rows of u1
    Mat fu2;                      // k1 x k2
    std::array<Mat, 4> Lj1, Lj2, Lj3, Lj4;  // n x n, leader-side, j = 0..3
    std::array<Mat, 4> Lj5;                 // n x k2

    Mat drift0() const { return -L0; }
    Mat drift1() const { return -L1; }
    Mat drift3() const { return -L3; }
    Mat drift4() const { return -L4; }
};

FollowerGainsAt follower_gains_at(const GameSpec& spec, const Mat& P1, double t);

// Per-node gain paths (spec-facing form of the above).
struct FollowerGains {
    MatPath L0, L1, L3, L4;
    MatPath Nbar1;
    MatPath feedback_x, feedback_phi, feedback_b1, feedback_b3;
    MatPath feedback_u2;
};

FollowerGains build_follower_gains(const GameSpec& spec, const MatPath& P1);

// Coefficients of one 2n-dimensional forward equation (drift or one dW_i).
struct AugCoeffs {
    Mat x, xhat, xcommon;
    Mat y, ycheck, ycommon;
    std::array<Mat, 3> z, zcheck, zcommon;
};

// Coefficients of the backward (-dY) drift.
struct AdjCoeffs {
    Mat x, xcommon;
    Mat y, yhat, ycommon;
    std::array<Mat, 3> z, zhat, zcommon;
};

struct LeaderBlocksAt {
    int n2 = 0;
    AugCoeffs drift;
    std::array<AugCoeffs, 3> dw;
    AdjCoeffs adj;
    Mat Q2a, G2a;
    Vec X0a;
    // u2 = -N2^{-1} [ u2_ycheck Ycheck + u2_ycommon Yhatcheck
    //                 + u2_xcommon Xhatcheck
    //                 + sum_j (u2_zcheck[j] Zcheck_j + u2_zcommon[j] Zhatcheck_j) ]
    Mat u2_ycheck, u2_ycommon, u2_xcommon;          // k2 x 2n
    std::array<Mat, 3> u2_zcheck, u2_zcommon;       // k2 x 2n
};

LeaderBlocksAt build_leader_blocks_at(const GameSpec& spec, const FollowerGainsAt& gains,
                                      const Mat& P1);

struct LeaderBlocks {
    TimeGrid grid;
    std::vector<LeaderBlocksAt> nodes;
};

LeaderBlocks build_leader_blocks(const GameSpec& spec, const FollowerGains& gains,
                                 const MatPath& P1);

// Result of the four-step linear-solve chain at one time point:
//   step 1:  Zhatcheck_i = Ncal_i Xhatcheck
//   step 2:  Zcheck_i    = Ntilde_i Xcheck + Nbar_i Xhatcheck
//   step 3:  Zhat_i      = Nhat_i Xhat + Ndbl_i Xhatcheck
//   step 4:  Z_i = Sigma_i X + SigmaHat_i Xhat + SigmaTilde_i Xcheck
//                  + SigmaBar_i Xhatcheck
// cond[s] is the infinity-norm condition number of step s's matrix.
struct SigmaSet {
    std::array<Mat, 3> Ncal;
    std::array<Mat, 3> Ntilde, Nbar;
    std::array<Mat, 3> Nhat, Ndbl;
    std::array<Mat, 3> Sigma, SigmaHat, SigmaTilde, SigmaBar;
    std::array<double, 4> cond{};
};

// The assembled step systems (coefficient matrix and first right-hand-side
// group per step), exposed for the Cramer's-rule oracle tests.
struct SigmaChainSystems {
    std::array<Mat, 4> A;    // 6n x 6n step matrices
    std::array<Mat, 4> rhs;  // 6n x 2n first RHS block of each step
};

// Assembles the three 3x3-block systems of the filtered martingale
// coefficients plus the final system, solves each by LU with partial
// pivoting, and throws AssumptionViolated("A2.2".."A2.5", t) when a step
// matrix is singular beyond the condition threshold.
SigmaSet compute_sigma_chain(const LeaderBlocksAt& blocks, const std::array<Mat, 4>& Pc,
                             double t, SigmaChainSystems* systems = nullptr);

// dPc_k/dt of the coupled leader system, assembled by matching drift
// coefficients of the closed-loop equations against the backward equation.
void general_leader_rhs(const LeaderBlocksAt& blocks, const SigmaSet& sigma,
                        const std::array<Mat, 4>& Pc, std::array<Mat, 4>& dPc);

// Feedback gains of the leader's control implied by (blocks, Pc, sigma):
// u2 = on_xcheck * Xcheck + on_common * Xhatcheck.
struct GeneralU2Gains {
    Mat on_xcheck, on_common;  // k2 x 2n
};
GeneralU2Gains general_u2_gains(const GameSpec& spec, const LeaderBlocksAt& blocks,
                                const std::array<Mat, 4>& Pc, const SigmaSet& sigma);

// Same for the follower: u1 = on_xhat * Xhat + on_common * Xhatcheck.
struct GeneralU1Gains {
    Mat on_xhat, on_common;  // k1 x 2n
};
GeneralU1Gains general_u1_gains(const GameSpec& spec, const FollowerGainsAt& gains,
                                const LeaderBlocksAt& blocks, const std::array<Mat, 4>& Pc,
                                const SigmaSet& sigma);

// Infinity-norm condition number estimate of a dense square matrix.
double cond_inf(const Mat& m);

}  // namespace stacklq
