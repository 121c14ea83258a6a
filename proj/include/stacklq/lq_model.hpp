#pragma once

#include <array>

#include "stacklq/game_model.hpp"
#include "stacklq/mat_path.hpp"
#include "stacklq/riccati.hpp"

namespace stacklq {

// Leader-follower game whose diffusion coefficients do not involve the
// controls. Covers the scalar game (multiplicative noise A_i x dW_i) and the
// principal-agent game (additive noise sigma_i dW_i) with one set of
// formulas; mixing both noise kinds is not supported.
//
//   dx = [A0 x + B0 u1 + C0 u2] dt + sum_i (A_i x + sigma_i) dW_i
//   J1 = 1/2 E[ int x'Q1x + u1'N1u1 dt + x(T)'G1x(T) ]   (follower)
//   J2 = 1/2 E[ int x'Q2x + u2'N2u2 dt + x(T)'G2x(T) ]   (leader)
//
// N1, N2 need only be invertible, not sign-definite.
struct LqProblem {
    int n = 1, k1 = 1, k2 = 1;
    Mat A0, B0, C0;
    std::array<Mat, 3> Amul;    // n x n
    std::array<Vec, 3> sigma;   // n
    Mat Q1, N1, G1, Q2, N2, G2;
    Vec x0;

    static LqProblem from_cid(const CidSpec& spec);
    bool additive_noise() const;
};

// Coefficient blocks of the augmented 2n-dimensional system at one time,
// given the follower Riccati value P. The augmented state is X = (x, p)
// where p is the leader's forward adjoint; the backward pair is Y = (y, phi).
struct LqBlocks {
    Mat A0a;                 // drift of X: diag(A0, filter-drift^T)
    std::array<Mat, 3> Aa;   // dW_i coefficients, diag per noise routing
    std::array<Vec, 3> sa;   // additive dW_i terms, (sigma_i; 0)
    Mat B0a;                 // coupling X <-> Y through the follower feedback
    Mat Bbar0;               // follower-filter feedback on Xhat
    Mat C0b;                 // leader feedback on Ycheck
    Mat Ct0;                 // leader feedback on the common estimate (upper-right)
    Mat Cb0;                 // leader feedback, adjoint row on the common estimate
    Mat Q2a, G2a;
    Vec X0a;
};

LqBlocks lq_blocks(const LqProblem& pb, const Mat& P);

// dP/dt of the follower equation (control-independent case, Nbar1 = N1).
Mat lq_follower_rhs(const LqProblem& pb, const Mat& P);

// dPc_k/dt of the four leader equations given the blocks at the same time.
void lq_leader_rhs(const LqProblem& pb, const LqBlocks& blocks, const std::array<Mat, 4>& Pc,
                   std::array<Mat, 4>& dPc);

// Follower and leader Riccati paths plus the four feedback gain paths.
//   u1 = u1_on_xhat * Xhat + u1_on_common * Xhatcheck
//   u2 = u2_on_xcheck * Xcheck + u2_on_common * Xhatcheck
struct LqSolution {
    TimeGrid grid;
    MatPath P;                     // n x n
    LeaderSystemCid L;             // 2n x 2n blocks
    MatPath u1_on_xhat, u1_on_common;    // k1 x 2n
    MatPath u2_on_xcheck, u2_on_common;  // k2 x 2n
};

// One coupled backward RK4 pass over (P, Pc1..Pc4); the system is
// lower-triangular in that order, so stage values stay mutually consistent.
LqSolution lq_solve(const LqProblem& pb, const TimeGrid& grid);

// Gain rows at node k of a solved system (helper shared by the simulator
// and strategy construction).
struct LqGainsAt {
    Mat u1_on_xhat, u1_on_common;
    Mat u2_on_xcheck, u2_on_common;
};
LqGainsAt lq_gains_at(const LqProblem& pb, const Mat& P, const std::array<Mat, 4>& Pc);

}  // namespace stacklq
