#pragma once

#include <array>
#include <string>
#include <vector>

#include "stacklq/mat_path.hpp"

namespace stacklq {

// Two-player leader-follower game data. State dimension n, follower control
// dimension k1, leader control dimension k2. Drift
//   dx = [A0 x + B0 u1 + C0 u2] dt + sum_i [Ai x + Bi u1 + Ci u2] dW_i
// and quadratic costs with weights (Q1, N1, G1) for the follower and
// (Q2, N2, G2) for the leader. All coefficients constant in time.
struct GameSpec {
    int n = 1, k1 = 1, k2 = 1;
    std::array<Mat, 4> A;  // n x n
    std::array<Mat, 4> B;  // n x k1
    std::array<Mat, 4> C;  // n x k2
    Mat Q1, N1, G1;        // n x n, k1 x k1, n x n
    Mat Q2, N2, G2;        // n x n, k2 x k2, n x n
    Vec x0;                // n

    static GameSpec zeros(int n, int k1, int k2);
};

// Scalar control-independent-diffusion game: noise multiplies the state only.
struct CidSpec {
    double A0 = 0, A1 = 0, A2 = 0, A3 = 0;
    double B0 = 0, C0 = 0;
    double Q1 = 0, N1 = 1, G1 = 0;
    double Q2 = 0, N2 = 1, G2 = 0;
    double x0 = 0;
};

// Which of the three driving Brownian components a filtration contains.
// Bit i set means W_{i+1} is observed.
struct InfoPattern {
    unsigned follower_observes = 0b101;  // {W1, W3}
    unsigned leader_observes = 0b110;    // {W2, W3}

    static InfoPattern canonical() { return {}; }
    static InfoPattern full() { return {0b111, 0b111}; }
};

inline constexpr unsigned kObsFollower = 0b101;  // {W1, W3}
inline constexpr unsigned kObsLeader = 0b110;    // {W2, W3}
inline constexpr unsigned kObsCommon = 0b100;    // {W3}
inline constexpr unsigned kObsFull = 0b111;

struct ValidationIssue {
    std::string field;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    bool ok() const { return issues.empty(); }
    bool mentions(const std::string& field) const;
    std::string to_string() const;
};

// Checks dimensions, symmetry (max|M - M^T| <= 1e-12 on every weight), and
// definiteness: Q1, G1, Q2, G2 nonnegative definite and N2 positive definite
// to tolerance 1e-10; N1 symmetric nonnegative definite. Invertibility of
// Nbar1 is a solve-time check, not a spec invariant. Pure function; never
// throws.
ValidationReport validate_spec(const GameSpec& spec);

ValidationReport validate_spec(const CidSpec& spec);

// One-dimensional embedding of a CidSpec: B1..B3 and C1..C3 become exact
// zero matrices, everything else is copied.
GameSpec embed_cid(const CidSpec& spec);

}  // namespace stacklq
