#pragma once

#include <cstdint>
#include <vector>

#include "stacklq/game_model.hpp"
#include "stacklq/lq_model.hpp"

namespace stacklq {

// Simulated sample paths of the augmented closed loop: the state X together
// with its three filtering estimates on shared noise, the recorded controls,
// and the Brownian increments (kept so that cost comparisons can reuse
// identical noise). Component layout is [path][node][coord], flattened.
struct PathEnsemble {
    TimeGrid grid;
    int n_paths = 0;
    int d = 0;   // block dimension (2n)
    int k1 = 0, k2 = 0;
    std::uint64_t seed = 0;

    std::vector<double> X, Xhat, Xcheck, Xhatcheck;
    std::vector<double> u1, u2;
    std::vector<double> dW;  // [path][step][component 0..2]

    std::size_t sidx(int p, int k, int c) const {
        return (static_cast<std::size_t>(p) * static_cast<std::size_t>(grid.n_nodes()) +
                static_cast<std::size_t>(k)) *
                   static_cast<std::size_t>(d) +
               static_cast<std::size_t>(c);
    }
    std::size_t uidx(int p, int k, int c, int kdim) const {
        return (static_cast<std::size_t>(p) * static_cast<std::size_t>(grid.n_nodes()) +
                static_cast<std::size_t>(k)) *
                   static_cast<std::size_t>(kdim) +
               static_cast<std::size_t>(c);
    }
    std::size_t widx(int p, int k, int c) const {
        return (static_cast<std::size_t>(p) * static_cast<std::size_t>(grid.n_steps) +
                static_cast<std::size_t>(k)) *
                   3 +
               static_cast<std::size_t>(c);
    }
};

// Euler-Maruyama on the coupled four-block system, every block driven by the
// same increments with the information-pattern noise routing: X sees all
// three components, Xhat (dW1, dW3), Xcheck (dW2, dW3), Xhatcheck dW3 only.
PathEnsemble simulate_closed_loop(const LqProblem& pb, const LqSolution& sol, int n_paths,
                                  std::uint64_t seed, int threads = 1);

// Scalar control-independent-diffusion front end.
PathEnsemble simulate_cid_closed_loop(const CidSpec& spec, const MatPath& P,
                                      const LeaderSystemCid& L, int n_paths,
                                      std::uint64_t seed, int threads = 1);

// Brute-force conditional expectation: for each outer path the observed
// Brownian components (per `observed_mask`, bit i = W_{i+1}) are frozen and
// the full state X is averaged over n_inner independent resamplings of the
// unobserved components. Returns per-outer-path estimate trajectories of the
// augmented state (n_outer * n_nodes * d, flattened like PathEnsemble::X).
struct NestedEstimate {
    TimeGrid grid;
    int n_outer = 0;
    int d = 0;
    std::vector<double> est;
    std::size_t idx(int p, int k, int c) const {
        return (static_cast<std::size_t>(p) * static_cast<std::size_t>(grid.n_nodes()) +
                static_cast<std::size_t>(k)) *
                   static_cast<std::size_t>(d) +
               static_cast<std::size_t>(c);
    }
};

NestedEstimate nested_conditional_mc(const LqProblem& pb, const LqSolution& sol,
                                     unsigned observed_mask, int n_outer, int n_inner,
                                     std::uint64_t seed, int threads = 1);

NestedEstimate nested_conditional_mc(const CidSpec& spec, const MatPath& P,
                                     const LeaderSystemCid& L, unsigned observed_mask,
                                     int n_outer, int n_inner, std::uint64_t seed,
                                     int threads = 1);

// Studentized gaps between the sample means of X and its estimates at every
// node: |mean(X - Xhat)|, |mean(X - Xcheck)|, |mean(Xhat - Xhatcheck)|, each
// divided by the standard error of the per-path difference. Nodes whose
// largest gap exceeds 4 are flagged.
struct TowerReport {
    std::vector<double> max_gap_per_node;
    double max_gap = 0.0;
    int n_flagged = 0;
    bool pass = false;
};

TowerReport tower_check(const PathEnsemble& ensemble);

}  // namespace stacklq
