#include "stacklq/filtering.hpp"

#include <cmath>
#include <stdexcept>

#include "stacklq/closed_loop.hpp"
#include "stacklq/errors.hpp"
#include "stacklq/parallel.hpp"
#include "stacklq/rng.hpp"

namespace stacklq {

namespace {

void run_paths(int p0, int p1, const CompiledLoop& cl, std::uint64_t seed,
               PathEnsemble& out) {
    const int d = cl.d;
    const int n_steps = cl.grid.n_steps;
    const double h = cl.grid.step();
    const double sqh = std::sqrt(h);
    Vec s(4 * d), snew(4 * d), dsum(4 * d);

    for (int p = p0; p < p1; ++p) {
        s = cl.s0;
        for (int k = 0; k <= n_steps; ++k) {
            for (int c = 0; c < d; ++c) {
                out.X[out.sidx(p, k, c)] = s[c];
                out.Xhat[out.sidx(p, k, c)] = s[d + c];
                out.Xcheck[out.sidx(p, k, c)] = s[2 * d + c];
                out.Xhatcheck[out.sidx(p, k, c)] = s[3 * d + c];
            }
            {
                const auto ku = static_cast<std::size_t>(k);
                Eigen::Map<const Vec> xh(s.data() + d, d);
                Eigen::Map<const Vec> xc(s.data() + 2 * d, d);
                Eigen::Map<const Vec> xb(s.data() + 3 * d, d);
                const Vec v1 = cl.g_u1h[ku] * xh + cl.g_u1c[ku] * xb;
                const Vec v2 = cl.g_u2c[ku] * xc + cl.g_u2x[ku] * xb;
                for (int c = 0; c < cl.k1; ++c) out.u1[out.uidx(p, k, c, cl.k1)] = v1[c];
                for (int c = 0; c < cl.k2; ++c) out.u2[out.uidx(p, k, c, cl.k2)] = v2[c];
            }
            if (k == n_steps) break;

            double dw[3];
            rng::increments3(seed, 0, static_cast<std::uint64_t>(p),
                             static_cast<std::uint64_t>(k), sqh, dw);
            out.dW[out.widx(p, k, 0)] = dw[0];
            out.dW[out.widx(p, k, 1)] = dw[1];
            out.dW[out.widx(p, k, 2)] = dw[2];

            snew.noalias() = s;
            snew.noalias() += h * (cl.drift[static_cast<std::size_t>(k)] * s);
            for (int i = 0; i < 3; ++i) {
                dsum.noalias() = cl.diff[static_cast<std::size_t>(i)] * s;
                dsum += cl.add[static_cast<std::size_t>(i)];
                snew.noalias() += dw[i] * dsum;
            }
            if (cl.deterministic)
                for (int blk = 1; blk < 4; ++blk) snew.segment(blk * d, d) = snew.head(d);
            s.swap(snew);
            if (!s.allFinite() || s.cwiseAbs().maxCoeff() > kBlowupBound)
                throw NonFiniteError(cl.grid.node(k + 1),
                                     "path " + std::to_string(p));
        }
    }
}

}  // namespace

PathEnsemble simulate_closed_loop(const LqProblem& pb, const LqSolution& sol, int n_paths,
                                  std::uint64_t seed, int threads) {
    const CompiledLoop cl = compile_loop(pb, sol);
    PathEnsemble out;
    out.grid = cl.grid;
    out.n_paths = n_paths;
    out.d = cl.d;
    out.k1 = cl.k1;
    out.k2 = cl.k2;
    out.seed = seed;
    const std::size_t nodes = static_cast<std::size_t>(n_paths) *
                              static_cast<std::size_t>(cl.grid.n_nodes());
    out.X.assign(nodes * static_cast<std::size_t>(cl.d), 0.0);
    out.Xhat = out.X;
    out.Xcheck = out.X;
    out.Xhatcheck = out.X;
    out.u1.assign(nodes * static_cast<std::size_t>(cl.k1), 0.0);
    out.u2.assign(nodes * static_cast<std::size_t>(cl.k2), 0.0);
    out.dW.assign(static_cast<std::size_t>(n_paths) *
                      static_cast<std::size_t>(cl.grid.n_steps) * 3,
                  0.0);
    parallel_over_paths(n_paths, threads,
                        [&](int a, int b) { run_paths(a, b, cl, seed, out); });
    return out;
}

PathEnsemble simulate_cid_closed_loop(const CidSpec& spec, const MatPath& P,
                                      const LeaderSystemCid& L, int n_paths,
                                      std::uint64_t seed, int threads) {
    const LqProblem pb = LqProblem::from_cid(spec);
    LqSolution sol;
    sol.grid = P.grid;
    sol.P = P;
    sol.L = L;
    sol.u1_on_xhat = MatPath(P.grid, pb.k1, 2 * pb.n);
    sol.u1_on_common = MatPath(P.grid, pb.k1, 2 * pb.n);
    sol.u2_on_xcheck = MatPath(P.grid, pb.k2, 2 * pb.n);
    sol.u2_on_common = MatPath(P.grid, pb.k2, 2 * pb.n);
    for (int k = 0; k <= P.grid.n_steps; ++k) {
        const std::array<Mat, 4> Pc{L.P1.at(k), L.P2.at(k), L.P3.at(k), L.P4.at(k)};
        const LqGainsAt g = lq_gains_at(pb, P.at(k), Pc);
        sol.u1_on_xhat.at(k) = g.u1_on_xhat;
        sol.u1_on_common.at(k) = g.u1_on_common;
        sol.u2_on_xcheck.at(k) = g.u2_on_xcheck;
        sol.u2_on_common.at(k) = g.u2_on_common;
    }
    return simulate_closed_loop(pb, sol, n_paths, seed, threads);
}

NestedEstimate nested_conditional_mc(const LqProblem& pb, const LqSolution& sol,
                                     unsigned observed_mask, int n_outer, int n_inner,
                                     std::uint64_t seed, int threads) {
    const CompiledLoop cl = compile_loop(pb, sol);
    const int d = cl.d;
    const int n_steps = cl.grid.n_steps;
    const double h = cl.grid.step();
    const double sqh = std::sqrt(h);

    NestedEstimate out;
    out.grid = cl.grid;
    out.n_outer = n_outer;
    out.d = d;
    out.est.assign(static_cast<std::size_t>(n_outer) *
                       static_cast<std::size_t>(cl.grid.n_nodes()) *
                       static_cast<std::size_t>(d),
                   0.0);

    const bool fully_observed = (observed_mask & 0b111u) == 0b111u;

    auto worker = [&](int o0, int o1) {
        Vec s(4 * d), snew(4 * d), dsum(4 * d);
        std::vector<double> acc(static_cast<std::size_t>(cl.grid.n_nodes()) *
                                static_cast<std::size_t>(d));
        for (int o = o0; o < o1; ++o) {
            std::fill(acc.begin(), acc.end(), 0.0);
            const int inner_count = fully_observed ? 1 : n_inner;
            for (int m = 0; m < inner_count; ++m) {
                const std::uint64_t inner_stream =
                    1 + static_cast<std::uint64_t>(o) * static_cast<std::uint64_t>(n_inner) +
                    static_cast<std::uint64_t>(m);
                s = cl.s0;
                for (int k = 0; k <= n_steps; ++k) {
                    for (int c = 0; c < d; ++c)
                        acc[static_cast<std::size_t>(k) * static_cast<std::size_t>(d) +
                            static_cast<std::size_t>(c)] += s[c];
                    if (k == n_steps) break;
                    double dw_obs[3], dw_new[3], dw[3];
                    rng::increments3(seed, 0, static_cast<std::uint64_t>(o),
                                     static_cast<std::uint64_t>(k), sqh, dw_obs);
                    rng::increments3(seed, inner_stream, static_cast<std::uint64_t>(o),
                                     static_cast<std::uint64_t>(k), sqh, dw_new);
                    for (int i = 0; i < 3; ++i)
                        dw[i] = (observed_mask >> i) & 1u ? dw_obs[i] : dw_new[i];
                    snew.noalias() = s;
                    snew.noalias() += h * (cl.drift[static_cast<std::size_t>(k)] * s);
                    for (int i = 0; i < 3; ++i) {
                        dsum.noalias() = cl.diff[static_cast<std::size_t>(i)] * s;
                        dsum += cl.add[static_cast<std::size_t>(i)];
                        snew.noalias() += dw[i] * dsum;
                    }
                    s.swap(snew);
                    if (!s.allFinite()) throw NonFiniteError(cl.grid.node(k + 1), "nested mc");
                }
            }
            for (int k = 0; k <= n_steps; ++k)
                for (int c = 0; c < d; ++c)
                    out.est[out.idx(o, k, c)] =
                        acc[static_cast<std::size_t>(k) * static_cast<std::size_t>(d) +
                            static_cast<std::size_t>(c)] /
                        inner_count;
        }
    };
    parallel_over_paths(n_outer, threads, worker);
    return out;
}

NestedEstimate nested_conditional_mc(const CidSpec& spec, const MatPath& P,
                                     const LeaderSystemCid& L, unsigned observed_mask,
                                     int n_outer, int n_inner, std::uint64_t seed,
                                     int threads) {
    const LqProblem pb = LqProblem::from_cid(spec);
    const LqSolution sol = lq_solve(pb, P.grid);
    return nested_conditional_mc(pb, sol, observed_mask, n_outer, n_inner, seed, threads);
}

TowerReport tower_check(const PathEnsemble& e) {
    if (e.n_paths < 100)
        throw std::invalid_argument("tower_check: need at least 100 paths");
    TowerReport rep;
    rep.max_gap_per_node.assign(static_cast<std::size_t>(e.grid.n_nodes()), 0.0);

    const double n = e.n_paths;
    for (int k = 0; k <= e.grid.n_steps; ++k) {
        double node_max = 0.0;
        for (int c = 0; c < e.d; ++c) {
            // Per-path differences keep the common noise, so the studentized
            // statistic is tight.
            double s1 = 0, q1 = 0, s2 = 0, q2 = 0, s3 = 0, q3 = 0;
            double scale = 0;
            for (int p = 0; p < e.n_paths; ++p) {
                const double x = e.X[e.sidx(p, k, c)];
                const double xh = e.Xhat[e.sidx(p, k, c)];
                const double xc = e.Xcheck[e.sidx(p, k, c)];
                const double xb = e.Xhatcheck[e.sidx(p, k, c)];
                const double d1 = x - xh, d2 = x - xc, d3 = xh - xb;
                s1 += d1;
                q1 += d1 * d1;
                s2 += d2;
                q2 += d2 * d2;
                s3 += d3;
                q3 += d3 * d3;
                scale = std::max(scale, std::abs(x));
            }
            auto gap = [&](double s, double q) {
                const double mean = s / n;
                const double var = std::max(0.0, q / n - mean * mean);
                if (std::abs(mean) <= 1e-12 * (1.0 + scale)) return 0.0;
                const double se = std::sqrt(var / n);
                return se > 0 ? std::abs(mean) / se
                              : std::numeric_limits<double>::infinity();
            };
            node_max = std::max({node_max, gap(s1, q1), gap(s2, q2), gap(s3, q3)});
        }
        rep.max_gap_per_node[static_cast<std::size_t>(k)] = node_max;
        rep.max_gap = std::max(rep.max_gap, node_max);
        if (node_max > 4.0) ++rep.n_flagged;
    }
    rep.pass = rep.n_flagged == 0;
    return rep;
}

}  // namespace stacklq
