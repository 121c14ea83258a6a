#include "stacklq/equilibrium.hpp"

#include <Eigen/LU>
#include <cmath>

#include "stacklq/closed_loop.hpp"
#include "stacklq/errors.hpp"
#include "stacklq/parallel.hpp"
#include "stacklq/rng.hpp"

namespace stacklq {

namespace {

LqSolution rebuild_solution(const LqProblem& pb, const MatPath& P, const LeaderSystemCid& L) {
    LqSolution sol;
    sol.grid = P.grid;
    sol.P = P;
    sol.L = L;
    const int n2 = 2 * pb.n;
    sol.u1_on_xhat = MatPath(P.grid, pb.k1, n2);
    sol.u1_on_common = MatPath(P.grid, pb.k1, n2);
    sol.u2_on_xcheck = MatPath(P.grid, pb.k2, n2);
    sol.u2_on_common = MatPath(P.grid, pb.k2, n2);
    for (int k = 0; k <= P.grid.n_steps; ++k) {
        const std::array<Mat, 4> Pc{L.P1.at(k), L.P2.at(k), L.P3.at(k), L.P4.at(k)};
        const LqGainsAt g = lq_gains_at(pb, P.at(k), Pc);
        sol.u1_on_xhat.at(k) = g.u1_on_xhat;
        sol.u1_on_common.at(k) = g.u1_on_common;
        sol.u2_on_xcheck.at(k) = g.u2_on_xcheck;
        sol.u2_on_common.at(k) = g.u2_on_common;
    }
    return sol;
}

// Node matrices for the adjoint reconstruction: Y and the Z_i as linear maps
// of the stacked state S, plus the backward drift map.
struct AdjointMaps {
    std::vector<Mat> Ymap;                   // d x 4d per node
    std::array<std::vector<Mat>, 3> Zmap;    // d x 4d per node
    std::vector<Mat> Dmap;                   // d x 4d per node (-dY drift)
    Mat G2a;
};

AdjointMaps build_adjoint_maps(const LqProblem& pb, const LqSolution& sol) {
    const int d = 2 * pb.n;
    const TimeGrid& grid = sol.grid;
    AdjointMaps am;
    am.Ymap.resize(static_cast<std::size_t>(grid.n_nodes()));
    for (auto& z : am.Zmap) z.resize(am.Ymap.size());
    am.Dmap.resize(am.Ymap.size());

    for (int k = 0; k <= grid.n_steps; ++k) {
        const LqBlocks b = lq_blocks(pb, sol.P.at(k));
        if (k == 0) am.G2a = b.G2a;
        const std::array<Mat, 4> Pc{sol.L.P1.at(k), sol.L.P2.at(k), sol.L.P3.at(k),
                                    sol.L.P4.at(k)};
        Mat Y = Mat::Zero(d, 4 * d);
        for (int j = 0; j < 4; ++j) Y.middleCols(j * d, d) = Pc[static_cast<std::size_t>(j)];
        am.Ymap[static_cast<std::size_t>(k)] = Y;

        // Diffusion matching: Z_i collects Pc_j times the dW_i coefficient of
        // every estimate the noise reaches.
        Mat Z1 = Mat::Zero(d, 4 * d), Z2 = Z1, Z3 = Z1;
        Z1.middleCols(0, d) = Pc[0] * b.Aa[0];
        Z1.middleCols(d, d) = Pc[1] * b.Aa[0];
        Z2.middleCols(0, d) = Pc[0] * b.Aa[1];
        Z2.middleCols(2 * d, d) = Pc[2] * b.Aa[1];
        for (int j = 0; j < 4; ++j)
            Z3.middleCols(j * d, d) = Pc[static_cast<std::size_t>(j)] * b.Aa[2];
        am.Zmap[0][static_cast<std::size_t>(k)] = Z1;
        am.Zmap[1][static_cast<std::size_t>(k)] = Z2;
        am.Zmap[2][static_cast<std::size_t>(k)] = Z3;

        // -dY = [Q2a X + A0a' Y + Bbar0' Yhat + Ct0' Ycommon + Cb0 Xhatcheck
        //        + sum_i Aa_i' Z_i] dt - sum_i Z_i dW_i
        Mat D = Mat::Zero(d, 4 * d);
        D.middleCols(0, d) = b.Q2a;
        D += b.A0a.transpose() * Y;
        Mat Yhat = Mat::Zero(d, 4 * d);
        Yhat.middleCols(d, d) = Pc[0] + Pc[1];
        Yhat.middleCols(3 * d, d) = Pc[2] + Pc[3];
        D += b.Bbar0.transpose() * Yhat;
        const Mat sumP = Pc[0] + Pc[1] + Pc[2] + Pc[3];
        D.middleCols(3 * d, d) += b.Ct0.transpose() * sumP + b.Cb0;
        D += b.Aa[0].transpose() * Z1 + b.Aa[1].transpose() * Z2 + b.Aa[2].transpose() * Z3;
        am.Dmap[static_cast<std::size_t>(k)] = D;
    }

    if (pb.additive_noise()) {
        // Additive noise contributes constants to the Z_i; they never feed
        // back into the drift here because the multiplicative blocks vanish.
        for (int k = 0; k <= grid.n_steps; ++k) {
            (void)k;  // handled in the evaluation routines via z_const below
        }
    }
    return am;
}

std::array<Vec, 3> z_const_at(const LqProblem& pb, const LqSolution& sol, int k) {
    const int n = pb.n;
    const int d = 2 * n;
    std::array<Vec, 3> zc{Vec::Zero(d), Vec::Zero(d), Vec::Zero(d)};
    if (!pb.additive_noise()) return zc;
    const std::array<Mat, 4> Pc{sol.L.P1.at(k), sol.L.P2.at(k), sol.L.P3.at(k),
                                sol.L.P4.at(k)};
    std::array<Vec, 3> sa;
    for (int i = 0; i < 3; ++i) {
        sa[static_cast<std::size_t>(i)] = Vec::Zero(d);
        sa[static_cast<std::size_t>(i)].head(n) = pb.sigma[static_cast<std::size_t>(i)];
    }
    zc[0] = (Pc[0] + Pc[1]) * sa[0];
    zc[1] = (Pc[0] + Pc[2]) * sa[1];
    zc[2] = (Pc[0] + Pc[1] + Pc[2] + Pc[3]) * sa[2];
    return zc;
}

}  // namespace

StrategyCid build_strategies_cid(const CidSpec& spec, const MatPath& P,
                                 const LeaderSystemCid& L) {
    const LqProblem pb = LqProblem::from_cid(spec);
    const LqSolution sol = rebuild_solution(pb, P, L);
    StrategyCid s;
    s.follower_gain_hat = sol.u1_on_xhat;
    s.follower_gain_cross = sol.u1_on_common;
    s.leader_gain_check = sol.u2_on_xcheck;
    s.leader_gain_cross = sol.u2_on_common;
    return s;
}

CostEstimate evaluate_cost_lq(const PathEnsemble& e, const Mat& Q, const Mat& N, const Mat& G,
                              Player who) {
    const int n = static_cast<int>(Q.rows());
    const int kdim = who == Player::follower ? e.k1 : e.k2;
    const std::vector<double>& u = who == Player::follower ? e.u1 : e.u2;
    const double h = e.grid.step();

    double sum = 0, sumsq = 0;
    Vec x(n), uv(kdim);
    for (int p = 0; p < e.n_paths; ++p) {
        double acc = 0;
        for (int k = 0; k <= e.grid.n_steps; ++k) {
            for (int c = 0; c < n; ++c) x[c] = e.X[e.sidx(p, k, c)];
            for (int c = 0; c < kdim; ++c) uv[c] = u[e.uidx(p, k, c, kdim)];
            const double integrand = x.dot(Q * x) + uv.dot(N * uv);
            const double w = (k == 0 || k == e.grid.n_steps) ? 0.5 : 1.0;
            acc += w * h * integrand;
        }
        for (int c = 0; c < n; ++c) x[c] = e.X[e.sidx(p, e.grid.n_steps, c)];
        acc += x.dot(G * x);
        const double J = 0.5 * acc;
        sum += J;
        sumsq += J * J;
    }
    CostEstimate out;
    out.n_paths = e.n_paths;
    out.mean = sum / e.n_paths;
    const double var = std::max(0.0, sumsq / e.n_paths - out.mean * out.mean);
    out.std_error = std::sqrt(var / e.n_paths);
    return out;
}

CostEstimate evaluate_cost(const PathEnsemble& e, Player who, const CidSpec& spec) {
    const LqProblem pb = LqProblem::from_cid(spec);
    if (who == Player::follower) return evaluate_cost_lq(e, pb.Q1, pb.N1, pb.G1, who);
    return evaluate_cost_lq(e, pb.Q2, pb.N2, pb.G2, who);
}

ReconstructedAdjoint lq_reconstruct_adjoint(const PathEnsemble& e, const LqProblem& pb,
                                            const LqSolution& sol) {
    const AdjointMaps am = build_adjoint_maps(pb, sol);
    const int d = e.d;
    ReconstructedAdjoint out;
    out.grid = e.grid;
    out.n_paths = e.n_paths;
    out.d = d;
    const std::size_t total = static_cast<std::size_t>(e.n_paths) *
                              static_cast<std::size_t>(e.grid.n_nodes()) *
                              static_cast<std::size_t>(d);
    out.Y.assign(total, 0.0);
    out.Z1.assign(total, 0.0);
    out.Z2.assign(total, 0.0);
    out.Z3.assign(total, 0.0);

    Vec S(4 * d);
    for (int p = 0; p < e.n_paths; ++p) {
        for (int k = 0; k <= e.grid.n_steps; ++k) {
            for (int c = 0; c < d; ++c) {
                S[c] = e.X[e.sidx(p, k, c)];
                S[d + c] = e.Xhat[e.sidx(p, k, c)];
                S[2 * d + c] = e.Xcheck[e.sidx(p, k, c)];
                S[3 * d + c] = e.Xhatcheck[e.sidx(p, k, c)];
            }
            const auto ku = static_cast<std::size_t>(k);
            const std::array<Vec, 3> zc = z_const_at(pb, sol, k);
            const Vec y = am.Ymap[ku] * S;
            const Vec z1 = am.Zmap[0][ku] * S + zc[0];
            const Vec z2 = am.Zmap[1][ku] * S + zc[1];
            const Vec z3 = am.Zmap[2][ku] * S + zc[2];
            for (int c = 0; c < d; ++c) {
                out.Y[out.idx(p, k, c)] = y[c];
                out.Z1[out.idx(p, k, c)] = z1[c];
                out.Z2[out.idx(p, k, c)] = z2[c];
                out.Z3[out.idx(p, k, c)] = z3[c];
            }
        }
    }
    return out;
}

ReconstructedAdjoint reconstruct_adjoint(const PathEnsemble& e, const CidSpec& spec,
                                         const LeaderSystemCid& L) {
    const LqProblem pb = LqProblem::from_cid(spec);
    MatPath P(e.grid, pb.n, pb.n);
    // Only the leader blocks enter the ansatz; P is irrelevant here but the
    // solution carrier wants one.
    const LqSolution sol = rebuild_solution(pb, lq_solve(pb, e.grid).P, L);
    return lq_reconstruct_adjoint(e, pb, sol);
}

namespace {

struct ResidualAccum {
    std::vector<double> sum, sumsq;    // residual, per (node, comp)
    std::vector<double> isum, isumsq;  // realized Y increments, per (node, comp)
    double max_terminal = 0.0;
    int n_paths = 0;
};

AdjointReport finalize_adjoint(const ResidualAccum& acc, const TimeGrid& grid, int d) {
    AdjointReport rep;
    rep.max_terminal_gap = acc.max_terminal;
    const double n = acc.n_paths;
    for (int k = 0; k < grid.n_steps; ++k) {
        for (int c = 0; c < d; ++c) {
            const std::size_t i = static_cast<std::size_t>(k) * static_cast<std::size_t>(d) +
                                  static_cast<std::size_t>(c);
            const double mean = acc.sum[i] / n;
            const double var = std::max(0.0, acc.sumsq[i] / n - mean * mean);
            const double se = std::sqrt(var / n);
            // The statistical resolution of the oracle: a residual mean is
            // "zero" when it is indistinguishable at the precision the Y
            // increments themselves admit. On near-deterministic components
            // the residual's own SE collapses to the O(h^2) truncation floor
            // and would reject exact dynamics, so the increment SE is the
            // binding scale there.
            const double imean = acc.isum[i] / n;
            const double ivar = std::max(0.0, acc.isumsq[i] / n - imean * imean);
            const double ise = std::sqrt(ivar / n);
            rep.max_step_mean = std::max(rep.max_step_mean, std::abs(mean));
            if (std::abs(mean) <= 1e-14) continue;
            const double denom = std::max(se, ise);
            const double stud = denom > 0 ? std::abs(mean) / denom
                                          : std::numeric_limits<double>::infinity();
            if (stud > rep.max_studentized_drift) {
                rep.max_studentized_drift = stud;
                rep.argmax_node = k;
                rep.argmax_comp = c;
                rep.argmax_mean = mean;
                rep.argmax_se = se;
            }
        }
    }
    rep.pass = rep.max_terminal_gap <= 1e-8 && rep.max_studentized_drift <= 4.0;
    return rep;
}

}  // namespace

AdjointReport lq_adjoint_consistency(const PathEnsemble& e, const LqProblem& pb,
                                     const LqSolution& sol) {
    const AdjointMaps am = build_adjoint_maps(pb, sol);
    const int d = e.d;
    ResidualAccum acc;
    acc.n_paths = e.n_paths;
    acc.sum.assign(static_cast<std::size_t>(e.grid.n_steps) * static_cast<std::size_t>(d), 0.0);
    acc.sumsq = acc.sum;
    acc.isum = acc.sum;
    acc.isumsq = acc.sum;

    std::vector<std::array<Vec, 3>> zc(static_cast<std::size_t>(e.grid.n_nodes()));
    for (int k = 0; k <= e.grid.n_steps; ++k)
        zc[static_cast<std::size_t>(k)] = z_const_at(pb, sol, k);

    Vec S(4 * d), Snext(4 * d);
    const double h = e.grid.step();
    for (int p = 0; p < e.n_paths; ++p) {
        for (int k = 0; k <= e.grid.n_steps; ++k) {
            Vec& target = (k == 0) ? S : Snext;
            for (int c = 0; c < d; ++c) {
                target[c] = e.X[e.sidx(p, k, c)];
                target[d + c] = e.Xhat[e.sidx(p, k, c)];
                target[2 * d + c] = e.Xcheck[e.sidx(p, k, c)];
                target[3 * d + c] = e.Xhatcheck[e.sidx(p, k, c)];
            }
            if (k == 0) continue;
            const auto km = static_cast<std::size_t>(k - 1);
            const Vec yk = am.Ymap[km] * S;
            const Vec yn = am.Ymap[km + 1] * Snext;
            Vec resid = yn - yk + h * (am.Dmap[km] * S);
            for (int i = 0; i < 3; ++i) {
                const double dw = e.dW[e.widx(p, k - 1, i)];
                resid -= dw * (am.Zmap[static_cast<std::size_t>(i)][km] * S +
                               zc[km][static_cast<std::size_t>(i)]);
            }
            for (int c = 0; c < d; ++c) {
                const std::size_t i = km * static_cast<std::size_t>(d) +
                                      static_cast<std::size_t>(c);
                acc.sum[i] += resid[c];
                acc.sumsq[i] += resid[c] * resid[c];
                const double inc = yn[c] - yk[c];
                acc.isum[i] += inc;
                acc.isumsq[i] += inc * inc;
            }
            if (k == e.grid.n_steps) {
                const Vec gap = yn - am.G2a * Snext.head(d);
                acc.max_terminal = std::max(acc.max_terminal, gap.cwiseAbs().maxCoeff());
            }
            S.swap(Snext);
        }
    }
    return finalize_adjoint(acc, e.grid, d);
}

AdjointReport lq_adjoint_consistency_streaming(const LqProblem& pb, const LqSolution& sol,
                                               int n_paths, std::uint64_t seed, int threads) {
    const CompiledLoop cl = compile_loop(pb, sol);
    const AdjointMaps am = build_adjoint_maps(pb, sol);
    const int d = cl.d;
    const double h = cl.grid.step();
    const double sqh = std::sqrt(h);
    const int n_steps = cl.grid.n_steps;

    std::vector<std::array<Vec, 3>> zc(static_cast<std::size_t>(cl.grid.n_nodes()));
    for (int k = 0; k <= n_steps; ++k) zc[static_cast<std::size_t>(k)] = z_const_at(pb, sol, k);

    const int nthreads = std::max(1, threads);
    std::vector<ResidualAccum> accs(static_cast<std::size_t>(nthreads));
    for (auto& a : accs) {
        a.sum.assign(static_cast<std::size_t>(n_steps) * static_cast<std::size_t>(d), 0.0);
        a.sumsq = a.sum;
        a.isum = a.sum;
        a.isumsq = a.sum;
    }
    const int chunk = (n_paths + nthreads - 1) / nthreads;

    parallel_over_paths(n_paths, nthreads, [&](int a, int b) {
        ResidualAccum& acc = accs[static_cast<std::size_t>(a / std::max(1, chunk))];
        Vec S(4 * d), Snext(4 * d), scratch(4 * d);
        for (int p = a; p < b; ++p) {
            S = cl.s0;
            for (int k = 0; k < n_steps; ++k) {
                double dw[3];
                rng::increments3(seed, 0, static_cast<std::uint64_t>(p),
                                 static_cast<std::uint64_t>(k), sqh, dw);
                euler_step(cl, k, S, dw, h, Snext, scratch);
                const auto ku = static_cast<std::size_t>(k);
                const Vec yk = am.Ymap[ku] * S;
                const Vec yn = am.Ymap[ku + 1] * Snext;
                Vec resid = yn - yk + h * (am.Dmap[ku] * S);
                for (int i = 0; i < 3; ++i)
                    resid -= dw[i] * (am.Zmap[static_cast<std::size_t>(i)][ku] * S +
                                      zc[ku][static_cast<std::size_t>(i)]);
                for (int c = 0; c < d; ++c) {
                    const std::size_t idx = ku * static_cast<std::size_t>(d) +
                                            static_cast<std::size_t>(c);
                    acc.sum[idx] += resid[c];
                    acc.sumsq[idx] += resid[c] * resid[c];
                    const double inc = yn[c] - yk[c];
                    acc.isum[idx] += inc;
                    acc.isumsq[idx] += inc * inc;
                }
                S.swap(Snext);
            }
            const Vec gap = am.Ymap[static_cast<std::size_t>(n_steps)] * S -
                            am.G2a * S.head(d);
            acc.max_terminal = std::max(acc.max_terminal, gap.cwiseAbs().maxCoeff());
        }
    });

    ResidualAccum total;
    total.n_paths = n_paths;
    total.sum.assign(accs[0].sum.size(), 0.0);
    total.sumsq = total.sum;
    total.isum = total.sum;
    total.isumsq = total.sum;
    for (const auto& a : accs) {
        for (std::size_t i = 0; i < total.sum.size(); ++i) {
            total.sum[i] += a.sum[i];
            total.sumsq[i] += a.sumsq[i];
            total.isum[i] += a.isum[i];
            total.isumsq[i] += a.isumsq[i];
        }
        total.max_terminal = std::max(total.max_terminal, a.max_terminal);
    }
    return finalize_adjoint(total, cl.grid, d);
}

// ---------------------------------------------------------------------------
// Stationarity by perturbation
// ---------------------------------------------------------------------------

namespace {

// Backward gain of the follower's reaction to a leader perturbation
// v = D Xcheck_e: the offset process of the follower's response satisfies a
// linear backward equation whose solution is g(t) Xhatcheck_e.
std::vector<Mat> reaction_gain(const LqProblem& pb, const LqSolution& sol,
                               const CompiledLoop& cl, const Mat& D) {
    const int n = pb.n;
    const int d = cl.d;
    const TimeGrid& grid = sol.grid;
    const double h = grid.step();
    const Mat K1 = pb.B0 * pb.N1.partialPivLu().solve(pb.B0.transpose());
    const Mat L3d = pb.Amul[2].transpose();
    const Mat Aa3 = lq_blocks(pb, sol.P.at(grid.n_steps)).Aa[2];

    auto Kk = [&](int k) -> Mat {
        return cl.drift[static_cast<std::size_t>(k)].block(3 * d, 3 * d, d, d);
    };
    auto rhs = [&](const Mat& P, const Mat& Kmat, const Mat& g) -> Mat {
        const Mat L0d = pb.A0.transpose() - P * K1;
        const Mat L4d = P * pb.C0;
        return -(g * Kmat + L0d * g + L3d * (g * Aa3) + L4d * D);
    };

    std::vector<Mat> g(static_cast<std::size_t>(grid.n_nodes()), Mat::Zero(n, d));
    for (int k = grid.n_steps; k > 0; --k) {
        const Mat& gk = g[static_cast<std::size_t>(k)];
        const Mat Pk = sol.P.at(k);
        const Mat Pkm = sol.P.at(k - 1);
        const Mat Pm = 0.5 * (Pk + Pkm);
        const Mat Kt = Kk(k);
        const Mat Ktm = Kk(k - 1);
        const Mat Km = 0.5 * (Kt + Ktm);
        const Mat s1 = rhs(Pk, Kt, gk);
        const Mat s2 = rhs(Pm, Km, gk - 0.5 * h * s1);
        const Mat s3 = rhs(Pm, Km, gk - 0.5 * h * s2);
        const Mat s4 = rhs(Pkm, Ktm, gk - h * s3);
        g[static_cast<std::size_t>(k - 1)] = gk - (h / 6.0) * (s1 + 2 * s2 + 2 * s3 + s4);
    }
    return g;
}

}  // namespace

PerturbReport lq_stationarity_test(const LqProblem& pb, const LqSolution& sol,
                                   const PerturbDirection& dir,
                                   const std::vector<double>& epsilons, int n_paths,
                                   std::uint64_t seed, int threads) {
    const CompiledLoop cl = compile_loop(pb, sol);
    const int n = pb.n;
    const int d = cl.d;
    const TimeGrid& grid = sol.grid;
    const double h = grid.step();
    const double sqh = std::sqrt(h);
    const bool leader = dir.player == Player::leader;
    const int kdim = leader ? pb.k2 : pb.k1;
    if (dir.control_weights.size() != kdim || dir.obs_weights.size() != n)
        throw std::invalid_argument("stationarity_test: direction dimensions inconsistent");

    // eps grid: always include 0; keep the caller's order, 0 appended.
    std::vector<double> eps = epsilons;
    int zero_idx = -1;
    for (std::size_t i = 0; i < eps.size(); ++i)
        if (eps[i] == 0.0) zero_idx = static_cast<int>(i);
    if (zero_idx < 0) {
        zero_idx = static_cast<int>(eps.size());
        eps.push_back(0.0);
    }
    const int m = static_cast<int>(eps.size());
    if (m < 3) throw std::invalid_argument("stationarity_test: need at least 3 eps values");

    // Direction as a row on the player's own augmented filter.
    Mat D = Mat::Zero(kdim, d);
    D.leftCols(n) = dir.scale * dir.control_weights * dir.obs_weights.transpose();

    std::vector<Mat> g;  // follower-reaction gain, leader test only
    if (leader) g = reaction_gain(pb, sol, cl, D);

    // Per-node control helpers.
    Eigen::PartialPivLU<Mat> lu1(pb.N1);
    const Mat F0 = lu1.solve(pb.B0.transpose());  // k1 x n
    std::vector<Mat> FP(static_cast<std::size_t>(grid.n_nodes()));
    std::vector<Mat> GR(static_cast<std::size_t>(grid.n_nodes()));
    std::vector<Mat> PHI_hat(FP.size()), PHI_com(FP.size());
    for (int k = 0; k <= grid.n_steps; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        FP[ku] = lu1.solve(pb.B0.transpose() * sol.P.at(k));
        if (leader) GR[ku] = lu1.solve(pb.B0.transpose() * g[ku]);
        PHI_hat[ku] = (sol.L.P1.at(k) + sol.L.P2.at(k)).bottomRows(n);
        PHI_com[ku] = (sol.L.P3.at(k) + sol.L.P4.at(k)).bottomRows(n);
    }

    const Mat& Qw = leader ? pb.Q2 : pb.Q1;
    const Mat& Nw = leader ? pb.N2 : pb.N1;
    const Mat& Gw = leader ? pb.G2 : pb.G1;

    std::vector<double> J(static_cast<std::size_t>(n_paths) * static_cast<std::size_t>(m));

    parallel_over_paths(n_paths, threads, [&](int pa, int pb_) {
        Vec S(4 * d), Snext(4 * d), scratch(4 * d);
        std::vector<Vec> x(static_cast<std::size_t>(m), Vec(n));
        std::vector<Vec> xh(static_cast<std::size_t>(m), Vec(n));
        std::vector<double> acc(static_cast<std::size_t>(m));
        Vec u1(pb.k1), u2(pb.k2), xn(n), xhn(n);

        for (int p = pa; p < pb_; ++p) {
            S = cl.s0;
            for (int e = 0; e < m; ++e) {
                x[static_cast<std::size_t>(e)] = pb.x0;
                xh[static_cast<std::size_t>(e)] = pb.x0;
                acc[static_cast<std::size_t>(e)] = 0.0;
            }
            for (int k = 0; k <= grid.n_steps; ++k) {
                const auto ku = static_cast<std::size_t>(k);
                Eigen::Map<const Vec> Xe(S.data(), d);
                Eigen::Map<const Vec> Xhe(S.data() + d, d);
                Eigen::Map<const Vec> Xce(S.data() + 2 * d, d);
                Eigen::Map<const Vec> Xbe(S.data() + 3 * d, d);
                const Vec u2e = cl.g_u2c[ku] * Xce + cl.g_u2x[ku] * Xbe;
                const Vec u2e_hat = (cl.g_u2c[ku] + cl.g_u2x[ku]) * Xbe;
                const Vec phie = PHI_hat[ku] * Xhe + PHI_com[ku] * Xbe;
                const Vec v_obs = leader ? Vec(D * Xce) : Vec();
                const Vec v_hat = leader ? Vec(D * Xbe) : Vec(D * Xhe);
                const Vec react = leader ? Vec(GR[ku] * Xbe) : Vec();
                const double w = (k == 0 || k == grid.n_steps) ? 0.5 : 1.0;

                double dw[3];
                if (k < grid.n_steps)
                    rng::increments3(seed, 0, static_cast<std::uint64_t>(p),
                                     static_cast<std::uint64_t>(k), sqh, dw);

                for (int e = 0; e < m; ++e) {
                    const auto eu = static_cast<std::size_t>(e);
                    const double ev = eps[eu];
                    Vec& xe = x[eu];
                    Vec& xhe2 = xh[eu];
                    u1.noalias() = -(FP[ku] * xhe2) - (F0 * phie);
                    Vec u2loc = u2e;
                    Vec u2hat = u2e_hat;
                    if (leader) {
                        u1.noalias() -= ev * react;
                        u2loc += ev * v_obs;
                        u2hat += ev * v_hat;
                    } else {
                        u1.noalias() += ev * v_hat;
                    }
                    // cost integrand at node k
                    const Vec& uq = leader ? u2loc : u1;
                    acc[eu] += w * h * (xe.dot(Qw * xe) + uq.dot(Nw * uq));
                    if (k == grid.n_steps) {
                        acc[eu] += xe.dot(Gw * xe);
                        continue;
                    }
                    // Euler step of the physical pair
                    xn = xe + h * (pb.A0 * xe + pb.B0 * u1 + pb.C0 * u2loc);
                    xhn = xhe2 + h * (pb.A0 * xhe2 + pb.B0 * u1 + pb.C0 * u2hat);
                    for (int i = 0; i < 3; ++i) {
                        const auto iu = static_cast<std::size_t>(i);
                        xn += dw[i] * (pb.Amul[iu] * xe + pb.sigma[iu]);
                        if (i != 1)  // the follower's filter sees dW1 and dW3
                            xhn += dw[i] * (pb.Amul[iu] * xhe2 + pb.sigma[iu]);
                    }
                    xe = xn;
                    xhe2 = xhn;
                }
                if (k < grid.n_steps) {
                    euler_step(cl, k, S, dw, h, Snext, scratch);
                    S.swap(Snext);
                }
            }
            for (int e = 0; e < m; ++e)
                J[static_cast<std::size_t>(p) * static_cast<std::size_t>(m) +
                  static_cast<std::size_t>(e)] = 0.5 * acc[static_cast<std::size_t>(e)];
        }
    });

    // Means and SEs per eps.
    PerturbReport rep;
    rep.epsilons = eps;
    rep.J_means.assign(static_cast<std::size_t>(m), 0.0);
    rep.J_ses.assign(static_cast<std::size_t>(m), 0.0);
    for (int e = 0; e < m; ++e) {
        double s = 0, q = 0;
        for (int p = 0; p < n_paths; ++p) {
            const double v = J[static_cast<std::size_t>(p) * static_cast<std::size_t>(m) +
                               static_cast<std::size_t>(e)];
            s += v;
            q += v * v;
        }
        const double mean = s / n_paths;
        rep.J_means[static_cast<std::size_t>(e)] = mean;
        rep.J_ses[static_cast<std::size_t>(e)] =
            std::sqrt(std::max(0.0, q / n_paths - mean * mean) / n_paths);
    }

    // Degenerate when every J(eps) sits within noise of J(0), path-wise.
    bool degenerate = true;
    for (int e = 0; e < m && degenerate; ++e) {
        if (e == zero_idx) continue;
        double s = 0, q = 0;
        for (int p = 0; p < n_paths; ++p) {
            const std::size_t row = static_cast<std::size_t>(p) * static_cast<std::size_t>(m);
            const double diff = J[row + static_cast<std::size_t>(e)] -
                                J[row + static_cast<std::size_t>(zero_idx)];
            s += diff;
            q += diff * diff;
        }
        const double mean = s / n_paths;
        const double se = std::sqrt(std::max(0.0, q / n_paths - mean * mean) / n_paths);
        const double tol = 3.0 * se + 1e-14 * (1.0 + std::abs(rep.J_means[static_cast<std::size_t>(zero_idx)]));
        if (std::abs(mean) > tol) degenerate = false;
    }
    if (degenerate) throw DegenerateFit();

    // Per-path least-squares fit J(eps) = a eps^2 + b eps + c.
    Mat A(m, 3);
    for (int e = 0; e < m; ++e) {
        A(e, 0) = eps[static_cast<std::size_t>(e)] * eps[static_cast<std::size_t>(e)];
        A(e, 1) = eps[static_cast<std::size_t>(e)];
        A(e, 2) = 1.0;
    }
    const Mat pinv = (A.transpose() * A).ldlt().solve(A.transpose());
    double sa = 0, qa = 0, sb = 0, qb = 0, sc = 0;
    Vec jrow(m);
    for (int p = 0; p < n_paths; ++p) {
        for (int e = 0; e < m; ++e)
            jrow[e] = J[static_cast<std::size_t>(p) * static_cast<std::size_t>(m) +
                        static_cast<std::size_t>(e)];
        const Vec coef = pinv * jrow;
        sa += coef[0];
        qa += coef[0] * coef[0];
        sb += coef[1];
        qb += coef[1] * coef[1];
        sc += coef[2];
    }
    rep.fit.a = sa / n_paths;
    rep.fit.b = sb / n_paths;
    rep.fit.c = sc / n_paths;
    rep.fit.se_a = std::sqrt(std::max(0.0, qa / n_paths - rep.fit.a * rep.fit.a) / n_paths);
    rep.fit.se_b = std::sqrt(std::max(0.0, qb / n_paths - rep.fit.b * rep.fit.b) / n_paths);
    rep.pass = std::abs(rep.fit.b) <= 3.0 * rep.fit.se_b && rep.fit.a > 0.0;
    return rep;
}

PerturbReport stationarity_test(const CidSpec& spec, const MatPath& P,
                                const LeaderSystemCid& L, const PerturbDirection& dir,
                                const std::vector<double>& epsilons, int n_paths,
                                std::uint64_t seed, int threads) {
    const LqProblem pb = LqProblem::from_cid(spec);
    const LqSolution sol = rebuild_solution(pb, P, L);
    return lq_stationarity_test(pb, sol, dir, epsilons, n_paths, seed, threads);
}

}  // namespace stacklq
