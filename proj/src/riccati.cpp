#include "stacklq/riccati.hpp"

#include <Eigen/Eigenvalues>

#include "stacklq/assembly.hpp"
#include "stacklq/errors.hpp"
#include "stacklq/lq_model.hpp"

namespace stacklq {

namespace {

void require_finite(const Mat& m, double t, const char* where) {
    if (!all_finite(m, kBlowupBound)) throw NonFiniteError(t, where);
}

}  // namespace

MatPath integrate_backward(const RiccatiField& field, const TimeGrid& grid) {
    const double h = grid.step();
    MatPath path(grid, static_cast<int>(field.terminal.rows()),
                 static_cast<int>(field.terminal.cols()));
    require_finite(field.rhs(grid.horizon, field.terminal), grid.horizon, "terminal stage");
    path.at(grid.n_steps) = field.terminal;

    for (int k = grid.n_steps; k > 0; --k) {
        const double t = grid.node(k);
        const Mat& p = path.at(k);
        const Mat s1 = field.rhs(t, p);
        require_finite(s1, t, "rk4 stage 1");
        const Mat s2 = field.rhs(t - 0.5 * h, p - 0.5 * h * s1);
        require_finite(s2, t - 0.5 * h, "rk4 stage 2");
        const Mat s3 = field.rhs(t - 0.5 * h, p - 0.5 * h * s2);
        require_finite(s3, t - 0.5 * h, "rk4 stage 3");
        const Mat s4 = field.rhs(t - h, p - h * s3);
        require_finite(s4, t - h, "rk4 stage 4");
        path.at(k - 1) = p - (h / 6.0) * (s1 + 2.0 * s2 + 2.0 * s3 + s4);
        require_finite(path.at(k - 1), grid.node(k - 1), "rk4 step");
    }
    return path;
}

double riccati_residual(const MatPath& path, const RiccatiField& field, const TimeGrid& grid) {
    const double h = grid.step();
    double worst = 0.0;
    for (int k = 1; k < grid.n_steps; ++k) {
        const Mat deriv = (path.at(k + 1) - path.at(k - 1)) / (2.0 * h);
        const Mat defect = deriv - field.rhs(grid.node(k), path.at(k));
        worst = std::max(worst, defect.cwiseAbs().maxCoeff());
    }
    return worst;
}

Mat follower_riccati_rhs(const GameSpec& spec, const Mat& P1) {
    // Pdot = -(P1 A0 + A0' P1 + sum Ai' P1 Ai + Q1 - S Nbar1^{-1} S')
    // with S = P1 B0 + sum Ai' P1 Bi and Nbar1 = N1 + sum Bi' P1 Bi.
    Mat S = P1 * spec.B[0];
    Mat Nbar = spec.N1;
    Mat quad = Mat::Zero(spec.n, spec.n);
    for (int i = 1; i <= 3; ++i) {
        const Mat PAi = P1 * spec.A[i];
        S += spec.A[i].transpose() * (P1 * spec.B[i]);
        Nbar += spec.B[i].transpose() * (P1 * spec.B[i]);
        quad += spec.A[i].transpose() * PAi;
    }
    Nbar = 0.5 * (Nbar + Nbar.transpose());
    const Mat rhs = P1 * spec.A[0] + spec.A[0].transpose() * P1 + quad + spec.Q1 -
                    S * Nbar.partialPivLu().solve(S.transpose());
    return -rhs;
}

MatPath solve_follower_riccati(const GameSpec& spec, const TimeGrid& grid) {
    RiccatiField field;
    field.terminal = spec.G1;
    field.rhs = [&spec](double t, const Mat& P1) {
        Mat Nbar = spec.N1;
        for (int i = 1; i <= 3; ++i) Nbar += spec.B[i].transpose() * (P1 * spec.B[i]);
        Nbar = 0.5 * (Nbar + Nbar.transpose());
        Eigen::SelfAdjointEigenSolver<Mat> es(Nbar);
        if (es.eigenvalues().cwiseAbs().minCoeff() < 1e-10)
            throw AssumptionViolated("A2.1", t);
        return follower_riccati_rhs(spec, P1);
    };
    return integrate_backward(field, grid);
}

LeaderSystemCid solve_cid_leader_system(const CidSpec& spec, const MatPath& P,
                                        const TimeGrid& grid) {
    if (!(P.grid == grid))
        throw std::invalid_argument("solve_cid_leader_system: P solved on a different grid");
    const LqSolution sol = lq_solve(LqProblem::from_cid(spec), grid);
    return sol.L;
}

GeneralLeaderResult attempt_general_leader_system(const GameSpec& spec, const TimeGrid& grid) {
    GeneralLeaderResult result;
    const int n = spec.n;
    const int n2 = 2 * n;
    const double h = grid.step();

    result.follower_P = MatPath(grid, n, n);
    result.P1 = MatPath(grid, n2, n2);
    result.P2 = MatPath(grid, n2, n2);
    result.P3 = MatPath(grid, n2, n2);
    result.P4 = MatPath(grid, n2, n2);
    result.step_conds.assign(static_cast<std::size_t>(grid.n_nodes()), {0, 0, 0, 0});

    struct State {
        Mat P1f;
        std::array<Mat, 4> Pc;
    };

    // Derivative of the coupled (follower, leader) system; Sigma chain
    // recomputed from scratch every call.
    auto rhs = [&spec](double t, const State& s, std::array<double, 4>* conds) {
        State d;
        d.P1f = follower_riccati_rhs(spec, s.P1f);
        const FollowerGainsAt gains = follower_gains_at(spec, s.P1f, t);
        const LeaderBlocksAt blocks = build_leader_blocks_at(spec, gains, s.P1f);
        const SigmaSet sigma = compute_sigma_chain(blocks, s.Pc, t);
        if (conds) *conds = sigma.cond;
        general_leader_rhs(blocks, sigma, s.Pc, d.Pc);
        return d;
    };

    auto axpy = [](const State& a, double c, const State& b) {
        State r;
        r.P1f = a.P1f + c * b.P1f;
        for (int j = 0; j < 4; ++j) r.Pc[j] = a.Pc[j] + c * b.Pc[j];
        return r;
    };
    auto check = [](const State& s, double t) {
        if (!all_finite(s.P1f, kBlowupBound)) throw NonFiniteError(t, "follower block");
        for (const Mat& m : s.Pc)
            if (!all_finite(m, kBlowupBound)) throw NonFiniteError(t, "leader block");
    };

    State s;
    s.P1f = spec.G1;
    s.Pc[0] = Mat::Zero(n2, n2);
    s.Pc[0].topLeftCorner(n, n) = spec.G2;
    s.Pc[1] = Mat::Zero(n2, n2);
    s.Pc[2] = Mat::Zero(n2, n2);
    s.Pc[3] = Mat::Zero(n2, n2);

    int node = grid.n_steps;
    try {
        auto store = [&](int k, const State& st, const std::array<double, 4>& conds) {
            result.follower_P.at(k) = st.P1f;
            result.P1.at(k) = st.Pc[0];
            result.P2.at(k) = st.Pc[1];
            result.P3.at(k) = st.Pc[2];
            result.P4.at(k) = st.Pc[3];
            result.step_conds[static_cast<std::size_t>(k)] = conds;
        };

        std::array<double, 4> conds{};
        State d1 = rhs(grid.horizon, s, &conds);
        store(grid.n_steps, s, conds);

        for (int k = grid.n_steps; k > 0; --k) {
            node = k;
            const double t = grid.node(k);
            const State d2 = rhs(t - 0.5 * h, axpy(s, -0.5 * h, d1), nullptr);
            const State d3 = rhs(t - 0.5 * h, axpy(s, -0.5 * h, d2), nullptr);
            const State d4 = rhs(t - h, axpy(s, -h, d3), nullptr);
            State next = s;
            next.P1f -= (h / 6.0) * (d1.P1f + 2 * d2.P1f + 2 * d3.P1f + d4.P1f);
            for (int j = 0; j < 4; ++j)
                next.Pc[j] -= (h / 6.0) * (d1.Pc[j] + 2 * d2.Pc[j] + 2 * d3.Pc[j] + d4.Pc[j]);
            check(next, grid.node(k - 1));
            s = next;
            node = k - 1;
            d1 = rhs(grid.node(k - 1), s, &conds);  // reused by the next step
            store(k - 1, s, conds);
        }
        result.ok = true;
    } catch (const AssumptionViolated& e) {
        result.failure = GeneralLeaderResult::Failure{
            GeneralLeaderResult::FailureKind::assumption, e.t, node, e.which};
    } catch (const NonFiniteError& e) {
        result.failure = GeneralLeaderResult::Failure{GeneralLeaderResult::FailureKind::blowup,
                                                      e.t, node, "blow-up"};
    }
    return result;
}

}  // namespace stacklq
