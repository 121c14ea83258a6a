#include "stacklq/assembly.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "stacklq/errors.hpp"

namespace stacklq {

namespace {

// [[ul, ur], [ll, lr]] from n x n pieces.
Mat blk(const Mat& ul, const Mat& ur, const Mat& ll, const Mat& lr) {
    const int n = static_cast<int>(ul.rows());
    Mat m = Mat::Zero(2 * n, 2 * n);
    m.topLeftCorner(n, n) = ul;
    m.topRightCorner(n, n) = ur;
    m.bottomLeftCorner(n, n) = ll;
    m.bottomRightCorner(n, n) = lr;
    return m;
}

Mat upper_left(const Mat& ul, int n) {
    Mat m = Mat::Zero(2 * n, 2 * n);
    m.topLeftCorner(n, n) = ul;
    return m;
}

}  // namespace

double cond_inf(const Mat& m) {
    Eigen::PartialPivLU<Mat> lu(m);
    const Mat inv = lu.inverse();
    if (!inv.allFinite()) return std::numeric_limits<double>::infinity();
    const double norm_a = m.cwiseAbs().rowwise().sum().maxCoeff();
    const double norm_inv = inv.cwiseAbs().rowwise().sum().maxCoeff();
    return norm_a * norm_inv;
}

FollowerGainsAt follower_gains_at(const GameSpec& spec, const Mat& P1, double t) {
    FollowerGainsAt g;
    const int n = spec.n;

    Mat Nbar = spec.N1;
    Mat S = P1 * spec.B[0];                    // P1 B0 + sum Ai' P1 Bi
    Mat TC = Mat::Zero(spec.k1, spec.k2);      // sum Bi' P1 Ci
    for (int i = 1; i <= 3; ++i) {
        Nbar += spec.B[i].transpose() * (P1 * spec.B[i]);
        S += spec.A[i].transpose() * (P1 * spec.B[i]);
        TC += spec.B[i].transpose() * (P1 * spec.C[i]);
    }
    Nbar = 0.5 * (Nbar + Nbar.transpose());
    g.Nbar1 = Nbar;

    Eigen::SelfAdjointEigenSolver<Mat> es(Nbar);
    if (es.eigenvalues().cwiseAbs().minCoeff() < 1e-10) throw AssumptionViolated("A2.1", t);
    Eigen::PartialPivLU<Mat> lu(Nbar);

    // u1 = fx xhat + fphi phihat + fb1 beta1hat + fb3 beta3hat + fu2 u2hat
    g.fx = -lu.solve(S.transpose());
    g.fphi = -lu.solve(spec.B[0].transpose());
    g.fb1 = -lu.solve(spec.B[1].transpose());
    g.fb3 = -lu.solve(spec.B[3].transpose());
    g.fu2 = -lu.solve(TC);

    // Table-convention L's; the filter drift is their negative.
    const Mat SW = S * lu.solve(Mat::Identity(spec.k1, spec.k1));
    g.L0 = SW * spec.B[0].transpose() - spec.A[0].transpose();
    g.L1 = SW * spec.B[1].transpose() - spec.A[1].transpose();
    g.L3 = SW * spec.B[3].transpose() - spec.A[3].transpose();
    Mat APC = P1 * spec.C[0];
    for (int i = 1; i <= 3; ++i) APC += spec.A[i].transpose() * (P1 * spec.C[i]);
    g.L4 = SW * TC - APC;

    for (int j = 0; j < 4; ++j) {
        g.Lj1[j] = -spec.B[j] * lu.solve(S.transpose());
        g.Lj2[j] = -spec.B[j] * lu.solve(spec.B[0].transpose());
        g.Lj3[j] = -spec.B[j] * lu.solve(spec.B[1].transpose());
        g.Lj4[j] = -spec.B[j] * lu.solve(spec.B[3].transpose());
        g.Lj5[j] = -spec.B[j] * lu.solve(TC);
    }
    return g;
}

FollowerGains build_follower_gains(const GameSpec& spec, const MatPath& P1) {
    const TimeGrid& grid = P1.grid;
    FollowerGains out;
    out.L0 = MatPath(grid, spec.n, spec.n);
    out.L1 = MatPath(grid, spec.n, spec.n);
    out.L3 = MatPath(grid, spec.n, spec.n);
    out.L4 = MatPath(grid, spec.n, spec.k2);
    out.Nbar1 = MatPath(grid, spec.k1, spec.k1);
    out.feedback_x = MatPath(grid, spec.k1, spec.n);
    out.feedback_phi = MatPath(grid, spec.k1, spec.n);
    out.feedback_b1 = MatPath(grid, spec.k1, spec.n);
    out.feedback_b3 = MatPath(grid, spec.k1, spec.n);
    out.feedback_u2 = MatPath(grid, spec.k1, spec.k2);
    for (int k = 0; k <= grid.n_steps; ++k) {
        const FollowerGainsAt g = follower_gains_at(spec, P1.at(k), grid.node(k));
        out.L0.at(k) = g.L0;
        out.L1.at(k) = g.L1;
        out.L3.at(k) = g.L3;
        out.L4.at(k) = g.L4;
        out.Nbar1.at(k) = g.Nbar1;
        out.feedback_x.at(k) = g.fx;
        out.feedback_phi.at(k) = g.fphi;
        out.feedback_b1.at(k) = g.fb1;
        out.feedback_b3.at(k) = g.fb3;
        out.feedback_u2.at(k) = g.fu2;
    }
    return out;
}

LeaderBlocksAt build_leader_blocks_at(const GameSpec& spec, const FollowerGainsAt& g,
                                      const Mat& P1) {
    const int n = spec.n;
    const int k2 = spec.k2;
    const Mat Zn = Mat::Zero(n, n);
    LeaderBlocksAt b;
    b.n2 = 2 * n;

    Eigen::PartialPivLU<Mat> n2lu(spec.N2);
    auto vn2 = [&n2lu](const Mat& m) { return n2lu.solve(m); };  // N2^{-1} m

    const Mat L4d = g.drift4();  // n x k2, drift-sign
    const auto& C = spec.C;
    const auto& L1j = g.Lj1;
    const auto& L2j = g.Lj2;
    const auto& L3j = g.Lj3;
    const auto& L4j = g.Lj4;
    const auto& L5j = g.Lj5;

    // --- X drift ---
    b.drift.x = blk(spec.A[0], Zn, Zn, g.drift0().transpose());
    b.drift.xhat = upper_left(L1j[0], n);
    b.drift.xcommon = blk(Zn, -(C[0] + L5j[0]) * vn2(L4d.transpose()), Zn, Zn);
    b.drift.y = blk(Zn, L2j[0], L2j[0].transpose(), Zn);
    b.drift.ycheck = upper_left(-C[0] * vn2(C[0].transpose()), n);
    b.drift.ycommon = upper_left(
        -C[0] * vn2(L5j[0].transpose()) - L5j[0] * vn2((C[0] + L5j[0]).transpose()), n);
    b.drift.z[0] = blk(Zn, L3j[0], L2j[1].transpose(), Zn);
    b.drift.z[1] = blk(Zn, Zn, L2j[2].transpose(), Zn);
    b.drift.z[2] = blk(Zn, L4j[0], L2j[3].transpose(), Zn);
    for (int j = 0; j < 3; ++j) {
        b.drift.zcheck[j] = upper_left(-C[0] * vn2(C[j + 1].transpose()), n);
        b.drift.zcommon[j] =
            upper_left(-C[0] * vn2(L5j[j + 1].transpose()) -
                           L5j[0] * vn2((C[j + 1] + L5j[j + 1]).transpose()),
                       n);
    }

    // --- dW_i coefficients, i = 1..3 ---
    for (int i = 1; i <= 3; ++i) {
        AugCoeffs& c = b.dw[static_cast<std::size_t>(i - 1)];
        Mat pdiag = Zn, ylow = Zn;
        if (i == 1) {
            pdiag = g.drift1().transpose();
            ylow = L3j[0].transpose();
        } else if (i == 3) {
            pdiag = g.drift3().transpose();
            ylow = L4j[0].transpose();
        }
        c.x = blk(spec.A[i], Zn, Zn, pdiag);
        c.xhat = upper_left(L1j[i], n);
        c.xcommon = blk(Zn, -(C[i] + L5j[i]) * vn2(L4d.transpose()), Zn, Zn);
        c.y = blk(Zn, L2j[i], ylow, Zn);
        c.ycheck = upper_left(-C[i] * vn2(C[0].transpose()), n);
        c.ycommon = upper_left(-(C[i] + L5j[i]) * vn2((C[0] + L5j[0]).transpose()), n);
        if (i == 1) {
            c.z[0] = blk(Zn, L3j[1], L3j[1].transpose(), Zn);
            c.z[1] = blk(Zn, Zn, L3j[2].transpose(), Zn);
            c.z[2] = blk(Zn, L4j[1], L3j[3].transpose(), Zn);
        } else if (i == 2) {
            c.z[0] = blk(Zn, L3j[2], Zn, Zn);
            c.z[1] = Mat::Zero(2 * n, 2 * n);
            c.z[2] = blk(Zn, L4j[2], Zn, Zn);
        } else {
            c.z[0] = blk(Zn, L3j[3], L4j[1].transpose(), Zn);
            c.z[1] = blk(Zn, Zn, L4j[2].transpose(), Zn);
            c.z[2] = blk(Zn, L4j[3], L4j[3].transpose(), Zn);
        }
        for (int j = 0; j < 3; ++j) {
            c.zcheck[j] = upper_left(-C[i] * vn2(C[j + 1].transpose()), n);
            c.zcommon[j] =
                upper_left(-C[i] * vn2(L5j[j + 1].transpose()) -
                               L5j[i] * vn2((C[j + 1] + L5j[j + 1]).transpose()),
                           n);
        }
    }

    // --- backward equation (-dY drift) ---
    b.Q2a = upper_left(spec.Q2, n);
    b.G2a = upper_left(spec.G2, n);
    b.adj.x = b.Q2a;
    b.adj.xcommon = blk(Zn, Zn, Zn, -L4d * vn2(L4d.transpose()));
    b.adj.y = b.drift.x.transpose();
    b.adj.yhat = upper_left(L1j[0].transpose(), n);
    b.adj.ycommon = b.drift.xcommon.transpose();
    for (int j = 0; j < 3; ++j) {
        b.adj.z[j] = b.dw[static_cast<std::size_t>(j)].x.transpose();
        b.adj.zhat[j] = upper_left(L1j[j + 1].transpose(), n);
        b.adj.zcommon[j] = b.dw[static_cast<std::size_t>(j)].xcommon.transpose();
    }

    b.X0a = Vec::Zero(2 * n);
    b.X0a.head(n) = spec.x0;

    // --- the leader's first-order-condition rows ---
    auto left_row = [&](const Mat& m) {  // [m | 0], k2 x 2n
        Mat r = Mat::Zero(k2, 2 * n);
        r.leftCols(n) = m;
        return r;
    };
    auto right_row = [&](const Mat& m) {  // [0 | m]
        Mat r = Mat::Zero(k2, 2 * n);
        r.rightCols(n) = m;
        return r;
    };
    b.u2_ycheck = left_row(C[0].transpose());
    b.u2_ycommon = left_row(L5j[0].transpose());
    b.u2_xcommon = right_row(L4d.transpose());
    for (int j = 0; j < 3; ++j) {
        b.u2_zcheck[j] = left_row(C[j + 1].transpose());
        b.u2_zcommon[j] = left_row(L5j[j + 1].transpose());
    }
    return b;
}

LeaderBlocks build_leader_blocks(const GameSpec& spec, const FollowerGains& gains,
                                 const MatPath& P1) {
    LeaderBlocks out;
    out.grid = P1.grid;
    out.nodes.reserve(static_cast<std::size_t>(P1.grid.n_nodes()));
    for (int k = 0; k <= P1.grid.n_steps; ++k) {
        const FollowerGainsAt g = follower_gains_at(spec, P1.at(k), P1.grid.node(k));
        (void)gains;
        out.nodes.push_back(build_leader_blocks_at(spec, g, P1.at(k)));
    }
    return out;
}

namespace {

// Symbolic coefficients of one martingale-term display: a linear combination
// of {X, Xhat, Xcheck, Xhatcheck} (slots 0..3 of `x`) and, per j, of
// {Z_j, Zhat_j, Zcheck_j, Zhatcheck_j} (slots of `z[j]`).
struct ZDisplay {
    std::array<Mat, 4> x;
    std::array<std::array<Mat, 4>, 3> z;
};

enum class Filter { none, follower, leader, common };

// Adds factor * (coeffs applied to filtered arguments) to the display.
// The Y-type arguments are eliminated through the decoupling relation
// Y = Pc1 X + Pc2 Xhat + Pc3 Xcheck + Pc4 Xhatcheck and its estimates.
void add_projected(ZDisplay& d, const Mat& factor, const AugCoeffs& c, Filter f,
                   const std::array<Mat, 4>& Pc) {
    const Mat sumP = Pc[0] + Pc[1] + Pc[2] + Pc[3];
    const Mat y_hat_lo = Pc[0] + Pc[1];    // Yhat = (.)Xhat + (Pc3+Pc4)Xhatcheck
    const Mat y_hat_hi = Pc[2] + Pc[3];
    const Mat y_chk_lo = Pc[0] + Pc[2];    // Ycheck = (.)Xcheck + (Pc2+Pc4)Xhatcheck
    const Mat y_chk_hi = Pc[1] + Pc[3];

    switch (f) {
        case Filter::none:
            d.x[0] += factor * c.x;
            d.x[1] += factor * c.xhat;
            d.x[3] += factor * c.xcommon;
            for (int k = 0; k < 4; ++k) d.x[k] += factor * (c.y * Pc[k]);
            d.x[2] += factor * (c.ycheck * y_chk_lo);
            d.x[3] += factor * (c.ycheck * y_chk_hi);
            d.x[3] += factor * (c.ycommon * sumP);
            for (int j = 0; j < 3; ++j) {
                d.z[j][0] += factor * c.z[j];
                d.z[j][2] += factor * c.zcheck[j];
                d.z[j][3] += factor * c.zcommon[j];
            }
            break;
        case Filter::follower:
            d.x[1] += factor * (c.x + c.xhat);
            d.x[3] += factor * c.xcommon;
            d.x[1] += factor * (c.y * y_hat_lo);
            d.x[3] += factor * (c.y * y_hat_hi);
            d.x[3] += factor * ((c.ycheck + c.ycommon) * sumP);
            for (int j = 0; j < 3; ++j) {
                d.z[j][1] += factor * c.z[j];
                d.z[j][3] += factor * (c.zcheck[j] + c.zcommon[j]);
            }
            break;
        case Filter::leader:
            d.x[2] += factor * c.x;
            d.x[3] += factor * (c.xhat + c.xcommon);
            d.x[2] += factor * (c.y + c.ycheck) * y_chk_lo;
            d.x[3] += factor * (c.y + c.ycheck) * y_chk_hi;
            d.x[3] += factor * (c.ycommon * sumP);
            for (int j = 0; j < 3; ++j) {
                d.z[j][2] += factor * (c.z[j] + c.zcheck[j]);
                d.z[j][3] += factor * c.zcommon[j];
            }
            break;
        case Filter::common:
            d.x[3] += factor * (c.x + c.xhat + c.xcommon +
                                (c.y + c.ycheck + c.ycommon) * sumP);
            for (int j = 0; j < 3; ++j)
                d.z[j][3] += factor * (c.z[j] + c.zcheck[j] + c.zcommon[j]);
            break;
    }
}

std::array<ZDisplay, 3> build_z_displays(const LeaderBlocksAt& b,
                                         const std::array<Mat, 4>& Pc) {
    const int n2 = b.n2;
    std::array<ZDisplay, 3> out;
    for (auto& d : out) {
        for (auto& m : d.x) m = Mat::Zero(n2, n2);
        for (auto& zj : d.z)
            for (auto& m : zj) m = Mat::Zero(n2, n2);
    }
    // dW1 hits X and Xhat; dW2 hits X and Xcheck; dW3 hits all four.
    add_projected(out[0], Pc[0], b.dw[0], Filter::none, Pc);
    add_projected(out[0], Pc[1], b.dw[0], Filter::follower, Pc);
    add_projected(out[1], Pc[0], b.dw[1], Filter::none, Pc);
    add_projected(out[1], Pc[2], b.dw[1], Filter::leader, Pc);
    add_projected(out[2], Pc[0], b.dw[2], Filter::none, Pc);
    add_projected(out[2], Pc[1], b.dw[2], Filter::follower, Pc);
    add_projected(out[2], Pc[2], b.dw[2], Filter::leader, Pc);
    add_projected(out[2], Pc[3], b.dw[2], Filter::common, Pc);
    return out;
}

// Solves the 3x3-block system (I - M) U = R for the stacked unknown blocks.
// `which` names the assumption reported when the matrix is singular.
std::array<Mat, 3> solve_step(const std::array<std::array<Mat, 3>, 3>& M,
                              const std::array<Mat, 3>& R, int n2, const char* which,
                              double t, double* cond_out, Mat* A_out = nullptr,
                              Mat* rhs_out = nullptr) {
    Mat A = Mat::Identity(3 * n2, 3 * n2);
    Mat rhs(3 * n2, R[0].cols());
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j)
            A.block(i * n2, j * n2, n2, n2) -= M[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        rhs.middleRows(i * n2, n2) = R[static_cast<std::size_t>(i)];
    }
    if (A_out) *A_out = A;
    if (rhs_out) *rhs_out = rhs;
    const double cond = cond_inf(A);
    if (cond_out) *cond_out = cond;
    if (!(cond < kCondThreshold)) throw AssumptionViolated(which, t);
    const Mat sol = A.partialPivLu().solve(rhs);
    std::array<Mat, 3> out;
    for (int i = 0; i < 3; ++i) out[static_cast<std::size_t>(i)] = sol.middleRows(i * n2, n2);
    return out;
}

}  // namespace

SigmaSet compute_sigma_chain(const LeaderBlocksAt& b, const std::array<Mat, 4>& Pc, double t,
                             SigmaChainSystems* systems) {
    const int n2 = b.n2;
    const std::array<ZDisplay, 3> disp = build_z_displays(b, Pc);
    SigmaSet s;

    auto coefZ = [&](int i, int j, int slot) -> const Mat& {
        return disp[static_cast<std::size_t>(i)].z[static_cast<std::size_t>(j)][static_cast<std::size_t>(slot)];
    };
    auto coefX = [&](int i, int slot) -> const Mat& {
        return disp[static_cast<std::size_t>(i)].x[static_cast<std::size_t>(slot)];
    };

    // Step 1: condition on both filtrations; all argument flavors collapse.
    {
        std::array<std::array<Mat, 3>, 3> M;
        std::array<Mat, 3> R;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j)
                M[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                    coefZ(i, j, 0) + coefZ(i, j, 1) + coefZ(i, j, 2) + coefZ(i, j, 3);
            R[static_cast<std::size_t>(i)] =
                coefX(i, 0) + coefX(i, 1) + coefX(i, 2) + coefX(i, 3);
        }
        s.Ncal = solve_step(M, R, n2, "A2.2", t, &s.cond[0],
                            systems ? &systems->A[0] : nullptr,
                            systems ? &systems->rhs[0] : nullptr);
    }

    // Step 2: condition on the leader's filtration.
    {
        std::array<std::array<Mat, 3>, 3> M;
        std::array<Mat, 3> Rchk, Rcom;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j)
                M[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                    coefZ(i, j, 0) + coefZ(i, j, 2);
            Rchk[static_cast<std::size_t>(i)] = coefX(i, 0) + coefX(i, 2);
            Mat rc = coefX(i, 1) + coefX(i, 3);
            for (int j = 0; j < 3; ++j)
                rc += (coefZ(i, j, 1) + coefZ(i, j, 3)) * s.Ncal[static_cast<std::size_t>(j)];
            Rcom[static_cast<std::size_t>(i)] = rc;
        }
        double c2a = 0, c2b = 0;
        s.Ntilde = solve_step(M, Rchk, n2, "A2.3", t, &c2a,
                              systems ? &systems->A[1] : nullptr,
                              systems ? &systems->rhs[1] : nullptr);
        s.Nbar = solve_step(M, Rcom, n2, "A2.3", t, &c2b);
        s.cond[1] = c2a;
    }

    // Step 3: condition on the follower's filtration.
    {
        std::array<std::array<Mat, 3>, 3> M;
        std::array<Mat, 3> Rhat, Rcom;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j)
                M[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                    coefZ(i, j, 0) + coefZ(i, j, 1);
            Rhat[static_cast<std::size_t>(i)] = coefX(i, 0) + coefX(i, 1);
            Mat rc = coefX(i, 2) + coefX(i, 3);
            for (int j = 0; j < 3; ++j)
                rc += (coefZ(i, j, 2) + coefZ(i, j, 3)) * s.Ncal[static_cast<std::size_t>(j)];
            Rcom[static_cast<std::size_t>(i)] = rc;
        }
        double c3a = 0, c3b = 0;
        s.Nhat = solve_step(M, Rhat, n2, "A2.4", t, &c3a,
                            systems ? &systems->A[2] : nullptr,
                            systems ? &systems->rhs[2] : nullptr);
        s.Ndbl = solve_step(M, Rcom, n2, "A2.4", t, &c3b);
        s.cond[2] = c3a;
    }

    // Step 4: the unconditioned coefficients.
    {
        std::array<std::array<Mat, 3>, 3> M;
        std::array<Mat, 3> Rx, Rh, Rc, Rb;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j)
                M[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = coefZ(i, j, 0);
            Rx[static_cast<std::size_t>(i)] = coefX(i, 0);
            Mat rh = coefX(i, 1);
            Mat rc = coefX(i, 2);
            Mat rb = coefX(i, 3);
            for (int j = 0; j < 3; ++j) {
                rh += coefZ(i, j, 1) * s.Nhat[static_cast<std::size_t>(j)];
                rc += coefZ(i, j, 2) * s.Ntilde[static_cast<std::size_t>(j)];
                rb += coefZ(i, j, 1) * s.Ndbl[static_cast<std::size_t>(j)] +
                      coefZ(i, j, 2) * s.Nbar[static_cast<std::size_t>(j)] +
                      coefZ(i, j, 3) * s.Ncal[static_cast<std::size_t>(j)];
            }
            Rh[static_cast<std::size_t>(i)] = rh;
            Rc[static_cast<std::size_t>(i)] = rc;
            Rb[static_cast<std::size_t>(i)] = rb;
        }
        double c4 = 0;
        s.Sigma = solve_step(M, Rx, n2, "A2.5", t, &c4,
                             systems ? &systems->A[3] : nullptr,
                             systems ? &systems->rhs[3] : nullptr);
        s.SigmaHat = solve_step(M, Rh, n2, "A2.5", t, nullptr);
        s.SigmaTilde = solve_step(M, Rc, n2, "A2.5", t, nullptr);
        s.SigmaBar = solve_step(M, Rb, n2, "A2.5", t, nullptr);
        s.cond[3] = c4;
    }
    return s;
}

void general_leader_rhs(const LeaderBlocksAt& b, const SigmaSet& s,
                        const std::array<Mat, 4>& Pc, std::array<Mat, 4>& dPc) {
    const int n2 = b.n2;
    const Mat sumP = Pc[0] + Pc[1] + Pc[2] + Pc[3];
    std::array<Mat, 3> SS;
    for (int j = 0; j < 3; ++j)
        SS[static_cast<std::size_t>(j)] = s.Sigma[static_cast<std::size_t>(j)] +
                                          s.SigmaHat[static_cast<std::size_t>(j)] +
                                          s.SigmaTilde[static_cast<std::size_t>(j)] +
                                          s.SigmaBar[static_cast<std::size_t>(j)];

    const AugCoeffs& dr = b.drift;
    const AdjCoeffs& aj = b.adj;

    Mat F_x = dr.x + dr.y * Pc[0];
    Mat F_h = dr.xhat + dr.y * Pc[1];
    Mat F_c = dr.y * Pc[2] + dr.ycheck * (Pc[0] + Pc[2]);
    Mat F_b = dr.xcommon + dr.y * Pc[3] + dr.ycheck * (Pc[1] + Pc[3]) + dr.ycommon * sumP;
    Mat G_h = dr.x + dr.xhat + dr.y * (Pc[0] + Pc[1]);
    Mat G_b = dr.xcommon + dr.y * (Pc[2] + Pc[3]) + (dr.ycheck + dr.ycommon) * sumP;
    Mat H_c = dr.x + (dr.y + dr.ycheck) * (Pc[0] + Pc[2]);
    Mat H_b = dr.xhat + dr.xcommon + (dr.y + dr.ycheck) * (Pc[1] + Pc[3]) + dr.ycommon * sumP;
    Mat K = dr.x + dr.xhat + dr.xcommon + (dr.y + dr.ycheck + dr.ycommon) * sumP;
    Mat R_x = aj.x + aj.y * Pc[0];
    Mat R_h = aj.y * Pc[1] + aj.yhat * (Pc[0] + Pc[1]);
    Mat R_c = aj.y * Pc[2];
    Mat R_b = aj.xcommon + aj.y * Pc[3] + aj.yhat * (Pc[2] + Pc[3]) + aj.ycommon * sumP;

    for (int j = 0; j < 3; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        const Mat& Sg = s.Sigma[ju];
        const Mat& Sh = s.SigmaHat[ju];
        const Mat& Sc = s.SigmaTilde[ju];
        const Mat& Sb = s.SigmaBar[ju];
        F_x += dr.z[ju] * Sg;
        F_h += dr.z[ju] * Sh;
        F_c += dr.z[ju] * Sc + dr.zcheck[ju] * (Sg + Sc);
        F_b += dr.z[ju] * Sb + dr.zcheck[ju] * (Sh + Sb) + dr.zcommon[ju] * SS[ju];
        G_h += dr.z[ju] * (Sg + Sh);
        G_b += dr.z[ju] * (Sc + Sb) + (dr.zcheck[ju] + dr.zcommon[ju]) * SS[ju];
        H_c += (dr.z[ju] + dr.zcheck[ju]) * (Sg + Sc);
        H_b += (dr.z[ju] + dr.zcheck[ju]) * (Sh + Sb) + dr.zcommon[ju] * SS[ju];
        K += (dr.z[ju] + dr.zcheck[ju] + dr.zcommon[ju]) * SS[ju];
        R_x += aj.z[ju] * Sg;
        R_h += aj.z[ju] * Sh + aj.zhat[ju] * (Sg + Sh);
        R_c += aj.z[ju] * Sc;
        R_b += aj.z[ju] * Sb + aj.zhat[ju] * (Sc + Sb) + aj.zcommon[ju] * SS[ju];
    }
    (void)n2;
    dPc[0] = -(Pc[0] * F_x + R_x);
    dPc[1] = -(Pc[0] * F_h + Pc[1] * G_h + R_h);
    dPc[2] = -(Pc[0] * F_c + Pc[2] * H_c + R_c);
    dPc[3] = -(Pc[0] * F_b + Pc[1] * G_b + Pc[2] * H_b + Pc[3] * K + R_b);
}

GeneralU2Gains general_u2_gains(const GameSpec& spec, const LeaderBlocksAt& b,
                                const std::array<Mat, 4>& Pc, const SigmaSet& s) {
    const Mat sumP = Pc[0] + Pc[1] + Pc[2] + Pc[3];
    Mat on_check = b.u2_ycheck * (Pc[0] + Pc[2]);
    Mat on_common = b.u2_xcommon + b.u2_ycheck * (Pc[1] + Pc[3]) + b.u2_ycommon * sumP;
    for (int j = 0; j < 3; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        on_check += b.u2_zcheck[ju] * (s.Sigma[ju] + s.SigmaTilde[ju]);
        on_common += b.u2_zcheck[ju] * (s.SigmaHat[ju] + s.SigmaBar[ju]) +
                     b.u2_zcommon[ju] * (s.Sigma[ju] + s.SigmaHat[ju] + s.SigmaTilde[ju] +
                                         s.SigmaBar[ju]);
    }
    Eigen::PartialPivLU<Mat> lu(spec.N2);
    GeneralU2Gains out;
    out.on_xcheck = -lu.solve(on_check);
    out.on_common = -lu.solve(on_common);
    return out;
}

GeneralU1Gains general_u1_gains(const GameSpec& spec, const FollowerGainsAt& g,
                                const LeaderBlocksAt& b, const std::array<Mat, 4>& Pc,
                                const SigmaSet& s) {
    const int n = spec.n;
    const int k1 = spec.k1;
    // u1 = fx xhat + fphi phihat + fb1 beta1hat + fb3 beta3hat + fu2 u2hat,
    // with phihat = [Yhat]_p, betaihat_i = [Zhat_i]_p, and u2hat the
    // follower's estimate of the leader's feedback.
    auto left = [&](const Mat& m) {
        Mat r = Mat::Zero(k1, 2 * n);
        r.leftCols(n) = m;
        return r;
    };
    auto pslot = [&](const Mat& m) {  // applies m to the p-rows of a 2n argument
        Mat r = Mat::Zero(k1, 2 * n);
        r.rightCols(n) = m;
        return r;
    };
    const Mat sumP = Pc[0] + Pc[1] + Pc[2] + Pc[3];

    Mat on_hat = left(g.fx) + pslot(g.fphi) * (Pc[0] + Pc[1]);
    Mat on_common = pslot(g.fphi) * (Pc[2] + Pc[3]);
    // Zhat_1 and Zhat_3 through the step-3 representation.
    on_hat += pslot(g.fb1) * s.Nhat[0] + pslot(g.fb3) * s.Nhat[2];
    on_common += pslot(g.fb1) * s.Ndbl[0] + pslot(g.fb3) * s.Ndbl[2];
    // Conditioning the leader's feedback on the follower's filtration turns
    // Ycheck into Yhatcheck and Zcheck_j into Zhatcheck_j, so everything
    // multiplies Xhatcheck:
    Mat u2hat = (b.u2_ycheck + b.u2_ycommon) * sumP + b.u2_xcommon;
    for (int j = 0; j < 3; ++j)
        u2hat += (b.u2_zcheck[static_cast<std::size_t>(j)] +
                  b.u2_zcommon[static_cast<std::size_t>(j)]) *
                 s.Ncal[static_cast<std::size_t>(j)];
    on_common += g.fu2 * (-spec.N2.partialPivLu().solve(u2hat));
    return {on_hat, on_common};
}

}  // namespace stacklq
