#include "stacklq/run.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "stacklq/assembly.hpp"
#include "stacklq/equilibrium.hpp"
#include "stacklq/errors.hpp"
#include "stacklq/filtering.hpp"
#include "stacklq/riccati.hpp"

namespace stacklq {

using nlohmann::json;

std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

Mat parse_matrix(const json& j, const std::string& field) {
    if (!j.contains("rows") || !j.contains("cols") || !j.contains("data"))
        throw std::runtime_error(field + ": matrix needs rows/cols/data");
    const int r = j.at("rows").get<int>();
    const int c = j.at("cols").get<int>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<int>(data.size()) != r * c)
        throw std::runtime_error(field + ": data length != rows*cols");
    Mat m(r, c);
    for (int i = 0; i < r; ++i)
        for (int k = 0; k < c; ++k) m(i, k) = data[static_cast<std::size_t>(i * c + k)];
    return m;
}

CidSpec parse_cid(const json& j) {
    CidSpec s;
    s.A0 = j.value("A0", 0.0);
    s.A1 = j.value("A1", 0.0);
    s.A2 = j.value("A2", 0.0);
    s.A3 = j.value("A3", 0.0);
    s.B0 = j.value("B0", 0.0);
    s.C0 = j.value("C0", 0.0);
    s.Q1 = j.value("Q1", 0.0);
    s.N1 = j.value("N1", 1.0);
    s.G1 = j.value("G1", 0.0);
    s.Q2 = j.value("Q2", 0.0);
    s.N2 = j.value("N2", 1.0);
    s.G2 = j.value("G2", 0.0);
    s.x0 = j.value("x0", 0.0);
    return s;
}

GameSpec parse_general(const json& j) {
    GameSpec s;
    s.n = j.at("n").get<int>();
    s.k1 = j.at("k1").get<int>();
    s.k2 = j.at("k2").get<int>();
    for (int i = 0; i < 4; ++i) {
        s.A[static_cast<std::size_t>(i)] = parse_matrix(j.at("A").at(i), "A");
        s.B[static_cast<std::size_t>(i)] = parse_matrix(j.at("B").at(i), "B");
        s.C[static_cast<std::size_t>(i)] = parse_matrix(j.at("C").at(i), "C");
    }
    s.Q1 = parse_matrix(j.at("Q1"), "Q1");
    s.N1 = parse_matrix(j.at("N1"), "N1");
    s.G1 = parse_matrix(j.at("G1"), "G1");
    s.Q2 = parse_matrix(j.at("Q2"), "Q2");
    s.N2 = parse_matrix(j.at("N2"), "N2");
    s.G2 = parse_matrix(j.at("G2"), "G2");
    const auto x0 = j.at("x0").get<std::vector<double>>();
    s.x0 = Vec(static_cast<int>(x0.size()));
    for (std::size_t i = 0; i < x0.size(); ++i) s.x0[static_cast<int>(i)] = x0[i];
    return s;
}

PaParams parse_pa(const json& j, double horizon) {
    PaParams p;
    p.r = j.value("r", 0.0);
    p.B = j.value("B", 1.0);
    const auto sg = j.at("sigma").get<std::vector<double>>();
    const auto sb = j.at("sigma_bar").get<std::vector<double>>();
    if (sg.size() != 3 || sb.size() != 3)
        throw std::runtime_error("principal_agent: sigma and sigma_bar need 3 entries");
    for (int i = 0; i < 3; ++i) {
        p.sigma[static_cast<std::size_t>(i)] = sg[static_cast<std::size_t>(i)];
        p.sigma_bar[static_cast<std::size_t>(i)] = sb[static_cast<std::size_t>(i)];
    }
    p.y0 = j.value("y0", 0.0);
    p.m0 = j.value("m0", 0.0);
    p.T = horizon;
    return p;
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    std::ofstream f(std::filesystem::path(dir) / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open output file " + name);
    return f;
}

json mat_to_json(const Mat& m) {
    json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (int i = 0; i < m.rows(); ++i)
        for (int c = 0; c < m.cols(); ++c) data.push_back(m(i, c));
    j["data"] = data;
    return j;
}

json report_to_json(const PerturbReport& r) {
    json j;
    j["epsilons"] = r.epsilons;
    j["J_means"] = r.J_means;
    j["J_ses"] = r.J_ses;
    j["fit"] = {{"a", r.fit.a}, {"b", r.fit.b}, {"c", r.fit.c},
                {"se_a", r.fit.se_a}, {"se_b", r.fit.se_b}};
    j["pass"] = r.pass;
    return j;
}

json tower_to_json(const TowerReport& t) {
    json j;
    j["max_gap"] = t.max_gap;
    j["n_flagged"] = t.n_flagged;
    j["pass"] = t.pass;
    return j;
}

void write_ensemble_csvs(const PathEnsemble& e, const RunConfig& cfg) {
    const int d = e.d;
    const int n = d / 2;
    {
        auto f = open_out(cfg.output_dir, "paths.csv");
        f << "t,path_id";
        auto names = [&](const char* base) {
            for (int c = 0; c < n; ++c) f << "," << base << (n > 1 ? std::to_string(c) : "");
            for (int c = 0; c < n; ++c)
                f << "," << base << "_p" << (n > 1 ? std::to_string(c) : "");
        };
        names("x");
        names("xhat");
        names("xcheck");
        names("xhatcheck");
        for (int c = 0; c < e.k1; ++c) f << ",u1" << (e.k1 > 1 ? std::to_string(c) : "");
        for (int c = 0; c < e.k2; ++c) f << ",u2" << (e.k2 > 1 ? std::to_string(c) : "");
        f << "\n";
        const int np = std::min(e.n_paths, cfg.export_paths);
        for (int p = 0; p < np; ++p) {
            for (int k = 0; k <= e.grid.n_steps; ++k) {
                f << format_double(e.grid.node(k)) << "," << p;
                auto blockcols = [&](const std::vector<double>& v) {
                    for (int c = 0; c < d; ++c) f << "," << format_double(v[e.sidx(p, k, c)]);
                };
                blockcols(e.X);
                blockcols(e.Xhat);
                blockcols(e.Xcheck);
                blockcols(e.Xhatcheck);
                for (int c = 0; c < e.k1; ++c)
                    f << "," << format_double(e.u1[e.uidx(p, k, c, e.k1)]);
                for (int c = 0; c < e.k2; ++c)
                    f << "," << format_double(e.u2[e.uidx(p, k, c, e.k2)]);
                f << "\n";
            }
        }
    }
    {
        auto f = open_out(cfg.output_dir, "summary.csv");
        f << "node,t";
        auto head = [&](const char* base) {
            for (int c = 0; c < d; ++c)
                f << ",mean_" << base << c << ",se_" << base << c;
        };
        head("x");
        head("xhat");
        head("xcheck");
        head("xhatcheck");
        for (int c = 0; c < e.k1; ++c) f << ",mean_u1" << c << ",se_u1" << c;
        for (int c = 0; c < e.k2; ++c) f << ",mean_u2" << c << ",se_u2" << c;
        f << "\n";
        const double np = e.n_paths;
        for (int k = 0; k <= e.grid.n_steps; ++k) {
            f << k << "," << format_double(e.grid.node(k));
            auto stats = [&](auto getter, int count) {
                for (int c = 0; c < count; ++c) {
                    double s = 0, q = 0;
                    for (int p = 0; p < e.n_paths; ++p) {
                        const double v = getter(p, c);
                        s += v;
                        q += v * v;
                    }
                    const double mean = s / np;
                    const double se =
                        std::sqrt(std::max(0.0, q / np - mean * mean) / np);
                    f << "," << format_double(mean) << "," << format_double(se);
                }
            };
            stats([&](int p, int c) { return e.X[e.sidx(p, k, c)]; }, d);
            stats([&](int p, int c) { return e.Xhat[e.sidx(p, k, c)]; }, d);
            stats([&](int p, int c) { return e.Xcheck[e.sidx(p, k, c)]; }, d);
            stats([&](int p, int c) { return e.Xhatcheck[e.sidx(p, k, c)]; }, d);
            stats([&](int p, int c) { return e.u1[e.uidx(p, k, c, e.k1)]; }, e.k1);
            stats([&](int p, int c) { return e.u2[e.uidx(p, k, c, e.k2)]; }, e.k2);
            f << "\n";
        }
    }
}

int run_cid(const RunConfig& cfg) {
    const CidSpec& spec = *cfg.cid;
    const ValidationReport report = validate_spec(spec);
    if (!report.ok()) {
        std::cerr << report.to_string();
        return 2;
    }
    const LqProblem pb = LqProblem::from_cid(spec);
    const LqSolution sol = lq_solve(pb, cfg.grid);

    {
        auto f = open_out(cfg.output_dir, "riccati.csv");
        f << "node,t,P";
        for (int b = 1; b <= 4; ++b)
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) f << ",P" << b << "_" << i << j;
        f << "\n";
        for (int k = 0; k <= cfg.grid.n_steps; ++k) {
            f << k << "," << format_double(cfg.grid.node(k)) << ","
              << format_double(sol.P.at(k)(0, 0));
            for (const MatPath* mp : {&sol.L.P1, &sol.L.P2, &sol.L.P3, &sol.L.P4})
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j) f << "," << format_double(mp->at(k)(i, j));
            f << "\n";
        }
    }

    const PathEnsemble ensemble =
        simulate_closed_loop(pb, sol, cfg.n_paths, cfg.seed, cfg.threads);
    write_ensemble_csvs(ensemble, cfg);

    json verification;
    const TowerReport tower = tower_check(ensemble);
    verification["tower"] = tower_to_json(tower);
    const CostEstimate j1 = evaluate_cost_lq(ensemble, pb.Q1, pb.N1, pb.G1, Player::follower);
    const CostEstimate j2 = evaluate_cost_lq(ensemble, pb.Q2, pb.N2, pb.G2, Player::leader);
    verification["costs"] = {{"J1", j1.mean}, {"J1_se", j1.std_error},
                             {"J2", j2.mean}, {"J2_se", j2.std_error}};
    bool pass = tower.pass;
    if (cfg.run_perturbation) {
        PerturbDirection df{Player::follower, Vec::Ones(1), Vec::Ones(1), cfg.perturb_scale};
        PerturbDirection dl{Player::leader, Vec::Ones(1), Vec::Ones(1), cfg.perturb_scale};
        const PerturbReport rf = lq_stationarity_test(pb, sol, df, cfg.epsilons,
                                                      cfg.perturb_paths, cfg.seed, cfg.threads);
        const PerturbReport rl = lq_stationarity_test(pb, sol, dl, cfg.epsilons,
                                                      cfg.perturb_paths, cfg.seed, cfg.threads);
        verification["stationarity"] = {{"follower", report_to_json(rf)},
                                        {"leader", report_to_json(rl)}};
        pass = pass && rf.pass && rl.pass;
    }
    verification["pass"] = pass;
    auto f = open_out(cfg.output_dir, "verification.json");
    f << verification.dump(2) << "\n";
    return 0;
}

int run_general(const RunConfig& cfg) {
    const GameSpec& spec = *cfg.general;
    const ValidationReport report = validate_spec(spec);
    if (!report.ok()) {
        std::cerr << report.to_string();
        return 2;
    }

    const GeneralLeaderResult res = attempt_general_leader_system(spec, cfg.grid);

    // Block inspection at both endpoints, independent of solvability.
    {
        const MatPath P1 = solve_follower_riccati(spec, cfg.grid);
        json blocks;
        for (const int k : {0, cfg.grid.n_steps}) {
            const FollowerGainsAt g = follower_gains_at(spec, P1.at(k), cfg.grid.node(k));
            const LeaderBlocksAt b = build_leader_blocks_at(spec, g, P1.at(k));
            json jb;
            jb["t"] = cfg.grid.node(k);
            jb["drift"] = {{"on_x", mat_to_json(b.drift.x)},
                           {"on_xhat", mat_to_json(b.drift.xhat)},
                           {"on_xcommon", mat_to_json(b.drift.xcommon)},
                           {"on_y", mat_to_json(b.drift.y)},
                           {"on_ycheck", mat_to_json(b.drift.ycheck)},
                           {"on_ycommon", mat_to_json(b.drift.ycommon)}};
            for (int i = 0; i < 3; ++i) {
                json jd = {{"on_x", mat_to_json(b.dw[static_cast<std::size_t>(i)].x)},
                           {"on_xhat", mat_to_json(b.dw[static_cast<std::size_t>(i)].xhat)},
                           {"on_xcommon",
                            mat_to_json(b.dw[static_cast<std::size_t>(i)].xcommon)},
                           {"on_y", mat_to_json(b.dw[static_cast<std::size_t>(i)].y)},
                           {"on_ycheck", mat_to_json(b.dw[static_cast<std::size_t>(i)].ycheck)},
                           {"on_ycommon",
                            mat_to_json(b.dw[static_cast<std::size_t>(i)].ycommon)}};
                json zs = json::array(), zc = json::array(), zb = json::array();
                for (int j = 0; j < 3; ++j) {
                    zs.push_back(mat_to_json(b.dw[static_cast<std::size_t>(i)].z[static_cast<std::size_t>(j)]));
                    zc.push_back(mat_to_json(b.dw[static_cast<std::size_t>(i)].zcheck[static_cast<std::size_t>(j)]));
                    zb.push_back(mat_to_json(b.dw[static_cast<std::size_t>(i)].zcommon[static_cast<std::size_t>(j)]));
                }
                jd["on_z"] = zs;
                jd["on_zcheck"] = zc;
                jd["on_zcommon"] = zb;
                jb["dw" + std::to_string(i + 1)] = jd;
            }
            jb["adj"] = {{"on_x", mat_to_json(b.adj.x)},
                         {"on_xcommon", mat_to_json(b.adj.xcommon)},
                         {"on_y", mat_to_json(b.adj.y)},
                         {"on_yhat", mat_to_json(b.adj.yhat)},
                         {"on_ycommon", mat_to_json(b.adj.ycommon)}};
            blocks[k == 0 ? "t0" : "tT"] = jb;
        }
        auto f = open_out(cfg.output_dir, "blocks.json");
        f << blocks.dump(2) << "\n";
    }

    if (!res.ok) {
        json failure;
        failure["node"] = res.failure->node;
        failure["t"] = res.failure->t;
        failure["which"] = res.failure->which;
        failure["kind"] = res.failure->kind == GeneralLeaderResult::FailureKind::assumption
                              ? "assumption"
                              : "blow-up";
        auto f = open_out(cfg.output_dir, "failure.json");
        f << failure.dump(2) << "\n";
        std::cerr << "general leader system failed: " << res.failure->which << " at t="
                  << res.failure->t << "\n";
        return res.failure->kind == GeneralLeaderResult::FailureKind::assumption ? 3 : 4;
    }

    const int n2 = 2 * spec.n;
    {
        auto f = open_out(cfg.output_dir, "sigma.csv");
        f << "node,t";
        auto head = [&](const char* base) {
            for (int i = 1; i <= 3; ++i)
                for (int r = 0; r < n2; ++r)
                    for (int c = 0; c < n2; ++c)
                        f << "," << base << i << "_" << r << c;
        };
        head("Sigma");
        head("SigmaHat");
        head("SigmaTilde");
        head("SigmaBar");
        f << ",cond1,cond2,cond3,cond4\n";
        for (int k = 0; k <= cfg.grid.n_steps; ++k) {
            const FollowerGainsAt g =
                follower_gains_at(spec, res.follower_P.at(k), cfg.grid.node(k));
            const LeaderBlocksAt b = build_leader_blocks_at(spec, g, res.follower_P.at(k));
            const std::array<Mat, 4> Pc{res.P1.at(k), res.P2.at(k), res.P3.at(k),
                                        res.P4.at(k)};
            const SigmaSet s = compute_sigma_chain(b, Pc, cfg.grid.node(k));
            f << k << "," << format_double(cfg.grid.node(k));
            auto dump = [&](const std::array<Mat, 3>& ms) {
                for (const Mat& m : ms)
                    for (int r = 0; r < n2; ++r)
                        for (int c = 0; c < n2; ++c) f << "," << format_double(m(r, c));
            };
            dump(s.Sigma);
            dump(s.SigmaHat);
            dump(s.SigmaTilde);
            dump(s.SigmaBar);
            for (int i = 0; i < 4; ++i)
                f << "," << format_double(s.cond[static_cast<std::size_t>(i)]);
            f << "\n";
        }
    }
    {
        auto f = open_out(cfg.output_dir, "riccati.csv");
        f << "node,t";
        for (int b = 1; b <= 4; ++b)
            for (int i = 0; i < n2; ++i)
                for (int j = 0; j < n2; ++j) f << ",P" << b << "_" << i << j;
        f << "\n";
        for (int k = 0; k <= cfg.grid.n_steps; ++k) {
            f << k << "," << format_double(cfg.grid.node(k));
            for (const MatPath* mp : {&res.P1, &res.P2, &res.P3, &res.P4})
                for (int i = 0; i < n2; ++i)
                    for (int j = 0; j < n2; ++j) f << "," << format_double(mp->at(k)(i, j));
            f << "\n";
        }
    }
    return 0;
}

int run_pa(const RunConfig& cfg) {
    const PaParams& params = *cfg.pa;
    if (!(params.T > 0)) {
        std::cerr << "T: horizon must be positive\n";
        return 2;
    }
    const PaSolution sol = solve_pa(params, cfg.grid);
    const PaGame game = build_pa_game(params);

    {
        auto f = open_out(cfg.output_dir, "gains.csv");
        f << "node,t";
        const char* controls[4] = {"e", "c", "s", "d"};
        const char* args[2] = {"hat", "common"};
        for (int u = 0; u < 4; ++u)
            for (int a = 0; a < 2; ++a)
                for (int c = 0; c < 4; ++c)
                    f << "," << controls[u] << "_" << (u < 2 ? args[a] : (a == 0 ? "check" : "common"))
                      << c;
        f << "\n";
        for (int k = 0; k <= cfg.grid.n_steps; ++k) {
            f << k << "," << format_double(cfg.grid.node(k));
            auto row = [&](const MatPath& mp, int r) {
                for (int c = 0; c < 4; ++c) f << "," << format_double(mp.at(k)(r, c));
            };
            row(sol.agent_gain_hat, 0);
            row(sol.agent_gain_cross, 0);
            row(sol.agent_gain_hat, 1);
            row(sol.agent_gain_cross, 1);
            row(sol.principal_gain_check, 0);
            row(sol.principal_gain_cross, 0);
            row(sol.principal_gain_check, 1);
            row(sol.principal_gain_cross, 1);
            f << "\n";
        }
    }

    const PaSimResult sim =
        simulate_pa(params, sol, cfg.grid, cfg.n_paths, cfg.seed, cfg.threads);
    write_ensemble_csvs(sim.ensemble, cfg);
    {
        json costs;
        costs["J1"] = {{"mean", sim.J1.mean}, {"se", sim.J1.std_error}};
        costs["J2"] = {{"mean", sim.J2.mean}, {"se", sim.J2.std_error}};
        auto f = open_out(cfg.output_dir, "costs.json");
        f << costs.dump(2) << "\n";
    }

    json verification;
    const TowerReport tower = tower_check(sim.ensemble);
    verification["tower"] = tower_to_json(tower);
    bool pass = tower.pass;
    if (cfg.run_perturbation) {
        // Perturb the convex control components: the agent's consumption and
        // the principal's payment, both reading the physical y-coordinate.
        Vec cw_agent(2), cw_principal(2), obs(2);
        cw_agent << 0, 1;
        cw_principal << 1, 0;
        obs << 1, 0;
        PerturbDirection df{Player::follower, cw_agent, obs, cfg.perturb_scale};
        PerturbDirection dl{Player::leader, cw_principal, obs, cfg.perturb_scale};
        const PerturbReport rf = lq_stationarity_test(game.lq, sol.lq, df, cfg.epsilons,
                                                      cfg.perturb_paths, cfg.seed, cfg.threads);
        const PerturbReport rl = lq_stationarity_test(game.lq, sol.lq, dl, cfg.epsilons,
                                                      cfg.perturb_paths, cfg.seed, cfg.threads);
        verification["stationarity"] = {{"follower", report_to_json(rf)},
                                        {"leader", report_to_json(rl)}};
        pass = pass && rf.pass && rl.pass;
    }
    verification["pass"] = pass;
    auto f = open_out(cfg.output_dir, "verification.json");
    f << verification.dump(2) << "\n";
    return 0;
}

}  // namespace

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    json j;
    in >> j;

    RunConfig cfg;
    cfg.mode = j.at("mode").get<std::string>();
    const json& grid = j.at("grid");
    cfg.grid = TimeGrid(grid.at("horizon").get<double>(), grid.at("n_steps").get<int>());

    if (cfg.mode == "cid")
        cfg.cid = parse_cid(j.at("spec"));
    else if (cfg.mode == "general")
        cfg.general = parse_general(j.at("spec"));
    else if (cfg.mode == "principal_agent")
        cfg.pa = parse_pa(j.at("spec"), cfg.grid.horizon);
    else
        throw std::runtime_error("unknown mode " + cfg.mode);

    if (j.contains("sim")) {
        cfg.n_paths = j.at("sim").value("n_paths", cfg.n_paths);
        cfg.seed = j.at("sim").value("seed", cfg.seed);
        cfg.export_paths = j.at("sim").value("export_paths", cfg.export_paths);
    }
    if (j.contains("perturbation")) {
        cfg.run_perturbation = true;
        const json& p = j.at("perturbation");
        if (p.contains("epsilons")) cfg.epsilons = p.at("epsilons").get<std::vector<double>>();
        cfg.perturb_paths = p.value("n_paths", cfg.perturb_paths);
        cfg.perturb_scale = p.value("scale", cfg.perturb_scale);
    }
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    return cfg;
}

int run(const RunConfig& cfg) {
    try {
        if (cfg.mode == "cid") return run_cid(cfg);
        if (cfg.mode == "general") return run_general(cfg);
        if (cfg.mode == "principal_agent") return run_pa(cfg);
        std::cerr << "unknown mode " << cfg.mode << "\n";
        return 2;
    } catch (const AssumptionViolated& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const NonFiniteError& e) {
        std::cerr << e.what() << "\n";
        return 4;
    }
}

}  // namespace stacklq
