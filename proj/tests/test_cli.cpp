#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

std::string cli_path() { return STACKLQ_CLI_PATH; }

int run_cli(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " 2>/dev/null";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("stacklq_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream f(p);
    f << content;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

const char* kCidConfig = R"({
  "mode": "cid",
  "grid": {"horizon": 1.0, "n_steps": 100},
  "spec": {"A0": 0.1, "A1": 0.2, "A2": 0.2, "A3": 0.2,
           "B0": 1.0, "C0": 1.0,
           "Q1": 1.0, "N1": 1.0, "G1": 1.0,
           "Q2": 1.0, "N2": 1.0, "G2": 1.0, "x0": 1.0},
  "sim": {"n_paths": 800, "seed": 42, "export_paths": 5}
})";

}  // namespace

TEST_CASE("cli: validation failure exits with status 2") {
    const fs::path dir = fresh_dir("invalid");
    const fs::path cfg = dir / "cfg.json";
    write_file(cfg, R"({
      "mode": "cid",
      "grid": {"horizon": 1.0, "n_steps": 50},
      "spec": {"B0": 1.0, "C0": 1.0, "N1": 1.0, "N2": 0.0},
      "sim": {"n_paths": 100, "seed": 1}
    })");
    CHECK(run_cli("run " + cfg.string() + " --output-dir " + (dir / "out").string()) == 2);
}

TEST_CASE("cli: zero weights produce zero control columns") {
    const fs::path dir = fresh_dir("zeroweights");
    const fs::path cfg = dir / "cfg.json";
    write_file(cfg, R"({
      "mode": "cid",
      "grid": {"horizon": 1.0, "n_steps": 50},
      "spec": {"A0": 0.1, "A1": 0.2, "A2": 0.2, "A3": 0.2,
               "B0": 1.0, "C0": 1.0, "N1": 1.0, "N2": 1.0, "x0": 1.0},
      "sim": {"n_paths": 300, "seed": 9, "export_paths": 20}
    })");
    REQUIRE(run_cli("run " + cfg.string() + " --output-dir " + (dir / "out").string()) == 0);
    std::ifstream f(dir / "out" / "summary.csv");
    std::string header;
    REQUIRE(std::getline(f, header));
    // locate the u-columns and check every row holds literal zeros
    std::vector<std::string> cols;
    {
        std::stringstream ss(header);
        std::string c;
        while (std::getline(ss, c, ',')) cols.push_back(c);
    }
    int u1col = -1;
    for (std::size_t i = 0; i < cols.size(); ++i)
        if (cols[i] == "mean_u10") u1col = static_cast<int>(i);
    REQUIRE(u1col >= 0);
    std::string line;
    while (std::getline(f, line)) {
        std::stringstream ss(line);
        std::string c;
        for (int i = 0; std::getline(ss, c, ','); ++i)
            if (i == u1col) CHECK(c == "0");
    }
}

TEST_CASE("cli: reruns are byte-identical") {
    const fs::path dir = fresh_dir("determinism");
    const fs::path cfg = dir / "cfg.json";
    write_file(cfg, kCidConfig);
    REQUIRE(run_cli("run " + cfg.string() + " --output-dir " + (dir / "a").string()) == 0);
    REQUIRE(run_cli("run " + cfg.string() + " --output-dir " + (dir / "b").string()) == 0);
    for (const char* name : {"riccati.csv", "paths.csv", "summary.csv", "verification.json"}) {
        CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
        CHECK(!slurp(dir / "a" / name).empty());
    }
    // A different seed changes the sampled artifacts.
    REQUIRE(run_cli("run " + cfg.string() + " --seed-override 43 --output-dir " +
                    (dir / "c").string()) == 0);
    CHECK(slurp(dir / "a" / "paths.csv") != slurp(dir / "c" / "paths.csv"));
    CHECK(slurp(dir / "a" / "riccati.csv") == slurp(dir / "c" / "riccati.csv"));
}

TEST_CASE("cli: general mode writes blocks, sigma and riccati files") {
    const fs::path dir = fresh_dir("general");
    const fs::path cfg = dir / "cfg.json";
    auto mat = [](double v) {
        return std::string("{\"rows\":1,\"cols\":1,\"data\":[") + std::to_string(v) + "]}";
    };
    std::ostringstream os;
    os << R"({"mode":"general","grid":{"horizon":1.0,"n_steps":60},"spec":{)"
       << "\"n\":1,\"k1\":1,\"k2\":1,"
       << "\"A\":[" << mat(0.1) << "," << mat(0.2) << "," << mat(0.2) << "," << mat(0.2)
       << "],"
       << "\"B\":[" << mat(1.0) << "," << mat(0.0) << "," << mat(0.0) << "," << mat(0.0)
       << "],"
       << "\"C\":[" << mat(1.0) << "," << mat(0.0) << "," << mat(0.0) << "," << mat(0.0)
       << "],"
       << "\"Q1\":" << mat(1) << ",\"N1\":" << mat(1) << ",\"G1\":" << mat(1)
       << ",\"Q2\":" << mat(1) << ",\"N2\":" << mat(1) << ",\"G2\":" << mat(1)
       << ",\"x0\":[1.0]}}";
    write_file(cfg, os.str());
    REQUIRE(run_cli("run " + cfg.string() + " --output-dir " + (dir / "out").string()) == 0);
    CHECK(fs::exists(dir / "out" / "blocks.json"));
    CHECK(fs::exists(dir / "out" / "sigma.csv"));
    CHECK(fs::exists(dir / "out" / "riccati.csv"));
    CHECK(!fs::exists(dir / "out" / "failure.json"));
}

TEST_CASE("cli: general mode reports assumption failures with exit 3") {
    const fs::path dir = fresh_dir("generalfail");
    const fs::path cfg = dir / "cfg.json";
    auto mat = [](double v) {
        return std::string("{\"rows\":1,\"cols\":1,\"data\":[") + std::to_string(v) + "]}";
    };
    // The calibrated adversarial scalar spec (fails A2.2 inside [0, T]).
    std::ostringstream os;
    os << R"({"mode":"general","grid":{"horizon":1.0,"n_steps":60},"spec":{)"
       << "\"n\":1,\"k1\":1,\"k2\":1,"
       << "\"A\":[" << mat(0.338731) << "," << mat(-0.440637) << "," << mat(-0.677511) << ","
       << mat(0.569633) << "],"
       << "\"B\":[" << mat(0.715818) << "," << mat(0.37911) << "," << mat(-1.83342) << ","
       << mat(-0.677401) << "],"
       << "\"C\":[" << mat(1.34335) << "," << mat(-0.603515) << "," << mat(0.280183) << ","
       << mat(-1.49486) << "],"
       << "\"Q1\":" << mat(1.30912) << ",\"N1\":" << mat(0.235693) << ",\"G1\":"
       << mat(1.93117) << ",\"Q2\":" << mat(1.09838) << ",\"N2\":" << mat(0.679553)
       << ",\"G2\":" << mat(1.12381) << ",\"x0\":[1.0]}}";
    write_file(cfg, os.str());
    CHECK(run_cli("run " + cfg.string() + " --output-dir " + (dir / "out").string()) == 3);
    CHECK(fs::exists(dir / "out" / "failure.json"));
    const std::string failure = slurp(dir / "out" / "failure.json");
    CHECK(failure.find("A2.") != std::string::npos);
}

TEST_CASE("cli: principal-agent mode writes its artifact set") {
    const fs::path dir = fresh_dir("pa");
    const fs::path cfg = dir / "cfg.json";
    write_file(cfg, R"({
      "mode": "principal_agent",
      "grid": {"horizon": 1.0, "n_steps": 100},
      "spec": {"r": 0.05, "B": 1.0,
               "sigma": [0.1, 0.1, 0.1], "sigma_bar": [0.1, 0.1, 0.1],
               "y0": 1.0, "m0": 1.0},
      "sim": {"n_paths": 500, "seed": 11, "export_paths": 3}
    })");
    REQUIRE(run_cli("run " + cfg.string() + " --output-dir " + (dir / "out").string()) == 0);
    for (const char* name : {"gains.csv", "paths.csv", "summary.csv", "costs.json",
                             "verification.json"})
        CHECK(fs::exists(dir / "out" / name));
    // Determinism for this mode too.
    REQUIRE(run_cli("run " + cfg.string() + " --output-dir " + (dir / "out2").string()) == 0);
    CHECK(slurp(dir / "out" / "paths.csv") == slurp(dir / "out2" / "paths.csv"));
    CHECK(slurp(dir / "out" / "costs.json") == slurp(dir / "out2" / "costs.json"));
}

TEST_CASE("cli: the verification pipeline passes on the canonical config") {
    const fs::path dir = fresh_dir("verify");
    const fs::path cfg = dir / "cfg.json";
    write_file(cfg, R"({
      "mode": "cid",
      "grid": {"horizon": 1.0, "n_steps": 200},
      "spec": {"A0": 0.1, "A1": 0.2, "A2": 0.2, "A3": 0.2,
               "B0": 1.0, "C0": 1.0,
               "Q1": 1.0, "N1": 1.0, "G1": 1.0,
               "Q2": 1.0, "N2": 1.0, "G2": 1.0, "x0": 1.0},
      "sim": {"n_paths": 4000, "seed": 7, "export_paths": 2},
      "perturbation": {"epsilons": [-0.04, -0.02, 0.02, 0.04],
                       "n_paths": 8000, "scale": 1.0}
    })");
    REQUIRE(run_cli("run " + cfg.string() + " --threads 4 --output-dir " +
                    (dir / "out").string()) == 0);
    const std::string verification = slurp(dir / "out" / "verification.json");
    CHECK(verification.find("\"pass\": true") != std::string::npos);
    CHECK(verification.find("stationarity") != std::string::npos);
    CHECK(verification.find("tower") != std::string::npos);
}
