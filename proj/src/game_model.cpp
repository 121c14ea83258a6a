#include "stacklq/game_model.hpp"

#include <Eigen/Eigenvalues>
#include <sstream>

namespace stacklq {

namespace {

constexpr double kSymTol = 1e-12;
constexpr double kPsdTol = 1e-10;

void check_shape(std::vector<ValidationIssue>& issues, const Mat& m, int rows, int cols,
                 const std::string& field) {
    if (m.rows() != rows || m.cols() != cols) {
        std::ostringstream os;
        os << "dimension mismatch: expected " << rows << "x" << cols << ", got " << m.rows()
           << "x" << m.cols();
        issues.push_back({field, os.str()});
    }
}

// Returns false (and reports) when M is not symmetric to tolerance.
bool check_symmetric(std::vector<ValidationIssue>& issues, const Mat& m,
                     const std::string& field) {
    if (m.rows() != m.cols()) return false;
    const double dev = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (dev > kSymTol) {
        issues.push_back({field, "not symmetric: max|M - M^T| = " + std::to_string(dev)});
        return false;
    }
    return true;
}

double min_eigenvalue(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
    return es.eigenvalues().minCoeff();
}

void check_psd(std::vector<ValidationIssue>& issues, const Mat& m, const std::string& field) {
    if (!check_symmetric(issues, m, field)) return;
    const double lmin = min_eigenvalue(m);
    if (lmin < -kPsdTol)
        issues.push_back({field, field + " not nonnegative definite (min eig " +
                                     std::to_string(lmin) + ")"});
}

void check_pd(std::vector<ValidationIssue>& issues, const Mat& m, const std::string& field) {
    if (!check_symmetric(issues, m, field)) return;
    const double lmin = min_eigenvalue(m);
    if (lmin < kPsdTol)
        issues.push_back(
            {field, field + " not positive definite (min eig " + std::to_string(lmin) + ")"});
}

}  // namespace

GameSpec GameSpec::zeros(int n, int k1, int k2) {
    GameSpec s;
    s.n = n;
    s.k1 = k1;
    s.k2 = k2;
    for (int i = 0; i < 4; ++i) {
        s.A[i] = Mat::Zero(n, n);
        s.B[i] = Mat::Zero(n, k1);
        s.C[i] = Mat::Zero(n, k2);
    }
    s.Q1 = Mat::Zero(n, n);
    s.N1 = Mat::Identity(k1, k1);
    s.G1 = Mat::Zero(n, n);
    s.Q2 = Mat::Zero(n, n);
    s.N2 = Mat::Identity(k2, k2);
    s.G2 = Mat::Zero(n, n);
    s.x0 = Vec::Zero(n);
    return s;
}

bool ValidationReport::mentions(const std::string& field) const {
    for (const auto& issue : issues)
        if (issue.field == field) return true;
    return false;
}

std::string ValidationReport::to_string() const {
    std::ostringstream os;
    for (const auto& issue : issues) os << issue.field << ": " << issue.message << "\n";
    return os.str();
}

ValidationReport validate_spec(const GameSpec& spec) {
    ValidationReport report;
    auto& issues = report.issues;

    if (spec.n < 1) issues.push_back({"n", "state dimension must be >= 1"});
    if (spec.k1 < 1) issues.push_back({"k1", "follower control dimension must be >= 1"});
    if (spec.k2 < 1) issues.push_back({"k2", "leader control dimension must be >= 1"});
    if (!report.ok()) return report;

    for (int i = 0; i < 4; ++i) {
        const std::string idx = std::to_string(i);
        check_shape(issues, spec.A[i], spec.n, spec.n, "A" + idx);
        check_shape(issues, spec.B[i], spec.n, spec.k1, "B" + idx);
        check_shape(issues, spec.C[i], spec.n, spec.k2, "C" + idx);
    }
    check_shape(issues, spec.Q1, spec.n, spec.n, "Q1");
    check_shape(issues, spec.N1, spec.k1, spec.k1, "N1");
    check_shape(issues, spec.G1, spec.n, spec.n, "G1");
    check_shape(issues, spec.Q2, spec.n, spec.n, "Q2");
    check_shape(issues, spec.N2, spec.k2, spec.k2, "N2");
    check_shape(issues, spec.G2, spec.n, spec.n, "G2");
    if (spec.x0.size() != spec.n)
        issues.push_back({"x0", "initial state has wrong length"});
    if (!report.ok()) return report;

    check_psd(issues, spec.Q1, "Q1");
    check_psd(issues, spec.G1, "G1");
    check_psd(issues, spec.Q2, "Q2");
    check_psd(issues, spec.G2, "G2");
    check_psd(issues, spec.N1, "N1");
    check_pd(issues, spec.N2, "N2");

    for (int i = 0; i < 4; ++i)
        if (!spec.A[i].allFinite() || !spec.B[i].allFinite() || !spec.C[i].allFinite())
            issues.push_back({"A/B/C" + std::to_string(i), "non-finite entry"});

    return report;
}

ValidationReport validate_spec(const CidSpec& spec) {
    ValidationReport report;
    auto& issues = report.issues;
    if (spec.Q1 < 0) issues.push_back({"Q1", "must be >= 0"});
    if (spec.G1 < 0) issues.push_back({"G1", "must be >= 0"});
    if (spec.Q2 < 0) issues.push_back({"Q2", "must be >= 0"});
    if (spec.G2 < 0) issues.push_back({"G2", "must be >= 0"});
    if (spec.N1 == 0) issues.push_back({"N1", "must be nonzero"});
    if (spec.N2 == 0) issues.push_back({"N2", "must be nonzero"});
    return report;
}

GameSpec embed_cid(const CidSpec& c) {
    GameSpec s = GameSpec::zeros(1, 1, 1);
    s.A[0](0, 0) = c.A0;
    s.A[1](0, 0) = c.A1;
    s.A[2](0, 0) = c.A2;
    s.A[3](0, 0) = c.A3;
    s.B[0](0, 0) = c.B0;
    s.C[0](0, 0) = c.C0;
    s.Q1(0, 0) = c.Q1;
    s.N1(0, 0) = c.N1;
    s.G1(0, 0) = c.G1;
    s.Q2(0, 0) = c.Q2;
    s.N2(0, 0) = c.N2;
    s.G2(0, 0) = c.G2;
    s.x0(0) = c.x0;
    return s;
}

}  // namespace stacklq
