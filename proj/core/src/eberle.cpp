// SPDX-License-Identifier: Apache-2.0
#include "arc/eberle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace arc {
namespace {

// Nested integrals are relative-accuracy problems (I(R2) can reach 1e11).
constexpr double kNestedRelTol = 1e-12;
constexpr int kMaxDepth = 30;
// exp(-700) is still a normal double; beyond that phi(R2) underflows.
constexpr double kMaxProfileExponent = 700.0;

double profile_exponent(double r, double M, double beta, double Q) {
    return M * beta / 8.0 * r * r + 2.0 * Q * r;
}

// Phi over [a, b] split into panels no longer than 0.5.
double integrate_phi(double a, double b, double M, double beta, double Q, double abs_tol) {
    if (b <= a) return 0.0;
    const auto panels = static_cast<std::size_t>(std::ceil((b - a) / 0.5));
    const double width = (b - a) / static_cast<double>(panels);
    auto integrand = [&](double s) { return phi(s, M, beta, Q); };
    double total = 0.0;
    for (std::size_t k = 0; k < panels; ++k) {
        const double lo = a + width * static_cast<double>(k);
        const double hi = (k + 1 == panels) ? b : lo + width;
        total += adaptive_simpson(integrand, lo, hi, abs_tol / static_cast<double>(panels), 1e-14,
                                  kMaxDepth);
    }
    return total;
}

// Node tables of Phi and I(r) = int_0^r Phi/phi for an arbitrary node set.
struct ProfileTables {
    double M, beta, Q, tol;
    std::vector<double> nodes;
    std::vector<double> Phi_nodes;
    std::vector<double> inner_nodes;

    double phi_at(double s) const { return std::exp(-profile_exponent(s, M, beta, Q)); }

    double Phi_from(std::size_t i, double r) const {
        if (r == nodes[i]) return Phi_nodes[i];
        auto integrand = [this](double s) { return phi_at(s); };
        return Phi_nodes[i] + adaptive_simpson(integrand, nodes[i], r, tol / 4096.0, 1e-14,
                                               kMaxDepth);
    }

    double inner_from(std::size_t i, double r) const {
        if (r == nodes[i]) return inner_nodes[i];
        auto integrand = [this, i](double s) {
            return Phi_from(i, s) * std::exp(profile_exponent(s, M, beta, Q));
        };
        return inner_nodes[i] +
               adaptive_simpson(integrand, nodes[i], r, 1e-300, kNestedRelTol, kMaxDepth);
    }

    void build() {
        const std::size_t n = nodes.size();
        Phi_nodes.assign(n, 0.0);
        inner_nodes.assign(n, 0.0);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            Phi_nodes[i + 1] = Phi_from(i, nodes[i + 1]);
        }
        for (std::size_t i = 0; i + 1 < n; ++i) {
            inner_nodes[i + 1] = inner_from(i, nodes[i + 1]);
        }
    }
};

std::vector<double> make_nodes(double r1, double r2, std::size_t grid_points) {
    std::vector<double> nodes(grid_points);
    const double h = r2 / static_cast<double>(grid_points - 1);
    for (std::size_t i = 0; i < grid_points; ++i) {
        nodes[i] = h * static_cast<double>(i);
    }
    nodes.back() = r2;
    if (r1 > 0.0 && r1 < r2) {
        auto it = std::lower_bound(nodes.begin(), nodes.end(), r1);
        if (*it != r1) {
            nodes.insert(it, r1);
        }
    }
    return nodes;
}

std::size_t find_node(const std::vector<double>& nodes, double r) {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), r);
    return static_cast<std::size_t>(it - nodes.begin());
}

void check_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument(std::string(what) + " must be positive and finite");
    }
}

}  // namespace

LyapunovConstants lyapunov_constants(double p, double m, double b, double beta,
                                     std::size_t dim) {
    if (!(p >= 2.0)) {
        throw std::invalid_argument("lyapunov_constants: p must be >= 2");
    }
    check_positive(m, "m");
    check_positive(beta, "beta");
    if (!(b >= 0.0)) {
        throw std::invalid_argument("lyapunov_constants: b must be >= 0");
    }
    LyapunovConstants out;
    out.lambda = m * p / 2.0;
    out.L = std::sqrt(2.0 / m * ((static_cast<double>(dim) + p - 2.0) / beta + b));
    out.C = out.lambda * std::pow(out.L, p);
    return out;
}

RegionRadii region_radii(double C, double lambda) {
    check_positive(C, "C");
    check_positive(lambda, "lambda");
    RegionRadii out;
    out.r1 = std::sqrt(2.0 * std::max(0.0, 2.0 * C / lambda - 2.0));
    out.r2 = std::sqrt(2.0 * std::max(0.0, 4.0 * C * (1.0 + 1.0 / lambda) - 2.0));
    return out;
}

double choose_kappa(double M, double beta, double C, double r1) {
    check_positive(M, "M");
    check_positive(beta, "beta");
    check_positive(C, "C");
    if (!(r1 >= 0.0)) {
        throw std::invalid_argument("choose_kappa: R1 must be >= 0");
    }
    if (r1 == 0.0) {
        return 0.5;
    }
    // log(e^x - 1 - x) without cancellation for small x or overflow for large x.
    const double x = 2.0 * r1;
    double log_gap;
    if (x < 1e-3) {
        log_gap = std::log(x * x / 2.0 * (1.0 + x / 3.0 + x * x / 12.0));
    } else if (x < 30.0) {
        log_gap = std::log(std::expm1(x) - x);
    } else {
        log_gap = x + std::log1p(-(1.0 + x) * std::exp(-x));
    }
    const double log_second =
        std::log(2.0) - M * beta * r1 * r1 / 8.0 - std::log(C * beta) - log_gap;
    return std::min(0.5, std::exp(log_second));
}

double q_of_kappa(double kappa) {
    if (!(kappa > 0.0 && kappa < 1.0)) {
        throw std::invalid_argument("q_of_kappa: kappa must lie in (0, 1)");
    }
    return 2.0 * std::sqrt(kappa - kappa * kappa);
}

double phi(double r, double M, double beta, double Q) {
    if (r < 0.0) {
        throw std::invalid_argument("phi: r must be >= 0");
    }
    return std::exp(-profile_exponent(r, M, beta, Q));
}

double Phi(double r, double M, double beta, double Q, double tol) {
    if (r < 0.0) {
        throw std::invalid_argument("Phi: r must be >= 0");
    }
    return integrate_phi(0.0, r, M, beta, Q, tol);
}

ZetaXi zeta_xi(double r1, double r2, double M, double beta, double Q, double tol,
               double xi_cap) {
    if (!(r2 > 0.0)) {
        throw std::invalid_argument("zeta_xi: R2 must be > 0");
    }
    if (!(r1 >= 0.0 && r1 <= r2)) {
        throw std::invalid_argument("zeta_xi: need 0 <= R1 <= R2");
    }
    if (profile_exponent(r2, M, beta, Q) > kMaxProfileExponent) {
        throw std::domain_error("zeta_xi: phi(R2) underflows; constants out of range");
    }
    ProfileTables t{M, beta, Q, tol, make_nodes(r1, r2, 1025), {}, {}};
    t.build();
    ZetaXi out;
    out.zeta = 1.0 / t.inner_nodes.back();
    if (r1 == 0.0) {
        out.xi = xi_cap;
        out.xi_clamped = true;
    } else {
        out.xi = 1.0 / t.inner_nodes[find_node(t.nodes, r1)];
    }
    return out;
}

double contraction_rate(double zeta, double beta, double lambda, double C, double kappa) {
    return std::min({zeta / beta, lambda / 2.0, 2.0 * C * lambda * kappa});
}

double contraction_rate(const EberleCalibration& cal) {
    return contraction_rate(cal.zeta(), cal.inputs().beta, cal.lambda(), cal.C(), cal.kappa());
}

EberleCalibration EberleCalibration::build(const CalibrationInputs& inputs,
                                           const CalibrationOptions& options) {
    check_positive(inputs.m, "m");
    check_positive(inputs.b, "b");
    check_positive(inputs.M, "M");
    check_positive(inputs.beta, "beta");
    if (inputs.dim == 0) {
        throw std::invalid_argument("calibration: dimension must be >= 1");
    }
    if (options.grid_points < 16) {
        throw std::invalid_argument("calibration: need at least 16 grid points");
    }
    EberleCalibration cal;
    cal.inputs_ = inputs;
    cal.options_ = options;
    const auto lyap = lyapunov_constants(2.0, inputs.m, inputs.b, inputs.beta, inputs.dim);
    cal.lambda_ = lyap.lambda;
    cal.C_ = lyap.C + lyap.lambda;
    const auto radii = region_radii(cal.C_, cal.lambda_);
    cal.r1_ = radii.r1;
    cal.r2_ = radii.r2;
    cal.kappa_ = choose_kappa(inputs.M, inputs.beta, cal.C_, cal.r1_);
    cal.Q_ = q_of_kappa(cal.kappa_);
    if (profile_exponent(cal.r2_, inputs.M, inputs.beta, cal.Q_) > kMaxProfileExponent) {
        throw std::domain_error("calibration: phi(R2) underflows; constants out of range");
    }
    cal.tabulate();
    cal.rate_ = contraction_rate(cal);
    return cal;
}

void EberleCalibration::tabulate() {
    ProfileTables t{inputs_.M, inputs_.beta, Q_, options_.quadrature_tolerance,
                    make_nodes(r1_, r2_, options_.grid_points), {}, {}};
    t.build();
    nodes_ = std::move(t.nodes);
    Phi_nodes_ = std::move(t.Phi_nodes);
    inner_nodes_ = std::move(t.inner_nodes);

    zeta_ = 1.0 / inner_nodes_.back();
    if (r1_ == 0.0) {
        xi_ = options_.xi_cap;
        xi_clamped_ = true;
    } else {
        xi_ = 1.0 / inner_nodes_[find_node(nodes_, r1_)];
        xi_clamped_ = false;
    }

    const std::size_t n = nodes_.size();
    f_nodes_.assign(n, 0.0);
    fprime_nodes_.assign(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        auto integrand = [this, i](double s) { return phi_over(s) * g_from(i, s); };
        f_nodes_[i + 1] = f_nodes_[i] + adaptive_simpson(integrand, nodes_[i], nodes_[i + 1],
                                                         1e-300, kNestedRelTol, kMaxDepth);
    }
    for (std::size_t i = 0; i < n; ++i) {
        fprime_nodes_[i] = phi_over(nodes_[i]) * g_from(i, nodes_[i]);
    }
}

double EberleCalibration::phi_over(double s) const {
    return std::exp(-profile_exponent(s, inputs_.M, inputs_.beta, Q_));
}

std::size_t EberleCalibration::panel_of(double r) const {
    auto it = std::upper_bound(nodes_.begin(), nodes_.end(), r);
    std::size_t i = it == nodes_.begin() ? 0 : static_cast<std::size_t>(it - nodes_.begin()) - 1;
    return std::min(i, nodes_.size() - 2);
}

double EberleCalibration::Phi_from(std::size_t node, double r) const {
    if (r == nodes_[node]) return Phi_nodes_[node];
    auto integrand = [this](double s) { return phi_over(s); };
    return Phi_nodes_[node] + adaptive_simpson(integrand, nodes_[node], r,
                                               options_.quadrature_tolerance / 4096.0, 1e-14,
                                               kMaxDepth);
}

double EberleCalibration::inner_from(std::size_t node, double r) const {
    if (r == nodes_[node]) return inner_nodes_[node];
    auto integrand = [this, node](double s) { return Phi_from(node, s) / phi_over(s); };
    return inner_nodes_[node] +
           adaptive_simpson(integrand, nodes_[node], r, 1e-300, kNestedRelTol, kMaxDepth);
}

double EberleCalibration::g_from(std::size_t node, double r) const {
    const double inner = inner_from(node, r);
    double g = 1.0 - zeta_ / 4.0 * inner;
    if (r1_ > 0.0) {
        const double inner_r1 = nodes_[node] < r1_ ? inner : 1.0 / xi_;
        g -= xi_ / 4.0 * inner_r1;
    }
    return g;
}

double EberleCalibration::phi(double r) const {
    if (r < 0.0) {
        throw std::invalid_argument("phi: r must be >= 0");
    }
    return phi_over(r);
}

double EberleCalibration::Phi(double r) const {
    if (r < 0.0) {
        throw std::invalid_argument("Phi: r must be >= 0");
    }
    if (r > r2_) {
        return Phi_nodes_.back() + integrate_phi(r2_, r, inputs_.M, inputs_.beta, Q_,
                                                 options_.quadrature_tolerance);
    }
    return Phi_from(panel_of(r), r);
}

double EberleCalibration::inner_integral(double r) const {
    if (r < 0.0) {
        throw std::invalid_argument("inner_integral: r must be >= 0");
    }
    return inner_from(panel_of(std::min(r, r2_)), std::min(r, r2_));
}

double EberleCalibration::g(double r) const {
    if (r <= 0.0) return 1.0;
    const double rr = std::min(r, r2_);
    return g_from(panel_of(rr), rr);
}

double EberleCalibration::f(double r) const {
    if (r < 0.0) return r;
    if (r >= r2_) return f_nodes_.back();
    const std::size_t i = panel_of(r);
    const double h = nodes_[i + 1] - nodes_[i];
    const double t = (r - nodes_[i]) / h;
    const double f0 = f_nodes_[i];
    const double f1 = f_nodes_[i + 1];
    const double secant = (f1 - f0) / h;
    double m0 = fprime_nodes_[i];
    double m1 = fprime_nodes_[i + 1];
    if (secant <= 0.0) {
        m0 = m1 = 0.0;
    } else {
        // Fritsch-Carlson: keep (m0, m1)/secant inside the radius-3 disc.
        const double a = m0 / secant;
        const double b = m1 / secant;
        const double s = a * a + b * b;
        if (s > 9.0) {
            const double tau = 3.0 / std::sqrt(s);
            m0 = tau * a * secant;
            m1 = tau * b * secant;
        }
    }
    const double t2 = t * t;
    const double t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * f0 + (t3 - 2 * t2 + t) * h * m0 + (-2 * t3 + 3 * t2) * f1 +
           (t3 - t2) * h * m1;
}

double EberleCalibration::f_exact(double r) const {
    if (r < 0.0) return r;
    if (r >= r2_) return f_nodes_.back();
    const std::size_t i = panel_of(r);
    if (r == nodes_[i]) return f_nodes_[i];
    auto integrand = [this, i](double s) { return phi_over(s) * g_from(i, s); };
    return f_nodes_[i] + adaptive_simpson(integrand, nodes_[i], r, 1e-300, kNestedRelTol, kMaxDepth);
}

double EberleCalibration::f_prime(double r) const {
    if (r < 0.0) return 1.0;
    if (r >= r2_) return 0.0;
    return phi_over(r) * g(r);
}

double EberleCalibration::f_second(double r) const {
    if (r < 0.0 || r >= r2_) return 0.0;
    const double slope = -(inputs_.M * inputs_.beta / 4.0 * r + 2.0 * Q_) * f_prime(r);
    if (r == 0.0) return slope;
    const double P = Phi(r);
    double out = slope - zeta_ / 4.0 * P;
    if (r < r1_) {
        out -= xi_ / 4.0 * P;
    }
    return out;
}

double EberleCalibration::lyapunov_weight(std::span<const double> x,
                                          std::span<const double> y) const {
    return 1.0 + kappa_ * (1.0 + dot(x, x)) + kappa_ * (1.0 + dot(y, y));
}

double EberleCalibration::rho2(std::span<const double> x, std::span<const double> y) const {
    if (x.size() != y.size()) {
        throw std::invalid_argument("rho2: dimension mismatch");
    }
    return f(distance(x, y)) * lyapunov_weight(x, y);
}

std::string EberleCalibration::to_json() const {
    nlohmann::ordered_json j;
    j["format"] = "arc-calibration/1";
    j["inputs"] = {{"m", inputs_.m},
                   {"b", inputs_.b},
                   {"M", inputs_.M},
                   {"beta", inputs_.beta},
                   {"dim", inputs_.dim}};
    j["options"] = {{"quadrature_tolerance", options_.quadrature_tolerance},
                    {"grid_points", options_.grid_points},
                    {"xi_cap", options_.xi_cap}};
    j["constants"] = {{"lambda", lambda_}, {"C", C_},     {"R1", r1_},
                      {"R2", r2_},         {"kappa", kappa_}, {"Q", Q_},
                      {"zeta", zeta_},     {"xi", xi_},   {"xi_clamped", xi_clamped_},
                      {"c", rate_}};
    j["grid"] = {{"r", nodes_},
                 {"Phi", Phi_nodes_},
                 {"inner", inner_nodes_},
                 {"f", f_nodes_},
                 {"f_prime", fprime_nodes_}};
    return j.dump(1);
}

EberleCalibration EberleCalibration::from_json(std::string_view text) {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "arc-calibration/1") {
        throw std::runtime_error("calibration JSON: unknown format");
    }
    EberleCalibration cal;
    const auto& in = j.at("inputs");
    cal.inputs_ = {in.at("m").get<double>(), in.at("b").get<double>(), in.at("M").get<double>(),
                   in.at("beta").get<double>(), in.at("dim").get<std::size_t>()};
    const auto& op = j.at("options");
    cal.options_ = {op.at("quadrature_tolerance").get<double>(),
                    op.at("grid_points").get<std::size_t>(), op.at("xi_cap").get<double>()};
    const auto& c = j.at("constants");
    cal.lambda_ = c.at("lambda");
    cal.C_ = c.at("C");
    cal.r1_ = c.at("R1");
    cal.r2_ = c.at("R2");
    cal.kappa_ = c.at("kappa");
    cal.Q_ = c.at("Q");
    cal.zeta_ = c.at("zeta");
    cal.xi_ = c.at("xi");
    cal.xi_clamped_ = c.at("xi_clamped");
    cal.rate_ = c.at("c");
    const auto& g = j.at("grid");
    cal.nodes_ = g.at("r").get<std::vector<double>>();
    cal.Phi_nodes_ = g.at("Phi").get<std::vector<double>>();
    cal.inner_nodes_ = g.at("inner").get<std::vector<double>>();
    cal.f_nodes_ = g.at("f").get<std::vector<double>>();
    cal.fprime_nodes_ = g.at("f_prime").get<std::vector<double>>();
    const std::size_t n = cal.nodes_.size();
    if (n < 2 || cal.Phi_nodes_.size() != n || cal.inner_nodes_.size() != n ||
        cal.f_nodes_.size() != n || cal.fprime_nodes_.size() != n) {
        throw std::runtime_error("calibration JSON: grid arrays have inconsistent lengths");
    }
    return cal;
}

double smoothness_to_rho_constant(const EberleCalibration& cal, double A, double M) {
    const double r2 = cal.r2();
    if (!(r2 > 0.0)) {
        throw std::domain_error("smoothness_to_rho_constant: degenerate calibration (R2 = 0)");
    }
    const double beta = cal.inputs().beta;
    return 2.0 * std::exp(M * beta * r2 * r2 / 8.0 + 2.0 * r2) * std::max(1.0, 1.0 / r2) *
           std::max(A + M / 2.0, (A / 2.0 + M) / cal.kappa());
}

bool CalibrationReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

std::string CalibrationReport::to_json() const {
    nlohmann::ordered_json j;
    j["passed"] = passed();
    j["xi_clamped"] = xi_clamped;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& c : checks) {
        arr.push_back({{"check", c.name},
                       {"margin", c.margin},
                       {"passed", c.passed},
                       {"evaluated", c.evaluated},
                       {"skipped", c.skipped},
                       {"detail", c.detail}});
    }
    j["checks"] = std::move(arr);
    return j.dump(1);
}

namespace {

double generator_value(const EberleCalibration& cal, const EmpiricalLoss& H,
                       std::span<const double> x, GradientWorkspace& ws, Vector& grad) {
    grad.resize(x.size());
    H.gradient(x, grad, ws);
    return -2.0 * dot(grad, x) +
           2.0 * static_cast<double>(cal.inputs().dim) / cal.inputs().beta;
}

double vbar_sum(std::span<const double> x, std::span<const double> y) {
    return 2.0 + dot(x, x) + dot(y, y);
}

}  // namespace

std::optional<double> generator_margin_outside_s1(const EberleCalibration& cal,
                                                  const EmpiricalLoss& F, const EmpiricalLoss& G,
                                                  std::span<const double> x,
                                                  std::span<const double> y) {
    if (vbar_sum(x, y) <= 2.0 * cal.C() / cal.lambda()) {
        return std::nullopt;
    }
    GradientWorkspace ws(x.size());
    Vector grad;
    return -(generator_value(cal, F, x, ws, grad) + generator_value(cal, G, y, ws, grad));
}

std::optional<double> generator_margin_outside_s2(const EberleCalibration& cal,
                                                  const EmpiricalLoss& F, const EmpiricalLoss& G,
                                                  std::span<const double> x,
                                                  std::span<const double> y) {
    const double s = vbar_sum(x, y);
    if (s <= 4.0 * cal.C() * (1.0 + 1.0 / cal.lambda())) {
        return std::nullopt;
    }
    GradientWorkspace ws(x.size());
    Vector grad;
    const double kappa = cal.kappa();
    const double lhs =
        kappa * (generator_value(cal, F, x, ws, grad) + generator_value(cal, G, y, ws, grad));
    const double rhs =
        -cal.lambda() / 2.0 * std::min(1.0, 4.0 * cal.C() * kappa) * (1.0 + kappa * s);
    return rhs - lhs;
}

std::vector<EmpiricalLoss> compatible_catalog(const CalibrationInputs& inputs,
                                              std::uint64_t seed) {
    const std::size_t n = 16;
    const double m0 = 2.0 * inputs.m;
    const double quad_radius = std::sqrt(inputs.b / inputs.m);
    const double cos_radius = 1.0;
    const double amplitude = std::sqrt(2.0 * m0 * inputs.b) / cos_radius;
    std::vector<EmpiricalLoss> out;
    const auto quad_law = DistributionSpec::uniform_sphere(inputs.dim, quad_radius);
    out.emplace_back(PotentialModel::quadratic(inputs.dim, m0, quad_radius),
                     generate_dataset(quad_law, n, seed));
    const auto cos_law = DistributionSpec::uniform_sphere(inputs.dim, cos_radius);
    out.emplace_back(PotentialModel::cosine_quadratic(inputs.dim, m0, amplitude, cos_radius),
                     generate_dataset(cos_law, n, seed + 1));
    return out;
}

CalibrationReport verify_calibration(const EberleCalibration& cal,
                                     std::span<const EmpiricalLoss> catalog, RandomStream& rng,
                                     const VerificationOptions& options) {
    CalibrationReport report;
    report.xi_clamped = cal.xi_clamped();
    const double M = cal.inputs().M;
    const double beta = cal.inputs().beta;
    const double r1 = cal.r1();
    const double r2 = cal.r2();

    {
        CalibrationCheck check;
        check.name = "kappa_inequality";
        const double rhs = 1.0 / (2.0 * cal.C() * beta * cal.kappa());
        const double lhs = r1 > 0.0 ? cal.inner_integral(r1) : 0.0;
        check.margin = rhs - lhs;
        check.evaluated = 1;
        check.passed = check.margin >= -options.kappa_tolerance * rhs;
        std::ostringstream d;
        d << "1/(2 C beta kappa) = " << rhs << ", int_0^R1 Phi/phi = " << lhs
          << ", relative margin = " << check.margin / rhs;
        check.detail = d.str();
        report.checks.push_back(check);
    }

    const std::size_t n_grid = std::max<std::size_t>(options.chain_points, 2);
    std::vector<double> grid(n_grid);
    for (std::size_t j = 0; j < n_grid; ++j) {
        grid[j] = r2 * static_cast<double>(j) / static_cast<double>(n_grid - 1);
    }
    grid.back() = r2;

    {
        CalibrationCheck check;
        check.name = "f_chain";
        const double phi_r2 = cal.phi(r2);
        double worst = std::numeric_limits<double>::infinity();
        double worst_r = 0.0;
        for (double r : grid) {
            const double P = cal.Phi(r);
            const double F = cal.f_exact(r);
            const double m = std::min({P - r * phi_r2, 2.0 * F - P, 2.0 * P - 2.0 * F, 2.0 * r - 2.0 * P});
            if (m < worst) {
                worst = m;
                worst_r = r;
            }
            ++check.evaluated;
        }
        check.margin = worst;
        check.passed = worst >= -options.chain_tolerance;
        std::ostringstream d;
        d << "r phi(R2) <= Phi <= 2f <= 2Phi <= 2r, worst at r = " << worst_r;
        check.detail = d.str();
        report.checks.push_back(check);
    }

    {
        CalibrationCheck check;
        check.name = "f_second_bound";
        const double zeta = cal.zeta();
        const double xi = cal.xi();
        const double Q = cal.Q();
        const double boundary = 1e-12 * std::max(1.0, r2);
        double bound_margin = std::numeric_limits<double>::infinity();
        for (double r : grid) {
            if (r <= 0.0 || std::abs(r - r1) <= boundary || std::abs(r - r2) <= boundary) {
                ++check.skipped;
                continue;
            }
            const double fp = cal.f_prime(r);
            const double fv = cal.f_exact(r);
            double rhs = -(M * beta / 4.0 * r + 2.0 * Q) * fp - zeta / 4.0 * fv;
            if (r < r1) rhs -= xi / 4.0 * fv;
            const double margin = rhs - cal.f_second(r);
            bound_margin = std::min(bound_margin, margin + 1e-12 * (1.0 + std::abs(rhs)));
            ++check.evaluated;
        }
        // Finite-difference check of the analytic f'' away from the kinks.
        const double h = 1e-5 * std::max(1.0, r2);
        double fd_error = 0.0;
        const std::size_t k_points = options.finite_difference_points;
        std::size_t fd_done = 0;
        for (std::size_t k = 0; k < 4 * k_points && fd_done < k_points; ++k) {
            const double r = r2 * (static_cast<double>(k) + 0.5) / static_cast<double>(4 * k_points);
            if (r - 10 * h <= 0.0 || std::abs(r - r1) <= 10 * h || std::abs(r - r2) <= 10 * h) {
                continue;
            }
            const double fd = (cal.f_prime(r + h) - cal.f_prime(r - h)) / (2.0 * h);
            const double analytic = cal.f_second(r);
            fd_error = std::max(fd_error, std::abs(fd - analytic) / std::max(1.0, std::abs(analytic)));
            ++fd_done;
        }
        check.margin = std::min(bound_margin, options.finite_difference_tolerance - fd_error);
        check.passed = check.margin >= 0.0;
        std::ostringstream d;
        d << "bound margin = " << bound_margin << ", max finite-difference error = " << fd_error
          << " over " << fd_done << " points";
        check.detail = d.str();
        report.checks.push_back(check);
    }

    {
        CalibrationCheck check;
        check.name = "generator_outside_S";
        const std::size_t d = cal.inputs().dim;
        const double rho_s1 = 2.0 * cal.C() / cal.lambda() - 2.0;
        const double rho_s2 = 4.0 * cal.C() * (1.0 + 1.0 / cal.lambda()) - 2.0;
        double worst = std::numeric_limits<double>::infinity();
        Vector u(2 * d);
        auto sample_outside = [&](double threshold, std::size_t k) {
            double len = 0.0;
            while (len == 0.0) {
                for (auto& v : u) v = rng.normal();
                len = norm(u);
            }
            // Half the samples hug the boundary, half range far out.
            const double spread = (k % 2 == 0) ? 0.01 : 1.0;
            const double base = std::max(threshold, 1e-12);
            const double sq = base * (1.0 + spread * -std::log(rng.uniform())) + 1e-12;
            const double scale = std::sqrt(sq) / len;
            for (auto& v : u) v *= scale;
        };
        for (const auto& F : catalog) {
            for (const auto& G : catalog) {
                if (F.dim() != d || G.dim() != d) {
                    throw std::invalid_argument("verify_calibration: catalog dimension mismatch");
                }
                for (std::size_t k = 0; k < options.generator_samples; ++k) {
                    sample_outside(rho_s1, k);
                    std::span<const double> x(u.data(), d), y(u.data() + d, d);
                    if (auto m = generator_margin_outside_s1(cal, F, G, x, y)) {
                        worst = std::min(worst, *m);
                        ++check.evaluated;
                    } else {
                        ++check.skipped;
                    }
                    sample_outside(rho_s2, k);
                    if (auto m = generator_margin_outside_s2(cal, F, G, x, y)) {
                        worst = std::min(worst, *m);
                        ++check.evaluated;
                    } else {
                        ++check.skipped;
                    }
                }
            }
        }
        check.margin = catalog.empty() ? 0.0 : worst;
        check.passed = !catalog.empty() && worst >= 0.0;
        std::ostringstream detail;
        detail << catalog.size() << " catalog losses, " << catalog.size() * catalog.size()
               << " ordered (F, G) pairs";
        check.detail = detail.str();
        report.checks.push_back(check);
    }
    return report;
}

}  // namespace arc
