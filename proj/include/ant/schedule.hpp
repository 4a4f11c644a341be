#pragma once

// Diffusion noise schedules.
//
// A schedule of T steps is defined by per-step noise rates beta_t in (0,1),
// t = 1..T. Derived quantities:
//   alpha_t     = 1 - beta_t
//   alpha_bar_t = prod_{s<=t} alpha_s          (signal fraction, alpha_bar_0 := 1)
//   sigma^2_t   = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t
// sigma^2_1 is exactly 0, so the final denoising step is deterministic.
//
// Three parametric families are provided. Linear spaces beta evenly between
// two endpoints. Cosine and sigmoid define alpha_bar directly on t/T and
// derive beta from successive ratios, clamped at 0.999 so alpha_bar stays
// positive when the raw curve reaches zero at t = T; tau acts as an exponent
// on the cosine curve and as the logistic temperature for the sigmoid curve.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ant {

inline constexpr double kDefaultBetaFirst = 1e-4;
inline constexpr double kDefaultBetaLast = 0.1;
inline constexpr double kMaxBeta = 0.999;
inline constexpr double kCosineOffset = 0.008;
inline constexpr double kSnrFloor = 1e-6;  // sqrt(alpha_bar_T) after zero-terminal-SNR rescale

enum class Family { linear, cosine, sigmoid, tabulated };

inline const char* family_name(Family f) {
    switch (f) {
        case Family::linear: return "linear";
        case Family::cosine: return "cosine";
        case Family::sigmoid: return "sigmoid";
        case Family::tabulated: return "tabulated";
    }
    return "?";
}

struct ScheduleSpec {
    Family family = Family::linear;
    int steps = 0;
    double tau = 0.0;                       // cosine/sigmoid shape parameter
    double beta_first = kDefaultBetaFirst;  // linear endpoints
    double beta_last = kDefaultBetaLast;
    std::string table_ref;                  // provenance label for tabulated specs

    friend bool operator==(const ScheduleSpec&, const ScheduleSpec&) = default;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

// "2" reads oddly as a temperature, so integral taus keep one decimal.
inline std::string format_tau(double tau) {
    std::string s = format_double(tau);
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos) s += ".0";
    return s;
}

}  // namespace detail

// Short human name, e.g. Lin(100), Cos(75,2.0), Sig(50,0.5).
inline std::string display_name(const ScheduleSpec& spec) {
    switch (spec.family) {
        case Family::linear: return "Lin(" + std::to_string(spec.steps) + ")";
        case Family::cosine:
            return "Cos(" + std::to_string(spec.steps) + "," + detail::format_tau(spec.tau) + ")";
        case Family::sigmoid:
            return "Sig(" + std::to_string(spec.steps) + "," + detail::format_tau(spec.tau) + ")";
        case Family::tabulated: return "Table(" + std::to_string(spec.steps) + ")";
    }
    return "?";
}

// Machine-readable spec string, the same syntax parse_schedule_spec accepts.
inline std::string spec_string(const ScheduleSpec& spec) {
    switch (spec.family) {
        case Family::linear: return "lin:T=" + std::to_string(spec.steps);
        case Family::cosine:
            return "cos:T=" + std::to_string(spec.steps) + ",tau=" + detail::format_tau(spec.tau);
        case Family::sigmoid:
            return "sig:T=" + std::to_string(spec.steps) + ",tau=" + detail::format_tau(spec.tau);
        case Family::tabulated:
            return "table:@" + (spec.table_ref.empty() ? std::string("inline") : spec.table_ref);
    }
    return "?";
}

struct Schedule {
    ScheduleSpec spec;
    std::vector<double> beta;           // beta[t-1] is the rate at step t
    std::vector<double> alpha;          // 1 - beta
    std::vector<double> alpha_bar;      // running product of alpha
    std::vector<double> posterior_var;  // sigma^2_t, posterior_var[0] == 0

    int steps() const { return static_cast<int>(beta.size()); }
    double beta_at(int t) const { return beta[static_cast<std::size_t>(t - 1)]; }
    double alpha_at(int t) const { return alpha[static_cast<std::size_t>(t - 1)]; }
    // alpha_bar with the t = 0 convention alpha_bar_0 = 1.
    double alpha_bar_at(int t) const {
        return t == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(t - 1)];
    }
    double posterior_var_at(int t) const { return posterior_var[static_cast<std::size_t>(t - 1)]; }
};

namespace detail {

// Derives alpha, alpha_bar and posterior variances from beta and checks the
// schedule invariants.
inline Schedule finalize_schedule(ScheduleSpec spec, std::vector<double> beta) {
    if (beta.empty()) throw std::invalid_argument("schedule needs at least one step");
    Schedule s;
    s.spec = std::move(spec);
    s.spec.steps = static_cast<int>(beta.size());
    s.beta = std::move(beta);
    s.alpha.resize(s.beta.size());
    s.alpha_bar.resize(s.beta.size());
    s.posterior_var.resize(s.beta.size());

    double prod = 1.0;
    for (std::size_t i = 0; i < s.beta.size(); ++i) {
        double b = s.beta[i];
        if (!(b > 0.0) || !(b < 1.0)) {
            throw std::invalid_argument("beta_" + std::to_string(i + 1) + " = " + format_double(b) +
                                        " is outside (0, 1)");
        }
        double prev = prod;
        s.alpha[i] = 1.0 - b;
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
        if (!(prod > 0.0) || prod >= prev) {
            throw std::invalid_argument("alpha_bar must stay in (0, 1) and strictly decrease");
        }
        // sigma^2_t = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t; zero at t = 1
        s.posterior_var[i] = (1.0 - prev) / (1.0 - prod) * b;
    }
    return s;
}

// Builds beta from a raw alpha_bar curve evaluated at t = 0..T (raw[0] must be
// 1). Ratios are clamped at kMaxBeta (unless disabled), then alpha_bar is
// rebuilt as a running product so the consistency invariant holds exactly.
inline Schedule schedule_from_alpha_bar_curve(ScheduleSpec spec, const std::vector<double>& raw,
                                              bool clamp = true) {
    std::vector<double> beta(raw.size() - 1);
    for (std::size_t t = 1; t < raw.size(); ++t) {
        double ratio = raw[t] / raw[t - 1];
        beta[t - 1] = clamp ? std::min(1.0 - ratio, kMaxBeta) : 1.0 - ratio;
    }
    return finalize_schedule(std::move(spec), std::move(beta));
}

}  // namespace detail

inline Schedule make_linear(int steps, double beta_first = kDefaultBetaFirst,
                            double beta_last = kDefaultBetaLast) {
    if (steps < 1) throw std::invalid_argument("linear schedule needs steps >= 1");
    if (!(beta_first > 0.0 && beta_first < 1.0) || !(beta_last > 0.0 && beta_last < 1.0)) {
        throw std::invalid_argument("linear endpoints must lie in (0, 1)");
    }
    if (beta_first > beta_last) {
        throw std::invalid_argument("linear endpoints must satisfy beta_1 <= beta_T");
    }
    std::vector<double> beta(static_cast<std::size_t>(steps));
    if (steps == 1) {
        beta[0] = beta_first;
    } else {
        double step = (beta_last - beta_first) / static_cast<double>(steps - 1);
        for (int t = 0; t < steps; ++t) beta[static_cast<std::size_t>(t)] = beta_first + step * t;
    }
    ScheduleSpec spec{Family::linear, steps, 0.0, beta_first, beta_last, {}};
    return detail::finalize_schedule(spec, std::move(beta));
}

// alpha_bar_t = [cos^2(((t/T + s)/(1 + s)) * pi/2) / cos^2((s/(1 + s)) * pi/2)]^tau
inline Schedule make_cosine(int steps, double tau) {
    if (steps < 1) throw std::invalid_argument("cosine schedule needs steps >= 1");
    if (!(tau > 0.0)) throw std::invalid_argument("cosine schedule needs tau > 0");
    constexpr double half_pi = 1.5707963267948966192313216916398;
    const double s = kCosineOffset;
    auto f = [&](double t_over_T) {
        double c = std::cos((t_over_T + s) / (1.0 + s) * half_pi);
        return c * c;
    };
    const double norm = f(0.0);
    std::vector<double> raw(static_cast<std::size_t>(steps) + 1);
    for (int t = 0; t <= steps; ++t) {
        raw[static_cast<std::size_t>(t)] =
            std::pow(f(static_cast<double>(t) / static_cast<double>(steps)) / norm, tau);
    }
    ScheduleSpec spec{Family::cosine, steps, tau, kDefaultBetaFirst, kDefaultBetaLast, {}};
    return detail::schedule_from_alpha_bar_curve(spec, raw);
}

// g(u) = logistic(-(u_start + u * (u_end - u_start)) / tau) over u in [0, 1]
// with fixed u_start = -3, u_end = 3, normalized affinely so that
// alpha_bar(0) = 1 and alpha_bar(1) = 0.
inline Schedule make_sigmoid(int steps, double tau) {
    if (steps < 1) throw std::invalid_argument("sigmoid schedule needs steps >= 1");
    if (!(tau > 0.0)) throw std::invalid_argument("sigmoid schedule needs tau > 0");
    constexpr double u_start = -3.0, u_end = 3.0;
    auto g = [&](double u) {
        double z = -(u_start + u * (u_end - u_start)) / tau;
        return 1.0 / (1.0 + std::exp(-z));
    };
    const double g0 = g(0.0), g1 = g(1.0);
    std::vector<double> raw(static_cast<std::size_t>(steps) + 1);
    for (int t = 0; t <= steps; ++t) {
        double u = static_cast<double>(t) / static_cast<double>(steps);
        raw[static_cast<std::size_t>(t)] = (g(u) - g1) / (g0 - g1);
    }
    ScheduleSpec spec{Family::sigmoid, steps, tau, kDefaultBetaFirst, kDefaultBetaLast, {}};
    return detail::schedule_from_alpha_bar_curve(spec, raw);
}

inline Schedule from_table(const std::vector<double>& beta, std::string table_ref = {}) {
    ScheduleSpec spec{Family::tabulated, static_cast<int>(beta.size()), 0.0, 0.0, 0.0,
                      std::move(table_ref)};
    return detail::finalize_schedule(std::move(spec), beta);
}

// Rescales so the terminal signal-to-noise ratio is (numerically) zero:
// with r_t = sqrt(alpha_bar_t), r'_t = (r_t - r_T) * r_1 / (r_1 - r_T), which
// keeps r'_1 = r_1 and sends r'_T to 0. The terminal value is floored at
// kSnrFloor so alpha_bar stays positive, then beta is rebuilt from the ratios.
inline Schedule rescale_zero_terminal_snr(const Schedule& in) {
    const int T = in.steps();
    if (T < 2) throw std::invalid_argument("zero-terminal-SNR rescale needs at least 2 steps");
    const double r1 = std::sqrt(in.alpha_bar.front());
    const double rT = std::sqrt(in.alpha_bar.back());
    if (!(r1 - rT > 1e-12)) {
        throw std::invalid_argument("schedule is too flat to rescale (r_1 ~= r_T)");
    }
    std::vector<double> raw(static_cast<std::size_t>(T) + 1);
    raw[0] = 1.0;
    for (int t = 1; t <= T; ++t) {
        double r = std::sqrt(in.alpha_bar_at(t));
        double rp = (r - rT) * r1 / (r1 - rT);
        if (t == T) rp = kSnrFloor;
        raw[static_cast<std::size_t>(t)] = rp * rp;
    }
    ScheduleSpec spec = in.spec;
    spec.table_ref = spec_string(in.spec) + "+zsnr";
    spec.family = Family::tabulated;
    // No beta clamp here: the floor already keeps alpha_bar positive, and the
    // rebuilt curve must hit the floored terminal value exactly.
    Schedule out = detail::schedule_from_alpha_bar_curve(spec, raw, /*clamp=*/false);
    return out;
}

inline double posterior_variance_sum(const Schedule& s) {
    double acc = 0.0;
    for (double v : s.posterior_var) acc += v;
    return acc;
}

// The default candidate pool: 5 linear step counts, cosine with three
// temperatures and sigmoid with three temperatures over the same step counts,
// 35 specs in total.
inline std::vector<ScheduleSpec> candidate_grid() {
    const int steps[] = {10, 20, 50, 75, 100};
    std::vector<ScheduleSpec> grid;
    grid.reserve(35);
    for (int T : steps) grid.push_back({Family::linear, T, 0.0, kDefaultBetaFirst, kDefaultBetaLast, {}});
    for (double tau : {0.5, 1.0, 2.0}) {
        for (int T : steps) {
            grid.push_back({Family::cosine, T, tau, kDefaultBetaFirst, kDefaultBetaLast, {}});
        }
    }
    for (double tau : {0.3, 0.5, 1.0}) {
        for (int T : steps) {
            grid.push_back({Family::sigmoid, T, tau, kDefaultBetaFirst, kDefaultBetaLast, {}});
        }
    }
    return grid;
}

namespace detail {

inline double parse_num(std::string_view text, const std::string& what) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
        throw std::invalid_argument("bad number '" + std::string(text) + "' for " + what);
    }
    return v;
}

}  // namespace detail

// Spec strings: "lin:T=100", "cos:T=75,tau=2.0", "sig:T=50,tau=0.5",
// "table:@betas.json". Linear accepts optional beta1=/betaT= overrides.
inline ScheduleSpec parse_schedule_spec(std::string_view text) {
    auto colon = text.find(':');
    if (colon == std::string_view::npos) {
        throw std::invalid_argument("schedule spec '" + std::string(text) +
                                    "' is missing the family prefix");
    }
    std::string_view fam = text.substr(0, colon);
    std::string_view rest = text.substr(colon + 1);

    if (fam == "table") {
        if (rest.size() < 2 || rest[0] != '@') {
            throw std::invalid_argument("table spec must look like table:@file.json");
        }
        ScheduleSpec spec;
        spec.family = Family::tabulated;
        spec.table_ref = std::string(rest.substr(1));
        return spec;
    }

    ScheduleSpec spec;
    if (fam == "lin") spec.family = Family::linear;
    else if (fam == "cos") spec.family = Family::cosine;
    else if (fam == "sig") spec.family = Family::sigmoid;
    else throw std::invalid_argument("unknown schedule family '" + std::string(fam) + "'");

    bool have_T = false, have_tau = false;
    std::size_t pos = 0;
    while (pos <= rest.size() && !rest.empty()) {
        auto comma = rest.find(',', pos);
        std::string_view kv = rest.substr(pos, comma == std::string_view::npos ? rest.size() - pos
                                                                               : comma - pos);
        auto eq = kv.find('=');
        if (eq == std::string_view::npos) {
            throw std::invalid_argument("schedule spec token '" + std::string(kv) +
                                        "' is not key=value");
        }
        std::string_view key = kv.substr(0, eq), val = kv.substr(eq + 1);
        if (key == "T") {
            spec.steps = static_cast<int>(detail::parse_num(val, "T"));
            have_T = true;
        } else if (key == "tau") {
            spec.tau = detail::parse_num(val, "tau");
            have_tau = true;
        } else if (key == "beta1" && spec.family == Family::linear) {
            spec.beta_first = detail::parse_num(val, "beta1");
        } else if (key == "betaT" && spec.family == Family::linear) {
            spec.beta_last = detail::parse_num(val, "betaT");
        } else {
            throw std::invalid_argument("unknown schedule spec key '" + std::string(key) + "'");
        }
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    if (!have_T) throw std::invalid_argument("schedule spec '" + std::string(text) + "' needs T=");
    if (spec.family != Family::linear && !have_tau) {
        throw std::invalid_argument("schedule spec '" + std::string(text) + "' needs tau=");
    }
    return spec;
}

// Reads a tabulated schedule file: either a bare JSON array of betas or an
// object with a "beta" array (the schedule serialization format qualifies).
inline Schedule load_schedule_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open schedule table '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("schedule table '" + path + "' is not valid json: " + e.what());
    }
    const nlohmann::json* arr = nullptr;
    if (j.is_array()) arr = &j;
    else if (j.is_object() && j.contains("beta") && j["beta"].is_array()) arr = &j["beta"];
    if (arr == nullptr) {
        throw std::runtime_error("schedule table '" + path + "' must be a beta array or {\"beta\": [...]}");
    }
    std::vector<double> beta;
    beta.reserve(arr->size());
    for (const auto& v : *arr) {
        if (!v.is_number()) throw std::runtime_error("schedule table '" + path + "' has a non-numeric beta");
        beta.push_back(v.get<double>());
    }
    return from_table(beta, path);
}

inline Schedule build_schedule(const ScheduleSpec& spec) {
    switch (spec.family) {
        case Family::linear: return make_linear(spec.steps, spec.beta_first, spec.beta_last);
        case Family::cosine: return make_cosine(spec.steps, spec.tau);
        case Family::sigmoid: return make_sigmoid(spec.steps, spec.tau);
        case Family::tabulated:
            if (spec.table_ref.empty()) {
                throw std::invalid_argument("tabulated spec has no table reference");
            }
            return load_schedule_table(spec.table_ref);
    }
    throw std::invalid_argument("unknown schedule family");
}

inline Schedule build_schedule(std::string_view spec_text) {
    return build_schedule(parse_schedule_spec(spec_text));
}

// Wire format: {family, tau, T, beta[], alpha_bar[], posterior_var[]}.
inline nlohmann::ordered_json schedule_to_json(const Schedule& s) {
    nlohmann::ordered_json j;
    j["family"] = family_name(s.spec.family);
    if (s.spec.family == Family::cosine || s.spec.family == Family::sigmoid) j["tau"] = s.spec.tau;
    else j["tau"] = nullptr;
    j["T"] = s.steps();
    j["beta"] = s.beta;
    j["alpha_bar"] = s.alpha_bar;
    j["posterior_var"] = s.posterior_var;
    return j;
}

inline Schedule schedule_from_json(const nlohmann::json& j) {
    if (!j.contains("beta") || !j["beta"].is_array()) {
        throw std::runtime_error("schedule json needs a beta array");
    }
    std::vector<double> beta = j["beta"].get<std::vector<double>>();
    Schedule s = from_table(beta, "json");
    if (j.contains("family") && j["family"].is_string()) {
        std::string fam = j["family"].get<std::string>();
        for (Family f : {Family::linear, Family::cosine, Family::sigmoid, Family::tabulated}) {
            if (fam == family_name(f)) s.spec.family = f;
        }
    }
    if (j.contains("tau") && j["tau"].is_number()) s.spec.tau = j["tau"].get<double>();
    return s;
}

}  // namespace ant
