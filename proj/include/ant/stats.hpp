#pragma once

// Non-stationarity statistics built on the sample autocorrelation function.
//
// For a series x_1..x_n with mean m the (biased) ACF estimate is
//   rho_k = sum_{t=1}^{n-k} (x_t - m)(x_{t+k} - m) / sum_{t=1}^{n} (x_t - m)^2
// i.e. the denominator always runs over the full series. On top of it:
//   IAT     = 1 + 2 * sum_k rho_k        (integrated autocorrelation time)
//   IAAT    = 1 + 2 * sum_k |rho_k|      (integrated absolute variant)
//   Lag1AC  = rho_1
//   VarAC   = population variance of {rho_1..rho_K}
//   mIAAT   = variance-weighted mean over channels of the cross-correlation
//             analogue, see miaat() below.
//
// Truncation: profiles are computed up to K = min(n-1, max_lag). For the
// integrated statistics the default then cuts the profile at the first lag
// where |rho_k| < 2/sqrt(n) holds for three consecutive lags, which is where
// the remaining tail is statistically indistinguishable from zero; summing a
// fixed 100-lag tail of pure estimation noise would bias IAAT of white noise
// from 1 up to about 3.5. VarAC keeps the fixed window (its value is the
// dispersion over a lag band, so a data-dependent K would itself become the
// signal), and Lag1AC only ever looks at lag 1.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ant {

enum class Statistic { iat, iaat, lag1ac, varac, miaat };

inline const char* statistic_name(Statistic s) {
    switch (s) {
        case Statistic::iat: return "iat";
        case Statistic::iaat: return "iaat";
        case Statistic::lag1ac: return "lag1ac";
        case Statistic::varac: return "varac";
        case Statistic::miaat: return "miaat";
    }
    return "?";
}

inline Statistic parse_statistic(std::string_view name) {
    for (Statistic s : {Statistic::iat, Statistic::iaat, Statistic::lag1ac, Statistic::varac,
                        Statistic::miaat}) {
        if (name == statistic_name(s)) return s;
    }
    throw std::invalid_argument("unknown statistic '" + std::string(name) + "'");
}

struct StatOptions {
    int max_lag = 100;           // cap on K, clipped to n-1
    bool adaptive = true;        // truncate integrated sums where the tail is noise
    bool abs_cross_terms = false;  // mIAAT: sum |rho| instead of signed rho
};

struct AcfProfile {
    std::vector<double> rho;  // rho[k-1] is the autocorrelation at lag k
    std::size_t n = 0;        // length of the source series
    bool degenerate = false;  // constant input, rho forced to zero

    std::size_t lags() const { return rho.size(); }
};

inline int default_max_lag(std::size_t n, int cap = 100) {
    return static_cast<int>(std::min<std::size_t>(n - 1, static_cast<std::size_t>(cap)));
}

inline AcfProfile autocorrelation(std::span<const double> x, int max_lag) {
    const std::size_t n = x.size();
    if (n < 2) throw std::invalid_argument("autocorrelation needs at least 2 points");
    if (max_lag < 1 || static_cast<std::size_t>(max_lag) > n - 1) {
        throw std::invalid_argument("max_lag must lie in [1, n-1], got " + std::to_string(max_lag));
    }

    bool constant = true;
    for (double v : x) {
        if (v != x[0]) {
            constant = false;
            break;
        }
    }

    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);

    double denom = 0.0;
    for (double v : x) denom += (v - mean) * (v - mean);

    AcfProfile p;
    p.n = n;
    p.rho.assign(static_cast<std::size_t>(max_lag), 0.0);
    if (constant || denom == 0.0) {
        p.degenerate = true;  // constant series: leave all-zero profile
        return p;
    }
    for (int k = 1; k <= max_lag; ++k) {
        double num = 0.0;
        for (std::size_t t = 0; t + static_cast<std::size_t>(k) < n; ++t) {
            num += (x[t] - mean) * (x[t + static_cast<std::size_t>(k)] - mean);
        }
        p.rho[static_cast<std::size_t>(k - 1)] = num / denom;
    }
    return p;
}

// Cuts the profile at the first lag k where |rho_k|, |rho_{k+1}|, |rho_{k+2}|
// all fall below 2/sqrt(n); lags 1..k-1 are kept. Without three consecutive
// small lags the profile is returned unchanged.
inline AcfProfile adaptive_truncate(const AcfProfile& p) {
    if (p.degenerate || p.rho.size() < 3) return p;
    const double thr = 2.0 / std::sqrt(static_cast<double>(p.n));
    for (std::size_t k = 0; k + 2 < p.rho.size(); ++k) {
        if (std::abs(p.rho[k]) < thr && std::abs(p.rho[k + 1]) < thr &&
            std::abs(p.rho[k + 2]) < thr) {
            AcfProfile out;
            out.n = p.n;
            out.degenerate = p.degenerate;
            out.rho.assign(p.rho.begin(), p.rho.begin() + static_cast<std::ptrdiff_t>(k));
            return out;
        }
    }
    return p;
}

inline double iat(const AcfProfile& p) {
    double acc = 0.0;
    for (double r : p.rho) acc += r;
    return 1.0 + 2.0 * acc;
}

inline double iaat(const AcfProfile& p) {
    double acc = 0.0;
    for (double r : p.rho) acc += std::abs(r);
    return 1.0 + 2.0 * acc;
}

inline double lag1ac(const AcfProfile& p) {
    if (p.rho.empty()) throw std::invalid_argument("lag1ac needs a profile with at least one lag");
    return p.rho[0];
}

// Population variance of the retained lags.
inline double varac(const AcfProfile& p) {
    if (p.rho.empty()) throw std::invalid_argument("varac needs a profile with at least one lag");
    double mean = 0.0;
    for (double r : p.rho) mean += r;
    mean /= static_cast<double>(p.rho.size());
    double acc = 0.0;
    for (double r : p.rho) acc += (r - mean) * (r - mean);
    return acc / static_cast<double>(p.rho.size());
}

struct MiaatResult {
    double value = 0.0;
    bool degenerate_channels = false;  // some channel was constant, its terms were zeroed
};

namespace detail {

struct ChannelMoments {
    double mean = 0.0;
    double sumsq = 0.0;     // sum of squared deviations
    bool constant = false;  // all values identical
};

inline ChannelMoments channel_moments(std::span<const double> x) {
    ChannelMoments m;
    m.constant = true;
    for (double v : x) {
        m.mean += v;
        if (v != x[0]) m.constant = false;
    }
    m.mean /= static_cast<double>(x.size());
    for (double v : x) m.sumsq += (v - m.mean) * (v - m.mean);
    if (m.constant) m.sumsq = 0.0;
    return m;
}

// Cross-correlation profile rho^{ij}_k for k = 1..max_lag, normalized by
// sqrt(sumsq_i * sumsq_j). Returns all-zero when either channel is constant.
inline std::vector<double> cross_profile(std::span<const double> xi, std::span<const double> xj,
                                         const ChannelMoments& mi, const ChannelMoments& mj,
                                         int max_lag) {
    std::vector<double> rho(static_cast<std::size_t>(max_lag), 0.0);
    double denom = std::sqrt(mi.sumsq * mj.sumsq);
    if (denom == 0.0) return rho;
    const std::size_t n = xi.size();
    for (int k = 1; k <= max_lag; ++k) {
        double num = 0.0;
        for (std::size_t t = 0; t + static_cast<std::size_t>(k) < n; ++t) {
            num += (xi[t] - mi.mean) * (xj[t + static_cast<std::size_t>(k)] - mj.mean);
        }
        rho[static_cast<std::size_t>(k - 1)] = num / denom;
    }
    return rho;
}

// Adaptive cut on a raw cross profile, same three-consecutive-lags rule as
// adaptive_truncate.
inline std::size_t truncated_lag_count(const std::vector<double>& rho, std::size_t n,
                                       bool adaptive) {
    if (!adaptive || rho.size() < 3) return rho.size();
    const double thr = 2.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t k = 0; k + 2 < rho.size(); ++k) {
        if (std::abs(rho[k]) < thr && std::abs(rho[k + 1]) < thr && std::abs(rho[k + 2]) < thr) {
            return k;
        }
    }
    return rho.size();
}

}  // namespace detail

// Multivariate integrated autocorrelation: per channel i,
//   tau_i = 1 + 2 * sum_j sum_k rho^{ij}_k
// summed over signed cross terms (abs_cross_terms switches to |rho|), then
// averaged over channels with population-variance weights:
//   mIAAT = sum_i var_i * tau_i / sum_i var_i.
// A constant channel contributes zero cross terms and zero weight; if every
// channel is constant the weighted mean is undefined.
inline MiaatResult miaat_full(const std::vector<std::span<const double>>& channels,
                              const StatOptions& opt = {}) {
    if (channels.empty()) throw std::invalid_argument("miaat needs at least one channel");
    const std::size_t n = channels[0].size();
    if (n < 2) throw std::invalid_argument("miaat needs channels with at least 2 points");
    for (const auto& c : channels) {
        if (c.size() != n) throw std::invalid_argument("miaat channels must have equal length");
    }
    const int max_lag = default_max_lag(n, opt.max_lag);
    const std::size_t d = channels.size();

    std::vector<detail::ChannelMoments> mom(d);
    for (std::size_t i = 0; i < d; ++i) mom[i] = detail::channel_moments(channels[i]);

    MiaatResult res;
    double weight_sum = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        if (mom[i].sumsq == 0.0) {
            res.degenerate_channels = true;
            continue;  // zero weight, nothing to add
        }
        double tau = 1.0;
        for (std::size_t j = 0; j < d; ++j) {
            if (mom[j].sumsq == 0.0) {
                res.degenerate_channels = true;
                continue;
            }
            std::vector<double> rho =
                detail::cross_profile(channels[i], channels[j], mom[i], mom[j], max_lag);
            std::size_t keep = detail::truncated_lag_count(rho, n, opt.adaptive);
            double s = 0.0;
            for (std::size_t k = 0; k < keep; ++k) {
                s += opt.abs_cross_terms ? std::abs(rho[k]) : rho[k];
            }
            tau += 2.0 * s;
        }
        double w = mom[i].sumsq / static_cast<double>(n);  // population variance
        weight_sum += w;
        acc += w * tau;
    }
    if (weight_sum == 0.0) {
        throw std::invalid_argument("miaat is undefined when every channel is constant");
    }
    res.value = acc / weight_sum;
    return res;
}

inline double miaat(const std::vector<std::span<const double>>& channels,
                    const StatOptions& opt = {}) {
    return miaat_full(channels, opt).value;
}

struct StatValue {
    double value = 0.0;
    bool degenerate = false;  // the statistic carries no information (constant input)
};

// Evaluates a univariate statistic with the per-statistic truncation policy
// described at the top of the file. miaat on a single channel reduces to the
// signed IAT form. A constant series yields the statistic of the all-zero
// profile with the degenerate flag raised.
inline StatValue eval_statistic_checked(std::span<const double> x, Statistic stat,
                                        const StatOptions& opt = {}) {
    switch (stat) {
        case Statistic::lag1ac: {
            AcfProfile p = autocorrelation(x, 1);
            return {lag1ac(p), p.degenerate};
        }
        case Statistic::varac: {
            AcfProfile p = autocorrelation(x, default_max_lag(x.size(), opt.max_lag));
            return {varac(p), p.degenerate};
        }
        case Statistic::iat:
        case Statistic::iaat: {
            AcfProfile p = autocorrelation(x, default_max_lag(x.size(), opt.max_lag));
            bool degen = p.degenerate;
            if (opt.adaptive) p = adaptive_truncate(p);
            return {stat == Statistic::iat ? iat(p) : iaat(p), degen};
        }
        case Statistic::miaat: {
            try {
                MiaatResult r = miaat_full({x}, opt);
                return {r.value, r.degenerate_channels};
            } catch (const std::invalid_argument&) {
                if (x.size() < 2) throw;
                return {0.0, true};  // constant channel, weighted mean undefined
            }
        }
    }
    throw std::invalid_argument("unknown statistic");
}

inline double eval_statistic(std::span<const double> x, Statistic stat,
                             const StatOptions& opt = {}) {
    return eval_statistic_checked(x, stat, opt).value;
}

// Statistic of one record: miaat couples the channels, everything else is
// averaged over the channels. The record counts as degenerate only when no
// channel carried information (an all-constant record).
inline StatValue eval_record_statistic_checked(const std::vector<std::span<const double>>& channels,
                                               Statistic stat, const StatOptions& opt = {}) {
    if (channels.empty()) throw std::invalid_argument("record has no channels");
    if (stat == Statistic::miaat) {
        try {
            MiaatResult r = miaat_full(channels, opt);
            return {r.value, false};
        } catch (const std::invalid_argument&) {
            bool structural = false;
            for (const auto& c : channels) {
                structural = structural || c.size() < 2 || c.size() != channels[0].size();
            }
            if (structural) throw;
            return {0.0, true};  // every channel constant: undefined weighted mean
        }
    }
    double acc = 0.0;
    std::size_t informative = 0;
    for (const auto& c : channels) {
        StatValue v = eval_statistic_checked(c, stat, opt);
        acc += v.value;
        if (!v.degenerate) ++informative;
    }
    return {acc / static_cast<double>(channels.size()), informative == 0};
}

inline double eval_record_statistic(const std::vector<std::span<const double>>& channels,
                                    Statistic stat, const StatOptions& opt = {}) {
    return eval_record_statistic_checked(channels, stat, opt).value;
}

}  // namespace ant
