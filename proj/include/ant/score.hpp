#pragma once

// Schedule scoring.
//
// For a candidate schedule the non-stationarity-decay curve is
//   l(t) = mean over (record, draw) of stat(x^t),   t = 1..T
// where x^t comes from the iterative corruption chain applied to the
// mean-scaled data. The curve is min-max normalized and compared against the
// ideal linear decay l*(t) = Linspace(1, 0, T); a schedule is better the
// closer its decay is to that reference. The score multiplies three factors:
//   lambda_linear = discrepancy(l*, l_normalized)        (chosen metric)
//   lambda_noise  = 1 + l(T) / l(1)                      (raw curve ratio)
//   lambda_step   = 1 + 1/T
// Lower is better. lambda_noise penalizes schedules that stop short of full
// corruption, lambda_step nudges toward fewer steps on ties.
//
// Determinism: the noise for (record r, draw d) comes from
// Rng::substream(seed, r, d) and the reduction runs in fixed index order, so
// results are bit-identical for any worker count. Candidates share the same
// substreams, which is deliberate: common random numbers make candidate
// comparisons tighter than independent draws would.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ant/dataset.hpp"
#include "ant/diffusion.hpp"
#include "ant/rng.hpp"
#include "ant/schedule.hpp"
#include "ant/stats.hpp"

namespace ant {

enum class Metric { auc, mse, mae, corr, r2 };

inline const char* metric_name(Metric m) {
    switch (m) {
        case Metric::auc: return "auc";
        case Metric::mse: return "mse";
        case Metric::mae: return "mae";
        case Metric::corr: return "corr";
        case Metric::r2: return "r2";
    }
    return "?";
}

inline Metric parse_metric(std::string_view name) {
    for (Metric m : {Metric::auc, Metric::mse, Metric::mae, Metric::corr, Metric::r2}) {
        if (name == metric_name(m)) return m;
    }
    throw std::invalid_argument("unknown metric '" + std::string(name) + "'");
}

struct CurveOptions {
    int draws = 1;
    std::uint64_t seed = 0;
    int jobs = 1;
    Statistic stat = Statistic::iaat;
    StatOptions stat_options;
};

struct NonStationarityCurve {
    std::vector<double> values;  // values[t-1] = l(t)
    Statistic stat = Statistic::iaat;
    ScheduleSpec spec;
    int draws = 1;
};

struct NormalizedCurve {
    std::vector<double> values;
    bool degenerate = false;  // flat raw curve, normalization pinned to zero
};

namespace detail {

template <class F>
void parallel_for(std::size_t n_tasks, int jobs, F&& body) {
    int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n_tasks)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n_tasks || failed.load()) return;
                try {
                    body(i);
                } catch (...) {
                    if (!failed.exchange(true)) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failed.load()) std::rethrow_exception(error);
}

}  // namespace detail

// Mean statistic of the corrupted data at every step. Throws if the statistic
// degenerates on every (record, draw) pair at some step.
inline NonStationarityCurve curve(const Dataset& ds, const Schedule& schedule,
                                  const CurveOptions& opt = {}) {
    validate_dataset(ds);
    if (opt.draws < 1) throw std::invalid_argument("curve needs draws >= 1");
    Dataset scaled = mean_scale_dataset(ds);

    const std::size_t records = scaled.record_count();
    const std::size_t draws = static_cast<std::size_t>(opt.draws);
    const std::size_t T = static_cast<std::size_t>(schedule.steps());
    const int dim = scaled.dim;

    // per-task statistic values, reduced afterwards in fixed order
    std::vector<std::vector<double>> task_stats(records * draws);
    std::vector<std::vector<std::uint8_t>> task_ok(records * draws);

    detail::parallel_for(records * draws, opt.jobs, [&](std::size_t task) {
        const std::size_t r = task / draws;
        const std::size_t d = task % draws;
        Rng rng = Rng::substream(opt.seed, r, d);

        std::vector<std::vector<std::vector<double>>> chans;  // [channel][t][coord]
        chans.reserve(static_cast<std::size_t>(dim));
        for (int c = 0; c < dim; ++c) {
            chans.push_back(corrupt_trajectory(scaled.channel(r, c).values, schedule, rng));
        }
        std::vector<double>& vals = task_stats[task];
        std::vector<std::uint8_t>& ok = task_ok[task];
        vals.assign(T, 0.0);
        ok.assign(T, 0);
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<std::span<const double>> record(static_cast<std::size_t>(dim));
            for (int c = 0; c < dim; ++c) {
                record[static_cast<std::size_t>(c)] = chans[static_cast<std::size_t>(c)][t];
            }
            StatValue v = eval_record_statistic_checked(record, opt.stat, opt.stat_options);
            vals[t] = v.value;
            ok[t] = v.degenerate ? 0 : 1;
        }
    });

    NonStationarityCurve out;
    out.stat = opt.stat;
    out.spec = schedule.spec;
    out.draws = opt.draws;
    out.values.assign(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        double acc = 0.0;
        std::size_t n = 0;
        for (std::size_t task = 0; task < task_stats.size(); ++task) {
            if (task_ok[task][t]) {
                acc += task_stats[task][t];
                ++n;
            }
        }
        if (n == 0) {
            throw std::runtime_error("statistic degenerated on every series at step " +
                                     std::to_string(t + 1));
        }
        out.values[t] = acc / static_cast<double>(n);
    }
    return out;
}

// Min-max normalization to [0, 1]; a flat curve maps to all zeros with the
// degenerate flag set.
inline NormalizedCurve normalize(const NonStationarityCurve& c) {
    if (c.values.size() < 2) throw std::invalid_argument("normalize needs a curve of length >= 2");
    auto [lo_it, hi_it] = std::minmax_element(c.values.begin(), c.values.end());
    NormalizedCurve out;
    out.values.assign(c.values.size(), 0.0);
    const double lo = *lo_it, hi = *hi_it;
    if (hi == lo) {
        out.degenerate = true;
        return out;
    }
    for (std::size_t i = 0; i < c.values.size(); ++i) {
        out.values[i] = (c.values[i] - lo) / (hi - lo);
    }
    return out;
}

// The ideal decay: 1 at the first step, 0 at the last, linear in between.
inline std::vector<double> reference_line(std::size_t steps) {
    if (steps < 2) throw std::invalid_argument("reference line needs >= 2 steps");
    std::vector<double> ref(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        ref[i] = 1.0 - static_cast<double>(i) / static_cast<double>(steps - 1);
    }
    return ref;
}

namespace detail {

inline double trapezoid_unit_interval(std::span<const double> y) {
    // x spans [0, 1] with uniform spacing
    double acc = 0.0;
    const double h = 1.0 / static_cast<double>(y.size() - 1);
    for (std::size_t i = 0; i + 1 < y.size(); ++i) acc += 0.5 * h * (y[i] + y[i + 1]);
    return acc;
}

inline double pearson(std::span<const double> a, std::span<const double> b, bool* degenerate) {
    const std::size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) {
        if (degenerate != nullptr) *degenerate = true;
        return 0.0;
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace detail

// Distance between the normalized curve and the linear reference; zero
// exactly when they coincide. For a constant curve the correlation-based
// metric is undefined and reports its maximum, 1, with the flag set.
inline double discrepancy(const NormalizedCurve& c, Metric metric, bool* degenerate = nullptr) {
    const std::size_t T = c.values.size();
    if (T < 2) throw std::invalid_argument("discrepancy needs a curve of length >= 2");
    std::vector<double> ref = reference_line(T);
    switch (metric) {
        case Metric::auc:
            // reference area is exactly 1/2
            return std::abs(detail::trapezoid_unit_interval(c.values) - 0.5);
        case Metric::mse: {
            double acc = 0.0;
            for (std::size_t i = 0; i < T; ++i) acc += (c.values[i] - ref[i]) * (c.values[i] - ref[i]);
            return acc / static_cast<double>(T);
        }
        case Metric::mae: {
            double acc = 0.0;
            for (std::size_t i = 0; i < T; ++i) acc += std::abs(c.values[i] - ref[i]);
            return acc / static_cast<double>(T);
        }
        case Metric::corr: {
            bool degen = false;
            double rho = detail::pearson(c.values, ref, &degen);
            if (degen) {
                if (degenerate != nullptr) *degenerate = true;
                return 1.0;
            }
            return 1.0 - rho;
        }
        case Metric::r2: {
            // 1 - R^2 with the reference playing the prediction for the curve
            double num = 0.0, den = 0.0, mean = 0.0;
            for (double v : c.values) mean += v;
            mean /= static_cast<double>(T);
            for (std::size_t i = 0; i < T; ++i) {
                num += (c.values[i] - ref[i]) * (c.values[i] - ref[i]);
                den += (c.values[i] - mean) * (c.values[i] - mean);
            }
            if (den == 0.0) {
                if (degenerate != nullptr) *degenerate = true;
                return 1.0;
            }
            return num / den;
        }
    }
    throw std::invalid_argument("unknown metric");
}

struct AntScore {
    double lambda_linear = 0.0;
    double lambda_noise = 0.0;
    double lambda_step = 0.0;
    double score = 0.0;
    Metric metric = Metric::auc;
};

// Combines the three factors. lambda_noise uses the raw, unnormalized curve
// endpoints, so a schedule whose statistic has not decayed by step T pays a
// factor close to 2 while full decay costs about 1.
inline AntScore ant_score(const NonStationarityCurve& c, Metric metric) {
    const std::size_t T = c.values.size();
    if (T < 2) throw std::invalid_argument("ant_score needs a curve of length >= 2");
    if (c.values.front() == 0.0) {
        throw std::invalid_argument("ant_score undefined: first curve value is zero");
    }
    AntScore s;
    s.metric = metric;
    s.lambda_linear = discrepancy(normalize(c), metric);
    s.lambda_noise = 1.0 + c.values.back() / c.values.front();
    s.lambda_step = 1.0 + 1.0 / static_cast<double>(T);
    s.score = s.lambda_linear * s.lambda_noise * s.lambda_step;
    return s;
}

struct RankedCandidate {
    ScheduleSpec spec;
    AntScore score;
};

struct RankOptions {
    int draws = 8;
    std::uint64_t seed = 0;
    int jobs = 1;
    Statistic stat = Statistic::iaat;
    Metric metric = Metric::auc;
    StatOptions stat_options;
    int max_steps = 0;  // 0 = no cap, otherwise keep candidates with T <= max_steps
};

namespace detail {

inline int family_rank(Family f) {
    switch (f) {
        case Family::linear: return 0;
        case Family::cosine: return 1;
        case Family::sigmoid: return 2;
        case Family::tabulated: return 3;
    }
    return 4;
}

// Ascending score; ties prefer fewer steps, then family order, then lower tau.
inline bool candidate_before(const RankedCandidate& a, const RankedCandidate& b) {
    if (a.score.score != b.score.score) return a.score.score < b.score.score;
    if (a.spec.steps != b.spec.steps) return a.spec.steps < b.spec.steps;
    if (family_rank(a.spec.family) != family_rank(b.spec.family)) {
        return family_rank(a.spec.family) < family_rank(b.spec.family);
    }
    return a.spec.tau < b.spec.tau;
}

}  // namespace detail

// Scores every candidate and sorts best first. Candidates whose step count
// exceeds max_steps are dropped before evaluation.
inline std::vector<RankedCandidate> rank(const Dataset& ds,
                                         const std::vector<ScheduleSpec>& candidates,
                                         const RankOptions& opt = {}) {
    std::vector<ScheduleSpec> kept;
    for (const ScheduleSpec& c : candidates) {
        if (opt.max_steps <= 0 || c.steps <= opt.max_steps) kept.push_back(c);
    }
    if (kept.empty()) {
        throw std::invalid_argument("no candidate satisfies max_steps = " +
                                    std::to_string(opt.max_steps));
    }
    CurveOptions copt;
    copt.draws = opt.draws;
    copt.seed = opt.seed;
    copt.jobs = opt.jobs;
    copt.stat = opt.stat;
    copt.stat_options = opt.stat_options;

    std::vector<RankedCandidate> out;
    out.reserve(kept.size());
    for (const ScheduleSpec& spec : kept) {
        Schedule schedule = build_schedule(spec);
        NonStationarityCurve c = curve(ds, schedule, copt);
        out.push_back({spec, ant_score(c, opt.metric)});
    }
    std::stable_sort(out.begin(), out.end(), detail::candidate_before);
    return out;
}

// Wire format of a ranking: {dataset, statistic, metric, results: [...]}.
inline nlohmann::ordered_json ranking_to_json(const std::string& dataset_name, Statistic stat,
                                              Metric metric,
                                              const std::vector<RankedCandidate>& ranking) {
    nlohmann::ordered_json j;
    j["dataset"] = dataset_name;
    j["statistic"] = statistic_name(stat);
    j["metric"] = metric_name(metric);
    j["results"] = nlohmann::ordered_json::array();
    for (const RankedCandidate& rc : ranking) {
        nlohmann::ordered_json e;
        e["spec"] = spec_string(rc.spec);
        e["lambda_linear"] = rc.score.lambda_linear;
        e["lambda_noise"] = rc.score.lambda_noise;
        e["lambda_step"] = rc.score.lambda_step;
        e["score"] = rc.score.score;
        j["results"].push_back(std::move(e));
    }
    return j;
}

inline std::string ranking_to_csv(const std::vector<RankedCandidate>& ranking) {
    auto fmt = [](double v) {
        char buf[32];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, ptr);
    };
    std::string csv = "spec,lambda_linear,lambda_noise,lambda_step,score\n";
    for (const RankedCandidate& rc : ranking) {
        csv += spec_string(rc.spec) + "," + fmt(rc.score.lambda_linear) + "," +
               fmt(rc.score.lambda_noise) + "," + fmt(rc.score.lambda_step) + "," +
               fmt(rc.score.score) + "\n";
    }
    return csv;
}

}  // namespace ant
