#pragma once

// Mechanistic experiments around schedule quality.
//
//  * proxy_step_classification: can a small classifier recover the diffusion
//    step a window was corrupted to? Architecture is fixed: Conv1D (kernel 3,
//    4 output channels, stride 1, no padding), ReLU, flatten, linear to T
//    classes, softmax cross-entropy, all gradients written out by hand.
//  * de_ablation: trains the denoiser with and without the step embedding and
//    reports final losses plus a sample-quality proxy.
//  * robustness_scan: decay curves and posterior-variance budgets across step
//    counts, per schedule family, on a progress axis so different T align.
//  * generation_trace: statistic of the sample population along the backward
//    pass.
//  * crps: pinball-loss CRPS of empirical forecast quantiles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ant/dataset.hpp"
#include "ant/denoiser.hpp"
#include "ant/diffusion.hpp"
#include "ant/rng.hpp"
#include "ant/schedule.hpp"
#include "ant/score.hpp"
#include "ant/stats.hpp"

namespace ant {

inline constexpr int kProxyKernel = 3;
inline constexpr int kProxyChannels = 4;

struct ConfusionMatrix {
    int classes = 0;
    std::vector<long> counts;  // counts[true * classes + predicted]

    static ConfusionMatrix zeros(int classes) {
        ConfusionMatrix m;
        m.classes = classes;
        m.counts.assign(static_cast<std::size_t>(classes) * static_cast<std::size_t>(classes), 0);
        return m;
    }
    long at(int truth, int predicted) const {
        return counts[static_cast<std::size_t>(truth) * classes + predicted];
    }
    long& at(int truth, int predicted) {
        return counts[static_cast<std::size_t>(truth) * classes + predicted];
    }
    long row_sum(int truth) const {
        long acc = 0;
        for (int p = 0; p < classes; ++p) acc += at(truth, p);
        return acc;
    }
    double accuracy() const {
        long correct = 0, total = 0;
        for (int i = 0; i < classes; ++i) {
            correct += at(i, i);
            total += row_sum(i);
        }
        return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
    }
};

struct ProxyConfig {
    int window = 32;
    int samples = 4000;
    double train_fraction = 0.8;
    int epochs = 30;
    int batch = 64;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

struct ProxyResult {
    ConfusionMatrix confusion;
    double accuracy = 0.0;
    Mat features;                 // post-ReLU conv activations on the eval split
    std::vector<int> feature_labels;  // true step (1-based) per feature row
};

// Step-classification probe parameters: conv stack plus the linear head.
struct ProxyNet {
    int window = 0, classes = 0;
    double conv_w[kProxyChannels][kProxyKernel] = {};
    double conv_b[kProxyChannels] = {};
    Mat lin_w;
    std::vector<double> lin_b;

    int conv_len() const { return window - kProxyKernel + 1; }
    int feature_dim() const { return kProxyChannels * conv_len(); }
};

namespace detail {

inline ProxyNet init_proxy(int window, int classes, std::uint64_t seed) {
    if (window <= kProxyKernel) {
        throw std::invalid_argument("proxy window must exceed the kernel size " +
                                    std::to_string(kProxyKernel));
    }
    ProxyNet net;
    net.window = window;
    net.classes = classes;
    Rng rng = Rng::substream(seed, 0x70726f78ull, 2);
    double s_conv = std::sqrt(2.0 / kProxyKernel);
    for (auto& ch : net.conv_w) {
        for (double& v : ch) v = s_conv * rng.normal();
    }
    net.lin_w = Mat::zeros(classes, net.feature_dim());
    double s_lin = std::sqrt(2.0 / net.feature_dim());
    for (double& v : net.lin_w.w) v = s_lin * rng.normal();
    net.lin_b.assign(static_cast<std::size_t>(classes), 0.0);
    return net;
}

struct ProxyTrace {
    std::vector<double> conv;      // pre-activation, [c * P + p]
    std::vector<double> features;  // post-ReLU
    std::vector<double> logits;
    std::vector<double> probs;
};

inline ProxyTrace proxy_forward(const ProxyNet& net, std::span<const double> x) {
    const int P = net.conv_len();
    ProxyTrace tr;
    tr.conv.assign(static_cast<std::size_t>(net.feature_dim()), 0.0);
    tr.features.assign(tr.conv.size(), 0.0);
    for (int c = 0; c < kProxyChannels; ++c) {
        for (int p = 0; p < P; ++p) {
            double acc = net.conv_b[c];
            for (int u = 0; u < kProxyKernel; ++u) {
                acc += net.conv_w[c][u] * x[static_cast<std::size_t>(p + u)];
            }
            std::size_t idx = static_cast<std::size_t>(c * P + p);
            tr.conv[idx] = acc;
            tr.features[idx] = acc > 0.0 ? acc : 0.0;
        }
    }
    tr.logits.assign(static_cast<std::size_t>(net.classes), 0.0);
    for (int r = 0; r < net.classes; ++r) {
        double acc = net.lin_b[static_cast<std::size_t>(r)];
        for (int c = 0; c < net.feature_dim(); ++c) {
            acc += net.lin_w.at(r, c) * tr.features[static_cast<std::size_t>(c)];
        }
        tr.logits[static_cast<std::size_t>(r)] = acc;
    }
    // stable softmax
    double mx = tr.logits[0];
    for (double v : tr.logits) mx = std::max(mx, v);
    double z = 0.0;
    tr.probs.resize(tr.logits.size());
    for (std::size_t i = 0; i < tr.logits.size(); ++i) {
        tr.probs[i] = std::exp(tr.logits[i] - mx);
        z += tr.probs[i];
    }
    for (double& v : tr.probs) v /= z;
    return tr;
}

struct ProxyGrads {
    double conv_w[kProxyChannels][kProxyKernel] = {};
    double conv_b[kProxyChannels] = {};
    Mat lin_w;
    std::vector<double> lin_b;

    static ProxyGrads zeros_like(const ProxyNet& net) {
        ProxyGrads g;
        g.lin_w = Mat::zeros(net.classes, net.feature_dim());
        g.lin_b.assign(static_cast<std::size_t>(net.classes), 0.0);
        return g;
    }
};

// Cross-entropy loss of one sample; accumulates parameter gradients.
inline double proxy_loss_backward(const ProxyNet& net, std::span<const double> x, int label,
                                  ProxyGrads* grads) {
    ProxyTrace tr = proxy_forward(net, x);
    double loss = -std::log(std::max(tr.probs[static_cast<std::size_t>(label)], 1e-300));
    if (grads == nullptr) return loss;

    const int P = net.conv_len();
    std::vector<double> dlogits = tr.probs;
    dlogits[static_cast<std::size_t>(label)] -= 1.0;

    std::vector<double> dfeat(static_cast<std::size_t>(net.feature_dim()), 0.0);
    for (int r = 0; r < net.classes; ++r) {
        double g = dlogits[static_cast<std::size_t>(r)];
        grads->lin_b[static_cast<std::size_t>(r)] += g;
        for (int c = 0; c < net.feature_dim(); ++c) {
            grads->lin_w.at(r, c) += g * tr.features[static_cast<std::size_t>(c)];
            dfeat[static_cast<std::size_t>(c)] += g * net.lin_w.at(r, c);
        }
    }
    for (int c = 0; c < kProxyChannels; ++c) {
        for (int p = 0; p < P; ++p) {
            std::size_t idx = static_cast<std::size_t>(c * P + p);
            double dy = tr.conv[idx] > 0.0 ? dfeat[idx] : 0.0;
            if (dy == 0.0) continue;
            grads->conv_b[c] += dy;
            for (int u = 0; u < kProxyKernel; ++u) {
                grads->conv_w[c][u] += dy * x[static_cast<std::size_t>(p + u)];
            }
        }
    }
    return loss;
}

}  // namespace detail

// Corrupts windows to uniformly random steps and trains the probe to recover
// the step. Returns the held-out confusion matrix plus the post-convolution
// features of the eval split for external visualization.
inline ProxyResult proxy_step_classification(const Dataset& ds, const Schedule& schedule,
                                             const ProxyConfig& cfg) {
    if (cfg.samples < 10 || cfg.train_fraction <= 0.0 || cfg.train_fraction >= 1.0) {
        throw std::invalid_argument("bad proxy config");
    }
    const int T = schedule.steps();
    auto pool = detail::training_pool(ds, cfg.window);
    Rng rng = Rng::substream(cfg.seed, 0x70726f78ull, 1);

    // build the labelled corpus: (corrupted window, step)
    std::vector<std::vector<double>> xs(static_cast<std::size_t>(cfg.samples));
    std::vector<int> labels(static_cast<std::size_t>(cfg.samples));
    const std::size_t w = static_cast<std::size_t>(cfg.window);
    for (int i = 0; i < cfg.samples; ++i) {
        const auto& src = pool[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
        std::size_t start =
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(src.size() - w)));
        std::span<const double> window(src.data() + start, w);
        int t = static_cast<int>(rng.uniform_int(1, T));
        xs[static_cast<std::size_t>(i)] = forward_closed(window, t, schedule, rng);
        labels[static_cast<std::size_t>(i)] = t - 1;
    }
    const int n_train = static_cast<int>(cfg.samples * cfg.train_fraction);
    const int n_eval = cfg.samples - n_train;
    if (n_train < 1 || n_eval < 1) throw std::invalid_argument("proxy split leaves an empty side");

    ProxyNet net = detail::init_proxy(cfg.window, T, cfg.seed);

    const std::size_t n_params = static_cast<std::size_t>(kProxyChannels) * kProxyKernel +
                                 kProxyChannels + net.lin_w.w.size() + net.lin_b.size();
    AdamState adam;
    adam.init(n_params);

    std::vector<int> order(static_cast<std::size_t>(n_train));
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates shuffle from the same stream
        for (int i = n_train - 1; i > 0; --i) {
            int j = static_cast<int>(rng.uniform_int(0, i));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }
        for (int from = 0; from < n_train; from += cfg.batch) {
            int to = std::min(from + cfg.batch, n_train);
            detail::ProxyGrads g = detail::ProxyGrads::zeros_like(net);
            for (int i = from; i < to; ++i) {
                int idx = order[static_cast<std::size_t>(i)];
                detail::proxy_loss_backward(net, xs[static_cast<std::size_t>(idx)],
                                            labels[static_cast<std::size_t>(idx)], &g);
            }
            double inv = 1.0 / static_cast<double>(to - from);
            ++adam.step;
            std::size_t off = 0;
            auto apply = [&](double* param, double* grad, std::size_t n) {
                for (std::size_t k = 0; k < n; ++k) grad[k] *= inv;
                adam.update(std::span<double>(param, n), std::span<const double>(grad, n), cfg.lr,
                            off);
                off += n;
            };
            apply(&net.conv_w[0][0], &g.conv_w[0][0],
                  static_cast<std::size_t>(kProxyChannels) * kProxyKernel);
            apply(net.conv_b, g.conv_b, kProxyChannels);
            apply(net.lin_w.w.data(), g.lin_w.w.data(), net.lin_w.w.size());
            apply(net.lin_b.data(), g.lin_b.data(), net.lin_b.size());
        }
    }

    ProxyResult res;
    res.confusion = ConfusionMatrix::zeros(T);
    res.features = Mat::zeros(n_eval, net.feature_dim());
    res.feature_labels.resize(static_cast<std::size_t>(n_eval));
    for (int i = 0; i < n_eval; ++i) {
        std::size_t idx = static_cast<std::size_t>(n_train + i);
        detail::ProxyTrace tr = detail::proxy_forward(net, xs[idx]);
        int pred = 0;
        for (int c = 1; c < T; ++c) {
            if (tr.logits[static_cast<std::size_t>(c)] > tr.logits[static_cast<std::size_t>(pred)]) {
                pred = c;
            }
        }
        res.confusion.at(labels[idx], pred) += 1;
        for (int c = 0; c < net.feature_dim(); ++c) {
            res.features.at(i, c) = tr.features[static_cast<std::size_t>(c)];
        }
        res.feature_labels[static_cast<std::size_t>(i)] = labels[idx] + 1;
    }
    res.accuracy = res.confusion.accuracy();
    return res;
}

struct DeAblationConfig {
    TrainConfig train;     // embedding flag is overridden per arm
    int eval_samples = 64;
};

struct DeAblationResult {
    double loss_with = 0.0;        // smoothed final training loss, embedding on
    double loss_without = 0.0;     // embedding off
    double stat_dist_with = 0.0;   // |mean IAAT(generated) - mean IAAT(real)|
    double stat_dist_without = 0.0;
};

namespace detail {

inline double smoothed_final_loss(const std::vector<double>& trace) {
    std::size_t tail = std::max<std::size_t>(1, trace.size() / 10);
    double acc = 0.0;
    for (std::size_t i = trace.size() - tail; i < trace.size(); ++i) acc += trace[i];
    return acc / static_cast<double>(tail);
}

inline double mean_window_iaat(const std::vector<std::vector<double>>& windows) {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& w : windows) {
        StatValue v = eval_statistic_checked(w, Statistic::iaat);
        if (!v.degenerate) {
            acc += v.value;
            ++n;
        }
    }
    if (n == 0) throw std::runtime_error("every window was degenerate for IAAT");
    return acc / static_cast<double>(n);
}

}  // namespace detail

// Trains twice, toggling only the step embedding, and compares training loss
// and a sample-quality proxy (distance between the mean IAAT of generated and
// real windows).
inline DeAblationResult de_ablation(const Dataset& ds, const Schedule& schedule,
                                    const DeAblationConfig& cfg) {
    auto run = [&](bool embedding, double* loss_out, double* dist_out) {
        TrainConfig tc = cfg.train;
        tc.model.use_step_embedding = embedding;
        TrainResult tr = train_denoiser(ds, schedule, tc);
        *loss_out = detail::smoothed_final_loss(tr.loss_trace);

        auto pool = detail::training_pool(ds, tc.model.window);
        Rng rng = Rng::substream(tc.seed, 0x6465616203ull, embedding ? 1 : 0);
        std::vector<std::vector<double>> real(static_cast<std::size_t>(cfg.eval_samples));
        const std::size_t w = static_cast<std::size_t>(tc.model.window);
        for (auto& win : real) {
            const auto& src = pool[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
            std::size_t start = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(src.size() - w)));
            win.assign(src.begin() + static_cast<std::ptrdiff_t>(start),
                       src.begin() + static_cast<std::ptrdiff_t>(start + w));
        }
        MlpDenoiser den{tr.params};
        std::vector<std::vector<double>> gen(static_cast<std::size_t>(cfg.eval_samples));
        for (auto& win : gen) win = sample(den, schedule, tc.model.window, rng);
        *dist_out = std::abs(detail::mean_window_iaat(gen) - detail::mean_window_iaat(real));
    };
    DeAblationResult res;
    run(true, &res.loss_with, &res.stat_dist_with);
    run(false, &res.loss_without, &res.stat_dist_without);
    return res;
}

struct ScanEntry {
    Family family = Family::linear;
    double tau = 0.0;
    int steps = 0;
    std::vector<double> normalized;  // min-max normalized decay curve
    double sigma2_sum = 0.0;
};

struct ScanSummary {
    Family family = Family::linear;
    double tau = 0.0;
    double curve_dispersion = 0.0;   // max pairwise mean |difference| on the progress axis
    double sigma2_rel_spread = 0.0;  // (max - min) / mean of the variance budgets
};

struct ScanResult {
    std::vector<ScanEntry> entries;
    std::vector<ScanSummary> summaries;
};

namespace detail {

// Linear interpolation of a curve (values at progress i/(n-1)) onto `points`
// uniform progress positions.
inline std::vector<double> resample_progress(const std::vector<double>& y, int points) {
    std::vector<double> out(static_cast<std::size_t>(points));
    const std::size_t n = y.size();
    for (int i = 0; i < points; ++i) {
        double p = static_cast<double>(i) / static_cast<double>(points - 1);
        double pos = p * static_cast<double>(n - 1);
        std::size_t lo = static_cast<std::size_t>(pos);
        if (lo >= n - 1) {
            out[static_cast<std::size_t>(i)] = y[n - 1];
        } else {
            double frac = pos - static_cast<double>(lo);
            out[static_cast<std::size_t>(i)] = y[lo] * (1.0 - frac) + y[lo + 1] * frac;
        }
    }
    return out;
}

inline double curve_distance(const std::vector<double>& a, const std::vector<double>& b) {
    constexpr int kGrid = 101;
    std::vector<double> ra = resample_progress(a, kGrid);
    std::vector<double> rb = resample_progress(b, kGrid);
    double acc = 0.0;
    for (int i = 0; i < kGrid; ++i) {
        acc += std::abs(ra[static_cast<std::size_t>(i)] - rb[static_cast<std::size_t>(i)]);
    }
    return acc / kGrid;
}

}  // namespace detail

// How stable are a family's decay curve and noise budget when the step count
// changes? One entry per (prototype, T), one summary per prototype.
inline ScanResult robustness_scan(const Dataset& ds,
                                  const std::vector<std::pair<Family, double>>& prototypes,
                                  const std::vector<int>& t_list, const CurveOptions& base) {
    if (prototypes.empty() || t_list.empty()) {
        throw std::invalid_argument("robustness scan needs prototypes and step counts");
    }
    ScanResult res;
    for (const auto& [family, tau] : prototypes) {
        std::vector<const ScanEntry*> group;
        for (int T : t_list) {
            ScheduleSpec spec;
            spec.family = family;
            spec.steps = T;
            spec.tau = tau;
            Schedule schedule = build_schedule(spec);
            ScanEntry e;
            e.family = family;
            e.tau = tau;
            e.steps = T;
            e.normalized = normalize(curve(ds, schedule, base)).values;
            e.sigma2_sum = posterior_variance_sum(schedule);
            res.entries.push_back(std::move(e));
        }
        ScanSummary sum;
        sum.family = family;
        sum.tau = tau;
        double lo = 0.0, hi = 0.0, mean = 0.0;
        bool first = true;
        std::size_t from = res.entries.size() - t_list.size();
        for (std::size_t i = from; i < res.entries.size(); ++i) {
            double v = res.entries[i].sigma2_sum;
            mean += v;
            if (first || v < lo) lo = v;
            if (first || v > hi) hi = v;
            first = false;
            for (std::size_t j = from; j < i; ++j) {
                sum.curve_dispersion = std::max(
                    sum.curve_dispersion,
                    detail::curve_distance(res.entries[i].normalized, res.entries[j].normalized));
            }
        }
        mean /= static_cast<double>(t_list.size());
        sum.sigma2_rel_spread = mean > 0.0 ? (hi - lo) / mean : 0.0;
        res.summaries.push_back(sum);
    }
    return res;
}

// Mean statistic of the sample population along the backward pass, from the
// initial noise (t = T) down to the final sample (t = 0). Length T + 1.
template <NoisePredictor D>
std::vector<double> generation_trace(const D& denoiser, const Schedule& schedule, Statistic stat,
                                     int n_samples, int window, std::uint64_t seed,
                                     const StatOptions& opt = {}) {
    if (n_samples < 1) throw std::invalid_argument("generation trace needs n_samples >= 1");
    const int T = schedule.steps();
    std::vector<double> acc(static_cast<std::size_t>(T) + 1, 0.0);
    std::vector<long> cnt(static_cast<std::size_t>(T) + 1, 0);
    for (int i = 0; i < n_samples; ++i) {
        Rng rng = Rng::substream(seed, 0x74726163ull, static_cast<std::uint64_t>(i));
        std::vector<double> x(static_cast<std::size_t>(window));
        for (double& v : x) v = rng.normal();
        std::size_t stage = 0;
        auto record = [&](const std::vector<double>& v) {
            StatValue sv = eval_statistic_checked(v, stat, opt);
            if (!sv.degenerate) {
                acc[stage] += sv.value;
                cnt[stage] += 1;
            }
            ++stage;
        };
        record(x);
        for (int t = T; t >= 1; --t) {
            x = guided_backward_step(x, denoiser, t, schedule, nullptr, rng);
            record(x);
        }
    }
    for (std::size_t s = 0; s < acc.size(); ++s) {
        if (cnt[s] == 0) {
            throw std::runtime_error("statistic degenerated for every sample at stage " +
                                     std::to_string(s));
        }
        acc[s] /= static_cast<double>(cnt[s]);
    }
    return acc;
}

// CRPS via the pinball loss at the nine deciles. Quantiles interpolate
// linearly between order statistics. Averaged over coordinates and levels.
inline double crps(const std::vector<std::vector<double>>& sample_forecasts,
                   std::span<const double> y) {
    if (sample_forecasts.empty()) throw std::invalid_argument("crps needs at least one forecast");
    const std::size_t dim = y.size();
    for (const auto& f : sample_forecasts) {
        if (f.size() != dim) throw std::invalid_argument("forecast length differs from the target");
    }
    constexpr double levels[] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    const std::size_t n = sample_forecasts.size();
    std::vector<double> col(n);
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
        for (std::size_t i = 0; i < n; ++i) col[i] = sample_forecasts[i][d];
        std::sort(col.begin(), col.end());
        for (double kappa : levels) {
            double pos = kappa * static_cast<double>(n - 1);
            std::size_t lo = static_cast<std::size_t>(pos);
            double q;
            if (lo >= n - 1) {
                q = col[n - 1];
            } else {
                double frac = pos - static_cast<double>(lo);
                q = col[lo] * (1.0 - frac) + col[lo + 1] * frac;
            }
            double ind = y[d] < q ? 1.0 : 0.0;
            acc += 2.0 * (kappa - ind) * (y[d] - q);
        }
    }
    return acc / (static_cast<double>(dim) * 9.0);
}

}  // namespace ant
