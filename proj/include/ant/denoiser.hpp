#pragma once

// Noise-prediction network: a two-hidden-layer ReLU MLP over a fixed window,
// optionally concatenated with a sinusoidal embedding of the diffusion step.
// Forward, backward and the optimizer are written out by hand; the input
// backprop doubles as the Jacobian-transpose product the guidance term needs.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ant/dataset.hpp"
#include "ant/diffusion.hpp"
#include "ant/rng.hpp"
#include "ant/schedule.hpp"

namespace ant {

struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> w;

    static Mat zeros(int r, int c) {
        Mat m;
        m.rows = r;
        m.cols = c;
        m.w.assign(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0);
        return m;
    }
    double& at(int r, int c) { return w[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return w[static_cast<std::size_t>(r) * cols + c]; }
};

// Even components carry sin(t / 10000^(2i/dim)), odd ones the matching cos.
inline std::vector<double> step_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("embedding dim must be even and >= 2");
    std::vector<double> e(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim / 2; ++i) {
        double freq = std::pow(10000.0, 2.0 * i / static_cast<double>(dim));
        e[static_cast<std::size_t>(2 * i)] = std::sin(t / freq);
        e[static_cast<std::size_t>(2 * i + 1)] = std::cos(t / freq);
    }
    return e;
}

struct DenoiserConfig {
    int window = 48;
    int hidden = 64;
    bool use_step_embedding = true;
    int embedding_dim = 32;

    int input_dim() const { return window + (use_step_embedding ? embedding_dim : 0); }
};

struct DenoiserParams {
    DenoiserConfig cfg;
    Mat w1, w2, w3;
    std::vector<double> b1, b2, b3;
};

// He-normal initialization, fully determined by the seed.
inline DenoiserParams init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed) {
    if (cfg.window < 1 || cfg.hidden < 1) throw std::invalid_argument("bad denoiser config");
    if (cfg.use_step_embedding && (cfg.embedding_dim < 2 || cfg.embedding_dim % 2 != 0)) {
        throw std::invalid_argument("embedding dim must be even and >= 2");
    }
    DenoiserParams p;
    p.cfg = cfg;
    const int in = cfg.input_dim(), h = cfg.hidden, out = cfg.window;
    p.w1 = Mat::zeros(h, in);
    p.w2 = Mat::zeros(h, h);
    p.w3 = Mat::zeros(out, h);
    p.b1.assign(static_cast<std::size_t>(h), 0.0);
    p.b2.assign(static_cast<std::size_t>(h), 0.0);
    p.b3.assign(static_cast<std::size_t>(out), 0.0);

    Rng rng = Rng::substream(seed, 0x64656e6full, 0);
    auto fill = [&](Mat& m) {
        double s = std::sqrt(2.0 / static_cast<double>(m.cols));
        for (double& v : m.w) v = s * rng.normal();
    };
    fill(p.w1);
    fill(p.w2);
    fill(p.w3);
    return p;
}

namespace detail {

struct MlpTrace {
    std::vector<double> in;      // window ++ embedding
    std::vector<double> z1, h1;  // pre/post activation, layer 1
    std::vector<double> z2, h2;
    std::vector<double> out;
};

inline void affine(const Mat& w, const std::vector<double>& b, const std::vector<double>& x,
                   std::vector<double>& out) {
    out.assign(b.begin(), b.end());
    for (int r = 0; r < w.rows; ++r) {
        double acc = 0.0;
        const double* row = w.w.data() + static_cast<std::size_t>(r) * w.cols;
        for (int c = 0; c < w.cols; ++c) acc += row[c] * x[static_cast<std::size_t>(c)];
        out[static_cast<std::size_t>(r)] += acc;
    }
}

inline void relu(const std::vector<double>& z, std::vector<double>& h) {
    h.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) h[i] = z[i] > 0.0 ? z[i] : 0.0;
}

inline MlpTrace mlp_forward(const DenoiserParams& p, std::span<const double> x, int t) {
    if (static_cast<int>(x.size()) != p.cfg.window) {
        throw std::invalid_argument("denoiser got window of length " + std::to_string(x.size()) +
                                    ", expected " + std::to_string(p.cfg.window));
    }
    MlpTrace tr;
    tr.in.assign(x.begin(), x.end());
    if (p.cfg.use_step_embedding) {
        std::vector<double> emb = step_embedding(t, p.cfg.embedding_dim);
        tr.in.insert(tr.in.end(), emb.begin(), emb.end());
    }
    affine(p.w1, p.b1, tr.in, tr.z1);
    relu(tr.z1, tr.h1);
    affine(p.w2, p.b2, tr.h1, tr.z2);
    relu(tr.z2, tr.h2);
    affine(p.w3, p.b3, tr.h2, tr.out);
    return tr;
}

}  // namespace detail

// Gradient accumulator with the same shapes as the parameters.
struct DenoiserGrads {
    Mat w1, w2, w3;
    std::vector<double> b1, b2, b3;

    static DenoiserGrads zeros_like(const DenoiserParams& p) {
        DenoiserGrads g;
        g.w1 = Mat::zeros(p.w1.rows, p.w1.cols);
        g.w2 = Mat::zeros(p.w2.rows, p.w2.cols);
        g.w3 = Mat::zeros(p.w3.rows, p.w3.cols);
        g.b1.assign(p.b1.size(), 0.0);
        g.b2.assign(p.b2.size(), 0.0);
        g.b3.assign(p.b3.size(), 0.0);
        return g;
    }
};

namespace detail {

// Backward pass from d(loss)/d(out). Fills parameter grads when grads is not
// null and returns d(loss)/d(input window).
inline std::vector<double> mlp_backward(const DenoiserParams& p, const MlpTrace& tr,
                                        std::span<const double> dout, DenoiserGrads* grads) {
    const int h = p.cfg.hidden;
    std::vector<double> dh2(static_cast<std::size_t>(h), 0.0);
    for (int r = 0; r < p.w3.rows; ++r) {
        double g = dout[static_cast<std::size_t>(r)];
        if (grads != nullptr) {
            grads->b3[static_cast<std::size_t>(r)] += g;
            for (int c = 0; c < h; ++c) grads->w3.at(r, c) += g * tr.h2[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < h; ++c) dh2[static_cast<std::size_t>(c)] += g * p.w3.at(r, c);
    }
    std::vector<double> dz2(static_cast<std::size_t>(h));
    for (int i = 0; i < h; ++i) {
        dz2[static_cast<std::size_t>(i)] =
            tr.z2[static_cast<std::size_t>(i)] > 0.0 ? dh2[static_cast<std::size_t>(i)] : 0.0;
    }

    std::vector<double> dh1(static_cast<std::size_t>(h), 0.0);
    for (int r = 0; r < h; ++r) {
        double g = dz2[static_cast<std::size_t>(r)];
        if (g != 0.0 && grads != nullptr) {
            grads->b2[static_cast<std::size_t>(r)] += g;
            for (int c = 0; c < h; ++c) grads->w2.at(r, c) += g * tr.h1[static_cast<std::size_t>(c)];
        }
        if (g != 0.0) {
            for (int c = 0; c < h; ++c) dh1[static_cast<std::size_t>(c)] += g * p.w2.at(r, c);
        }
    }
    std::vector<double> dz1(static_cast<std::size_t>(h));
    for (int i = 0; i < h; ++i) {
        dz1[static_cast<std::size_t>(i)] =
            tr.z1[static_cast<std::size_t>(i)] > 0.0 ? dh1[static_cast<std::size_t>(i)] : 0.0;
    }

    const int in = static_cast<int>(tr.in.size());
    std::vector<double> din(static_cast<std::size_t>(in), 0.0);
    for (int r = 0; r < p.w1.rows; ++r) {
        double g = dz1[static_cast<std::size_t>(r)];
        if (g == 0.0) continue;
        if (grads != nullptr) {
            grads->b1[static_cast<std::size_t>(r)] += g;
            for (int c = 0; c < in; ++c) grads->w1.at(r, c) += g * tr.in[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < in; ++c) din[static_cast<std::size_t>(c)] += g * p.w1.at(r, c);
    }
    din.resize(static_cast<std::size_t>(p.cfg.window));  // drop the embedding block
    return din;
}

}  // namespace detail

// Satisfies the NoisePredictor concept used by the diffusion routines.
struct MlpDenoiser {
    DenoiserParams params;

    std::vector<double> predict(std::span<const double> x, int t) const {
        return detail::mlp_forward(params, x, t).out;
    }

    // J^T * upstream with respect to the input window.
    std::vector<double> input_gradient(std::span<const double> x, int t,
                                       std::span<const double> upstream) const {
        detail::MlpTrace tr = detail::mlp_forward(params, x, t);
        if (upstream.size() != tr.out.size()) {
            throw std::invalid_argument("upstream length differs from the denoiser output");
        }
        return detail::mlp_backward(params, tr, upstream, nullptr);
    }
};

// One training batch: each window gets an independent step t ~ U{1..T} and
// noise draw, the loss is mean over batch items and coordinates of
// (eps_hat - eps)^2. Parameter gradients land in *grads when given.
inline double loss_and_grads(const DenoiserParams& p,
                             const std::vector<std::vector<double>>& batch, const Schedule& s,
                             Rng& rng, DenoiserGrads* grads) {
    if (batch.empty()) throw std::invalid_argument("empty training batch");
    const std::size_t w = static_cast<std::size_t>(p.cfg.window);
    const double norm = 1.0 / (static_cast<double>(batch.size()) * static_cast<double>(w));
    double loss = 0.0;
    std::vector<double> eps(w), x_t(w), dout(w);
    for (const std::vector<double>& x0 : batch) {
        if (x0.size() != w) throw std::invalid_argument("batch window has the wrong length");
        int t = static_cast<int>(rng.uniform_int(1, s.steps()));
        const double keep = std::sqrt(s.alpha_bar_at(t));
        const double noise = std::sqrt(1.0 - s.alpha_bar_at(t));
        for (std::size_t i = 0; i < w; ++i) {
            eps[i] = rng.normal();
            x_t[i] = keep * x0[i] + noise * eps[i];
        }
        detail::MlpTrace tr = detail::mlp_forward(p, x_t, t);
        for (std::size_t i = 0; i < w; ++i) {
            double r = tr.out[i] - eps[i];
            loss += r * r * norm;
            dout[i] = 2.0 * r * norm;
        }
        if (grads != nullptr) detail::mlp_backward(p, tr, dout, grads);
    }
    return loss;
}

// Adam with the usual bias correction.
struct AdamState {
    std::vector<double> m, v;
    long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void init(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        step = 0;
    }

    void update(std::span<double> param, std::span<const double> grad, double lr,
                std::size_t offset) {
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < param.size(); ++i) {
            std::size_t j = offset + i;
            m[j] = beta1 * m[j] + (1.0 - beta1) * grad[i];
            v[j] = beta2 * v[j] + (1.0 - beta2) * grad[i] * grad[i];
            param[i] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
        }
    }
};

struct TrainConfig {
    DenoiserConfig model;
    double lr = 1e-3;
    int steps = 2000;
    int batch = 32;
    std::uint64_t seed = 0;
};

struct TrainResult {
    DenoiserParams params;
    std::vector<double> loss_trace;
};

namespace detail {

// Mean-scaled copies of every series long enough to cut a window from.
inline std::vector<std::vector<double>> training_pool(const Dataset& ds, int window) {
    std::vector<std::vector<double>> pool;
    for (const TimeSeries& s : ds.series) {
        if (static_cast<int>(s.values.size()) < window) continue;
        bool all_zero = true;
        for (double v : s.values) {
            if (v != 0.0) {
                all_zero = false;
                break;
            }
        }
        if (all_zero) continue;
        pool.push_back(mean_scale(s).first.values);
    }
    if (pool.empty()) {
        throw std::invalid_argument("no series is usable for training (need length >= " +
                                    std::to_string(window) + " and non-zero values)");
    }
    return pool;
}

}  // namespace detail

inline TrainResult train_denoiser(const Dataset& ds, const Schedule& s, const TrainConfig& cfg) {
    if (cfg.steps < 0 || cfg.batch < 1 || !(cfg.lr > 0.0)) {
        throw std::invalid_argument("bad training config");
    }
    auto pool = detail::training_pool(ds, cfg.model.window);

    TrainResult res;
    res.params = init_denoiser(cfg.model, cfg.seed);
    res.loss_trace.reserve(static_cast<std::size_t>(cfg.steps));

    DenoiserParams& p = res.params;
    const std::size_t n_params = p.w1.w.size() + p.b1.size() + p.w2.w.size() + p.b2.size() +
                                 p.w3.w.size() + p.b3.size();
    AdamState adam;
    adam.init(n_params);

    Rng rng = Rng::substream(cfg.seed, 0x74726169ull, 1);
    std::vector<std::vector<double>> batch(static_cast<std::size_t>(cfg.batch));
    const std::size_t w = static_cast<std::size_t>(cfg.model.window);

    for (int step = 1; step <= cfg.steps; ++step) {
        for (auto& item : batch) {
            const auto& src = pool[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
            std::size_t start = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(src.size() - w)));
            item.assign(src.begin() + static_cast<std::ptrdiff_t>(start),
                        src.begin() + static_cast<std::ptrdiff_t>(start + w));
        }
        DenoiserGrads g = DenoiserGrads::zeros_like(p);
        double loss = loss_and_grads(p, batch, s, rng, &g);
        res.loss_trace.push_back(loss);
        if (!std::isfinite(loss) || loss > 1e6) {
            std::string tail;
            std::size_t from = res.loss_trace.size() > 5 ? res.loss_trace.size() - 5 : 0;
            for (std::size_t i = from; i < res.loss_trace.size(); ++i) {
                tail += (tail.empty() ? "" : ", ") + std::to_string(res.loss_trace[i]);
            }
            throw std::runtime_error("training diverged at step " + std::to_string(step) +
                                     " (recent losses: " + tail + ")");
        }

        ++adam.step;
        std::size_t off = 0;
        auto apply = [&](std::vector<double>& param, const std::vector<double>& grad) {
            adam.update(param, grad, cfg.lr, off);
            off += param.size();
        };
        apply(p.w1.w, g.w1.w);
        apply(p.b1, g.b1);
        apply(p.w2.w, g.w2.w);
        apply(p.b2, g.b2);
        apply(p.w3.w, g.w3.w);
        apply(p.b3, g.b3);
    }
    return res;
}

// Serialization with explicit shapes; numbers survive the round trip exactly.
inline nlohmann::ordered_json denoiser_to_json(const DenoiserParams& p) {
    auto mat = [](const Mat& m) {
        return nlohmann::ordered_json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.w}};
    };
    nlohmann::ordered_json j;
    j["window"] = p.cfg.window;
    j["hidden"] = p.cfg.hidden;
    j["embedding"] = {{"enabled", p.cfg.use_step_embedding}, {"dim", p.cfg.embedding_dim}};
    j["w1"] = mat(p.w1);
    j["b1"] = p.b1;
    j["w2"] = mat(p.w2);
    j["b2"] = p.b2;
    j["w3"] = mat(p.w3);
    j["b3"] = p.b3;
    return j;
}

inline DenoiserParams denoiser_from_json(const nlohmann::json& j) {
    auto mat = [](const nlohmann::json& mj, const char* name) {
        if (!mj.is_object() || !mj.contains("rows") || !mj.contains("cols") || !mj.contains("data")) {
            throw std::runtime_error(std::string("denoiser json: bad matrix '") + name + "'");
        }
        Mat m;
        m.rows = mj["rows"].get<int>();
        m.cols = mj["cols"].get<int>();
        m.w = mj["data"].get<std::vector<double>>();
        if (static_cast<std::size_t>(m.rows) * static_cast<std::size_t>(m.cols) != m.w.size()) {
            throw std::runtime_error(std::string("denoiser json: matrix '") + name +
                                     "' shape does not match its data");
        }
        return m;
    };
    DenoiserParams p;
    p.cfg.window = j.at("window").get<int>();
    p.cfg.hidden = j.at("hidden").get<int>();
    p.cfg.use_step_embedding = j.at("embedding").at("enabled").get<bool>();
    p.cfg.embedding_dim = j.at("embedding").at("dim").get<int>();
    p.w1 = mat(j.at("w1"), "w1");
    p.b1 = j.at("b1").get<std::vector<double>>();
    p.w2 = mat(j.at("w2"), "w2");
    p.b2 = j.at("b2").get<std::vector<double>>();
    p.w3 = mat(j.at("w3"), "w3");
    p.b3 = j.at("b3").get<std::vector<double>>();

    const int in = p.cfg.input_dim();
    if (p.w1.cols != in || p.w1.rows != p.cfg.hidden || p.w2.rows != p.cfg.hidden ||
        p.w2.cols != p.cfg.hidden || p.w3.rows != p.cfg.window || p.w3.cols != p.cfg.hidden ||
        static_cast<int>(p.b1.size()) != p.cfg.hidden ||
        static_cast<int>(p.b2.size()) != p.cfg.hidden ||
        static_cast<int>(p.b3.size()) != p.cfg.window) {
        throw std::runtime_error("denoiser json: shapes are inconsistent with the config");
    }
    return p;
}

}  // namespace ant
