#include <ant/denoiser.hpp>
#include <ant/diffusion.hpp>
#include <ant/rng.hpp>
#include <ant/schedule.hpp>
#include <ant/stats.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "helpers.hpp"

using Catch::Approx;

namespace {

// Predicts zero noise everywhere; the simplest valid NoisePredictor.
struct ZeroDenoiser {
    std::vector<double> predict(std::span<const double> x, int) const {
        return std::vector<double>(x.size(), 0.0);
    }
    std::vector<double> input_gradient(std::span<const double> x, int,
                                       std::span<const double>) const {
        return std::vector<double>(x.size(), 0.0);
    }
};

std::vector<double> random_window(ant::Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> x(n);
    for (double& v : x) v = scale * rng.normal();
    return x;
}

ant::MlpDenoiser small_denoiser(int window, bool embedding, std::uint64_t seed) {
    ant::DenoiserConfig cfg;
    cfg.window = window;
    cfg.hidden = 12;
    cfg.use_step_embedding = embedding;
    cfg.embedding_dim = 8;
    return ant::MlpDenoiser{ant::init_denoiser(cfg, seed)};
}

}  // namespace

TEST_CASE("forward_step zero-noise limit and determinism", "[diffusion][forward]") {
    ant::Schedule tiny = ant::from_table({1e-12});
    ant::Rng rng(1);
    std::vector<double> x{1.0, -2.0, 0.5, 4.0};
    std::vector<double> y = ant::forward_step(x, 1, tiny, rng);
    for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(y[i] == Approx(x[i]).margin(1e-5));

    ant::Rng a(7), b(7);
    ant::Schedule s = ant::make_linear(10);
    REQUIRE(ant::forward_step(x, 3, s, a) == ant::forward_step(x, 3, s, b));

    REQUIRE_THROWS_AS(ant::forward_step(x, 0, s, a), std::invalid_argument);
    REQUIRE_THROWS_AS(ant::forward_step(x, 11, s, a), std::invalid_argument);
}

TEST_CASE("forward_step variance from the origin", "[diffusion][forward]") {
    ant::Schedule s = ant::from_table({0.3});
    ant::Rng rng(42);
    const int n = 100000;
    std::vector<double> zero{0.0};
    std::vector<double> draws(n);
    for (int i = 0; i < n; ++i) draws[i] = ant::forward_step(zero, 1, s, rng)[0];
    double var = testutil::variance_of(draws);
    // sd of a sample variance of N(0, b) is b*sqrt(2/n)
    REQUIRE(var == Approx(0.3).margin(3.0 * 0.3 * std::sqrt(2.0 / n)));
}

TEST_CASE("forward_closed identity at t=0 and moments at depth", "[diffusion][forward]") {
    ant::Schedule s = ant::make_linear(100);
    ant::Rng rng(5);
    std::vector<double> x0{0.7, -1.3, 2.1};
    std::vector<double> same = ant::forward_closed(x0, 0, s, rng);
    REQUIRE(same == x0);

    // x0 = 0 at the terminal step of the default linear schedule: nearly unit noise.
    const int n = 20000;
    std::vector<double> zero{0.0};
    std::vector<double> draws(n);
    for (int i = 0; i < n; ++i) draws[i] = ant::forward_closed(zero, 100, s, rng)[0];
    double want_var = 1.0 - s.alpha_bar_at(100);
    REQUIRE(testutil::mean_of(draws) == Approx(0.0).margin(4.0 / std::sqrt(double(n))));
    REQUIRE(testutil::variance_of(draws) ==
            Approx(want_var).margin(4.0 * want_var * std::sqrt(2.0 / n)));
}

TEST_CASE("forward_closed agrees with iterated forward_step in distribution",
          "[diffusion][forward]") {
    ant::Schedule s = ant::make_cosine(10, 1.0);
    const int t = 10, n = 10000;
    std::vector<double> x0{1.5, -0.5};

    ant::Rng rng_closed(11), rng_iter(13);
    std::vector<double> closed(n), iterated(n);
    for (int i = 0; i < n; ++i) {
        closed[i] = ant::forward_closed(x0, t, s, rng_closed)[0];
        std::vector<double> cur = x0;
        for (int step = 1; step <= t; ++step) cur = ant::forward_step(cur, step, s, rng_iter);
        iterated[i] = cur[0];
    }
    double se_mean = std::sqrt(2.0 / n);  // both arms have variance ~1
    REQUIRE(testutil::mean_of(closed) - testutil::mean_of(iterated) ==
            Approx(0.0).margin(3.0 * se_mean));
    double pooled_var_se = std::sqrt(2.0 / n) * 2.0;
    REQUIRE(testutil::variance_of(closed) - testutil::variance_of(iterated) ==
            Approx(0.0).margin(3.0 * pooled_var_se));
}

TEST_CASE("corrupt_trajectory chains forward steps", "[diffusion][trajectory]") {
    ant::Schedule one = ant::from_table({0.2});
    std::vector<double> x0{0.3, 0.9};
    ant::Rng a(3), b(3);
    auto traj = ant::corrupt_trajectory(x0, one, a);
    REQUIRE(traj.size() == 1);
    REQUIRE(traj[0] == ant::forward_step(x0, 1, one, b));

    ant::Schedule s = ant::make_linear(20);
    ant::Rng c(9), d(9);
    REQUIRE(ant::corrupt_trajectory(x0, s, c) == ant::corrupt_trajectory(x0, s, d));
}

TEST_CASE("deep corruption scrubs autocorrelation", "[diffusion][trajectory]") {
    ant::Dataset ds = ant::generate_sine_mix(1, 512, {24.0}, 0.0, 8);
    ant::Schedule s = ant::make_linear(100);
    REQUIRE(s.alpha_bar.back() < 0.01);

    double clean = ant::eval_statistic(ds.series[0].values, ant::Statistic::iaat);
    ant::Rng rng(21);
    auto traj = ant::corrupt_trajectory(ds.series[0].values, s, rng);
    double deep = ant::eval_statistic(traj.back(), ant::Statistic::iaat);
    REQUIRE(clean > 3.0);
    REQUIRE(deep < 1.8);
}

TEST_CASE("predict_x0 inverts the closed form", "[diffusion][predict]") {
    ant::Schedule s = ant::make_cosine(50, 2.0);
    ant::Rng rng(17);
    std::vector<double> x0 = random_window(rng, 16);
    for (int t : {1, 25, 50}) {
        // Rebuild x_t from a known noise vector, then invert.
        std::vector<double> eps = random_window(rng, 16);
        double ab = s.alpha_bar_at(t);
        std::vector<double> x_t(16);
        for (int i = 0; i < 16; ++i) {
            x_t[i] = std::sqrt(ab) * x0[i] + std::sqrt(1.0 - ab) * eps[i];
        }
        std::vector<double> rec = ant::predict_x0(x_t, eps, t, s);
        for (int i = 0; i < 16; ++i) REQUIRE(rec[i] == Approx(x0[i]).margin(1e-10));
    }

    // eps_hat = 0 divides out the signal fraction.
    std::vector<double> x_t{0.4, -0.8};
    std::vector<double> zero(2, 0.0);
    std::vector<double> out = ant::predict_x0(x_t, zero, 10, s);
    double inv = 1.0 / std::sqrt(s.alpha_bar_at(10));
    REQUIRE(out[0] == Approx(0.4 * inv).epsilon(1e-14));
    REQUIRE(out[1] == Approx(-0.8 * inv).epsilon(1e-14));
}

TEST_CASE("backward_step mean formula and the noiseless final step", "[diffusion][backward]") {
    ant::Schedule s = ant::make_linear(30);
    ant::Rng rng(23);
    std::vector<double> x_t = random_window(rng, 6);
    std::vector<double> eps = random_window(rng, 6);

    // t = 1: no noise is drawn, the rng state must be untouched.
    ant::Rng before(99), after(99);
    std::vector<double> mu = ant::backward_step(x_t, eps, 1, s, before);
    REQUIRE(before.raw() == after.raw());

    double a = s.alpha_at(1), ab = s.alpha_bar_at(1);
    for (int i = 0; i < 6; ++i) {
        double want = (x_t[i] - (1.0 - a) / std::sqrt(1.0 - ab) * eps[i]) / std::sqrt(a);
        REQUIRE(mu[i] == Approx(want).epsilon(1e-13));
    }

    // beta -> 0 with eps_hat = 0 leaves the state in place.
    ant::Schedule tiny = ant::from_table({1e-12});
    std::vector<double> zero(6, 0.0);
    ant::Rng r2(1);
    std::vector<double> kept = ant::backward_step(x_t, zero, 1, tiny, r2);
    for (int i = 0; i < 6; ++i) REQUIRE(kept[i] == Approx(x_t[i]).epsilon(1e-10));

    // t > 1 draws posterior noise; beta variance is selectable.
    ant::Rng r3(4), r4(4);
    std::vector<double> post = ant::backward_step(x_t, eps, 5, s, r3);
    std::vector<double> raw = ant::backward_step(x_t, eps, 5, s, r4, ant::VarianceKind::beta);
    REQUIRE(post != raw);
}

TEST_CASE("guided step with zero strength or empty mask is the plain step",
          "[diffusion][guidance]") {
    ant::Schedule s = ant::make_cosine(20, 1.0);
    ant::MlpDenoiser den = small_denoiser(8, true, 71);
    ant::Rng rng(31);
    std::vector<double> x_t = random_window(rng, 8);

    ant::GuidanceTarget off;
    off.observed = random_window(rng, 8);
    off.mask.assign(8, 1.0);
    off.strength = 0.0;

    for (int t : {1, 10, 20}) {
        ant::Rng a(50 + t), b(50 + t), c(50 + t);
        std::vector<double> eps_hat = den.predict(x_t, t);
        std::vector<double> plain = ant::backward_step(x_t, eps_hat, t, s, a);
        std::vector<double> guided_null = ant::guided_backward_step(x_t, den, t, s, nullptr, b);
        std::vector<double> guided_off = ant::guided_backward_step(x_t, den, t, s, &off, c);
        REQUIRE(plain == guided_null);
        REQUIRE(plain == guided_off);
    }

    // All-zero mask: the vjp of a zero upstream vector is exactly zero.
    ant::GuidanceTarget masked;
    masked.observed = random_window(rng, 8);
    masked.mask.assign(8, 0.0);
    masked.strength = 3.0;
    ant::Rng a(77), b(77);
    std::vector<double> eps_hat = den.predict(x_t, 10);
    REQUIRE(ant::guided_backward_step(x_t, den, 10, s, &masked, a) ==
            ant::backward_step(x_t, eps_hat, 10, s, b));
}

TEST_CASE("guidance gradient matches finite differences", "[diffusion][guidance]") {
    for (bool embedding : {false, true}) {
        ant::Schedule s = ant::make_linear(5);
        ant::MlpDenoiser den = small_denoiser(8, embedding, embedding ? 131 : 137);
        ant::Rng rng(41);
        std::vector<double> x_t = random_window(rng, 8);

        ant::GuidanceTarget target;
        target.observed = random_window(rng, 8);
        target.mask = {1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0};
        target.strength = 1.0;

        const int t = 3;
        std::vector<double> grad = ant::guidance_gradient(x_t, den, t, s, target);
        const double h = 1e-5;
        for (int i = 0; i < 8; ++i) {
            std::vector<double> plus = x_t, minus = x_t;
            plus[i] += h;
            minus[i] -= h;
            double fd = (ant::guidance_log_density(plus, den, t, s, target) -
                         ant::guidance_log_density(minus, den, t, s, target)) /
                        (2.0 * h);
            REQUIRE(testutil::rel_err(grad[i], fd) < 1e-4);
        }
    }
}

TEST_CASE("sample is deterministic and follows the schedule variance", "[diffusion][sample]") {
    ant::Schedule s = ant::make_cosine(5, 1.0);
    ZeroDenoiser zero;

    ant::Rng a(61), b(61);
    REQUIRE(ant::sample(zero, s, 4, a) == ant::sample(zero, s, 4, b));

    // With eps_hat = 0 the sampler is a linear Gaussian recursion whose
    // variance is available in closed form:
    //   v_T = 1;  v_{t-1} = v_t / alpha_t + sigma_t^2  (t > 1);  v_0 = v_1 / alpha_1
    double v = 1.0;
    for (int t = s.steps(); t >= 2; --t) v = v / s.alpha_at(t) + s.posterior_var_at(t);
    v = v / s.alpha_at(1);

    const int n = 20000, w = 4;
    std::vector<double> all;
    all.reserve(static_cast<std::size_t>(n) * w);
    ant::Rng rng(303);
    for (int i = 0; i < n; ++i) {
        std::vector<double> x = ant::sample(zero, s, w, rng);
        all.insert(all.end(), x.begin(), x.end());
    }
    double got = testutil::variance_of(all);
    double se = v * std::sqrt(2.0 / static_cast<double>(all.size()));
    REQUIRE(got == Approx(v).margin(4.0 * se));
}

TEST_CASE("stronger guidance pulls samples toward the observation", "[diffusion][sample]") {
    ant::Schedule s = ant::make_linear(20);
    ZeroDenoiser zero;
    std::vector<double> obs(6, 1.0);

    auto mad_at = [&](double strength) {
        ant::GuidanceTarget target;
        target.observed = obs;
        target.mask.assign(6, 1.0);
        target.strength = strength;
        double acc = 0.0;
        int count = 0;
        for (std::uint64_t seed = 0; seed < 16; ++seed) {
            ant::Rng rng = ant::Rng::substream(4242, seed, 0);
            std::vector<double> x =
                ant::sample(zero, s, 6, rng, strength == 0.0 ? nullptr : &target);
            for (double v : x) {
                acc += std::abs(v - 1.0);
                ++count;
            }
        }
        return acc / count;
    };

    double m0 = mad_at(0.0), m1 = mad_at(1.0), m4 = mad_at(4.0), m16 = mad_at(16.0);
    REQUIRE(m1 < m0);
    REQUIRE(m4 < m1);
    REQUIRE(m16 < m4);
}
