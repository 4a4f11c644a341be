#pragma once

// Shared helpers for the test suite: independent reference implementations
// (kept deliberately literal so they cannot share bugs with the library),
// plus small filesystem and process utilities.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <unistd.h>

namespace testutil {

// Literal biased autocorrelation: rho_k = sum_{i<n-k}(x_i - m)(x_{i+k} - m) / sum_i (x_i - m)^2.
inline std::vector<double> brute_force_acf(const std::vector<double>& x, int max_lag) {
    const std::size_t n = x.size();
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(n);
    double denom = 0.0;
    for (double v : x) denom += (v - m) * (v - m);
    std::vector<double> rho;
    for (int k = 1; k <= max_lag; ++k) {
        double num = 0.0;
        for (std::size_t i = 0; i + static_cast<std::size_t>(k) < n; ++i) {
            num += (x[i] - m) * (x[i + static_cast<std::size_t>(k)] - m);
        }
        rho.push_back(num / denom);
    }
    return rho;
}

inline double mean_of(const std::vector<double>& x) {
    double m = 0.0;
    for (double v : x) m += v;
    return m / static_cast<double>(x.size());
}

inline double variance_of(const std::vector<double>& x) {
    double m = mean_of(x);
    double acc = 0.0;
    for (double v : x) acc += (v - m) * (v - m);
    return acc / static_cast<double>(x.size());
}

inline double pearson_corr(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = mean_of(a), mb = mean_of(b);
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    return num / std::sqrt(da * db);
}

// Ranks with average tie handling, then Pearson on the ranks.
inline std::vector<double> ranks_of(const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    std::vector<double> r(x.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

inline double spearman_corr(const std::vector<double>& a, const std::vector<double>& b) {
    return pearson_corr(ranks_of(a), ranks_of(b));
}

// Central finite difference of a scalar function of one perturbed value.
// `eval` must recompute the full objective from scratch after the value at
// `slot` is replaced; the caller owns putting the original value back.
inline double central_difference(const std::function<double(double)>& eval_at, double x0,
                                 double h) {
    return (eval_at(x0 + h) - eval_at(x0 - h)) / (2.0 * h);
}

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max({1.0, std::abs(got), std::abs(want)});
}

struct TempDir {
    std::filesystem::path path;

    TempDir() {
        auto base = std::filesystem::temp_directory_path();
        static int counter = 0;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            auto candidate =
                base / ("ant_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path = candidate;
                return;
            }
        }
        throw std::runtime_error("could not create a temp directory");
    }

    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }

    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

}  // namespace testutil
