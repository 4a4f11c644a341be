#pragma once

// Time series containers, CSV ingestion and synthetic generators.
//
// Two CSV layouts are understood:
//   wide: header "id,v1,v2,..." and one series per row (canonical layout)
//   long: header "id,index,value", rows grouped by id with increasing index
// Values must parse as finite doubles; NaN and infinities are rejected with
// the offending row and column named in the error.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "ant/rng.hpp"

namespace ant {

struct TimeSeries {
    std::string id;
    std::vector<double> values;

    std::size_t length() const { return values.size(); }
};

// A dataset groups series and declares a channel count. Multivariate records
// are stored channel-major: record r occupies series[r*dim .. r*dim+dim-1]
// and all channels of a record must have equal length.
struct Dataset {
    std::string name;
    std::vector<TimeSeries> series;
    int dim = 1;

    std::size_t record_count() const { return series.size() / static_cast<std::size_t>(dim); }
    const TimeSeries& channel(std::size_t record, int c) const {
        return series[record * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)];
    }
};

enum class CsvLayout { Wide, Long };

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

// Strict finite-double parse; row/col are 1-based and only used for messages.
inline double parse_value(std::string_view field, std::size_t row, std::size_t col) {
    double v = 0.0;
    const char* first = field.data();
    const char* last = first + field.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || field.empty() || !std::isfinite(v)) {
        throw std::runtime_error("csv parse error at row " + std::to_string(row) + ", column " +
                                 std::to_string(col) + ": '" + std::string(field) +
                                 "' is not a finite number");
    }
    return v;
}

inline void format_value(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

}  // namespace detail

// Validates the structural invariants and throws std::invalid_argument on the
// first violation. Every series needs length >= 2 with finite values, and a
// multivariate dataset needs aligned channels.
inline void validate_dataset(const Dataset& ds) {
    if (ds.series.empty()) throw std::invalid_argument("dataset '" + ds.name + "' has no series");
    if (ds.dim < 1) throw std::invalid_argument("dataset dimensionality must be >= 1");
    if (ds.series.size() % static_cast<std::size_t>(ds.dim) != 0) {
        throw std::invalid_argument("dataset '" + ds.name + "': series count " +
                                    std::to_string(ds.series.size()) +
                                    " is not a multiple of dim " + std::to_string(ds.dim));
    }
    for (const TimeSeries& s : ds.series) {
        if (s.values.size() < 2) {
            throw std::invalid_argument("series '" + s.id + "' is shorter than 2 points");
        }
        for (double v : s.values) {
            if (!std::isfinite(v)) {
                throw std::invalid_argument("series '" + s.id + "' contains a non-finite value");
            }
        }
    }
    if (ds.dim > 1) {
        for (std::size_t r = 0; r < ds.record_count(); ++r) {
            std::size_t len = ds.channel(r, 0).length();
            for (int c = 1; c < ds.dim; ++c) {
                if (ds.channel(r, c).length() != len) {
                    throw std::invalid_argument("record " + std::to_string(r) +
                                                " has ragged channels (" + std::to_string(len) +
                                                " vs " + std::to_string(ds.channel(r, c).length()) + ")");
                }
            }
        }
    }
}

inline Dataset make_dataset(std::string name, std::vector<TimeSeries> series, int dim = 1) {
    Dataset ds{std::move(name), std::move(series), dim};
    validate_dataset(ds);
    return ds;
}

// Regroups a univariate dataset into records of `dim` consecutive channels.
inline Dataset with_dimension(Dataset ds, int dim) {
    ds.dim = dim;
    validate_dataset(ds);
    return ds;
}

inline Dataset load_csv(const std::string& path, CsvLayout layout = CsvLayout::Wide) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open csv file '" + path + "'");

    std::string name = path;
    if (auto slash = name.find_last_of("/\\"); slash != std::string::npos) name = name.substr(slash + 1);
    if (auto dot = name.find_last_of('.'); dot != std::string::npos && dot > 0) name = name.substr(0, dot);

    std::vector<TimeSeries> series;
    std::string line;
    std::size_t row = 0;

    if (!std::getline(in, line)) throw std::runtime_error("csv file '" + path + "' is empty");
    ++row;
    auto header = detail::split_fields(line);
    if (header.empty() || header[0] != "id") {
        throw std::runtime_error("csv header must start with 'id' (file '" + path + "')");
    }
    if (layout == CsvLayout::Long &&
        (header.size() != 3 || header[1] != "index" || header[2] != "value")) {
        throw std::runtime_error("long layout header must be 'id,index,value' (file '" + path + "')");
    }

    if (layout == CsvLayout::Wide) {
        while (std::getline(in, line)) {
            ++row;
            if (detail::trim(line).empty()) continue;
            auto fields = detail::split_fields(line);
            if (fields.size() < 2) {
                throw std::runtime_error("csv parse error at row " + std::to_string(row) +
                                         ": expected id plus at least one value");
            }
            TimeSeries s;
            s.id = std::string(fields[0]);
            s.values.reserve(fields.size() - 1);
            for (std::size_t c = 1; c < fields.size(); ++c) {
                s.values.push_back(detail::parse_value(fields[c], row, c + 1));
            }
            series.push_back(std::move(s));
        }
    } else {
        std::vector<std::pair<std::string, std::int64_t>> last_index;  // per id, in file order
        while (std::getline(in, line)) {
            ++row;
            if (detail::trim(line).empty()) continue;
            auto fields = detail::split_fields(line);
            if (fields.size() != 3) {
                throw std::runtime_error("csv parse error at row " + std::to_string(row) +
                                         ": expected 3 fields (id,index,value)");
            }
            std::string id(fields[0]);
            double idx_raw = detail::parse_value(fields[1], row, 2);
            auto idx = static_cast<std::int64_t>(idx_raw);
            double v = detail::parse_value(fields[2], row, 3);

            if (series.empty() || series.back().id != id) {
                for (const auto& [seen, _] : last_index) {
                    if (seen == id) {
                        throw std::runtime_error("csv parse error at row " + std::to_string(row) +
                                                 ": id '" + id + "' is not contiguous");
                    }
                }
                series.push_back(TimeSeries{id, {}});
                last_index.emplace_back(id, idx - 1);
            }
            if (idx <= last_index.back().second) {
                throw std::runtime_error("csv parse error at row " + std::to_string(row) +
                                         ": index must increase within id '" + id + "'");
            }
            last_index.back().second = idx;
            series.back().values.push_back(v);
        }
    }

    // duplicate ids would make the long layout ambiguous; reject in both layouts
    for (std::size_t i = 0; i < series.size(); ++i) {
        for (std::size_t j = i + 1; j < series.size(); ++j) {
            if (series[i].id == series[j].id) {
                throw std::runtime_error("duplicate series id '" + series[i].id + "' in '" + path + "'");
            }
        }
    }
    return make_dataset(std::move(name), std::move(series));
}

// Writes the wide layout. Doubles are printed in shortest round-trip form, so
// load_csv(save_csv(ds)) reproduces every value bit for bit.
inline void save_csv(const Dataset& ds, const std::string& path) {
    std::size_t max_len = 0;
    for (const TimeSeries& s : ds.series) max_len = std::max(max_len, s.length());

    std::string out = "id";
    for (std::size_t i = 1; i <= max_len; ++i) {
        out += ",v";
        out += std::to_string(i);
    }
    out += '\n';
    for (const TimeSeries& s : ds.series) {
        out += s.id;
        for (double v : s.values) {
            out += ',';
            detail::format_value(out, v);
        }
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write csv file '" + path + "'");
    f << out;
}

// AR(1): x_0 drawn from the stationary law N(0, 1/(1-phi^2)), then
// x_t = phi * x_{t-1} + e_t with unit-variance Gaussian innovations.
inline Dataset generate_ar1(double phi, int n_series, int length, std::uint64_t seed) {
    if (!(std::abs(phi) < 1.0)) throw std::invalid_argument("ar1 requires |phi| < 1");
    if (n_series < 1 || length < 2) throw std::invalid_argument("ar1 requires n_series >= 1, length >= 2");
    std::vector<TimeSeries> series(static_cast<std::size_t>(n_series));
    for (int i = 0; i < n_series; ++i) {
        Rng rng = Rng::substream(seed, 0x41523100ull, static_cast<std::uint64_t>(i));
        TimeSeries& s = series[static_cast<std::size_t>(i)];
        s.id = "ar1_" + std::to_string(i);
        s.values.resize(static_cast<std::size_t>(length));
        double x = rng.normal() / std::sqrt(1.0 - phi * phi);
        s.values[0] = x;
        for (int t = 1; t < length; ++t) {
            x = phi * x + rng.normal();
            s.values[static_cast<std::size_t>(t)] = x;
        }
    }
    return make_dataset("ar1", std::move(series));
}

// Sum of unit-amplitude sinusoids with random phases plus Gaussian noise.
// Phases use fmod(t, period) so a noise-free single-period series is exactly
// periodic, not merely periodic up to rounding.
inline Dataset generate_sine_mix(int n_series, int length, const std::vector<double>& periods,
                                 double noise_std, std::uint64_t seed) {
    if (n_series < 1 || length < 2) throw std::invalid_argument("sine mix requires n_series >= 1, length >= 2");
    if (periods.empty()) throw std::invalid_argument("sine mix requires at least one period");
    for (double p : periods) {
        if (!(p > 0.0)) throw std::invalid_argument("sine mix periods must be positive");
    }
    if (noise_std < 0.0) throw std::invalid_argument("sine mix noise_std must be >= 0");

    constexpr double two_pi = 6.283185307179586476925286766559;
    std::vector<TimeSeries> series(static_cast<std::size_t>(n_series));
    for (int i = 0; i < n_series; ++i) {
        Rng rng = Rng::substream(seed, 0x53494e45ull, static_cast<std::uint64_t>(i));
        std::vector<double> phase(periods.size());
        for (double& ph : phase) ph = two_pi * rng.uniform();

        TimeSeries& s = series[static_cast<std::size_t>(i)];
        s.id = "sine_" + std::to_string(i);
        s.values.resize(static_cast<std::size_t>(length));
        for (int t = 0; t < length; ++t) {
            double v = 0.0;
            for (std::size_t p = 0; p < periods.size(); ++p) {
                v += std::sin(two_pi * std::fmod(static_cast<double>(t), periods[p]) / periods[p] +
                              phase[p]);
            }
            if (noise_std > 0.0) v += noise_std * rng.normal();
            s.values[static_cast<std::size_t>(t)] = v;
        }
    }
    return make_dataset("sine", std::move(series));
}

// Divides by the mean absolute value. Returns the scaled series and the scale
// that was divided out.
inline std::pair<TimeSeries, double> mean_scale(const TimeSeries& s) {
    if (s.values.empty()) throw std::invalid_argument("cannot scale an empty series");
    double acc = 0.0;
    for (double v : s.values) acc += std::abs(v);
    double scale = acc / static_cast<double>(s.values.size());
    if (scale == 0.0) {
        throw std::invalid_argument("series '" + s.id + "' is identically zero, mean scale undefined");
    }
    TimeSeries out{s.id, s.values};
    for (double& v : out.values) v /= scale;
    return {std::move(out), scale};
}

inline Dataset mean_scale_dataset(const Dataset& ds) {
    Dataset out{ds.name, {}, ds.dim};
    out.series.reserve(ds.series.size());
    for (const TimeSeries& s : ds.series) out.series.push_back(mean_scale(s).first);
    return out;
}

}  // namespace ant
