// Command-line front end. Subcommands:
//   rank     rank candidate schedules by ANT score
//   score    score a single schedule
//   curve    decay curve of one schedule (CSV + SVG)
//   stats    per-series statistics (CSV)
//   corrupt  forward-corruption trajectory dump (CSV)
//   proxy    diffusion-step classification probe
//   toy      train | sample | trace for the toy denoiser
//   scan     curve/variance robustness across step counts
//
// All randomness flows from --seed; artifacts are byte-identical across
// reruns and --jobs values. Output directory: --out, else $ANT_OUT_DIR,
// else the working directory. Exit codes: 0 ok, 1 runtime failure, 2 usage.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ant/dataset.hpp"
#include "ant/denoiser.hpp"
#include "ant/diffusion.hpp"
#include "ant/experiments.hpp"
#include "ant/rng.hpp"
#include "ant/schedule.hpp"
#include "ant/score.hpp"
#include "ant/stats.hpp"
#include "ant/svg.hpp"

namespace {

std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

// Filenames keep [A-Za-z0-9._-]; everything else collapses to one underscore.
std::string sanitize(const std::string& s) {
    std::string out;
    bool gap = false;
    for (char c : s) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                  c == '.' || c == '-' || c == '_';
        if (ok) {
            out += c;
            gap = false;
        } else if (!gap && !out.empty()) {
            out += '_';
            gap = true;
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out.empty() ? "x" : out;
}

std::string resolve_out_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("ANT_OUT_DIR"); env != nullptr && *env != '\0') return env;
    return ".";
}

std::filesystem::path prepare_out_dir(const std::string& flag) {
    std::filesystem::path dir = resolve_out_dir(flag);
    std::filesystem::create_directories(dir);
    return dir;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
    f << content;
    if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
    std::cout << "wrote " << path.string() << "\n";
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
    write_text(path, j.dump(2) + "\n");
}

// Dataset selection shared by the data-consuming subcommands. Exactly one of
// --data / --gen must be given; generators derive their noise from --seed.
struct DataArgs {
    std::string data;
    std::string gen;
    std::string layout = "wide";
    int dim = 1;
};

void add_data_args(CLI::App* cmd, DataArgs& a) {
    auto* data = cmd->add_option("--data", a.data, "CSV file with the input series");
    auto* gen = cmd->add_option(
        "--gen", a.gen,
        "synthetic dataset spec: ar1:phi=0.95,n=64,len=512 or "
        "sine:n=8,len=256,periods=24+168,noise=0.1");
    cmd->add_option("--layout", a.layout, "CSV layout: wide or long")
        ->check(CLI::IsMember({"wide", "long"}));
    cmd->add_option("--dim", a.dim, "channels per record (multivariate grouping)")
        ->check(CLI::PositiveNumber);
    data->excludes(gen);
    gen->excludes(data);
}

double parse_kv_num(std::string_view val, const std::string& key) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
    if (ec != std::errc() || ptr != val.data() + val.size()) {
        throw std::invalid_argument("bad value '" + std::string(val) + "' for " + key);
    }
    return v;
}

ant::Dataset generate_dataset(const std::string& spec, std::uint64_t seed) {
    auto colon = spec.find(':');
    if (colon == std::string::npos) {
        throw std::invalid_argument("generator spec '" + spec + "' is missing the kind prefix");
    }
    std::string kind = spec.substr(0, colon);
    std::string rest = spec.substr(colon + 1);

    double phi = 0.9, noise = 0.1;
    int n = 32, len = 256;
    std::vector<double> periods;

    std::size_t pos = 0;
    while (pos < rest.size()) {
        auto comma = rest.find(',', pos);
        std::string kv = rest.substr(pos, comma == std::string::npos ? rest.size() - pos : comma - pos);
        auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("generator token '" + kv + "' is not key=value");
        }
        std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
        if (key == "phi" && kind == "ar1") {
            phi = parse_kv_num(val, key);
        } else if (key == "n") {
            n = static_cast<int>(parse_kv_num(val, key));
        } else if (key == "len") {
            len = static_cast<int>(parse_kv_num(val, key));
        } else if (key == "noise" && kind == "sine") {
            noise = parse_kv_num(val, key);
        } else if (key == "periods" && kind == "sine") {
            std::size_t p = 0;
            while (p <= val.size()) {
                auto plus = val.find('+', p);
                std::string tok = val.substr(p, plus == std::string::npos ? val.size() - p : plus - p);
                periods.push_back(parse_kv_num(tok, "periods"));
                if (plus == std::string::npos) break;
                p = plus + 1;
            }
        } else {
            throw std::invalid_argument("unknown generator key '" + key + "' for kind '" + kind + "'");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }

    ant::Dataset ds;
    if (kind == "ar1") {
        ds = ant::generate_ar1(phi, n, len, seed);
    } else if (kind == "sine") {
        if (periods.empty()) periods = {24.0};
        ds = ant::generate_sine_mix(n, len, periods, noise, seed);
    } else {
        throw std::invalid_argument("unknown generator kind '" + kind + "'");
    }
    ds.name = spec;
    return ds;
}

ant::Dataset resolve_dataset(const DataArgs& a, std::uint64_t seed) {
    if (a.data.empty() == a.gen.empty()) {
        throw std::invalid_argument("exactly one of --data and --gen is required");
    }
    ant::Dataset ds;
    if (!a.data.empty()) {
        ds = ant::load_csv(a.data, a.layout == "long" ? ant::CsvLayout::Long : ant::CsvLayout::Wide);
    } else {
        ds = generate_dataset(a.gen, seed);
    }
    if (a.dim != 1) ds = ant::with_dimension(std::move(ds), a.dim);
    ant::validate_dataset(ds);
    return ds;
}

// --grid: "default", a ';'-separated list of schedule specs, or "@file" with
// one spec per line ('#' comments allowed).
std::vector<ant::ScheduleSpec> resolve_grid(const std::string& grid) {
    if (grid.empty() || grid == "default") return ant::candidate_grid();
    std::vector<std::string> tokens;
    if (grid[0] == '@') {
        std::ifstream in(grid.substr(1));
        if (!in) throw std::runtime_error("cannot open grid file '" + grid.substr(1) + "'");
        std::string line;
        while (std::getline(in, line)) {
            auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r')) {
                line.pop_back();
            }
            std::size_t from = line.find_first_not_of(" \t");
            if (from != std::string::npos) tokens.push_back(line.substr(from));
        }
    } else {
        std::size_t pos = 0;
        while (pos <= grid.size()) {
            auto semi = grid.find(';', pos);
            std::string tok = grid.substr(pos, semi == std::string::npos ? grid.size() - pos : semi - pos);
            if (!tok.empty()) tokens.push_back(tok);
            if (semi == std::string::npos) break;
            pos = semi + 1;
        }
    }
    std::vector<ant::ScheduleSpec> specs;
    specs.reserve(tokens.size());
    for (const std::string& t : tokens) specs.push_back(ant::parse_schedule_spec(t));
    if (specs.empty()) throw std::invalid_argument("grid resolved to zero candidates");
    return specs;
}

int default_jobs() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// ---------------------------------------------------------------- rank/score

struct RankArgs {
    DataArgs data;
    std::string grid = "default";
    std::string stat = "iaat";
    std::string metric = "auc";
    int draws = 8;
    int max_steps = 0;
    std::uint64_t seed = 0;
    int jobs = default_jobs();
    std::string out;
};

void run_rank(const RankArgs& a) {
    ant::Dataset ds = resolve_dataset(a.data, a.seed);
    ant::RankOptions opt;
    opt.draws = a.draws;
    opt.seed = a.seed;
    opt.jobs = a.jobs;
    opt.stat = ant::parse_statistic(a.stat);
    opt.metric = ant::parse_metric(a.metric);
    opt.max_steps = a.max_steps;

    std::vector<ant::RankedCandidate> ranking = ant::rank(ds, resolve_grid(a.grid), opt);

    auto dir = prepare_out_dir(a.out);
    std::string base = "rank_" + sanitize(ds.name) + "_" + a.stat + "_" + a.metric + "_seed" +
                       std::to_string(a.seed);
    write_json(dir / (base + ".json"), ant::ranking_to_json(ds.name, opt.stat, opt.metric, ranking));
    write_text(dir / (base + ".csv"), ant::ranking_to_csv(ranking));

    const ant::ScheduleSpec& winner = ranking.front().spec;
    write_json(dir / (base + "_winner.json"), ant::schedule_to_json(ant::build_schedule(winner)));

    std::printf("%-4s %-14s %14s %14s %14s %14s\n", "rank", "spec", "lambda_linear",
                "lambda_noise", "lambda_step", "score");
    for (std::size_t i = 0; i < ranking.size() && i < 5; ++i) {
        const ant::RankedCandidate& rc = ranking[i];
        std::printf("%-4zu %-14s %14.8f %14.8f %14.8f %14.8f\n", i + 1,
                    ant::display_name(rc.spec).c_str(), rc.score.lambda_linear,
                    rc.score.lambda_noise, rc.score.lambda_step, rc.score.score);
    }
}

struct ScoreArgs {
    DataArgs data;
    std::string schedule;
    std::string stat = "iaat";
    std::string metric = "auc";
    int draws = 8;
    std::uint64_t seed = 0;
    int jobs = default_jobs();
    std::string out;
};

void run_score(const ScoreArgs& a) {
    ant::Dataset ds = resolve_dataset(a.data, a.seed);
    ant::Schedule schedule = ant::build_schedule(a.schedule);
    ant::CurveOptions opt;
    opt.draws = a.draws;
    opt.seed = a.seed;
    opt.jobs = a.jobs;
    opt.stat = ant::parse_statistic(a.stat);
    ant::Metric metric = ant::parse_metric(a.metric);

    ant::AntScore s = ant::ant_score(ant::curve(ds, schedule, opt), metric);

    nlohmann::ordered_json j;
    j["dataset"] = ds.name;
    j["statistic"] = a.stat;
    j["metric"] = a.metric;
    j["spec"] = ant::spec_string(schedule.spec);
    j["lambda_linear"] = s.lambda_linear;
    j["lambda_noise"] = s.lambda_noise;
    j["lambda_step"] = s.lambda_step;
    j["score"] = s.score;

    auto dir = prepare_out_dir(a.out);
    std::string base = "score_" + sanitize(ds.name) + "_" + sanitize(ant::display_name(schedule.spec)) +
                       "_seed" + std::to_string(a.seed);
    write_json(dir / (base + ".json"), j);
    std::printf("%s score=%.8f (lambda_linear=%.8f lambda_noise=%.8f lambda_step=%.8f)\n",
                ant::display_name(schedule.spec).c_str(), s.score, s.lambda_linear, s.lambda_noise,
                s.lambda_step);
}

// --------------------------------------------------------------------- curve

struct CurveArgs {
    DataArgs data;
    std::string schedule;
    std::string stat = "iaat";
    int draws = 8;
    std::uint64_t seed = 0;
    int jobs = default_jobs();
    std::string out;
};

void run_curve(const CurveArgs& a) {
    ant::Dataset ds = resolve_dataset(a.data, a.seed);
    ant::Schedule schedule = ant::build_schedule(a.schedule);
    ant::CurveOptions opt;
    opt.draws = a.draws;
    opt.seed = a.seed;
    opt.jobs = a.jobs;
    opt.stat = ant::parse_statistic(a.stat);

    ant::NonStationarityCurve c = ant::curve(ds, schedule, opt);
    ant::NormalizedCurve nc = ant::normalize(c);

    std::string csv = "t,raw,normalized\n";
    for (std::size_t i = 0; i < c.values.size(); ++i) {
        csv += std::to_string(i + 1) + "," + fmt_double(c.values[i]) + "," +
               fmt_double(nc.values[i]) + "\n";
    }

    const int T = schedule.steps();
    ant::SvgSeries curve_series{ant::display_name(schedule.spec), {}, {}};
    ant::SvgSeries ref_series{"linear reference", {}, {}};
    std::vector<double> ref = ant::reference_line(static_cast<std::size_t>(T));
    for (int t = 1; t <= T; ++t) {
        curve_series.x.push_back(t);
        curve_series.y.push_back(nc.values[static_cast<std::size_t>(t - 1)]);
        ref_series.x.push_back(t);
        ref_series.y.push_back(ref[static_cast<std::size_t>(t - 1)]);
    }
    std::string svg = ant::line_chart_svg("decay of " + std::string(ant::statistic_name(opt.stat)) +
                                              " on " + ds.name,
                                          "step t", "normalized statistic",
                                          {curve_series, ref_series});

    auto dir = prepare_out_dir(a.out);
    std::string base = "curve_" + sanitize(ds.name) + "_" +
                       sanitize(ant::display_name(schedule.spec)) + "_" + a.stat + "_seed" +
                       std::to_string(a.seed);
    write_text(dir / (base + ".csv"), csv);
    write_text(dir / (base + ".svg"), svg);
}

// --------------------------------------------------------------------- stats

struct StatsArgs {
    DataArgs data;
    std::string stat;  // empty = all
    int max_lag = 100;
    bool fixed_lag = false;
    std::uint64_t seed = 0;
    std::string out;
};

void run_stats(const StatsArgs& a) {
    ant::Dataset ds = resolve_dataset(a.data, a.seed);
    ant::StatOptions opt;
    opt.max_lag = a.max_lag;
    opt.adaptive = !a.fixed_lag;

    std::vector<ant::Statistic> wanted;
    if (a.stat.empty()) {
        wanted = {ant::Statistic::iat, ant::Statistic::iaat, ant::Statistic::lag1ac,
                  ant::Statistic::varac, ant::Statistic::miaat};
    } else {
        wanted = {ant::parse_statistic(a.stat)};
    }

    std::string csv = "id,stat,value\n";
    for (ant::Statistic stat : wanted) {
        if (stat == ant::Statistic::miaat) {
            // channel-coupled: one row per record
            for (std::size_t r = 0; r < ds.record_count(); ++r) {
                std::vector<std::span<const double>> chans(static_cast<std::size_t>(ds.dim));
                for (int c = 0; c < ds.dim; ++c) {
                    chans[static_cast<std::size_t>(c)] = ds.channel(r, c).values;
                }
                double v = ant::eval_record_statistic(chans, stat, opt);
                csv += ds.channel(r, 0).id + ",miaat," + fmt_double(v) + "\n";
            }
        } else {
            for (const ant::TimeSeries& s : ds.series) {
                double v = ant::eval_statistic(s.values, stat, opt);
                csv += s.id + "," + std::string(ant::statistic_name(stat)) + "," + fmt_double(v) +
                       "\n";
            }
        }
    }

    auto dir = prepare_out_dir(a.out);
    write_text(dir / ("stats_" + sanitize(ds.name) + ".csv"), csv);
}

// ------------------------------------------------------------------- corrupt

struct CorruptArgs {
    DataArgs data;
    std::string schedule;
    std::uint64_t seed = 0;
    std::string out;
};

void run_corrupt(const CorruptArgs& a) {
    ant::Dataset ds = resolve_dataset(a.data, a.seed);
    ant::Schedule schedule = ant::build_schedule(a.schedule);
    ant::Dataset scaled = ant::mean_scale_dataset(ds);

    // substream (seed, series, 0) matches draw 0 of the curve pipeline
    std::string csv = "series_id,t,coord_index,value\n";
    for (std::size_t i = 0; i < scaled.series.size(); ++i) {
        ant::Rng rng = ant::Rng::substream(a.seed, i, 0);
        auto traj = ant::corrupt_trajectory(scaled.series[i].values, schedule, rng);
        for (std::size_t t = 0; t < traj.size(); ++t) {
            for (std::size_t k = 0; k < traj[t].size(); ++k) {
                csv += scaled.series[i].id + "," + std::to_string(t + 1) + "," + std::to_string(k) +
                       "," + fmt_double(traj[t][k]) + "\n";
            }
        }
    }

    auto dir = prepare_out_dir(a.out);
    std::string base = "corrupt_" + sanitize(ds.name) + "_" +
                       sanitize(ant::display_name(schedule.spec)) + "_seed" + std::to_string(a.seed);
    write_text(dir / (base + ".csv"), csv);
}

// --------------------------------------------------------------------- proxy

struct ProxyArgs {
    DataArgs data;
    std::string schedule;
    int window = 32;
    int samples = 4000;
    double train_frac = 0.8;
    int epochs = 30;
    int batch = 64;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    std::string out;
};

void run_proxy(const ProxyArgs& a) {
    ant::Dataset ds = resolve_dataset(a.data, a.seed);
    ant::Schedule schedule = ant::build_schedule(a.schedule);
    ant::ProxyConfig cfg;
    cfg.window = a.window;
    cfg.samples = a.samples;
    cfg.train_fraction = a.train_frac;
    cfg.epochs = a.epochs;
    cfg.batch = a.batch;
    cfg.lr = a.lr;
    cfg.seed = a.seed;

    ant::ProxyResult res = ant::proxy_step_classification(ds, schedule, cfg);

    nlohmann::ordered_json j;
    j["dataset"] = ds.name;
    j["schedule"] = ant::spec_string(schedule.spec);
    j["window"] = a.window;
    j["samples"] = a.samples;
    j["train_fraction"] = a.train_frac;
    j["epochs"] = a.epochs;
    j["batch"] = a.batch;
    j["lr"] = a.lr;
    j["seed"] = a.seed;
    j["accuracy"] = res.accuracy;
    j["confusion"] = nlohmann::ordered_json::array();
    for (int t = 0; t < res.confusion.classes; ++t) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (int p = 0; p < res.confusion.classes; ++p) row.push_back(res.confusion.at(t, p));
        j["confusion"].push_back(std::move(row));
    }

    std::string features = "label";
    for (int c = 0; c < res.features.cols; ++c) features += ",f" + std::to_string(c + 1);
    features += "\n";
    for (int r = 0; r < res.features.rows; ++r) {
        features += std::to_string(res.feature_labels[static_cast<std::size_t>(r)]);
        for (int c = 0; c < res.features.cols; ++c) {
            features += "," + fmt_double(res.features.at(r, c));
        }
        features += "\n";
    }

    auto dir = prepare_out_dir(a.out);
    std::string base = "proxy_" + sanitize(ds.name) + "_" +
                       sanitize(ant::display_name(schedule.spec)) + "_seed" + std::to_string(a.seed);
    write_json(dir / (base + ".json"), j);
    write_text(dir / (base + "_features.csv"), features);
    std::printf("held-out accuracy: %.4f over %d classes\n", res.accuracy, res.confusion.classes);
}

// ----------------------------------------------------------------------- toy

struct ToyTrainArgs {
    DataArgs data;
    std::string schedule;
    int window = 48;
    int hidden = 64;
    bool no_embedding = false;
    int embedding_dim = 32;
    int train_steps = 2000;
    int batch = 32;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    std::string out;
};

void run_toy_train(const ToyTrainArgs& a) {
    ant::Dataset ds = resolve_dataset(a.data, a.seed);
    ant::Schedule schedule = ant::build_schedule(a.schedule);

    ant::TrainConfig cfg;
    cfg.model.window = a.window;
    cfg.model.hidden = a.hidden;
    cfg.model.use_step_embedding = !a.no_embedding;
    cfg.model.embedding_dim = a.embedding_dim;
    cfg.lr = a.lr;
    cfg.steps = a.train_steps;
    cfg.batch = a.batch;
    cfg.seed = a.seed;

    ant::TrainResult res = ant::train_denoiser(ds, schedule, cfg);

    nlohmann::ordered_json j;
    j["dataset"] = ds.name;
    j["schedule_spec"] = ant::spec_string(schedule.spec);
    j["seed"] = a.seed;
    j["schedule"] = ant::schedule_to_json(schedule);
    j["model"] = ant::denoiser_to_json(res.params);

    std::string loss = "step,loss\n";
    for (std::size_t i = 0; i < res.loss_trace.size(); ++i) {
        loss += std::to_string(i + 1) + "," + fmt_double(res.loss_trace[i]) + "\n";
    }

    auto dir = prepare_out_dir(a.out);
    std::string base = "toy_" + sanitize(ds.name) + "_" +
                       sanitize(ant::display_name(schedule.spec)) + "_seed" + std::to_string(a.seed);
    write_json(dir / (base + "_model.json"), j);
    write_text(dir / (base + "_loss.csv"), loss);

    std::size_t tail = std::max<std::size_t>(1, res.loss_trace.size() / 10);
    double acc = 0.0;
    for (std::size_t i = res.loss_trace.size() - tail; i < res.loss_trace.size(); ++i) {
        acc += res.loss_trace[i];
    }
    std::printf("final loss (smoothed over last %zu steps): %.6f\n", tail,
                acc / static_cast<double>(tail));
}

struct ModelFile {
    ant::DenoiserParams params;
    ant::Schedule schedule;
    std::string dataset;
};

ModelFile load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("model file '" + path + "' is not valid json: " + e.what());
    }
    if (!j.contains("model") || !j.contains("schedule")) {
        throw std::runtime_error("model file '" + path + "' needs 'model' and 'schedule' objects");
    }
    ModelFile m;
    m.params = ant::denoiser_from_json(j["model"]);
    m.schedule = ant::schedule_from_json(j["schedule"]);
    if (j.contains("dataset") && j["dataset"].is_string()) m.dataset = j["dataset"].get<std::string>();
    return m;
}

struct ToySampleArgs {
    std::string model;
    int samples = 16;
    std::uint64_t seed = 0;
    DataArgs data;  // guidance source, optional
    double guide_frac = 0.0;
    double guide_strength = 1.0;
    std::string variance = "posterior";
    std::string out;
};

void run_toy_sample(const ToySampleArgs& a) {
    ModelFile m = load_model(a.model);
    ant::MlpDenoiser den{m.params};
    const int w = m.params.cfg.window;
    ant::VarianceKind kind =
        a.variance == "beta" ? ant::VarianceKind::beta : ant::VarianceKind::posterior;

    std::vector<std::vector<double>> guide_pool;
    int observed = 0;
    if (a.guide_frac > 0.0) {
        if (a.data.data.empty() && a.data.gen.empty()) {
            throw std::invalid_argument("--guide-frac needs --data or --gen as the guidance source");
        }
        ant::Dataset ds = resolve_dataset(a.data, a.seed);
        guide_pool = ant::detail::training_pool(ds, w);
        observed = std::min(w, static_cast<int>(a.guide_frac * w));
        if (observed < 1) throw std::invalid_argument("--guide-frac leaves no observed coordinate");
    }

    ant::Dataset out_ds;
    out_ds.name = "toy_samples";
    for (int i = 0; i < a.samples; ++i) {
        ant::Rng rng = ant::Rng::substream(a.seed, 0x73616d70ull, static_cast<std::uint64_t>(i));
        std::vector<double> x;
        if (guide_pool.empty()) {
            x = ant::sample(den, m.schedule, w, rng, nullptr, kind);
        } else {
            const auto& src = guide_pool[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(guide_pool.size()) - 1))];
            std::size_t start = static_cast<std::size_t>(rng.uniform_int(
                0, static_cast<std::int64_t>(src.size() - static_cast<std::size_t>(w))));
            ant::GuidanceTarget target;
            target.observed.assign(src.begin() + static_cast<std::ptrdiff_t>(start),
                                   src.begin() + static_cast<std::ptrdiff_t>(start + w));
            target.mask.assign(static_cast<std::size_t>(w), 0.0);
            for (int k = 0; k < observed; ++k) target.mask[static_cast<std::size_t>(k)] = 1.0;
            target.strength = a.guide_strength;
            x = ant::sample(den, m.schedule, w, rng, &target, kind);
        }
        out_ds.series.push_back(ant::TimeSeries{"sample_" + std::to_string(i), std::move(x)});
    }

    auto dir = prepare_out_dir(a.out);
    std::string base = "toy_samples_seed" + std::to_string(a.seed);
    ant::save_csv(out_ds, (dir / (base + ".csv")).string());
    std::cout << "wrote " << (dir / (base + ".csv")).string() << "\n";
}

struct ToyTraceArgs {
    std::string model;
    std::string stat = "iaat";
    int samples = 32;
    std::uint64_t seed = 0;
    std::string out;
};

void run_toy_trace(const ToyTraceArgs& a) {
    ModelFile m = load_model(a.model);
    ant::MlpDenoiser den{m.params};
    ant::Statistic stat = ant::parse_statistic(a.stat);

    std::vector<double> trace = ant::generation_trace(den, m.schedule, stat, a.samples,
                                                      m.params.cfg.window, a.seed);
    const int T = m.schedule.steps();

    std::string csv = "t,value\n";
    ant::SvgSeries series{a.stat + " during sampling", {}, {}};
    for (std::size_t i = 0; i < trace.size(); ++i) {
        int t = T - static_cast<int>(i);
        csv += std::to_string(t) + "," + fmt_double(trace[i]) + "\n";
        series.x.push_back(static_cast<double>(T - t));  // progress axis, 0 = pure noise
        series.y.push_back(trace[i]);
    }
    std::string svg = ant::line_chart_svg("generation trace (" + a.stat + ")",
                                          "denoising steps taken", a.stat, {series});

    auto dir = prepare_out_dir(a.out);
    std::string base = "toy_trace_" + a.stat + "_seed" + std::to_string(a.seed);
    write_text(dir / (base + ".csv"), csv);
    write_text(dir / (base + ".svg"), svg);
}

// ---------------------------------------------------------------------- scan

struct ScanArgs {
    DataArgs data;
    std::string families = "lin,cos:0.5,cos:1.0,cos:2.0,sig:0.3,sig:0.5,sig:1.0";
    std::string t_list = "10,20,50,75,100";
    std::string stat = "iaat";
    int draws = 8;
    std::uint64_t seed = 0;
    int jobs = default_jobs();
    std::string out;
};

std::vector<std::pair<ant::Family, double>> parse_families(const std::string& text) {
    std::vector<std::pair<ant::Family, double>> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto comma = text.find(',', pos);
        std::string tok = text.substr(pos, comma == std::string::npos ? text.size() - pos : comma - pos);
        if (!tok.empty()) {
            auto colon = tok.find(':');
            std::string fam = tok.substr(0, colon);
            double tau = 1.0;
            if (colon != std::string::npos) tau = parse_kv_num(tok.substr(colon + 1), "tau");
            if (fam == "lin") out.emplace_back(ant::Family::linear, 0.0);
            else if (fam == "cos") out.emplace_back(ant::Family::cosine, tau);
            else if (fam == "sig") out.emplace_back(ant::Family::sigmoid, tau);
            else throw std::invalid_argument("unknown family token '" + tok + "'");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw std::invalid_argument("no families given");
    return out;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto comma = text.find(',', pos);
        std::string tok = text.substr(pos, comma == std::string::npos ? text.size() - pos : comma - pos);
        if (!tok.empty()) out.push_back(static_cast<int>(parse_kv_num(tok, "t-list")));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw std::invalid_argument("empty t-list");
    return out;
}

void run_scan(const ScanArgs& a) {
    ant::Dataset ds = resolve_dataset(a.data, a.seed);
    ant::CurveOptions opt;
    opt.draws = a.draws;
    opt.seed = a.seed;
    opt.jobs = a.jobs;
    opt.stat = ant::parse_statistic(a.stat);

    ant::ScanResult res =
        ant::robustness_scan(ds, parse_families(a.families), parse_int_list(a.t_list), opt);

    std::string curves = "family,tau,T,t,normalized\n";
    for (const ant::ScanEntry& e : res.entries) {
        for (std::size_t t = 0; t < e.normalized.size(); ++t) {
            curves += std::string(ant::family_name(e.family)) + "," + fmt_double(e.tau) + "," +
                      std::to_string(e.steps) + "," + std::to_string(t + 1) + "," +
                      fmt_double(e.normalized[t]) + "\n";
        }
    }
    std::string summary = "family,tau,curve_dispersion,sigma2_rel_spread\n";
    for (const ant::ScanSummary& s : res.summaries) {
        summary += std::string(ant::family_name(s.family)) + "," + fmt_double(s.tau) + "," +
                   fmt_double(s.curve_dispersion) + "," + fmt_double(s.sigma2_rel_spread) + "\n";
    }

    nlohmann::ordered_json j;
    j["dataset"] = ds.name;
    j["statistic"] = a.stat;
    j["t_list"] = parse_int_list(a.t_list);
    j["summaries"] = nlohmann::ordered_json::array();
    for (const ant::ScanSummary& s : res.summaries) {
        nlohmann::ordered_json e;
        e["family"] = ant::family_name(s.family);
        e["tau"] = s.tau;
        e["curve_dispersion"] = s.curve_dispersion;
        e["sigma2_rel_spread"] = s.sigma2_rel_spread;
        j["summaries"].push_back(std::move(e));
    }

    auto dir = prepare_out_dir(a.out);
    std::string base = "scan_" + sanitize(ds.name) + "_" + a.stat + "_seed" + std::to_string(a.seed);
    write_json(dir / (base + ".json"), j);
    write_text(dir / (base + "_curves.csv"), curves);
    write_text(dir / (base + "_summary.csv"), summary);
}

void add_out_seed(CLI::App* cmd, std::uint64_t& seed, std::string& out) {
    cmd->add_option("--seed", seed, "master seed for all randomness");
    cmd->add_option("--out", out, "output directory (fallback: $ANT_OUT_DIR, then '.')");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive noise schedules for time series diffusion"};
    app.require_subcommand(1);

    RankArgs rank_args;
    auto* rank = app.add_subcommand("rank", "rank candidate schedules by ANT score");
    add_data_args(rank, rank_args.data);
    rank->add_option("--grid", rank_args.grid,
                     "'default', ';'-separated schedule specs, or @file with one spec per line");
    rank->add_option("--stat", rank_args.stat, "statistic: iaat|iat|lag1ac|varac|miaat");
    rank->add_option("--metric", rank_args.metric, "metric: auc|mse|mae|corr|r2");
    rank->add_option("--draws", rank_args.draws, "corruption draws per record")
        ->check(CLI::PositiveNumber);
    rank->add_option("--max-steps", rank_args.max_steps, "drop candidates with more steps");
    rank->add_option("--jobs", rank_args.jobs, "worker threads (result independent of this)")
        ->check(CLI::PositiveNumber);
    add_out_seed(rank, rank_args.seed, rank_args.out);

    ScoreArgs score_args;
    auto* score = app.add_subcommand("score", "score a single schedule");
    add_data_args(score, score_args.data);
    score->add_option("--schedule", score_args.schedule, "schedule spec, e.g. cos:T=50,tau=1.0")
        ->required();
    score->add_option("--stat", score_args.stat, "statistic: iaat|iat|lag1ac|varac|miaat");
    score->add_option("--metric", score_args.metric, "metric: auc|mse|mae|corr|r2");
    score->add_option("--draws", score_args.draws, "corruption draws per record")
        ->check(CLI::PositiveNumber);
    score->add_option("--jobs", score_args.jobs, "worker threads")->check(CLI::PositiveNumber);
    add_out_seed(score, score_args.seed, score_args.out);

    CurveArgs curve_args;
    auto* curve = app.add_subcommand("curve", "decay curve of one schedule (CSV + SVG)");
    add_data_args(curve, curve_args.data);
    curve->add_option("--schedule", curve_args.schedule, "schedule spec")->required();
    curve->add_option("--stat", curve_args.stat, "statistic: iaat|iat|lag1ac|varac|miaat");
    curve->add_option("--draws", curve_args.draws, "corruption draws per record")
        ->check(CLI::PositiveNumber);
    curve->add_option("--jobs", curve_args.jobs, "worker threads")->check(CLI::PositiveNumber);
    add_out_seed(curve, curve_args.seed, curve_args.out);

    StatsArgs stats_args;
    auto* stats = app.add_subcommand("stats", "per-series statistics (CSV)");
    add_data_args(stats, stats_args.data);
    stats->add_option("--stat", stats_args.stat, "one statistic only (default: all)");
    stats->add_option("--max-lag", stats_args.max_lag, "autocorrelation lag cap")
        ->check(CLI::PositiveNumber);
    stats->add_flag("--fixed-lag", stats_args.fixed_lag,
                    "sum the full lag window instead of truncating at the noise floor");
    add_out_seed(stats, stats_args.seed, stats_args.out);

    CorruptArgs corrupt_args;
    auto* corrupt = app.add_subcommand("corrupt", "forward-corruption trajectories (CSV)");
    add_data_args(corrupt, corrupt_args.data);
    corrupt->add_option("--schedule", corrupt_args.schedule, "schedule spec")->required();
    add_out_seed(corrupt, corrupt_args.seed, corrupt_args.out);

    ProxyArgs proxy_args;
    auto* proxy = app.add_subcommand("proxy", "diffusion-step classification probe");
    add_data_args(proxy, proxy_args.data);
    proxy->add_option("--schedule", proxy_args.schedule, "schedule spec")->required();
    proxy->add_option("--window", proxy_args.window, "input window length")
        ->check(CLI::PositiveNumber);
    proxy->add_option("--samples", proxy_args.samples, "total corrupted windows")
        ->check(CLI::PositiveNumber);
    proxy->add_option("--train-frac", proxy_args.train_frac, "training split fraction");
    proxy->add_option("--epochs", proxy_args.epochs, "training epochs")->check(CLI::PositiveNumber);
    proxy->add_option("--batch", proxy_args.batch, "minibatch size")->check(CLI::PositiveNumber);
    proxy->add_option("--lr", proxy_args.lr, "learning rate");
    add_out_seed(proxy, proxy_args.seed, proxy_args.out);

    auto* toy = app.add_subcommand("toy", "toy denoiser: train, sample, trace");
    toy->require_subcommand(1);

    ToyTrainArgs toy_train_args;
    auto* toy_train = toy->add_subcommand("train", "train the MLP denoiser");
    add_data_args(toy_train, toy_train_args.data);
    toy_train->add_option("--schedule", toy_train_args.schedule, "schedule spec")->required();
    toy_train->add_option("--window", toy_train_args.window, "window length")
        ->check(CLI::PositiveNumber);
    toy_train->add_option("--hidden", toy_train_args.hidden, "hidden width")
        ->check(CLI::PositiveNumber);
    toy_train->add_flag("--no-embedding", toy_train_args.no_embedding,
                        "train without the step embedding");
    toy_train->add_option("--embedding-dim", toy_train_args.embedding_dim,
                          "step embedding width (even)");
    toy_train->add_option("--train-steps", toy_train_args.train_steps, "optimizer steps")
        ->check(CLI::NonNegativeNumber);
    toy_train->add_option("--batch", toy_train_args.batch, "minibatch size")
        ->check(CLI::PositiveNumber);
    toy_train->add_option("--lr", toy_train_args.lr, "learning rate");
    add_out_seed(toy_train, toy_train_args.seed, toy_train_args.out);

    ToySampleArgs toy_sample_args;
    auto* toy_sample = toy->add_subcommand("sample", "draw samples from a trained model");
    toy_sample->add_option("--model", toy_sample_args.model, "model json from 'toy train'")
        ->required();
    toy_sample->add_option("--samples", toy_sample_args.samples, "number of samples")
        ->check(CLI::PositiveNumber);
    add_data_args(toy_sample, toy_sample_args.data);
    toy_sample->add_option("--guide-frac", toy_sample_args.guide_frac,
                           "observed prefix fraction for self-guidance (0 = unconditional)");
    toy_sample->add_option("--guide-strength", toy_sample_args.guide_strength,
                           "guidance strength s");
    toy_sample->add_option("--var", toy_sample_args.variance, "reverse variance: posterior|beta")
        ->check(CLI::IsMember({"posterior", "beta"}));
    add_out_seed(toy_sample, toy_sample_args.seed, toy_sample_args.out);

    ToyTraceArgs toy_trace_args;
    auto* toy_trace = toy->add_subcommand("trace", "statistic of samples along the backward pass");
    toy_trace->add_option("--model", toy_trace_args.model, "model json from 'toy train'")
        ->required();
    toy_trace->add_option("--stat", toy_trace_args.stat, "statistic to trace");
    toy_trace->add_option("--samples", toy_trace_args.samples, "sample population size")
        ->check(CLI::PositiveNumber);
    add_out_seed(toy_trace, toy_trace_args.seed, toy_trace_args.out);

    ScanArgs scan_args;
    auto* scan = app.add_subcommand("scan", "robustness of curves and variance budgets across T");
    add_data_args(scan, scan_args.data);
    scan->add_option("--families", scan_args.families,
                     "comma list of prototypes: lin, cos:TAU, sig:TAU");
    scan->add_option("--t-list", scan_args.t_list, "comma list of step counts");
    scan->add_option("--stat", scan_args.stat, "statistic: iaat|iat|lag1ac|varac|miaat");
    scan->add_option("--draws", scan_args.draws, "corruption draws per record")
        ->check(CLI::PositiveNumber);
    scan->add_option("--jobs", scan_args.jobs, "worker threads")->check(CLI::PositiveNumber);
    add_out_seed(scan, scan_args.seed, scan_args.out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        std::cerr << "run 'ant --help' or 'ant <subcommand> --help' for usage\n";
        return 2;
    }

    try {
        if (rank->parsed()) run_rank(rank_args);
        else if (score->parsed()) run_score(score_args);
        else if (curve->parsed()) run_curve(curve_args);
        else if (stats->parsed()) run_stats(stats_args);
        else if (corrupt->parsed()) run_corrupt(corrupt_args);
        else if (proxy->parsed()) run_proxy(proxy_args);
        else if (toy->parsed()) {
            if (toy_train->parsed()) run_toy_train(toy_train_args);
            else if (toy_sample->parsed()) run_toy_sample(toy_sample_args);
            else run_toy_trace(toy_trace_args);
        } else if (scan->parsed()) {
            run_scan(scan_args);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
