#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dreamdpo/config.hpp"
#include "dreamdpo/engine.hpp"
#include "dreamdpo/image_io.hpp"
#include "dreamdpo/lmm.hpp"
#include "dreamdpo/ranker.hpp"

namespace dreamdpo {

// Experiment orchestration and file outputs. Every file written here is a
// pure function of (config, seed) for synthetic rankers; anything
// nondeterministic (wall clock) goes to stdout only.

struct SummaryRow {
    std::string config_id;
    std::optional<double> final_avg_reward;
    std::optional<double> final_dist_to_target;
    long pull_only = 0;
    long push_pull = 0;
    long skipped = 0;
    double wall_clock_seconds = 0.0;  // reported, never written to files
    NormBounds image_norm;            // min/max used for the exported images
    double mean_s_gap = 0.0;          // over non-skipped ranked iterations
    std::string output_dir;
};

// ---- formatting -----------------------------------------------------------------

namespace csv {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

inline std::string fmt_branch(Branch b) {
    switch (b) {
        case Branch::pull_only: return "pull_only";
        case Branch::push_pull: return "push_pull";
        case Branch::skipped: return "skipped";
        case Branch::none: return "";
    }
    return "";
}

// Short form for directory names and sweep tables ("0.001", "inf").
inline std::string fmt_short(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

}  // namespace csv

// ---- trace CSV -------------------------------------------------------------------

inline constexpr const char* kTraceHeader =
    "iter,t,reward_win,reward_lose,s_gap,branch,grad_norm,avg_reward";

inline void write_trace_csv(const std::string& path, const std::vector<IterationTrace>& traces) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << kTraceHeader << '\n';
    for (const auto& tr : traces) {
        f << tr.iteration << ',' << tr.t << ',' << csv::fmt(tr.reward_win) << ','
          << csv::fmt(tr.reward_lose) << ',' << csv::fmt(tr.s_gap) << ','
          << csv::fmt_branch(tr.branch) << ',' << csv::fmt(tr.gradient_norm) << ','
          << csv::fmt(tr.metric_avg_reward) << '\n';
    }
    if (!f) throw IoError("write failed: " + path);
}

// Round-trip reader for the trace schema; sweeps and tests consume this.
inline std::vector<IterationTrace> read_trace_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open trace csv: " + path);
    std::string line;
    if (!std::getline(f, line) || line != kTraceHeader) {
        throw IoError("bad trace csv header in " + path);
    }
    std::vector<IterationTrace> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream in(line);
        while (std::getline(in, cell, ',')) cells.push_back(cell);
        cells.resize(8);
        IterationTrace tr;
        tr.iteration = std::stoi(cells[0]);
        tr.t = std::stoi(cells[1]);
        auto opt = [](const std::string& s) -> std::optional<double> {
            if (s.empty()) return std::nullopt;
            return std::stod(s);
        };
        tr.reward_win = opt(cells[2]);
        tr.reward_lose = opt(cells[3]);
        tr.s_gap = opt(cells[4]);
        if (cells[5] == "pull_only") tr.branch = Branch::pull_only;
        else if (cells[5] == "push_pull") tr.branch = Branch::push_pull;
        else if (cells[5] == "skipped") tr.branch = Branch::skipped;
        else tr.branch = Branch::none;
        tr.gradient_norm = cells[6].empty() ? 0.0 : std::stod(cells[6]);
        tr.metric_avg_reward = opt(cells[7]);
        out.push_back(tr);
    }
    return out;
}

// ---- parameter snapshot -------------------------------------------------------------

inline void write_snapshot(const std::string& path, const Representation& rep) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    if (const auto* s = std::get_if<SplatField2D>(&rep)) {
        f << "kind splat2d\n";
        f << "grid " << s->grid.width << ' ' << s->grid.height << ' ' << s->grid.channels << '\n';
        f << "splats " << s->splats.size() << '\n';
    } else {
        f << "kind direct\n";
    }
    const Vec p = get_params(rep);
    f << "params " << p.size() << '\n';
    for (double v : p) f << csv::fmt(v) << '\n';
    if (!f) throw IoError("write failed: " + path);
}

// ---- metric --------------------------------------------------------------------------

// Evaluation views for the average-reward metric: uniformly spaced rotations
// for grid representations, repeated identity for direct vectors.
inline std::vector<ViewSpec> metric_views_for(const Representation& rep, int count) {
    if (count < 1) throw ParameterError("metric needs at least one view");
    std::vector<ViewSpec> views;
    views.reserve(static_cast<std::size_t>(count));
    if (std::holds_alternative<DirectVector>(rep)) {
        views.assign(static_cast<std::size_t>(count), ViewSpec::identity());
    } else {
        for (int k = 0; k < count; ++k) {
            views.push_back(ViewSpec::affine(detail::two_pi * k / count, 0.0, 0.0));
        }
    }
    return views;
}

// Mean reward over the views; missing (not fatal) on annotation errors.
inline std::optional<double> avg_reward_metric(const Representation& rep,
                                               const std::vector<ViewSpec>& views,
                                               const Ranker& ranker) {
    if (views.empty()) throw ParameterError("metric needs at least one view");
    double sum = 0.0;
    try {
        for (const auto& v : views) sum += ranker.reward(render(rep, v));
    } catch (const AnnotationError&) {
        return std::nullopt;
    }
    return sum / static_cast<double>(views.size());
}

// ---- ranker wiring -------------------------------------------------------------------

namespace detail_harness {

struct RankerBundle {
    std::unique_ptr<LmmTransport> owned_transport;
    std::unique_ptr<Ranker> ranker;
};

inline ImageEncoder make_encoder(const Representation& rep) {
    const bool is_grid = std::holds_alternative<SplatField2D>(rep);
    GridSpec grid;
    if (is_grid) grid = std::get<SplatField2D>(rep).grid;
    return [is_grid, grid](const Vec& image) {
        const NormBounds b = value_bounds(image);
        if (is_grid) return encode_image(image, grid.width, grid.height, grid.channels, b);
        return encode_image(image, static_cast<int>(image.size()), 1, 1, b);
    };
}

// Builds the ranker for a config. externally supplied transports (e.g. HTTP)
// take precedence; otherwise the replay table, then the degenerate mocks.
inline RankerBundle make_ranker(const ExperimentConfig& cfg, LmmTransport* transport) {
    RankerBundle b;
    if (!cfg.reward) return b;
    RewardSpec spec = *cfg.reward;
    LmmTransport* t = transport;
    if (spec.kind == RewardSpec::Kind::lmm && t == nullptr) {
        if (!cfg.lmm_replay_path.empty()) {
            b.owned_transport =
                std::make_unique<ReplayTransport>(ReplayTable::load(cfg.lmm_replay_path));
        } else if (!cfg.lmm_mock.empty()) {
            b.owned_transport = std::make_unique<ScriptedTransport>(ScriptedTransport::uniform_answer(
                cfg.lmm_mock == "all_yes" ? "Yes" : "No",
                static_cast<int>(spec.questions.size())));
        } else {
            throw ConfigError(
                "lmm reward needs a transport: set the endpoint environment variable, "
                "lmm_replay, or lmm_mock");
        }
        t = b.owned_transport.get();
    }
    b.ranker = std::make_unique<Ranker>(std::move(spec), &cfg.mixture, &cfg.schedule, t,
                                        make_encoder(cfg.initial_rep));
    return b;
}

}  // namespace detail_harness

// ---- run_experiment --------------------------------------------------------------------

inline void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << "config,final_avg_reward,final_dist_to_target,pull_only,push_pull,skipped,"
         "image_min,image_max\n";
    for (const auto& r : rows) {
        f << r.config_id << ',' << csv::fmt(r.final_avg_reward) << ','
          << csv::fmt(r.final_dist_to_target) << ',' << r.pull_only << ',' << r.push_pull << ','
          << r.skipped << ',' << csv::fmt(r.image_norm.lo) << ',' << csv::fmt(r.image_norm.hi)
          << '\n';
    }
    if (!f) throw IoError("write failed: " + path);
}

// Runs one experiment, writing trace.csv, summary.csv, params.txt and one
// image per configured view into cfg.output_dir.
inline SummaryRow run_experiment(const ExperimentConfig& cfg, LmmTransport* transport = nullptr,
                                 const std::vector<PairDraw>* replay = nullptr) {
    namespace fs = std::filesystem;
    const auto t_start = std::chrono::steady_clock::now();

    auto bundle = detail_harness::make_ranker(cfg, transport);
    const std::vector<ViewSpec> metric_views = metric_views_for(cfg.initial_rep, cfg.metric_views);

    MetricFn metric;
    if (bundle.ranker && cfg.reward->kind != RewardSpec::Kind::lmm) {
        // Per-iteration metric column; skipped for lmm rewards, which would
        // cost steps * metric_views annotator queries.
        Ranker* r = bundle.ranker.get();
        metric = [r, &metric_views](const Representation& rep) {
            return avg_reward_metric(rep, metric_views, *r);
        };
    }

    RunResult result =
        run(cfg.run, cfg.initial_rep, cfg.mixture, cfg.schedule, bundle.ranker.get(),
            std::move(metric), replay);

    SummaryRow row;
    row.config_id = cfg.name;
    for (const auto& tr : result.traces) {
        switch (tr.branch) {
            case Branch::pull_only: ++row.pull_only; break;
            case Branch::push_pull: ++row.push_pull; break;
            case Branch::skipped: ++row.skipped; break;
            case Branch::none: break;
        }
        if (tr.s_gap) row.mean_s_gap += *tr.s_gap;
    }
    const long ranked = row.pull_only + row.push_pull;
    row.mean_s_gap = ranked > 0 ? row.mean_s_gap / static_cast<double>(ranked) : 0.0;

    if (bundle.ranker) {
        row.final_avg_reward = avg_reward_metric(result.rep, metric_views, *bundle.ranker);
        if (cfg.reward->kind == RewardSpec::Kind::proximity) {
            row.final_dist_to_target =
                std::sqrt(squared_distance(render(result.rep, ViewSpec::identity()),
                                           cfg.reward->x_ref));
        }
    }

    // outputs
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (ec) throw IoError("cannot create output directory " + cfg.output_dir);
    write_trace_csv(cfg.output_dir + "/trace.csv", result.traces);
    write_snapshot(cfg.output_dir + "/params.txt", result.rep);

    // one image per configured view, normalized with one shared min/max
    std::vector<Vec> images;
    images.reserve(cfg.run.views.size());
    for (const auto& v : cfg.run.views) images.push_back(render(result.rep, v));
    NormBounds bounds = value_bounds(images.empty() ? Vec{0.0} : images[0]);
    for (const auto& img : images) {
        const NormBounds b = value_bounds(img);
        bounds.lo = std::min(bounds.lo, b.lo);
        bounds.hi = std::max(bounds.hi, b.hi);
    }
    row.image_norm = bounds;
    const bool rgb = std::holds_alternative<SplatField2D>(result.rep) &&
                     std::get<SplatField2D>(result.rep).grid.channels == 3;
    for (std::size_t k = 0; k < images.size(); ++k) {
        const std::string path =
            cfg.output_dir + "/view_" + std::to_string(k) + (rgb ? ".ppm" : ".pgm");
        write_binary_file(path, encode_render(images[k], result.rep, bounds));
    }

    row.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    row.output_dir = cfg.output_dir;
    write_summary_csv(cfg.output_dir + "/summary.csv", {row});
    return row;
}

// ---- sweeps ---------------------------------------------------------------------------

// One run per tau on a shared seed and a replayed pair stream, so iteration i
// consumes identical (view, t, eps1, eps2) tuples in every member run.
inline std::vector<SummaryRow> sweep_tau(const ExperimentConfig& base,
                                         const std::vector<double>& taus,
                                         LmmTransport* transport = nullptr) {
    if (taus.size() < 2) throw ParameterError("sweep_tau needs at least two tau values");
    const std::vector<PairDraw> stream =
        record_pair_stream(base.run, render_dim(base.initial_rep));

    std::vector<SummaryRow> rows;
    std::string table = "config,tau,final_avg_reward,final_dist_to_target,pull_only,push_pull,"
                        "skipped,image_min,image_max\n";
    for (const double tau : taus) {
        ExperimentConfig cfg = base;
        cfg.run.tau = tau;
        cfg.name = base.name + "-tau" + csv::fmt_short(tau);
        cfg.output_dir = base.output_dir + "/tau_" + csv::fmt_short(tau);
        SummaryRow row = run_experiment(cfg, transport, &stream);
        table += row.config_id + ',' + csv::fmt_short(tau) + ',' + csv::fmt(row.final_avg_reward) +
                 ',' + csv::fmt(row.final_dist_to_target) + ',' + std::to_string(row.pull_only) +
                 ',' + std::to_string(row.push_pull) + ',' + std::to_string(row.skipped) + ',' +
                 csv::fmt(row.image_norm.lo) + ',' + csv::fmt(row.image_norm.hi) + '\n';
        rows.push_back(std::move(row));
    }
    std::filesystem::create_directories(base.output_dir);
    write_binary_file(base.output_dir + "/sweep.csv", table);
    return rows;
}

// Runs both pair strategies against one shared recorded stream. The stream's
// base timesteps are drawn from [t_min, t_max - gap] (valid for both
// strategies), so iteration i is exactly matched across the two runs.
inline std::vector<SummaryRow> ablate_pairs(const ExperimentConfig& base,
                                            LmmTransport* transport = nullptr) {
    ExperimentConfig ts = base;
    ts.run.pair_strategy.kind = PairStrategy::different_timesteps;
    ts.name = base.name + "-different_timesteps";
    ts.output_dir = base.output_dir + "/different_timesteps";

    ExperimentConfig noise = base;
    noise.run.pair_strategy.kind = PairStrategy::different_noises;
    noise.name = base.name + "-different_noises";
    noise.output_dir = base.output_dir + "/different_noises";

    const std::vector<PairDraw> stream = record_pair_stream(ts.run, render_dim(base.initial_rep));

    std::vector<SummaryRow> rows;
    rows.push_back(run_experiment(noise, transport, &stream));
    rows.push_back(run_experiment(ts, transport, &stream));

    std::string table = "config,strategy,mean_s_gap,final_avg_reward,final_dist_to_target,"
                        "pull_only,push_pull,skipped\n";
    const char* names[2] = {"different_noises", "different_timesteps"};
    for (int i = 0; i < 2; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        table += r.config_id + ',' + names[i] + ',' + csv::fmt(r.mean_s_gap) + ',' +
                 csv::fmt(r.final_avg_reward) + ',' + csv::fmt(r.final_dist_to_target) + ',' +
                 std::to_string(r.pull_only) + ',' + std::to_string(r.push_pull) + ',' +
                 std::to_string(r.skipped) + '\n';
    }
    std::filesystem::create_directories(base.output_dir);
    write_binary_file(base.output_dir + "/ablate.csv", table);
    return rows;
}

// ---- config file loading -----------------------------------------------------------------

inline std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline ExperimentConfig parse_config_file(const std::string& path, const ConfigOverrides& overrides) {
    ExperimentConfig cfg = parse_config(read_text_file(path), overrides);
    bool name_overridden = false;
    for (const auto& [k, v] : overrides) name_overridden |= (k == "name");
    if (cfg.name == "run" && !name_overridden) {
        cfg.name = std::filesystem::path(path).stem().string();
    }
    return cfg;
}

}  // namespace dreamdpo
