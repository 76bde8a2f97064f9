#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dreamdpo/engine.hpp"
#include "dreamdpo/mixture.hpp"
#include "dreamdpo/ranker.hpp"
#include "dreamdpo/representation.hpp"
#include "dreamdpo/rng.hpp"
#include "dreamdpo/schedule.hpp"

namespace dreamdpo {

// Experiment configuration: flat key=value text, one key per line, '#'
// comments. No nesting; every error carries its line number; unknown and
// duplicate keys are rejected. The full key list is documented in README.md.

struct ExperimentConfig {
    std::string name = "run";
    NoiseSchedule schedule;
    GaussianMixture mixture;
    RunConfig run;
    std::optional<RewardSpec> reward;  // required in dreamdpo mode
    Representation initial_rep;
    std::string output_dir = "out";
    int metric_views = 8;
    std::string lmm_replay_path;  // replay-table mock
    std::string lmm_mock;         // "all_yes" / "all_no" degenerate mocks
};

namespace cfgdetail {

struct Entry {
    std::string value;
    int line = 0;
    bool consumed = false;
};

struct RawConfig {
    std::map<std::string, Entry> entries;

    const Entry* find(const std::string& key) const {
        auto it = entries.find(key);
        return it == entries.end() ? nullptr : &it->second;
    }
    Entry* take(const std::string& key) {
        auto it = entries.find(key);
        if (it == entries.end()) return nullptr;
        it->second.consumed = true;
        return &it->second;
    }
};

inline std::string trim(const std::string& s) {
    const std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

inline RawConfig tokenize(const std::string& text) {
    RawConfig raw;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value", line_no);
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("line " + std::to_string(line_no) + ": empty key", line_no);
        }
        auto [it, inserted] = raw.entries.emplace(key, Entry{value, line_no, false});
        if (!inserted) {
            throw ConfigError("duplicate key '" + key + "' on lines " +
                                  std::to_string(it->second.line) + " and " + std::to_string(line_no),
                              line_no);
        }
    }
    return raw;
}

inline ConfigError err(const Entry& e, const std::string& msg) {
    if (e.line == 0) return ConfigError("override: " + msg, 0);
    return ConfigError("line " + std::to_string(e.line) + ": " + msg, e.line);
}

inline double parse_double(const Entry& e, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw err(e, "key '" + key + "': expected a number, got '" + e.value + "'");
    }
}

inline long long parse_int(const Entry& e, const std::string& key) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw err(e, "key '" + key + "': expected an integer, got '" + e.value + "'");
    }
}

inline std::uint64_t parse_u64(const Entry& e, const std::string& key) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw err(e, "key '" + key + "': expected an unsigned integer, got '" + e.value + "'");
    }
}

inline Vec parse_numbers(const Entry& e, const std::string& key) {
    Vec out;
    for (const auto& tok : split_ws(e.value)) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(tok, &pos));
            if (pos != tok.size()) throw std::invalid_argument("trailing junk");
        } catch (const std::exception&) {
            throw err(e, "key '" + key + "': bad number '" + tok + "'");
        }
        if (!std::isfinite(out.back())) {
            throw err(e, "key '" + key + "': entries must be finite");
        }
    }
    return out;
}

// "tau" accepts a nonnegative real or the literal "inf".
inline double parse_tau(const Entry& e) {
    if (e.value == "inf") return std::numeric_limits<double>::infinity();
    const double v = parse_double(e, "tau");
    if (!(v >= 0.0)) throw err(e, "tau must be >= 0 or the literal \"inf\"");
    return v;
}

inline std::vector<ViewSpec> parse_views(const Entry& e) {
    std::vector<ViewSpec> views;
    for (const auto& tok : split_ws(e.value)) {
        if (tok == "identity") {
            views.push_back(ViewSpec::identity());
            continue;
        }
        if (tok.rfind("affine(", 0) == 0 && tok.back() == ')') {
            const std::string args = tok.substr(7, tok.size() - 8);
            std::vector<double> nums;
            std::istringstream in(args);
            std::string part;
            while (std::getline(in, part, ',')) {
                try {
                    nums.push_back(std::stod(part));
                } catch (const std::exception&) {
                    throw err(e, "bad affine view argument '" + part + "'");
                }
            }
            if (nums.size() != 3) throw err(e, "affine view needs (angle,tx,ty)");
            views.push_back(ViewSpec::affine(nums[0], nums[1], nums[2]));
            continue;
        }
        throw err(e, "bad view '" + tok + "' (want identity or affine(angle,tx,ty))");
    }
    if (views.empty()) throw err(e, "views must name at least one view");
    return views;
}

// Mean specs are either literal numbers or "blob cx cy sigma peak" rendered
// over the splat grid (all channels equal).
inline Vec parse_mean_spec(const std::vector<std::string>& toks, const Entry& e,
                           const GridSpec* grid) {
    if (!toks.empty() && toks[0] == "blob") {
        if (toks.size() != 5) throw err(e, "blob mean needs: blob cx cy sigma peak");
        if (grid == nullptr) throw err(e, "blob means require a splat2d grid");
        double a[4];
        for (int i = 0; i < 4; ++i) {
            try {
                a[i] = std::stod(toks[static_cast<std::size_t>(i) + 1]);
            } catch (const std::exception&) {
                throw err(e, "bad blob argument '" + toks[static_cast<std::size_t>(i) + 1] + "'");
            }
        }
        const double cx = a[0], cy = a[1], sig = a[2], peak = a[3];
        if (!(sig > 0.0)) throw err(e, "blob sigma must be > 0");
        Vec mean(grid->image_dim(), 0.0);
        for (int py = 0; py < grid->height; ++py) {
            for (int px = 0; px < grid->width; ++px) {
                const double dx = px - cx, dy = py - cy;
                const double v = peak * std::exp(-(dx * dx + dy * dy) / (2.0 * sig * sig));
                const std::size_t base =
                    (static_cast<std::size_t>(py) * grid->width + px) * grid->channels;
                for (int c = 0; c < grid->channels; ++c) mean[base + c] = v;
            }
        }
        return mean;
    }
    Vec mean;
    for (const auto& tok : toks) {
        try {
            std::size_t pos = 0;
            mean.push_back(std::stod(tok, &pos));
            if (pos != tok.size()) throw std::invalid_argument("trailing junk");
        } catch (const std::exception&) {
            throw err(e, "bad mean value '" + tok + "'");
        }
        if (!std::isfinite(mean.back())) throw err(e, "mean entries must be finite");
    }
    return mean;
}

}  // namespace cfgdetail

// Command-line overrides merge after the file is tokenized, replacing or
// adding keys; they report as "override" (line 0) in errors.
using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

inline ExperimentConfig parse_config(const std::string& text, const ConfigOverrides& overrides = {}) {
    using namespace cfgdetail;
    RawConfig raw = tokenize(text);
    for (const auto& [k, v] : overrides) {
        raw.entries[trim(k)] = Entry{trim(v), 0, false};
    }

    ExperimentConfig cfg;
    if (auto* e = raw.take("name")) cfg.name = e->value;

    // schedule
    int T = 1000;
    double beta_min = 1e-4, beta_max = 0.02;
    WeightKind wk = WeightKind::one_minus_alpha_bar;
    if (auto* e = raw.take("timesteps")) T = static_cast<int>(parse_int(*e, "timesteps"));
    if (auto* e = raw.take("beta_min")) beta_min = parse_double(*e, "beta_min");
    if (auto* e = raw.take("beta_max")) beta_max = parse_double(*e, "beta_max");
    if (auto* e = raw.take("weight_kind")) {
        if (e->value == "one") wk = WeightKind::one;
        else if (e->value == "one_minus_alpha_bar") wk = WeightKind::one_minus_alpha_bar;
        else if (e->value == "sigma_squared") wk = WeightKind::sigma_squared;
        else throw err(*e, "weight_kind must be one|one_minus_alpha_bar|sigma_squared");
    }
    try {
        cfg.schedule = make_linear_schedule(T, beta_min, beta_max, wk);
    } catch (const ParameterError& ex) {
        throw ConfigError(std::string("schedule: ") + ex.what());
    }

    // engine
    RunConfig& run = cfg.run;
    run.t_max = T;
    if (auto* e = raw.take("mode")) {
        if (e->value == "dreamdpo") run.mode = Mode::dreamdpo;
        else if (e->value == "sds") run.mode = Mode::sds;
        else throw err(*e, "mode must be dreamdpo|sds");
    }
    if (auto* e = raw.take("cfg_scale")) run.cfg_scale = parse_double(*e, "cfg_scale");
    if (auto* e = raw.take("label")) run.label = static_cast<int>(parse_int(*e, "label"));
    if (auto* e = raw.take("pair_strategy")) {
        if (e->value == "different_noises") run.pair_strategy.kind = PairStrategy::different_noises;
        else if (e->value == "different_timesteps")
            run.pair_strategy.kind = PairStrategy::different_timesteps;
        else throw err(*e, "pair_strategy must be different_noises|different_timesteps");
    }
    if (auto* e = raw.take("pair_gap")) {
        run.pair_strategy.gap = static_cast<int>(parse_int(*e, "pair_gap"));
        if (run.pair_strategy.gap < 0) throw err(*e, "pair_gap must be >= 0");
    }
    if (auto* e = raw.take("steps")) {
        run.steps = static_cast<int>(parse_int(*e, "steps"));
        if (run.steps < 0) throw err(*e, "steps must be >= 0");
    }
    if (auto* e = raw.take("learning_rate")) {
        run.learning_rate = parse_double(*e, "learning_rate");
        if (!(run.learning_rate >= 0.0)) throw err(*e, "learning_rate must be >= 0");
    }
    if (auto* e = raw.take("optimizer")) {
        if (e->value == "sgd") run.optimizer = OptimizerKind::sgd;
        else if (e->value == "adam") run.optimizer = OptimizerKind::adam;
        else throw err(*e, "optimizer must be sgd|adam");
    }
    if (auto* e = raw.take("adam_beta1")) run.adam.beta1 = parse_double(*e, "adam_beta1");
    if (auto* e = raw.take("adam_beta2")) run.adam.beta2 = parse_double(*e, "adam_beta2");
    if (auto* e = raw.take("adam_eps")) run.adam.eps = parse_double(*e, "adam_eps");
    if (auto* e = raw.take("t_min")) run.t_min = static_cast<int>(parse_int(*e, "t_min"));
    if (auto* e = raw.take("t_max")) run.t_max = static_cast<int>(parse_int(*e, "t_max"));
    if (auto* e = raw.take("seed")) run.seed = parse_u64(*e, "seed");
    if (auto* e = raw.take("views")) run.views = parse_views(*e);

    // representation
    std::string rep_kind = "direct";
    if (auto* e = raw.take("representation")) rep_kind = e->value;
    Rng init_rng(run.seed ^ 0x9E3779B97F4A7C15ull);
    const GridSpec* grid_ptr = nullptr;
    GridSpec grid;
    if (rep_kind == "direct") {
        auto* edim = raw.take("dim");
        if (!edim) throw ConfigError("direct representation requires 'dim'");
        const int dim = static_cast<int>(parse_int(*edim, "dim"));
        if (dim < 1) throw err(*edim, "dim must be >= 1");
        DirectVector dv;
        dv.params.assign(static_cast<std::size_t>(dim), 0.0);
        if (auto* e = raw.take("init")) {
            dv.params = parse_numbers(*e, "init");
            if (static_cast<int>(dv.params.size()) != dim) {
                throw err(*e, "init length must equal dim");
            }
        }
        if (auto* e = raw.take("init_jitter")) {
            const double j = parse_double(*e, "init_jitter");
            if (j < 0.0) throw err(*e, "init_jitter must be >= 0");
            for (auto& p : dv.params) p += j * init_rng.normal();
        }
        cfg.initial_rep = std::move(dv);
    } else if (rep_kind == "splat2d") {
        auto* ew = raw.take("grid_width");
        auto* eh = raw.take("grid_height");
        if (!ew || !eh) throw ConfigError("splat2d requires grid_width and grid_height");
        grid.width = static_cast<int>(parse_int(*ew, "grid_width"));
        grid.height = static_cast<int>(parse_int(*eh, "grid_height"));
        grid.channels = 1;
        if (auto* e = raw.take("grid_channels")) {
            grid.channels = static_cast<int>(parse_int(*e, "grid_channels"));
            if (grid.channels != 1 && grid.channels != 3) throw err(*e, "grid_channels must be 1 or 3");
        }
        if (grid.width < 1 || grid.height < 1) throw ConfigError("grid must be at least 1x1");
        grid_ptr = &grid;

        SplatField2D field;
        field.grid = grid;
        if (raw.find("splat1")) {
            for (int k = 1;; ++k) {
                auto* e = raw.take("splat" + std::to_string(k));
                if (!e) break;
                const Vec nums = parse_numbers(*e, "splat" + std::to_string(k));
                if (static_cast<int>(nums.size()) != 3 + grid.channels) {
                    throw err(*e, "splat needs: cx cy log_scale amplitude x" +
                                      std::to_string(grid.channels));
                }
                Splat sp;
                sp.cx = nums[0];
                sp.cy = nums[1];
                sp.log_scale = nums[2];
                sp.amplitude.assign(nums.begin() + 3, nums.end());
                field.splats.push_back(std::move(sp));
            }
        } else {
            auto* ec = raw.take("splat_count");
            if (!ec) throw ConfigError("splat2d needs splat1.. lines or splat_count");
            const int count = static_cast<int>(parse_int(*ec, "splat_count"));
            if (count < 0) throw err(*ec, "splat_count must be >= 0");
            double init_log_scale = std::log(std::max(1.0, std::min(grid.width, grid.height) / 8.0));
            if (auto* e = raw.take("splat_init_log_scale")) {
                init_log_scale = parse_double(*e, "splat_init_log_scale");
            }
            for (int k = 0; k < count; ++k) {
                Splat sp;
                sp.cx = (0.1 + 0.8 * init_rng.uniform()) * (grid.width - 1);
                sp.cy = (0.1 + 0.8 * init_rng.uniform()) * (grid.height - 1);
                sp.log_scale = init_log_scale;
                sp.amplitude.resize(static_cast<std::size_t>(grid.channels));
                for (auto& a : sp.amplitude) a = 0.5 + init_rng.uniform();
                field.splats.push_back(std::move(sp));
            }
        }
        cfg.initial_rep = std::move(field);
    } else {
        throw ConfigError("representation must be direct|splat2d");
    }

    // mixture
    {
        std::vector<GaussianComponent> comps;
        for (int k = 1;; ++k) {
            auto* e = raw.take("component" + std::to_string(k));
            if (!e) break;
            // componentK = weight stdev label | mean-spec
            const std::size_t bar = e->value.find('|');
            if (bar == std::string::npos) {
                throw err(*e, "component needs: weight stdev label | mean...");
            }
            const auto head = split_ws(e->value.substr(0, bar));
            const auto tail = split_ws(e->value.substr(bar + 1));
            if (head.size() != 3) throw err(*e, "component head needs: weight stdev label");
            GaussianComponent c;
            try {
                c.weight = std::stod(head[0]);
                c.stdev = std::stod(head[1]);
                c.label = std::stoi(head[2]);
            } catch (const std::exception&) {
                throw err(*e, "bad component head '" + e->value.substr(0, bar) + "'");
            }
            c.mean = parse_mean_spec(tail, *e, grid_ptr);
            comps.push_back(std::move(c));
        }
        if (comps.empty()) throw ConfigError("at least one componentK key required");
        try {
            cfg.mixture = make_mixture(std::move(comps));
        } catch (const Error& ex) {
            throw ConfigError(std::string("mixture: ") + ex.what());
        }
    }

    // reward
    bool tau_set = false;
    double tau_value = 1e-3;
    if (auto* e = raw.take("tau")) {
        tau_value = parse_tau(*e);
        tau_set = true;
    }
    if (auto* e = raw.take("reward")) {
        if (e->value == "proximity") {
            auto* et = raw.take("reward_target");
            if (!et) throw ConfigError("proximity reward requires reward_target");
            cfg.reward = RewardSpec::proximity(parse_mean_spec(split_ws(et->value), *et, grid_ptr));
        } else if (e->value == "linear") {
            auto* ev = raw.take("reward_vector");
            if (!ev) throw ConfigError("linear reward requires reward_vector");
            cfg.reward = RewardSpec::linear(parse_mean_spec(split_ws(ev->value), *ev, grid_ptr));
        } else if (e->value == "mixture_likelihood") {
            std::optional<int> label;
            if (auto* el = raw.take("reward_label")) {
                label = static_cast<int>(parse_int(*el, "reward_label"));
            }
            cfg.reward = RewardSpec::mixture_likelihood(label);
        } else if (e->value == "lmm") {
            auto* eq = raw.take("reward_questions");
            if (!eq) throw ConfigError("lmm reward requires reward_questions");
            std::vector<std::string> questions;
            std::istringstream in(eq->value);
            std::string q;
            while (std::getline(in, q, '|')) {
                const std::string t = trim(q);
                if (!t.empty()) questions.push_back(t);
            }
            if (questions.empty()) throw err(*eq, "reward_questions needs at least one question");
            cfg.reward = RewardSpec::lmm(std::move(questions));
            if (!tau_set) tau_value = 1.0;  // integer yes-counts: push only on a strict majority
        } else {
            throw err(*e, "reward must be proximity|linear|mixture_likelihood|lmm");
        }
    }
    run.tau = tau_value;
    if (auto* e = raw.take("lmm_replay")) cfg.lmm_replay_path = e->value;
    if (auto* e = raw.take("lmm_mock")) {
        if (e->value != "all_yes" && e->value != "all_no") {
            throw err(*e, "lmm_mock must be all_yes|all_no");
        }
        cfg.lmm_mock = e->value;
    }

    // harness
    if (auto* e = raw.take("output_dir")) cfg.output_dir = e->value;
    if (auto* e = raw.take("metric_views")) {
        cfg.metric_views = static_cast<int>(parse_int(*e, "metric_views"));
        if (cfg.metric_views < 1) throw err(*e, "metric_views must be >= 1");
    }

    // reject unknown keys
    for (const auto& [key, entry] : raw.entries) {
        if (!entry.consumed) {
            throw err(entry, "unknown key '" + key + "'");
        }
    }

    // cross-field validation
    if (run.mode == Mode::dreamdpo && !cfg.reward) {
        throw ConfigError("dreamdpo mode requires a reward spec");
    }
    if (cfg.reward) {
        const std::size_t dim = render_dim(cfg.initial_rep);
        if (cfg.reward->kind == RewardSpec::Kind::proximity && cfg.reward->x_ref.size() != dim) {
            throw ConfigError("reward_target length must equal the render dimension");
        }
        if (cfg.reward->kind == RewardSpec::Kind::linear && cfg.reward->direction.size() != dim) {
            throw ConfigError("reward_vector length must equal the render dimension");
        }
        if (cfg.reward->label && !cfg.mixture.has_label(*cfg.reward->label)) {
            throw ConfigError("reward_label not present in the mixture");
        }
    }
    try {
        validate_run_config(run, cfg.schedule, cfg.initial_rep, cfg.mixture);
    } catch (const Error& ex) {
        throw ConfigError(ex.what());
    }
    return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path,
                                          const ConfigOverrides& overrides = {});

}  // namespace dreamdpo
