#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dreamdpo/harness.hpp"

using namespace dreamdpo;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string tmp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("dreamdpo_harness_" + name);
    fs::remove_all(dir);
    return dir.string();
}

std::string steering_config(const std::string& out, const std::string& extra = {}, int steps = 25) {
    return "representation = direct\n"
           "dim = 2\n"
           "init_jitter = 0.1\n"
           "seed = 5\n"
           "steps = " + std::to_string(steps) + "\n"
           "learning_rate = 0.01\n"
           "t_min = 1\n"
           "t_max = 400\n"
           "component1 = 0.5 1.0 0 | 4 0\n"
           "component2 = 0.5 1.0 1 | -4 0\n"
           "reward = proximity\n"
           "reward_target = 4 0\n"
           "metric_views = 4\n"
           "output_dir = " + out + "\n" + extra;
}

}  // namespace

TEST_CASE("avg_reward_metric basics") {
    const auto sched = make_linear_schedule(10, 0.01, 0.02);
    const Ranker prox(RewardSpec::proximity(Vec{1.0, 2.0}));
    const Representation rep = DirectVector{{0.0, 2.0}};

    SECTION("single identity view equals the single reward") {
        const auto v = avg_reward_metric(rep, {ViewSpec::identity()}, prox);
        REQUIRE(v.has_value());
        REQUIRE(*v == prox.reward(Vec{0.0, 2.0}));
    }

    SECTION("identical views average to any one view's reward") {
        const auto views = metric_views_for(rep, 5);  // direct: repeated identity
        const auto v = avg_reward_metric(rep, views, prox);
        REQUIRE_THAT(*v, Catch::Matchers::WithinRel(prox.reward(Vec{0.0, 2.0}), 1e-15));
    }

    SECTION("annotation errors make the metric missing, not fatal") {
        ScriptedTransport broken([](const std::string&, const std::string&) -> std::string {
            throw AnnotationError("down");
        });
        auto enc = [](const Vec&) { return std::string("x"); };
        const Ranker lmm(RewardSpec::lmm({"q"}), nullptr, nullptr, &broken, enc);
        REQUIRE_FALSE(avg_reward_metric(rep, {ViewSpec::identity()}, lmm).has_value());
    }
}

TEST_CASE("avg_reward_metric over affine views matches a hand loop") {
    SplatField2D field;
    field.grid = {8, 8, 1};
    field.splats.push_back({3.0, 4.0, 0.2, {1.0}});
    field.splats.push_back({5.5, 2.5, -0.1, {0.7}});
    const Representation rep = field;

    Rng rng(13);
    Vec target(render_dim(rep));
    for (auto& v : target) v = rng.uniform();
    const Ranker prox(RewardSpec::proximity(target));

    const auto views = metric_views_for(rep, 8);
    REQUIRE(views.size() == 8);
    const auto metric = avg_reward_metric(rep, views, prox);

    double hand = 0.0;
    for (const auto& v : views) hand += -squared_distance(render(rep, v), target);
    hand /= 8.0;
    REQUIRE_THAT(*metric, Catch::Matchers::WithinRel(hand, 1e-12));
}

TEST_CASE("run_experiment writes the documented files deterministically") {
    const auto out1 = tmp_dir("det1");
    const auto out2 = tmp_dir("det2");
    const auto row1 = run_experiment(parse_config(steering_config(out1)));
    const auto row2 = run_experiment(parse_config(steering_config(out2)));

    REQUIRE(fs::exists(out1 + "/trace.csv"));
    REQUIRE(fs::exists(out1 + "/summary.csv"));
    REQUIRE(fs::exists(out1 + "/params.txt"));
    REQUIRE(fs::exists(out1 + "/view_0.pgm"));

    // byte-identical artifacts from identical (config, seed)
    REQUIRE(slurp(out1 + "/trace.csv") == slurp(out2 + "/trace.csv"));
    REQUIRE(slurp(out1 + "/summary.csv") == slurp(out2 + "/summary.csv"));
    REQUIRE(slurp(out1 + "/params.txt") == slurp(out2 + "/params.txt"));
    REQUIRE(slurp(out1 + "/view_0.pgm") == slurp(out2 + "/view_0.pgm"));

    REQUIRE(row1.pull_only + row1.push_pull + row1.skipped == 25);
    REQUIRE(row1.final_avg_reward.has_value());
    REQUIRE(row1.final_dist_to_target.has_value());
    REQUIRE(row2.final_dist_to_target == row1.final_dist_to_target);

    // trace round-trips through the repo's own reader
    const auto traces = read_trace_csv(out1 + "/trace.csv");
    REQUIRE(traces.size() == 25);
    for (const auto& tr : traces) {
        REQUIRE(tr.s_gap.has_value());
        REQUIRE(tr.metric_avg_reward.has_value());
    }
    fs::remove_all(out1);
    fs::remove_all(out2);
}

TEST_CASE("zero steps writes a header-only trace") {
    const auto out = tmp_dir("zero");
    run_experiment(parse_config(steering_config(out, "", 0)));
    REQUIRE(slurp(out + "/trace.csv") == std::string(kTraceHeader) + "\n");
    fs::remove_all(out);
}

TEST_CASE("sds traces share the schema with ranker columns empty") {
    const auto out_dpo = tmp_dir("dpo");
    const auto out_sds = tmp_dir("sds");
    run_experiment(parse_config(steering_config(out_dpo)));
    run_experiment(parse_config(steering_config(out_sds, "mode = sds\n")));

    const auto dpo = read_trace_csv(out_dpo + "/trace.csv");
    const auto sds = read_trace_csv(out_sds + "/trace.csv");
    REQUIRE(dpo.size() == sds.size());
    for (std::size_t i = 0; i < sds.size(); ++i) {
        // same drawn timesteps for the same seed; ranker columns empty
        REQUIRE(sds[i].t == dpo[i].t);
        REQUIRE_FALSE(sds[i].reward_win.has_value());
        REQUIRE_FALSE(sds[i].reward_lose.has_value());
        REQUIRE_FALSE(sds[i].s_gap.has_value());
        REQUIRE(sds[i].branch == Branch::none);
        REQUIRE(sds[i].gradient_norm > 0.0);
        REQUIRE(sds[i].metric_avg_reward.has_value());
        REQUIRE(dpo[i].s_gap.has_value());
    }

    // header line is the shared schema
    std::istringstream a(slurp(out_dpo + "/trace.csv")), b(slurp(out_sds + "/trace.csv"));
    std::string ha, hb;
    std::getline(a, ha);
    std::getline(b, hb);
    REQUIRE(ha == hb);
    fs::remove_all(out_dpo);
    fs::remove_all(out_sds);
}

TEST_CASE("sweep_tau replays one stream across member runs") {
    const auto out = tmp_dir("sweep");
    const auto cfg = parse_config(steering_config(out, "", 30));
    const auto rows = sweep_tau(cfg, {0.01, 0.001, 0.0});
    REQUIRE(rows.size() == 3);
    REQUIRE(fs::exists(out + "/sweep.csv"));

    const auto t0 = read_trace_csv(out + "/tau_0.01/trace.csv");
    const auto t1 = read_trace_csv(out + "/tau_0.001/trace.csv");
    const auto t2 = read_trace_csv(out + "/tau_0/trace.csv");
    for (std::size_t i = 0; i < t0.size(); ++i) {
        REQUIRE(t0[i].t == t1[i].t);  // identical replayed tuples
        REQUIRE(t1[i].t == t2[i].t);
    }
    // tau = 0: s_gap < 0 never holds, every ranked iteration pushes
    REQUIRE(rows[2].pull_only == 0);
    REQUIRE(rows[2].push_pull == 30);
    REQUIRE_THROWS_AS(sweep_tau(cfg, {0.1}), ParameterError);
    fs::remove_all(out);
}

TEST_CASE("sweep_tau with infinite tau never pushes") {
    const auto out = tmp_dir("sweepinf");
    const auto cfg = parse_config(steering_config(out, "", 20));
    const auto rows = sweep_tau(cfg, {std::numeric_limits<double>::infinity(), 0.001});
    REQUIRE(rows[0].push_pull == 0);
    REQUIRE(rows[0].pull_only == 20);
    REQUIRE(fs::exists(out + "/tau_inf/trace.csv"));
    fs::remove_all(out);
}

TEST_CASE("ablate_pairs matches iterations across strategies") {
    const auto out = tmp_dir("ablate");
    const auto cfg = parse_config(steering_config(
        out, "pair_strategy = different_timesteps\npair_gap = 100\n", 40));
    const auto rows = ablate_pairs(cfg);
    REQUIRE(rows.size() == 2);
    REQUIRE(fs::exists(out + "/ablate.csv"));

    const auto noise = read_trace_csv(out + "/different_noises/trace.csv");
    const auto ts = read_trace_csv(out + "/different_timesteps/trace.csv");
    REQUIRE(noise.size() == 40);
    REQUIRE(ts.size() == 40);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        REQUIRE(noise[i].t == ts[i].t);  // shared stream, matched base timesteps
        REQUIRE(noise[i].t <= 300);      // drawn from [t_min, t_max - gap]
    }

    // gap = 0 degenerate: identical pair members, every s_gap exactly 0
    const auto out0 = tmp_dir("ablate0");
    const auto cfg0 = parse_config(steering_config(
        out0, "pair_strategy = different_timesteps\npair_gap = 0\n", 15));
    const auto rows0 = ablate_pairs(cfg0);
    const auto ts0 = read_trace_csv(out0 + "/different_timesteps/trace.csv");
    for (const auto& tr : ts0) REQUIRE(*tr.s_gap == 0.0);
    REQUIRE(rows0[1].mean_s_gap == 0.0);
    fs::remove_all(out);
    fs::remove_all(out0);
}

TEST_CASE("lmm runs record and replay deterministically") {
    const std::string base_cfg =
        "representation = direct\n"
        "dim = 2\n"
        "init_jitter = 0.1\n"
        "seed = 11\n"
        "steps = 8\n"
        "learning_rate = 0.01\n"
        "component1 = 0.5 1.0 0 | 4 0\n"
        "component2 = 0.5 1.0 1 | -4 0\n"
        "reward = lmm\n"
        "reward_questions = Near the right mode?|Bright?\n"
        "metric_views = 2\n";

    // recording pass: scripted transport answers while a table records the session
    ReplayTable table;
    ScriptedTransport recorder([&table](const std::string&, const std::string& image) {
        const std::string response = "A1: Yes\nA2: No\n";
        table.put(checksum_hex(image), response);
        return response;
    });
    const auto out1 = tmp_dir("lmm_rec");
    auto cfg1 = parse_config(base_cfg + "output_dir = " + out1 + "\n");
    const auto row1 = run_experiment(cfg1, &recorder);
    REQUIRE(row1.skipped == 0);
    REQUIRE(table.size() > 0);

    // replay pass hits only the table and reproduces the run byte for byte
    const auto replay_path = fs::temp_directory_path() / "dreamdpo_replay_run.tsv";
    table.save(replay_path.string());
    const auto out2 = tmp_dir("lmm_rep");
    auto cfg2 = parse_config(base_cfg + "output_dir = " + out2 + "\n" +
                             "lmm_replay = " + replay_path.string() + "\n");
    const auto row2 = run_experiment(cfg2);
    REQUIRE(slurp(out1 + "/trace.csv") == slurp(out2 + "/trace.csv"));
    REQUIRE(row2.final_avg_reward == row1.final_avg_reward);

    // per-iteration metric column stays empty for lmm rewards
    for (const auto& tr : read_trace_csv(out2 + "/trace.csv")) {
        REQUIRE_FALSE(tr.metric_avg_reward.has_value());
        REQUIRE(tr.s_gap.has_value());
        REQUIRE(*tr.s_gap >= 0.0);
    }

    // an empty replay table skips every iteration and leaves parameters alone
    const auto empty_path = fs::temp_directory_path() / "dreamdpo_replay_empty.tsv";
    ReplayTable{}.save(empty_path.string());
    const auto out3 = tmp_dir("lmm_skip");
    auto cfg3 = parse_config(base_cfg + "output_dir = " + out3 + "\n" +
                             "lmm_replay = " + empty_path.string() + "\n");
    const auto row3 = run_experiment(cfg3);
    REQUIRE(row3.skipped == 8);
    REQUIRE_FALSE(row3.final_avg_reward.has_value());

    fs::remove_all(out1);
    fs::remove_all(out2);
    fs::remove_all(out3);
    fs::remove(replay_path);
    fs::remove(empty_path);
}

TEST_CASE("all-yes mock gives constant rewards so every iteration pulls") {
    const auto out = tmp_dir("mock");
    const std::string cfg_text =
        "representation = direct\n"
        "dim = 2\n"
        "seed = 3\n"
        "steps = 6\n"
        "component1 = 1.0 1.0 0 | 0 0\n"
        "reward = lmm\n"
        "reward_questions = One?|Two?|Three?\n"
        "lmm_mock = all_yes\n"
        "output_dir = " + out + "\n";
    const auto cfg = parse_config(cfg_text);
    REQUIRE(cfg.run.tau == 1.0);  // lmm default threshold
    const auto row = run_experiment(cfg);
    REQUIRE(row.pull_only == 6);  // constant yes-count: s_gap 0 < 1
    REQUIRE(row.push_pull == 0);
    const auto traces = read_trace_csv(out + "/trace.csv");
    REQUIRE(traces[0].reward_win.has_value());
    REQUIRE(*traces[0].reward_win == 3.0);
    fs::remove_all(out);
}

TEST_CASE("image export encodes the normalization bounds") {
    Vec img{0.0, 0.5, 1.0, 2.0};
    const std::string pgm = encode_image(img, 4, 1, 1, value_bounds(img));
    REQUIRE(pgm.rfind("P5\n4 1\n255\n", 0) == 0);
    REQUIRE(static_cast<unsigned char>(pgm[pgm.size() - 4]) == 0);
    REQUIRE(static_cast<unsigned char>(pgm.back()) == 255);

    // constant image maps to zero bytes
    Vec flat{3.0, 3.0};
    const std::string p2 = encode_image(flat, 2, 1, 1, value_bounds(flat));
    REQUIRE(static_cast<unsigned char>(p2.back()) == 0);

    REQUIRE_THROWS_AS(encode_image(img, 3, 1, 1, value_bounds(img)), ShapeError);
    REQUIRE_THROWS_AS(encode_image(img, 2, 1, 2, value_bounds(img)), ParameterError);
}

TEST_CASE("timestep pairs separate more than noise pairs under the likelihood reward") {
    // frozen parameters near the preferred mode isolate the strategy effect
    const auto out = tmp_dir("sep");
    const std::string text =
        "representation = direct\n"
        "dim = 2\n"
        "init = 4 0\n"
        "init_jitter = 0.1\n"
        "seed = 62\n"
        "steps = 250\n"
        "learning_rate = 0\n"
        "t_min = 1\n"
        "t_max = 600\n"
        "pair_strategy = different_timesteps\n"
        "pair_gap = 150\n"
        "component1 = 0.5 1.0 0 | 4 0\n"
        "component2 = 0.5 1.0 1 | -4 0\n"
        "reward = mixture_likelihood\n"
        "metric_views = 1\n"
        "output_dir = " + out + "\n";
    const auto rows = ablate_pairs(parse_config(text));
    REQUIRE(rows[1].mean_s_gap > rows[0].mean_s_gap);  // timesteps > noises
    fs::remove_all(out);
}

TEST_CASE("three-channel splat runs export ppm images") {
    const auto out = tmp_dir("ppm");
    const std::string text =
        "representation = splat2d\n"
        "grid_width = 6\n"
        "grid_height = 6\n"
        "grid_channels = 3\n"
        "splat_count = 2\n"
        "seed = 8\n"
        "steps = 3\n"
        "learning_rate = 0.01\n"
        "component1 = 1.0 0.5 0 | blob 3 3 1.5 1.0\n"
        "reward = mixture_likelihood\n"
        "metric_views = 2\n"
        "output_dir = " + out + "\n";
    run_experiment(parse_config(text));
    REQUIRE(fs::exists(out + "/view_0.ppm"));
    REQUIRE(slurp(out + "/view_0.ppm").rfind("P6\n6 6\n255\n", 0) == 0);
    fs::remove_all(out);
}
