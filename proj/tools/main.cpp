// Command-line front end: gen-data, train, train-sharpener, infer, eval,
// ablate and spectrum. Every command prints one JSON object on stdout; on
// failure it prints {"error": {...}} and exits nonzero.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rfdense/ablation.hpp"
#include "rfdense/error.hpp"
#include "rfdense/pipeline.hpp"

namespace {

using json = nlohmann::json;
using namespace rfdense;

json read_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
}

/// Named section of a sectioned config file (empty when absent). A file
/// without section names, or an ablation config with its own "scenes" and
/// "base" keys (as written by `ablate`), is a bare config for the command.
json section(const json& config, const char* name) {
    if (!config.is_object() || config.contains("base")) return config;
    for (const char* key : {"scenes", "train", "sharpener", "ablation", "infer"}) {
        if (config.contains(key)) return config.value(name, json::object());
    }
    return config;
}

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;
};

void add_common(CLI::App* cmd, Common& c, bool with_steps) {
    cmd->add_option("--config", c.config, "JSON configuration file");
    cmd->add_option("--out", c.out, "Output path")->required();
    cmd->add_option("--seed", c.seed, "Override every seed of the command");
    if (with_steps) cmd->add_option("--steps", c.steps, "Override the optimisation step count");
}

void override_seeds(TrainConfig& t, const Common& c) {
    if (c.seed) t.seeds = {*c.seed, *c.seed, *c.seed};
    if (c.steps) t.steps = *c.steps;
    t.validate();
}

int fail(const std::string& kind, const std::string& message, int code) {
    std::cout << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << std::endl;
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic rectified-flow dense prediction on synthetic scenes"};
    app.require_subcommand(1);

    Common gen_opts, train_opts, sharp_opts, ablate_opts;
    auto* gen = app.add_subcommand("gen-data", "Render the synthetic dataset tree");
    add_common(gen, gen_opts, false);

    auto* train_cmd = app.add_subcommand("train", "Train a core-stage model");
    add_common(train_cmd, train_opts, true);

    std::string core_path, pairs_path;
    auto* sharp = app.add_subcommand("train-sharpener", "Train the detail sharpener on coarse predictions");
    add_common(sharp, sharp_opts, true);
    sharp->add_option("--core", core_path, "Core predictor checkpoint")->required();
    sharp->add_option("--pairs", pairs_path, "Existing coarse pair set (generated when omitted)");

    std::string infer_core, infer_sharp, infer_input, infer_out, infer_config;
    int infer_steps = kMaxSharpenerSteps;
    auto* infer_cmd = app.add_subcommand("infer", "Run the two-stage pipeline on images or scene directories");
    infer_cmd->add_option("--config", infer_config, "JSON configuration file (reads infer.sharpener_steps)");
    infer_cmd->add_option("--core", infer_core, "Core predictor checkpoint")->required();
    infer_cmd->add_option("--sharpener", infer_sharp, "Sharpener checkpoint (optional)");
    infer_cmd->add_option("--input", infer_input, "Image, scene directory or split directory")->required();
    infer_cmd->add_option("--out", infer_out, "Prediction directory")->required();
    auto* steps_opt = infer_cmd->add_option("--steps", infer_steps, "Sharpener Euler steps (0 disables, at most 10)");

    std::string eval_pred, eval_gt, eval_task = "depth", eval_out, eval_method = "prediction";
    auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
    eval_cmd->add_option("--pred", eval_pred, "Prediction directory")->required();
    eval_cmd->add_option("--gt", eval_gt, "Ground-truth split directory")->required();
    eval_cmd->add_option("--task", eval_task, "depth or normal");
    eval_cmd->add_option("--method", eval_method, "Method label for the report");
    eval_cmd->add_option("--out", eval_out, "Report directory")->required();

    auto* ablate = app.add_subcommand("ablate", "Run the ablation ladder and time-step sweep");
    add_common(ablate, ablate_opts, true);

    std::string spec_core, spec_sharp, spec_gt, spec_task = "depth", spec_out;
    auto* spectrum = app.add_subcommand("spectrum", "Radial power spectrum CSV for core, sharpened and ground truth");
    spectrum->add_option("--core", spec_core, "Core-only prediction directory")->required();
    spectrum->add_option("--sharpened", spec_sharp, "Sharpened prediction directory")->required();
    spectrum->add_option("--gt", spec_gt, "Ground-truth split directory")->required();
    spectrum->add_option("--task", spec_task, "depth or normal");
    spectrum->add_option("--out", spec_out, "CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage_error", e.what(), e.get_exit_code() ? e.get_exit_code() : 2);
    }

    try {
        json result;
        if (*gen) {
            SceneConfig sc = scene_config_from_json(section(read_config(gen_opts.config), "scenes"));
            if (gen_opts.seed) {
                sc.train_seed = *gen_opts.seed;
                sc.val_seed = *gen_opts.seed + 1;
                sc.test_seed = *gen_opts.seed + 2;
            }
            gen_data(sc, gen_opts.out);
            result = {{"dataset", gen_opts.out},
                      {"train", sc.train_size},
                      {"val", sc.val_size},
                      {"test", sc.test_size}};
        } else if (*train_cmd) {
            TrainConfig tc = TrainConfig::from_json(section(read_config(train_opts.config), "train"));
            override_seeds(tc, train_opts);
            const TrainOutput out = train(tc, train_opts.out);
            result = {{"checkpoint", out.path.string()}, {"hash", out.hash}, {"step", out.checkpoint.step},
                      {"loss", out.checkpoint.last_loss}};
        } else if (*sharp) {
            json sj = section(read_config(sharp_opts.config), "sharpener");
            if (!sj.contains("variant")) sj["variant"] = {{"kind", "sharpener"}, {"steps", 10}};
            TrainConfig tc = TrainConfig::from_json(sj);
            override_seeds(tc, sharp_opts);
            std::optional<fs::path> pairs;
            if (!pairs_path.empty()) pairs = pairs_path;
            const TrainOutput out = train_sharpener(core_path, tc, sharp_opts.out, pairs);
            result = {{"checkpoint", out.path.string()}, {"hash", out.hash}, {"step", out.checkpoint.step},
                      {"loss", out.checkpoint.last_loss}};
        } else if (*infer_cmd) {
            InferOptions options;
            options.core = infer_core;
            if (!infer_sharp.empty()) options.sharpener = infer_sharp;
            options.sharpener_steps = infer_steps;
            if (steps_opt->count() == 0 && !infer_config.empty()) {
                const json ij = section(read_config(infer_config), "infer");
                options.sharpener_steps = ij.value("sharpener_steps", infer_steps);
            }
            const auto ids = infer(options, infer_input, infer_out);
            result = {{"predictions", infer_out}, {"count", ids.size()}};
        } else if (*eval_cmd) {
            const MetricsReport report =
                evaluate(eval_pred, eval_gt, task_from_string(eval_task), fs::path(eval_out), eval_method);
            result = json::parse(report.to_json());
            result.erase("samples");
        } else if (*ablate) {
            json aj = section(read_config(ablate_opts.config), "ablation");
            AblationConfig ac = AblationConfig::from_json(aj);
            if (ablate_opts.seed) ac.base.seeds = {*ablate_opts.seed, *ablate_opts.seed, *ablate_opts.seed};
            if (ablate_opts.steps) ac.base.steps = *ablate_opts.steps;
            ac.validate();
            const AblationReport report =
                run_ablation(ac, [](const std::string& line) { std::cerr << line << std::endl; });
            write_ablation(report, ac, ablate_opts.out);
            result = {{"report", ablate_opts.out}, {"runs", report.runs.size()}, {"sweep", report.sweep.size()}};
        } else if (*spectrum) {
            const auto rows = spectrum_report(spec_core, spec_sharp, spec_gt, task_from_string(spec_task),
                                              fs::path(spec_out));
            result = {{"spectrum", spec_out}, {"bins", rows.size()}};
        }
        std::cout << result.dump() << std::endl;
        return 0;
    } catch (const Error& e) {
        return fail(e.kind(), e.what(), 1);
    } catch (const std::exception& e) {
        return fail("internal_error", e.what(), 1);
    }
}
