#include "rfdense/ablation.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rfdense/error.hpp"
#include "rfdense/metrics.hpp"
#include "rfdense/pipeline.hpp"

namespace rfdense {

using json = nlohmann::json;

namespace {

struct ArmName {
    Arm arm;
    const char* key;
    const char* label;
};

constexpr ArmName kArmNames[] = {
    {Arm::stochastic_da, "stochastic_da", "Stochastic-DA"},
    {Arm::deterministic_da, "deterministic_da", "Deterministic-DA"},
    {Arm::single_step, "single_step", "+ Single-Step Formulation"},
    {Arm::clean_data, "clean_data", "+ Clean-Data Prediction"},
    {Arm::lcm, "lcm", "+ Local Continuity Module"},
    {Arm::without_pack_unpack, "without_pack_unpack", "(w/o Pack-Unpack)"},
    {Arm::detail_sharpener, "detail_sharpener", "+ Detail Sharpener"},
};

std::string arm_key(Arm arm) {
    for (const auto& n : kArmNames)
        if (n.arm == arm) return n.key;
    throw ConfigError("unknown ablation arm");
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

std::string arm_label(Arm arm) {
    for (const auto& n : kArmNames)
        if (n.arm == arm) return n.label;
    throw ConfigError("unknown ablation arm");
}

Arm arm_from_string(const std::string& name) {
    for (const auto& n : kArmNames)
        if (name == n.key || name == n.label) return n.arm;
    throw ConfigError("unknown ablation arm '" + name + "'");
}

std::vector<Arm> all_arms() {
    std::vector<Arm> arms;
    for (const auto& n : kArmNames) arms.push_back(n.arm);
    return arms;
}

void AblationConfig::validate() const {
    scenes.validate();
    base.validate();
    if (base.task != Task::depth) throw ConfigError("the ablation runs on the depth task");
    if (replicates < 1) throw ConfigError("ablation needs at least one replicate");
    if (multi_step_T < 1) throw ConfigError("multi_step_T must be positive");
    if (noise_seeds < 2) throw ConfigError("seed variance needs at least two noise seeds");
    if (variance_inputs < 1) throw ConfigError("variance_inputs must be positive");
    if (sharpener_inference_steps < 1 || sharpener_inference_steps > kMaxSharpenerSteps) {
        throw ConfigError("sharpener_inference_steps must lie in [1, 10]");
    }
    for (int t : sweep_steps)
        if (t < 1) throw ConfigError("sweep step counts must be positive");
    for (double s : sweep_scales)
        if (!(s > 0.0 && s <= 1.0)) throw ConfigError("sweep data scales must lie in (0, 1]");
}

json AblationConfig::to_json() const {
    json arm_list = json::array();
    for (Arm a : arms) arm_list.push_back(arm_key(a));
    json j{{"scenes", scene_config_to_json(scenes)},
           {"base", base.to_json()},
           {"arms", arm_list},
           {"replicates", replicates},
           {"multi_step_T", multi_step_T},
           {"sharpener_inference_steps", sharpener_inference_steps},
           {"noise_seeds", noise_seeds},
           {"variance_inputs", variance_inputs},
           {"sweep", sweep},
           {"sweep_steps", sweep_steps},
           {"sweep_scales", sweep_scales}};
    if (sharpener_train_steps) j["sharpener_train_steps"] = *sharpener_train_steps;
    if (sharpener_learning_rate) j["sharpener_learning_rate"] = *sharpener_learning_rate;
    if (train_limit) j["train_limit"] = *train_limit;
    if (val_limit) j["val_limit"] = *val_limit;
    return j;
}

AblationConfig AblationConfig::from_json(const json& j) {
    AblationConfig c;
    reject_unknown_keys(j,
                        {"scenes", "base", "arms", "replicates", "multi_step_T", "sharpener_train_steps",
                         "sharpener_learning_rate", "sharpener_inference_steps", "noise_seeds", "variance_inputs",
                         "sweep", "sweep_steps", "sweep_scales", "train_limit", "val_limit"},
                        "ablation config");
    try {
        if (j.contains("scenes")) c.scenes = scene_config_from_json(j.at("scenes"));
        if (!j.contains("base")) throw ConfigError("ablation config needs a 'base' training config");
        c.base = TrainConfig::from_json(j.at("base"));
        if (j.contains("arms")) {
            c.arms.clear();
            for (const auto& a : j.at("arms")) c.arms.push_back(arm_from_string(a));
        }
        c.replicates = j.value("replicates", c.replicates);
        c.multi_step_T = j.value("multi_step_T", c.multi_step_T);
        if (j.contains("sharpener_train_steps")) c.sharpener_train_steps = j.at("sharpener_train_steps").get<int>();
        if (j.contains("sharpener_learning_rate")) {
            c.sharpener_learning_rate = j.at("sharpener_learning_rate").get<double>();
        }
        c.sharpener_inference_steps = j.value("sharpener_inference_steps", c.sharpener_inference_steps);
        c.noise_seeds = j.value("noise_seeds", c.noise_seeds);
        c.variance_inputs = j.value("variance_inputs", c.variance_inputs);
        c.sweep = j.value("sweep", c.sweep);
        if (j.contains("sweep_steps")) c.sweep_steps = j.at("sweep_steps").get<std::vector<int>>();
        if (j.contains("sweep_scales")) c.sweep_scales = j.at("sweep_scales").get<std::vector<double>>();
        if (j.contains("train_limit")) c.train_limit = j.at("train_limit").get<int>();
        if (j.contains("val_limit")) c.val_limit = j.at("val_limit").get<int>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("ablation config: ") + e.what());
    }
    c.validate();
    return c;
}

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd r;
    if (values.empty()) return r;
    for (double v : values) r.mean += v;
    r.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - r.mean) * (v - r.mean);
        r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return r;
}

AblationData make_ablation_data(const AblationConfig& config) {
    AblationData d;
    const CodecSpec codec{config.base.codec};
    d.train = encode_items(generate_split(config.scenes, Split::train, config.train_limit), Task::depth, codec);
    d.val_items = generate_split(config.scenes, Split::val, config.val_limit);
    d.val = encode_items(d.val_items, Task::depth, codec);
    return d;
}

std::vector<LatentMap> decode_disparities(const std::vector<LatentMap>& predictions, const AblationData& data,
                                          const CodecSpec& codec) {
    std::vector<LatentMap> out;
    out.reserve(predictions.size());
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        out.push_back(disparity_from_pixels(decode(predictions[i], codec), data.val.at(i).range));
    }
    return out;
}

Evaluation evaluate_latents(const std::vector<LatentMap>& predictions, const AblationData& data,
                            const CodecSpec& codec) {
    if (predictions.size() != data.val_items.size()) throw DataError("prediction count does not match validation set");
    if (predictions.empty()) throw DataError("empty validation set");
    const auto disparities = decode_disparities(predictions, data, codec);
    Evaluation e;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const SceneSample& gt = data.val_items[i].sample;
        SampleMetrics m = score_depth(data.val_items[i].id, disparities[i], gt);
        if (!m.ok) {
            // Constant prediction: the least-squares fit collapses to the
            // shift-only solution, i.e. the masked ground-truth mean.
            ++e.flagged;
            double mean = 0.0;
            std::size_t n = 0;
            for (std::size_t p = 0; p < gt.mask.size(); ++p) {
                if (gt.mask[p]) {
                    mean += gt.disparity.values[p];
                    ++n;
                }
            }
            mean /= static_cast<double>(n);
            const std::vector<double> constant(gt.disparity.size(), mean);
            m.absrel = absrel(constant, gt.disparity.values, gt.mask);
            m.delta1 = delta1(constant, gt.disparity.values, gt.mask);
        }
        e.absrel += m.absrel;
        e.delta1 += m.delta1;
        e.boundary += patch_boundary_discontinuity(predictions[i]);
    }
    const double n = static_cast<double>(predictions.size());
    e.absrel /= n;
    e.delta1 /= n;
    e.boundary /= n;
    return e;
}

double seed_variance(const Checkpoint& ckpt, const std::vector<LatentMap>& inputs, int seeds, std::uint64_t base_seed) {
    return seed_variance([&](const LatentMap& x, Rng& noise) { return predict(ckpt, x, &noise); }, inputs, seeds,
                         base_seed);
}

double seed_variance(const NoisyPredictor& sample, const std::vector<LatentMap>& inputs, int seeds,
                     std::uint64_t base_seed) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        std::vector<LatentMap> draws;
        for (int s = 0; s < seeds; ++s) {
            Rng noise(mix_seed(base_seed, mix_seed(i, static_cast<std::uint64_t>(s))));
            draws.push_back(sample(inputs[i], noise));
        }
        const std::size_t n = draws.front().size();
        for (std::size_t p = 0; p < n; ++p) {
            // Welford: identical draws give exactly zero spread.
            double mean = 0.0, m2 = 0.0;
            for (std::size_t k = 0; k < draws.size(); ++k) {
                const double x = draws[k].values[p];
                const double delta = x - mean;
                mean += delta / static_cast<double>(k + 1);
                m2 += delta * (x - mean);
            }
            total += std::sqrt(m2 / static_cast<double>(seeds));
            ++count;
        }
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

namespace {

TrainConfig arm_config(const AblationConfig& config, Arm arm, int replicate, int multi_T) {
    TrainConfig c = config.base;
    c.seeds.params += static_cast<std::uint64_t>(replicate);
    c.seeds.data += static_cast<std::uint64_t>(replicate);
    c.seeds.noise += static_cast<std::uint64_t>(replicate);
    c.task = Task::depth;
    c.network.lcm = false;
    c.network.pack_unpack = true;
    switch (arm) {
        case Arm::stochastic_da:
            c.variant = FlowVariant::stochastic(multi_T);
            break;
        case Arm::deterministic_da:
            c.variant = FlowVariant::deterministic(multi_T);
            break;
        case Arm::single_step:
            c.variant = FlowVariant::deterministic(1);
            break;
        case Arm::clean_data:
            c.variant = FlowVariant::core_predictor();
            break;
        case Arm::lcm:
        case Arm::detail_sharpener:
            c.variant = FlowVariant::core_predictor();
            c.network.lcm = true;
            break;
        case Arm::without_pack_unpack:
            c.variant = FlowVariant::core_predictor();
            c.network.pack_unpack = false;
            break;
    }
    c.inference_steps = TimeSchedule::with_default_inference(c.variant.steps).inference_steps;
    return c;
}

struct Trained {
    Checkpoint ckpt;
    double seconds = 0.0;
};

class Runner {
public:
    Runner(const AblationConfig& config, const AblationData& data, const Progress& progress)
        : config_(config), data_(data), progress_(progress), codec_{config.base.codec} {
        for (const auto& v : data_.val) val_inputs_.push_back(v.image);
        const std::size_t k = std::min<std::size_t>(config_.variance_inputs, val_inputs_.size());
        variance_inputs_.assign(val_inputs_.begin(), val_inputs_.begin() + static_cast<std::ptrdiff_t>(k));
    }

    /// Trains (or reuses) the model for `c` on the first `scale` of the data.
    const Trained& trained(const TrainConfig& c, double scale) {
        const std::string key = c.to_json().dump() + "|" + fmt(scale);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        const auto keep = static_cast<std::size_t>(std::ceil(scale * static_cast<double>(data_.train.size())));
        std::vector<TaskLatents> subset(data_.train.begin(),
                                        data_.train.begin() + static_cast<std::ptrdiff_t>(std::max<std::size_t>(keep, 1)));
        const auto start = std::chrono::steady_clock::now();
        Trained t{train_pairs(c, make_pairs(subset)), 0.0};
        t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return cache_.emplace(key, std::move(t)).first->second;
    }

    std::vector<LatentMap> predictions(const Checkpoint& ckpt) const {
        std::vector<LatentMap> out;
        out.reserve(val_inputs_.size());
        for (std::size_t i = 0; i < val_inputs_.size(); ++i) {
            Rng noise(mix_seed(ckpt.config.seeds.noise ^ 0x5eedULL, i));
            out.push_back(predict(ckpt, val_inputs_[i], &noise));
        }
        return out;
    }

    Evaluation evaluate(const Checkpoint& ckpt) const {
        Evaluation e = evaluate_latents(predictions(ckpt), data_, codec_);
        e.seed_variance = seed_variance(ckpt, variance_inputs_, config_.noise_seeds, mix_seed(ckpt.config.seeds.noise, 0x7a1));
        return e;
    }

    ArmRun run_arm(Arm arm, int replicate) {
        ArmRun run;
        run.arm = arm;
        run.replicate = replicate;
        try {
            const TrainConfig c = arm_config(config_, arm, replicate, config_.multi_step_T);
            const Trained& t = trained(c, 1.0);
            run.seconds = t.seconds;
            if (arm != Arm::detail_sharpener) {
                run.final_loss = t.ckpt.last_loss;
                run.eval = evaluate(t.ckpt);
            } else {
                run_sharpener(t.ckpt, run);
            }
        } catch (const Error& e) {
            run.ok = false;
            run.error = std::string(e.kind()) + ": " + e.what();
        }
        return run;
    }

    SweepRun run_sweep(int steps, double scale, int replicate) {
        SweepRun run;
        run.steps = steps;
        run.scale = scale;
        run.replicate = replicate;
        try {
            const TrainConfig c = arm_config(config_, Arm::deterministic_da, replicate, steps);
            run.eval = evaluate(trained(c, scale).ckpt);
        } catch (const Error& e) {
            run.ok = false;
            run.error = std::string(e.kind()) + ": " + e.what();
        }
        return run;
    }

    void say(const std::string& msg) const {
        if (progress_) progress_(msg);
    }

private:
    void run_sharpener(const Checkpoint& core, ArmRun& run) {
        TrainConfig s = core.config;
        s.variant = FlowVariant::sharpener();
        s.inference_steps = s.variant.steps;
        s.steps = config_.sharpener_train_steps.value_or(config_.base.steps);
        if (config_.sharpener_learning_rate) s.adam.learning_rate = *config_.sharpener_learning_rate;
        s.seeds.params = mix_seed(core.config.seeds.params, 0x5a4);
        const auto start = std::chrono::steady_clock::now();
        const Checkpoint sharp = train_pairs(s, make_pairs(make_coarse_pairs(core, data_.train)));
        run.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        run.final_loss = sharp.last_loss;

        const auto coarse = predictions(core);
        std::vector<LatentMap> refined;
        refined.reserve(coarse.size());
        for (const auto& z : coarse) refined.push_back(refine(sharp, z, config_.sharpener_inference_steps));
        run.eval = evaluate_latents(refined, data_, codec_);
        run.eval.seed_variance = seed_variance(
            [&](const LatentMap& x, Rng& noise) {
                return refine(sharp, predict(core, x, &noise), config_.sharpener_inference_steps);
            },
            variance_inputs_, config_.noise_seeds, mix_seed(sharp.config.seeds.noise, 0x7a1));
        run.core_eval = evaluate_latents(coarse, data_, codec_);

        std::vector<LatentMap> gt;
        for (const auto& item : data_.val_items) gt.push_back(item.sample.disparity);
        run.core_spectrum = mean_log_spectrum(decode_disparities(coarse, data_, codec_));
        run.sharpened_spectrum = mean_log_spectrum(decode_disparities(refined, data_, codec_));
        run.gt_spectrum = mean_log_spectrum(gt);
        run.core_top_quartile = top_quartile_mean(run.core_spectrum);
        run.sharpened_top_quartile = top_quartile_mean(run.sharpened_spectrum);
        run.gt_top_quartile = top_quartile_mean(run.gt_spectrum);
    }

    const AblationConfig& config_;
    const AblationData& data_;
    const Progress& progress_;
    CodecSpec codec_;
    std::vector<LatentMap> val_inputs_;
    std::vector<LatentMap> variance_inputs_;
    std::map<std::string, Trained> cache_;
};

}  // namespace

AblationReport run_ablation(const AblationConfig& config, const Progress& progress) {
    config.validate();
    const AblationData data = make_ablation_data(config);
    return run_ablation(config, data, progress);
}

AblationReport run_ablation(const AblationConfig& config, const AblationData& data, const Progress& progress) {
    config.validate();
    if (data.train.empty() || data.val.empty()) throw DataError("ablation needs non-empty train and val splits");
    Runner runner(config, data, progress);
    AblationReport report;
    for (int r = 0; r < config.replicates; ++r) {
        for (Arm arm : config.arms) {
            report.runs.push_back(runner.run_arm(arm, r));
            const ArmRun& run = report.runs.back();
            runner.say("replicate " + std::to_string(r) + " " + arm_label(arm) + ": " +
                       (run.ok ? "absrel " + fmt(run.eval.absrel) + " (" + fmt(run.seconds) + " s)" : run.error));
        }
        if (!config.sweep) continue;
        for (double scale : config.sweep_scales) {
            for (int steps : config.sweep_steps) {
                report.sweep.push_back(runner.run_sweep(steps, scale, r));
                const SweepRun& s = report.sweep.back();
                runner.say("replicate " + std::to_string(r) + " sweep T=" + std::to_string(steps) + " scale " +
                           fmt(scale) + ": " + (s.ok ? "absrel " + fmt(s.eval.absrel) : s.error));
            }
        }
    }
    for (Arm arm : config.arms) {
        ArmSummary summary;
        summary.arm = arm;
        std::vector<double> a, d, b, v;
        for (const auto& run : report.runs) {
            if (run.arm != arm) continue;
            if (!run.ok) {
                ++summary.failed;
                continue;
            }
            ++summary.completed;
            a.push_back(run.eval.absrel);
            d.push_back(run.eval.delta1);
            b.push_back(run.eval.boundary);
            v.push_back(run.eval.seed_variance);
        }
        summary.absrel = mean_std(a);
        summary.delta1 = mean_std(d);
        summary.boundary = mean_std(b);
        summary.seed_variance = mean_std(v);
        report.summaries.push_back(summary);
    }
    return report;
}

const ArmRun* AblationReport::find(Arm arm, int replicate) const {
    for (const auto& r : runs)
        if (r.arm == arm && r.replicate == replicate) return &r;
    return nullptr;
}

const SweepRun* AblationReport::find_sweep(int steps, double scale, int replicate) const {
    for (const auto& s : sweep)
        if (s.steps == steps && s.scale == scale && s.replicate == replicate) return &s;
    return nullptr;
}

std::string AblationReport::table_csv() const {
    std::ostringstream os;
    os << "method,completed,failed,absrel_mean,absrel_std,delta1_mean,delta1_std,boundary_mean,boundary_std,"
          "seed_variance_mean\n";
    for (const auto& s : summaries) {
        os << '"' << arm_label(s.arm) << "\"," << s.completed << ',' << s.failed << ',';
        if (s.completed == 0) {
            os << "failed,,,,,,\n";
            continue;
        }
        os << fmt(s.absrel.mean) << ',' << fmt(s.absrel.std) << ',' << fmt(s.delta1.mean) << ',' << fmt(s.delta1.std)
           << ',' << fmt(s.boundary.mean) << ',' << fmt(s.boundary.std) << ',' << fmt(s.seed_variance.mean) << '\n';
    }
    return os.str();
}

std::string AblationReport::runs_csv() const {
    std::ostringstream os;
    os << "method,replicate,status,absrel,delta1,boundary,seed_variance,flagged,final_loss,core_absrel,"
          "core_top_quartile,sharpened_top_quartile,gt_top_quartile\n";
    for (const auto& r : runs) {
        os << '"' << arm_label(r.arm) << "\"," << r.replicate << ',';
        if (!r.ok) {
            os << "failed,,,,,,,,,,\n";
            continue;
        }
        os << "ok," << fmt(r.eval.absrel) << ',' << fmt(r.eval.delta1) << ',' << fmt(r.eval.boundary) << ','
           << fmt(r.eval.seed_variance) << ',' << r.eval.flagged << ',' << fmt(r.final_loss) << ',';
        if (r.core_eval) {
            os << fmt(r.core_eval->absrel) << ',' << fmt(r.core_top_quartile) << ',' << fmt(r.sharpened_top_quartile)
               << ',' << fmt(r.gt_top_quartile);
        } else {
            os << ",,,";
        }
        os << '\n';
    }
    return os.str();
}

std::string AblationReport::time_csv() const {
    std::ostringstream os;
    os << "train_steps,inference_steps,data_scale,replicate,status,absrel,delta1\n";
    for (const auto& s : sweep) {
        os << s.steps << ',' << TimeSchedule::with_default_inference(s.steps).inference_steps << ',' << fmt(s.scale)
           << ',' << s.replicate << ',';
        if (s.ok) {
            os << "ok," << fmt(s.eval.absrel) << ',' << fmt(s.eval.delta1) << '\n';
        } else {
            os << "failed,,\n";
        }
    }
    return os.str();
}

std::string AblationReport::spectrum_csv() const {
    std::vector<double> core, sharp, gt;
    int n = 0;
    for (const auto& r : runs) {
        if (!r.ok || !r.core_eval) continue;
        if (core.empty()) {
            core.assign(r.core_spectrum.size(), 0.0);
            sharp.assign(r.core_spectrum.size(), 0.0);
            gt.assign(r.core_spectrum.size(), 0.0);
        }
        for (std::size_t b = 0; b < core.size(); ++b) {
            core[b] += r.core_spectrum[b];
            sharp[b] += r.sharpened_spectrum[b];
            gt[b] += r.gt_spectrum[b];
        }
        ++n;
    }
    std::vector<SpectrumRow> rows;
    for (std::size_t b = 0; b < core.size(); ++b) rows.push_back({static_cast<int>(b), core[b] / n, sharp[b] / n, gt[b] / n});
    return rfdense::spectrum_csv(rows);
}

void write_ablation(const AblationReport& report, const AblationConfig& config, const std::filesystem::path& out) {
    write_text(out / "table.csv", report.table_csv());
    write_text(out / "runs.csv", report.runs_csv());
    write_text(out / "time.csv", report.time_csv());
    write_text(out / "spectrum.csv", report.spectrum_csv());
    write_text(out / "config.json", config.to_json().dump(2) + "\n");
}

}  // namespace rfdense
