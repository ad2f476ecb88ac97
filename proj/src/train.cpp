#include "rfdense/train.hpp"

#include <cmath>

#include "rfdense/error.hpp"
#include "rfdense/numerics/random.hpp"

namespace rfdense {

using json = nlohmann::json;

BackboneConfig TrainConfig::backbone() const {
    BackboneConfig b;
    b.latent_channels = 3;
    b.conditioned = variant.conditioned();
    b.blocks = network.blocks;
    b.hidden = network.hidden;
    b.time_dim = network.time_dim;
    b.lcm = network.lcm;
    b.pack_unpack = network.pack_unpack;
    return b;
}

void TrainConfig::validate() const {
    variant.validate();
    TimeSchedule::make(variant.steps, inference_steps);
    backbone().validate();
    if (!(adam.learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.epsilon > 0.0)) {
        throw ConfigError("invalid Adam hyperparameters");
    }
    if (resolution <= 0 || resolution % (codec == CodecKind::avgpool2 ? 4 : 2) != 0) {
        throw ConfigError("resolution must be positive and divisible by the codec and pack factors");
    }
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (steps < 0) throw ConfigError("step count must be non-negative");
    if (!(data_fraction > 0.0 && data_fraction <= 1.0)) throw ConfigError("data_fraction must lie in (0, 1]");
}

json TrainConfig::to_json() const {
    return json{{"variant", {{"kind", to_string(variant.kind)}, {"steps", variant.steps}}},
                {"inference_steps", inference_steps},
                {"task", to_string(task)},
                {"codec", to_string(codec)},
                {"resolution", resolution},
                {"network",
                 {{"blocks", network.blocks},
                  {"hidden", network.hidden},
                  {"time_dim", network.time_dim},
                  {"lcm", network.lcm},
                  {"pack_unpack", network.pack_unpack}}},
                {"optimizer",
                 {{"name", "adam"},
                  {"learning_rate", adam.learning_rate},
                  {"beta1", adam.beta1},
                  {"beta2", adam.beta2},
                  {"epsilon", adam.epsilon}}},
                {"batch_size", batch_size},
                {"steps", steps},
                {"seeds", {{"params", seeds.params}, {"data", seeds.data}, {"noise", seeds.noise}}},
                {"dataset", dataset},
                {"data_fraction", data_fraction},
                {"log_every", log_every},
                {"checkpoint_every", checkpoint_every}};
}

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& item : j.items()) {
        bool found = false;
        for (std::string_view k : known) found = found || item.key() == k;
        if (!found) throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    reject_unknown_keys(j,
                        {"variant", "inference_steps", "task", "codec", "resolution", "network", "optimizer",
                         "batch_size", "steps", "seeds", "dataset", "data_fraction", "log_every",
                         "checkpoint_every"},
                        "training config");
    try {
        if (j.contains("variant")) {
            const auto& v = j.at("variant");
            c.variant.kind = flow_kind_from_string(v.at("kind"));
            c.variant.steps = v.value("steps", c.variant.kind == FlowKind::sharpener ? 10 : 1);
        }
        c.inference_steps = j.value("inference_steps", c.variant.steps > 50 ? 50 : c.variant.steps);
        c.task = task_from_string(j.value("task", std::string("depth")));
        c.codec = codec_kind_from_string(j.value("codec", std::string("avgpool2")));
        c.resolution = j.value("resolution", c.resolution);
        if (j.contains("network")) {
            const auto& n = j.at("network");
            reject_unknown_keys(n, {"blocks", "hidden", "time_dim", "lcm", "pack_unpack"}, "training config network");
            c.network.blocks = n.value("blocks", c.network.blocks);
            c.network.hidden = n.value("hidden", c.network.hidden);
            c.network.time_dim = n.value("time_dim", c.network.time_dim);
            c.network.lcm = n.value("lcm", c.network.lcm);
            c.network.pack_unpack = n.value("pack_unpack", c.network.pack_unpack);
        }
        if (j.contains("optimizer")) {
            const auto& o = j.at("optimizer");
            reject_unknown_keys(o, {"name", "learning_rate", "beta1", "beta2", "epsilon"}, "training config optimizer");
            if (o.value("name", std::string("adam")) != "adam") throw ConfigError("only the adam optimizer is supported");
            c.adam.learning_rate = o.value("learning_rate", c.adam.learning_rate);
            c.adam.beta1 = o.value("beta1", c.adam.beta1);
            c.adam.beta2 = o.value("beta2", c.adam.beta2);
            c.adam.epsilon = o.value("epsilon", c.adam.epsilon);
        }
        c.batch_size = j.value("batch_size", c.batch_size);
        c.steps = j.value("steps", c.steps);
        if (!j.contains("seeds")) throw ConfigError("training config must list explicit seeds {params, data, noise}");
        const auto& s = j.at("seeds");
        c.seeds.params = s.at("params");
        c.seeds.data = s.at("data");
        c.seeds.noise = s.at("noise");
        c.dataset = j.value("dataset", c.dataset);
        c.data_fraction = j.value("data_fraction", c.data_fraction);
        c.log_every = j.value("log_every", c.log_every);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("training config: ") + e.what());
    }
    c.validate();
    return c;
}

void adam_update(VelocityNet& net, AdamState& state, const AdamConfig& adam) {
    if (state.m.size() != net.params.size()) {
        state.m.clear();
        state.v.clear();
        for (const auto& p : net.params) {
            state.m.emplace_back(p.tensor.size(), 0.0);
            state.v.emplace_back(p.tensor.size(), 0.0);
        }
    }
    state.step += 1;
    const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < net.params.size(); ++k) {
        Tensor& p = net.params[k].tensor;
        if (p.grad.size() != p.data.size()) continue;
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double g = p.grad[i];
            m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * g;
            v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * g * g;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p.data[i] -= adam.learning_rate * mhat / (std::sqrt(vhat) + adam.epsilon);
        }
    }
}

Archive to_archive(const Checkpoint& ckpt) {
    Archive a;
    a.metadata = json{{"kind", "checkpoint"},
                      {"config", ckpt.config.to_json()},
                      {"step", ckpt.step},
                      {"last_loss", ckpt.last_loss},
                      {"param_seed", ckpt.net.seed},
                      {"optimizer_step", ckpt.optimizer.step}};
    for (const auto& p : ckpt.net.params) a.tensors.push_back({"param/" + p.name, Tensor(p.tensor.shape, p.tensor.data)});
    for (std::size_t k = 0; k < ckpt.optimizer.m.size(); ++k) {
        const auto& p = ckpt.net.params.at(k);
        a.tensors.push_back({"adam.m/" + p.name, Tensor(p.tensor.shape, ckpt.optimizer.m[k])});
        a.tensors.push_back({"adam.v/" + p.name, Tensor(p.tensor.shape, ckpt.optimizer.v[k])});
    }
    return a;
}

Checkpoint checkpoint_from_archive(const Archive& a) {
    if (a.metadata.value("kind", std::string()) != "checkpoint") throw FormatError("archive is not a checkpoint");
    Checkpoint c;
    try {
        c.config = TrainConfig::from_json(a.metadata.at("config"));
        c.step = a.metadata.at("step");
        c.last_loss = a.metadata.at("last_loss");
        c.net = init_params(a.metadata.at("param_seed"), c.config.backbone());
        c.optimizer.step = a.metadata.at("optimizer_step");
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint metadata: ") + e.what());
    }
    for (auto& p : c.net.params) {
        const Tensor& stored = a.tensor("param/" + p.name);
        if (stored.shape != p.tensor.shape) throw FormatError("checkpoint tensor shape mismatch for " + p.name);
        p.tensor.data = stored.data;
    }
    if (c.optimizer.step > 0) {
        for (const auto& p : c.net.params) {
            c.optimizer.m.push_back(a.tensor("adam.m/" + p.name).data);
            c.optimizer.v.push_back(a.tensor("adam.v/" + p.name).data);
        }
    }
    return c;
}

std::string save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    return save_archive(path, to_archive(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_archive(load_archive(path)); }

std::vector<TrainingPair> make_pairs(const std::vector<TaskLatents>& latents) {
    std::vector<TrainingPair> out;
    out.reserve(latents.size());
    for (const auto& l : latents) out.push_back({l.image, l.annotation});
    return out;
}

std::vector<TrainingPair> make_pairs(const std::vector<CoarsePair>& pairs) {
    std::vector<TrainingPair> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back({p.coarse, p.fine});
    return out;
}

Checkpoint initial_checkpoint(const TrainConfig& config) {
    config.validate();
    Checkpoint c;
    c.config = config;
    c.net = init_params(config.seeds.params, config.backbone());
    return c;
}

namespace {

/// Epoch-wise shuffled visiting order, recomputed on demand from the seed.
class DataOrder {
public:
    DataOrder(std::uint64_t seed, std::size_t n) : seed_(seed), n_(n) {}

    std::size_t at(std::uint64_t position) {
        const std::uint64_t epoch = position / n_;
        if (epoch != epoch_ || perm_.empty()) {
            epoch_ = epoch;
            perm_.resize(n_);
            for (std::size_t i = 0; i < n_; ++i) perm_[i] = i;
            Rng rng(mix_seed(seed_, epoch));
            for (std::size_t i = n_ - 1; i > 0; --i) std::swap(perm_[i], perm_[rng.index(i + 1)]);
        }
        return perm_[position % n_];
    }

private:
    std::uint64_t seed_;
    std::size_t n_;
    std::uint64_t epoch_ = 0;
    std::vector<std::size_t> perm_;
};

}  // namespace

Checkpoint train_pairs(const TrainConfig& config, const std::vector<TrainingPair>& data, const TrainHooks& hooks,
                       std::optional<Checkpoint> start) {
    config.validate();
    if (data.empty()) throw DataError("training set is empty");
    Checkpoint ckpt = start ? std::move(*start) : initial_checkpoint(config);
    ckpt.config = config;
    if (ckpt.net.config != config.backbone()) throw ConfigError("resume checkpoint has a different network layout");

    const TimeSchedule schedule = config.schedule();
    DataOrder order(config.seeds.data, data.size());
    for (std::int64_t step = ckpt.step; step < config.steps; ++step) {
        ckpt.net.zero_grad();
        Graph g;
        std::vector<Var> losses;
        std::uint64_t batch_seed = 0;
        for (int b = 0; b < config.batch_size; ++b) {
            const std::uint64_t position = static_cast<std::uint64_t>(step) * config.batch_size + b;
            const TrainingPair& pair = data[order.at(position)];
            batch_seed = mix_seed(config.seeds.noise, position);
            Rng rng(batch_seed);
            const FlowSample sample = make_training_sample(config.variant, schedule, pair.source, pair.target, rng);
            Var zt = g.constant(sample.z_t.to_tensor());
            std::optional<Var> cond;
            if (sample.conditioning) cond = g.constant(sample.conditioning->to_tensor());
            Var out = forward(g, ckpt.net, zt, cond, sample.t);
            losses.push_back(flow_loss(g, config.variant, out, sample));
        }
        Var loss = mean_of(g, losses);
        const double value = g.value(loss).data[0];
        if (!std::isfinite(value)) {
            throw NumericError("non-finite loss at step " + std::to_string(step) + " (last batch seed " +
                               std::to_string(batch_seed) + ")");
        }
        g.backward(loss);
        adam_update(ckpt.net, ckpt.optimizer, config.adam);
        ckpt.step = step + 1;
        ckpt.last_loss = value;
        if (hooks.on_log && config.log_every > 0 && (ckpt.step % config.log_every == 0 || ckpt.step == config.steps)) {
            hooks.on_log(ckpt.step, value);
        }
        if (hooks.on_checkpoint && config.checkpoint_every > 0 && ckpt.step % config.checkpoint_every == 0) {
            hooks.on_checkpoint(ckpt);
        }
        if (hooks.stop_below && value < *hooks.stop_below) break;
    }
    ckpt.net.zero_grad();
    for (auto& p : ckpt.net.params) p.tensor.grad.clear();
    return ckpt;
}

LatentMap predict(const Checkpoint& ckpt, const LatentMap& image_latent, Rng* noise) {
    return infer_annotation(ckpt.net, ckpt.config.variant, ckpt.config.schedule(), image_latent, noise);
}

std::vector<CoarsePair> make_coarse_pairs(const Checkpoint& core, const std::vector<TaskLatents>& dataset) {
    if (core.step <= 0) throw ConfigError("core predictor checkpoint is untrained (step 0)");
    if (core.config.variant.kind == FlowKind::sharpener) throw ConfigError("coarse pairs need a core-stage checkpoint");
    return make_coarse_pairs([&](std::size_t, const LatentMap& zx) { return predict(core, zx); }, dataset);
}

}  // namespace rfdense
