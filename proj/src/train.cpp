#include "msfm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "msfm/dataset_io.hpp"
#include "msfm/errors.hpp"
#include "msfm/metrics.hpp"

namespace msfm {

namespace {

using nlohmann::json;

std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

int ceil_log2(int n) {
    int e = 0;
    while ((1 << e) < n) ++e;
    return e;
}

}  // namespace

// ---------------------------------------------------------------------------
// schedule
// ---------------------------------------------------------------------------

int StepSchedule::pick(int epoch, int total_epochs, Rng& rng) const {
    static constexpr int kChoices[3] = {2, 4, 8};
    if (random) return kChoices[rng.uniform_int(3)];
    const std::size_t count = phases.size();
    std::size_t idx = 0;
    if (total_epochs > 0) {
        idx = static_cast<std::size_t>(epoch) * count / static_cast<std::size_t>(total_epochs);
    }
    return phases[std::min(idx, count - 1)];
}

std::string StepSchedule::label() const {
    if (random) return "random";
    std::string s;
    for (std::size_t i = 0; i < phases.size(); ++i) {
        if (i) s += "-";
        s += std::to_string(phases[i]);
    }
    return s;
}

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

TrainConfig TrainConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    TrainConfig c;
    c.task = get_or<std::string>(j, "task", c.task);
    c.epochs = get_or<int>(j, "epochs", c.epochs);
    c.batch_size = get_or<int>(j, "batch_size", c.batch_size);
    c.learning_rate = get_or<double>(j, "learning_rate", c.learning_rate);
    c.optimizer = get_or<std::string>(j, "optimizer", c.optimizer);
    c.consistency_fraction = get_or<double>(j, "consistency_fraction", c.consistency_fraction);

    if (j.contains("step_schedule")) {
        const json& s = j.at("step_schedule");
        if (s.is_string()) {
            if (s.get<std::string>() != "random") {
                throw ConfigError("step_schedule string must be \"random\"");
            }
            c.schedule = StepSchedule{{}, true};
        } else if (s.is_array()) {
            std::vector<int> phases;
            for (const json& v : s) phases.push_back(v.get<int>());
            c.schedule = StepSchedule{std::move(phases), false};
        } else {
            throw ConfigError("step_schedule must be an array or \"random\"");
        }
    }

    if (j.contains("aga")) {
        const json& a = j.at("aga");
        c.aga.enabled = get_or<bool>(a, "enabled", c.aga.enabled);
        c.aga.c0 = get_or<double>(a, "c0", c.aga.c0);
        c.aga.ema = get_or<double>(a, "ema", c.aga.ema);
        c.aga.sensitivity = get_or<double>(a, "sensitivity", c.aga.sensitivity);
        c.aga.warm_start_steps = get_or<long>(a, "warm_start_steps", c.aga.warm_start_steps);
    }
    if (j.contains("codebook")) {
        const json& cb = j.at("codebook");
        c.codebook.enabled = get_or<bool>(cb, "enabled", c.codebook.enabled);
        c.codebook.entries = get_or<int>(cb, "entries", c.codebook.entries);
        c.codebook.seed = get_or<std::uint64_t>(cb, "seed", c.codebook.seed);
    }
    if (j.contains("seeds")) {
        const json& s = j.at("seeds");
        c.seeds.data = get_or<std::uint64_t>(s, "data", c.seeds.data);
        c.seeds.init = get_or<std::uint64_t>(s, "init", c.seeds.init);
        c.seeds.train = get_or<std::uint64_t>(s, "train", c.seeds.train);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        c.model.hidden_layers = get_or<int>(m, "hidden_layers", c.model.hidden_layers);
        c.model.hidden_width = get_or<int>(m, "hidden_width", c.model.hidden_width);
        c.model.freq_pairs = get_or<int>(m, "freq_pairs", c.model.freq_pairs);
        c.model.data_dim = get_or<int>(m, "data_dim", c.model.data_dim);
        c.model.obs_dim = get_or<int>(m, "obs_dim", c.model.obs_dim);
    }
    if (j.contains("data")) {
        const json& d = j.at("data");
        c.data.n_train = get_or<int>(d, "n_train", c.data.n_train);
        c.data.n_eval = get_or<int>(d, "n_eval", c.data.n_eval);
        c.data.episodes = get_or<int>(d, "episodes", c.data.episodes);
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path);
    return from_json(j);
}

json TrainConfig::to_json() const {
    json schedule_json;
    if (schedule.random) {
        schedule_json = "random";
    } else {
        schedule_json = schedule.phases;
    }
    return json{
        {"task", task},
        {"epochs", epochs},
        {"batch_size", batch_size},
        {"learning_rate", learning_rate},
        {"optimizer", optimizer},
        {"consistency_fraction", consistency_fraction},
        {"step_schedule", schedule_json},
        {"aga",
         {{"enabled", aga.enabled},
          {"c0", aga.c0},
          {"ema", aga.ema},
          {"sensitivity", aga.sensitivity},
          {"warm_start_steps", aga.warm_start_steps}}},
        {"codebook",
         {{"enabled", codebook.enabled},
          {"entries", codebook.entries},
          {"seed", codebook.seed}}},
        {"seeds", {{"data", seeds.data}, {"init", seeds.init}, {"train", seeds.train}}},
        {"model",
         {{"hidden_layers", model.hidden_layers},
          {"hidden_width", model.hidden_width},
          {"freq_pairs", model.freq_pairs},
          {"data_dim", model.data_dim},
          {"obs_dim", model.obs_dim}}},
        {"data",
         {{"n_train", data.n_train}, {"n_eval", data.n_eval}, {"episodes", data.episodes}}},
    };
}

void TrainConfig::validate() const {
    static const char* kTasks[] = {"two-moons", "gauss-mixture-8", "swiss-roll", "reach"};
    if (std::find(std::begin(kTasks), std::end(kTasks), task) == std::end(kTasks)) {
        throw ConfigError("unknown task '" + task + "'");
    }
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (optimizer != "adam" && optimizer != "sgd-momentum") {
        throw ConfigError("optimizer must be \"adam\" or \"sgd-momentum\"");
    }
    const double f = consistency_fraction;
    if (f != 0.0 && !(f >= 1.0 / 8.0 - 1e-12 && f <= 1.0 / 4.0 + 1e-12)) {
        throw ConfigError("consistency_fraction must be 0 or within [1/8, 1/4]");
    }
    if (!schedule.random) {
        if (schedule.phases.empty()) throw ConfigError("step_schedule must not be empty");
        for (int n : schedule.phases) {
            if (n != 2 && n != 4 && n != 8) {
                throw ConfigError("step_schedule entries must be one of {2,4,8}");
            }
        }
    }
    if (!(aga.c0 > 0.0)) throw ConfigError("aga.c0 must be positive");
    if (!(aga.ema >= 0.0 && aga.ema < 1.0)) throw ConfigError("aga.ema must be in [0,1)");
    if (!(aga.sensitivity > 0.0)) throw ConfigError("aga.sensitivity must be positive");
    if (codebook.enabled && codebook.entries < 1) {
        throw ConfigError("codebook.entries must be >= 1");
    }
    if (model.hidden_layers < 1 || model.hidden_width < 1 || model.freq_pairs < 1) {
        throw ConfigError("model dimensions must be positive");
    }
    if (data.n_train < 1 || data.n_eval < 1 || data.episodes < 1) {
        throw ConfigError("data sizes must be positive");
    }
}

void TrainConfig::override_seeds(std::uint64_t master) {
    std::uint64_t sm = master;
    seeds.data = splitmix64(sm);
    seeds.init = splitmix64(sm);
    seeds.train = splitmix64(sm);
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    if (static_cast<int>(ckpt.params.size()) != ckpt.header.at("param_count").get<int>()) {
        throw IoError("checkpoint header parameter count mismatch");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write("MSCK", 4);
    const std::uint32_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const std::string header = ckpt.header.dump();
    const std::uint32_t len = static_cast<std::uint32_t>(header.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(ckpt.params.values.data()),
              static_cast<std::streamsize>(ckpt.params.size() * 8));
    if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "MSCK", 4) != 0) throw IoError("bad magic in " + path);
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (!in || version != 1) throw IoError("unsupported checkpoint version");
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    if (!in) throw IoError("truncated checkpoint header");
    std::string header(len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError("truncated checkpoint header");

    Checkpoint ckpt;
    ckpt.header = json::parse(header, nullptr, false);
    if (ckpt.header.is_discarded()) throw IoError("corrupt checkpoint header JSON");

    const json& arch = ckpt.header.at("arch");
    ckpt.arch.data_dim = arch.at("data_dim").get<int>();
    ckpt.arch.obs_dim = arch.at("obs_dim").get<int>();
    ckpt.arch.hidden_layers = arch.at("hidden_layers").get<int>();
    ckpt.arch.hidden_width = arch.at("hidden_width").get<int>();
    ckpt.arch.freq_pairs = arch.at("freq_pairs").get<int>();

    const int count = ckpt.header.at("param_count").get<int>();
    ckpt.params = GradVector(static_cast<std::size_t>(count));
    in.read(reinterpret_cast<char*>(ckpt.params.values.data()),
            static_cast<std::streamsize>(static_cast<std::size_t>(count) * 8));
    if (!in) throw IoError("truncated checkpoint parameters");
    if (!ckpt.params.all_finite()) throw NumericError("checkpoint parameters not finite");
    return ckpt;
}

VelocityModel model_from_checkpoint(const Checkpoint& ckpt) {
    VelocityModel model = VelocityModel::init(ckpt.arch, 0);
    if (model.param_count() != static_cast<int>(ckpt.params.size())) {
        throw IoError("checkpoint parameter count does not match architecture");
    }
    model.params() = ckpt.params;
    return model;
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

namespace {

class Optimizer {
public:
    Optimizer(const std::string& kind, double lr, std::size_t n)
        : kind_(kind == "adam" ? Kind::Adam : Kind::SgdMomentum),
          lr_(lr),
          m_(n, 0.0),
          v_(kind_ == Kind::Adam ? n : 0, 0.0) {}

    void apply(GradVector& params, const GradVector& direction) {
        if (kind_ == Kind::Adam) {
            ++t_;
            const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
            const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
            const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
            for (std::size_t i = 0; i < params.size(); ++i) {
                const double g = direction[i];
                m_[i] = b1 * m_[i] + (1.0 - b1) * g;
                v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
                params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps);
            }
        } else {
            const double momentum = 0.9;
            for (std::size_t i = 0; i < params.size(); ++i) {
                m_[i] = momentum * m_[i] + direction[i];
                params[i] -= lr_ * m_[i];
            }
        }
    }

private:
    enum class Kind { Adam, SgdMomentum };
    Kind kind_;
    double lr_;
    long t_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

TrainOutput train_model(const TrainConfig& config, const Dataset& data,
                        const std::string& out_dir, const StepObserver& observer) {
    config.validate();
    if (data.count() < config.batch_size) {
        throw ConfigError("dataset smaller than one batch");
    }

    std::filesystem::create_directories(out_dir);
    const std::string ckpt_path = out_dir + "/checkpoint.msck";
    const std::string metrics_path = out_dir + "/metrics.csv";

    NetConfig arch = config.model;
    arch.data_dim = data.sample_dim();
    arch.obs_dim = data.condition_dim();
    VelocityModel model = VelocityModel::init(arch, config.seeds.init);

    std::optional<Codebook> codebook;
    if (config.codebook.enabled) {
        codebook.emplace(config.codebook.entries, arch.data_dim, config.codebook.seed);
    }

    const int steps_per_epoch = data.count() / config.batch_size;
    const long total_steps = static_cast<long>(steps_per_epoch) * config.epochs;
    const long warm_start = config.aga.warm_start_steps >= 0 ? config.aga.warm_start_steps
                                                             : total_steps / 10;
    GradientAllocator allocator({config.aga.c0, config.aga.ema, config.aga.sensitivity,
                                 warm_start, steps_per_epoch});
    Optimizer optimizer(config.optimizer, config.learning_rate,
                        static_cast<std::size_t>(model.param_count()));

    const int batch = config.batch_size;
    const int cons_count = static_cast<int>(std::lround(config.consistency_fraction * batch));
    const int fm_count = batch - cons_count;
    const int dim = arch.data_dim;
    const bool conditioned = arch.obs_dim > 0;

    Rng shuffle_rng = Rng::stream(config.seeds.train, 10);
    Rng fm_rng = Rng::stream(config.seeds.train, 11);
    Rng cons_rng = Rng::stream(config.seeds.train, 12);

    // resolved config goes into the checkpoint header; no hidden defaults
    json resolved = config.to_json();
    resolved["model"]["data_dim"] = arch.data_dim;
    resolved["model"]["obs_dim"] = arch.obs_dim;
    const std::string digest = hex64(fnv1a(resolved.dump()));

    auto make_header = [&](int epoch_done) {
        return json{{"version", 1},
                    {"arch",
                     {{"data_dim", arch.data_dim},
                      {"obs_dim", arch.obs_dim},
                      {"hidden_layers", arch.hidden_layers},
                      {"hidden_width", arch.hidden_width},
                      {"freq_pairs", arch.freq_pairs}}},
                    {"param_count", model.param_count()},
                    {"task", config.task},
                    {"epoch", epoch_done},
                    {"config", resolved},
                    {"config_digest", digest},
                    {"dataset_meta", data.metadata},
                    {"aga_state",
                     {{"c", allocator.scale_factor()},
                      {"prev_loss_fm", allocator.prev_loss_fm()},
                      {"prev_loss_mc", allocator.prev_loss_mc()},
                      {"registers_set", allocator.registers_set()},
                      {"step", allocator.steps_taken()}}}};
    };
    auto write_ckpt = [&](int epoch_done) {
        save_checkpoint(ckpt_path, Checkpoint{arch, model.params(), make_header(epoch_done)});
    };

    std::ofstream metrics(metrics_path, std::ios::trunc);
    if (!metrics) throw IoError("cannot open for writing: " + metrics_path);
    metrics << "step,epoch,loss_fm,loss_mc,alpha1,c,delta,A,B,branch,wall_time\n";

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<int> order(static_cast<std::size_t>(data.count()));
    std::iota(order.begin(), order.end(), 0);

    TrainOutput out;
    out.checkpoint_path = ckpt_path;
    out.metrics_path = metrics_path;
    long step = 0;

    // parameters proven good by a finite loss evaluated at them
    GradVector good_params = model.params();
    auto abort_diverged = [&](const std::string& what) {
        model.params() = good_params;
        write_ckpt(0);
        metrics.flush();
        throw NumericError(what + " at step " + std::to_string(step) +
                           "; last good checkpoint written to " + ckpt_path);
    };

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (int b = 0; b < steps_per_epoch; ++b, ++step) {
            const int base = b * batch;

            std::vector<FlowSample> fm_part;
            fm_part.reserve(static_cast<std::size_t>(fm_count));
            for (int r = 0; r < fm_count; ++r) {
                const int idx = order[static_cast<std::size_t>(base + r)];
                FlowSample s;
                s.x0 = Array::from(fm_rng.normal_vec(dim));
                std::span<const double> row = data.samples.row(idx);
                s.x1 = Array::from({row.begin(), row.end()});
                if (conditioned) {
                    std::span<const double> o = data.conditions.row(idx);
                    s.obs = Array::from({o.begin(), o.end()});
                }
                s.t = fm_rng.uniform();
                fm_part.push_back(std::move(s));
            }

            std::vector<ConsistencySample> cons_part;
            RolloutTargets targets;
            if (cons_count > 0) {
                const int n = config.schedule.pick(epoch, config.epochs, cons_rng);
                // dyadic step sizes with n*d <= 1, then t on multiples of d
                const int e_min = ceil_log2(n);
                const int e = e_min + cons_rng.uniform_int(7 - e_min + 1);
                const double d = std::ldexp(1.0, -e);
                const int slots = (1 << e) - n;
                cons_part.reserve(static_cast<std::size_t>(cons_count));
                for (int r = 0; r < cons_count; ++r) {
                    const int idx = order[static_cast<std::size_t>(base + fm_count + r)];
                    ConsistencySample s;
                    s.n = n;
                    s.d = d;
                    s.t = cons_rng.uniform_int(slots + 1) * d;
                    Array x0 = draw_noise(codebook ? &*codebook : nullptr, dim, cons_rng);
                    std::span<const double> row = data.samples.row(idx);
                    Array x1 = Array::from({row.begin(), row.end()});
                    s.x_t = interpolate(x0, x1, s.t).x_t;
                    if (conditioned) {
                        std::span<const double> o = data.conditions.row(idx);
                        s.obs = Array::from({o.begin(), o.end()});
                    }
                    cons_part.push_back(std::move(s));
                }
                targets = rollout_targets(frozen_field(model), cons_part);
            }

            Tape tape(model.param_count());
            LossNode fm_loss = flow_matching_loss(tape, model, fm_part);
            LossNode mc_loss;
            if (!cons_part.empty()) {
                mc_loss = consistency_loss(tape, model, cons_part, targets);
            }

            GradVector g1 = fm_loss.node >= 0
                                ? tape.backward(fm_loss.node)
                                : GradVector(static_cast<std::size_t>(model.param_count()));
            GradVector g2 = mc_loss.node >= 0
                                ? tape.backward(mc_loss.node)
                                : GradVector(static_cast<std::size_t>(model.param_count()));

            if (!std::isfinite(fm_loss.value) || !std::isfinite(mc_loss.value) ||
                !g1.all_finite() || !g2.all_finite()) {
                abort_diverged("training loss diverged");
            }
            good_params = model.params();  // this step's loss vouches for them

            GradVector direction;
            double alpha1 = 0.5;
            double c_now = allocator.scale_factor();
            std::string branch;
            GradPairStats stats = grad_pair_stats(g1, g2);
            if (config.aga.enabled) {
                CombineResult res = allocator.combine(g1, g2, fm_loss.value, mc_loss.value);
                direction = std::move(res.direction);
                alpha1 = res.alpha1;
                c_now = res.c;
                branch = to_string(res.branch);
            } else {
                // naive joint objective: gradient of L_FM + L_MC
                direction = g1;
                axpy(1.0, g2.span(), direction.span());
                branch = "disabled";
            }

            if (observer) {
                StepDebug dbg;
                dbg.step = step;
                dbg.epoch = epoch;
                dbg.loss_fm = fm_loss.value;
                dbg.loss_mc = mc_loss.value;
                dbg.model = &model;
                dbg.cons = &cons_part;
                dbg.targets = &targets;
                dbg.alpha1 = alpha1;
                dbg.c = c_now;
                dbg.cosine = stats.cosine;
                dbg.branch = branch;
                observer(dbg);
            }

            if (!direction.all_finite()) abort_diverged("update direction diverged");

            optimizer.apply(model.params(), direction);
            if (!model.params().all_finite()) abort_diverged("parameters overflowed");

            const double wall =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            char wall_buf[32];
            std::snprintf(wall_buf, sizeof wall_buf, "%.3f", wall);
            metrics << step << ',' << epoch << ',' << fmt_g17(fm_loss.value) << ','
                    << fmt_g17(mc_loss.value) << ',' << fmt_g17(alpha1) << ','
                    << fmt_g17(c_now) << ',' << fmt_g17(stats.cosine) << ','
                    << fmt_g17(stats.norm_fm) << ',' << fmt_g17(stats.norm_mc) << ',' << branch
                    << ',' << wall_buf << "\n";

            out.final_loss_fm = fm_loss.value;
            out.final_loss_mc = mc_loss.value;
        }
    }

    out.steps = step;
    write_ckpt(config.epochs);
    metrics.close();
    return out;
}

// ---------------------------------------------------------------------------
// dataset plumbing
// ---------------------------------------------------------------------------

Dataset build_dataset(const TrainConfig& config) {
    if (config.task == "reach") {
        return collect_demos(ReachEnv{}, ExpertPolicy{}, config.data.episodes,
                             config.seeds.data);
    }
    return make_dataset(config.task, config.data.n_train, config.seeds.data);
}

Dataset build_heldout(const TrainConfig& config) {
    if (config.task == "reach") throw ConfigError("held-out sets apply to unconditional tasks");
    return make_dataset(config.task, config.data.n_eval, config.seeds.data + 1);
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

PolicyFactory model_policy_factory(const VelocityModel& model, const Codebook* codebook,
                                   int nfe) {
    BatchedField field = frozen_field(model);
    const int dim = model.config().data_dim;
    return [field, codebook, dim, nfe](std::uint64_t) -> ChunkPolicy {
        return [field, codebook, dim, nfe](const Array& obs, Rng& noise_rng) -> Array {
            Array x0 = draw_noise(codebook, dim, noise_rng);
            return euler_sample(field, x0, &obs, nfe);
        };
    };
}

json EvalReport::to_json() const {
    json rows_json = json::array();
    for (const EvalRow& r : rows) {
        rows_json.push_back({{"nfe", r.nfe}, {"metric", r.metric}, {"value", r.value}});
    }
    return json{{"task", task}, {"rows", rows_json}};
}

std::string EvalReport::to_csv() const {
    std::string s = "nfe,metric,value\n";
    for (const EvalRow& r : rows) {
        s += std::to_string(r.nfe) + "," + r.metric + "," + fmt_g17(r.value) + "\n";
    }
    return s;
}

EvalReport evaluate_checkpoint(const Checkpoint& ckpt, const std::vector<int>& steps_list,
                               std::uint64_t seed, int episodes) {
    if (steps_list.empty()) throw ConfigError("eval: empty step list");
    for (int s : steps_list) {
        if (s < 1) throw ConfigError("eval: step counts must be >= 1");
    }

    VelocityModel model = model_from_checkpoint(ckpt);
    TrainConfig config = TrainConfig::from_json(ckpt.header.at("config"));
    const std::string task = ckpt.header.at("task").get<std::string>();

    std::optional<Codebook> codebook;
    if (config.codebook.enabled) {
        codebook.emplace(config.codebook.entries, model.config().data_dim,
                         config.codebook.seed);
    }
    const Codebook* cb = codebook ? &*codebook : nullptr;

    EvalReport report;
    report.task = task;

    if (task == "reach") {
        ReachEnv env;
        for (int nfe : steps_list) {
            const double rate =
                rollout_policy(env, model_policy_factory(model, cb, nfe), episodes, seed);
            report.rows.push_back({nfe, "success_rate", rate});
        }
        return report;
    }

    Dataset heldout = build_heldout(config);
    const int n = config.data.n_eval;
    const int dim = model.config().data_dim;
    BatchedField field = frozen_field(model);
    for (int nfe : steps_list) {
        // the same noise set across step counts, so rows differ only in NFE
        Rng noise = Rng::stream(seed, 3);
        Array x0 = Array::zeros(n, dim);
        for (int i = 0; i < n; ++i) {
            Array z = draw_noise(cb, dim, noise);
            std::copy(z.values().begin(), z.values().end(), x0.row(i).begin());
        }
        Array generated = euler_sample_batch(field, x0, nullptr, nfe);
        report.rows.push_back({nfe, "energy_distance", energy_distance(generated, heldout.samples)});
    }
    return report;
}

// ---------------------------------------------------------------------------
// ablation
// ---------------------------------------------------------------------------

namespace {

double eval_metric(const Checkpoint& ckpt, int nfe, std::uint64_t seed) {
    EvalReport rep = evaluate_checkpoint(ckpt, {nfe}, seed);
    return rep.rows.at(0).value;
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace

std::string AblateResult::to_csv() const {
    std::string header = "task";
    std::string row = task;
    for (const AblateCell& cell : cells) {
        header += "," + cell.label;
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4f±%.4f", cell.mean, cell.stddev);
        row += ",";
        row += buf;
    }
    return header + "\n" + row + "\n";
}

json AblateResult::to_json() const {
    json cells_json = json::array();
    for (const AblateCell& cell : cells) {
        cells_json.push_back({{"label", cell.label},
                              {"per_seed", cell.per_seed},
                              {"mean", cell.mean},
                              {"stddev", cell.stddev}});
    }
    return json{{"axis", axis}, {"task", task}, {"metric", metric}, {"cells", cells_json}};
}

AblateResult run_ablation(const TrainConfig& base, const std::string& axis,
                          const std::string& out_dir) {
    constexpr int kSeeds = 3;
    const bool reach = base.task == "reach";

    AblateResult result;
    result.axis = axis;
    result.task = base.task;

    auto seeded = [&](TrainConfig cfg, int s) {
        cfg.seeds.init = base.seeds.init + static_cast<std::uint64_t>(s);
        cfg.seeds.train = base.seeds.train + static_cast<std::uint64_t>(s);
        return cfg;
    };
    auto run_cell = [&](const TrainConfig& cfg, const std::string& label,
                        int nfe) -> AblateCell {
        AblateCell cell;
        cell.label = label;
        Dataset data = build_dataset(cfg);
        for (int s = 0; s < kSeeds; ++s) {
            TrainConfig run_cfg = seeded(cfg, s);
            const std::string dir = out_dir + "/" + axis + "/" + label + "/seed" +
                                    std::to_string(s);
            TrainOutput out = train_model(run_cfg, data, dir);
            cell.per_seed.push_back(
                eval_metric(load_checkpoint(out.checkpoint_path), nfe, run_cfg.seeds.data + 99));
        }
        cell.mean = mean_of(cell.per_seed);
        cell.stddev = stddev_of(cell.per_seed);
        return cell;
    };

    result.metric = reach ? "success_rate" : "energy_distance";

    if (axis == "schedule") {
        const std::vector<std::pair<std::string, StepSchedule>> grid = {
            {"8", {{8}, false}},      {"4", {{4}, false}},
            {"8-2", {{8, 2}, false}}, {"4-2", {{4, 2}, false}},
            {"random", {{}, true}},   {"4-8-2", {{4, 8, 2}, false}},
        };
        for (const auto& [label, schedule] : grid) {
            TrainConfig cfg = base;
            cfg.schedule = schedule;
            result.cells.push_back(run_cell(cfg, label, 1));
        }
    } else if (axis == "init-c") {
        for (double c0 : {1.0, 0.5, 0.01}) {
            TrainConfig cfg = base;
            cfg.aga.enabled = true;
            cfg.aga.c0 = c0;
            char label[16];
            std::snprintf(label, sizeof label, "%g", c0);
            result.cells.push_back(run_cell(cfg, label, 1));
        }
    } else if (axis == "aga-onoff") {
        for (bool enabled : {true, false}) {
            TrainConfig cfg = base;
            cfg.aga.enabled = enabled;
            result.cells.push_back(run_cell(cfg, enabled ? "with" : "without", 1));
        }
    } else if (axis == "nfe") {
        // one training per seed, evaluated across the step grid
        const std::vector<int> grid = {1, 3, 5, 10};
        Dataset data = build_dataset(base);
        std::vector<Checkpoint> ckpts;
        for (int s = 0; s < kSeeds; ++s) {
            TrainConfig run_cfg = seeded(base, s);
            const std::string dir = out_dir + "/nfe/seed" + std::to_string(s);
            TrainOutput out = train_model(run_cfg, data, dir);
            ckpts.push_back(load_checkpoint(out.checkpoint_path));
        }
        for (int nfe : grid) {
            AblateCell cell;
            cell.label = std::to_string(nfe);
            for (int s = 0; s < kSeeds; ++s) {
                cell.per_seed.push_back(
                    eval_metric(ckpts[static_cast<std::size_t>(s)], nfe, base.seeds.data + 99));
            }
            cell.mean = mean_of(cell.per_seed);
            cell.stddev = stddev_of(cell.per_seed);
            result.cells.push_back(cell);
        }
    } else {
        throw ConfigError("unknown ablation axis '" + axis + "'");
    }

    return result;
}

}  // namespace msfm
