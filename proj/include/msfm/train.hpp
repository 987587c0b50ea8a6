#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "msfm/aga.hpp"
#include "msfm/flow.hpp"
#include "msfm/tasks.hpp"
#include "msfm/velocity_net.hpp"

namespace msfm {

/// Step-count schedule across training: either a fixed list of phases that
/// split the epochs evenly (e.g. [4,8,2]) or a uniform draw from {2,4,8} per
/// optimizer step.
struct StepSchedule {
    std::vector<int> phases;
    bool random = false;

    int pick(int epoch, int total_epochs, Rng& rng) const;
    std::string label() const;
};

struct AgaSettings {
    bool enabled = true;
    double c0 = 1.0;
    double ema = 0.9;
    double sensitivity = 0.1;
    long warm_start_steps = -1;  // -1: first 10% of total steps
};

struct CodebookSettings {
    bool enabled = true;
    int entries = 1024;
    std::uint64_t seed = 7;
};

struct SeedSettings {
    std::uint64_t data = 1;
    std::uint64_t init = 2;
    std::uint64_t train = 3;
};

struct DataSettings {
    int n_train = 4096;
    int n_eval = 4096;
    int episodes = 150;  // reach demos
};

struct TrainConfig {
    std::string task = "gauss-mixture-8";
    int epochs = 300;
    int batch_size = 256;
    double learning_rate = 1e-4;
    std::string optimizer = "adam";  // or "sgd-momentum"
    double consistency_fraction = 0.25;  // 0 disables; otherwise within [1/8, 1/4]
    StepSchedule schedule{{4}, false};
    AgaSettings aga;
    CodebookSettings codebook;
    SeedSettings seeds;
    NetConfig model{2, 0, 3, 64, 4};  // data/obs dims resolved from the dataset
    DataSettings data;

    static TrainConfig from_json(const nlohmann::json& j);
    static TrainConfig from_file(const std::string& path);
    nlohmann::json to_json() const;
    void validate() const;
    /// Derive all three seeds from one master seed.
    void override_seeds(std::uint64_t master);
};

struct Checkpoint {
    NetConfig arch;
    GradVector params;
    nlohmann::json header;
};

/// Binary checkpoint format:
///   magic "MSCK" | u32 version=1 | u32 header_len | UTF-8 JSON header
///   param_count little-endian f64 parameters
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

VelocityModel model_from_checkpoint(const Checkpoint& ckpt);

/// Per-step view handed to an observer before the update is applied. The
/// model still holds the pre-step parameters (the rollout snapshot).
struct StepDebug {
    long step = 0;
    int epoch = 0;
    double loss_fm = 0.0;
    double loss_mc = 0.0;
    const VelocityModel* model = nullptr;
    const std::vector<ConsistencySample>* cons = nullptr;
    const RolloutTargets* targets = nullptr;
    double alpha1 = 0.5;
    double c = 0.0;
    double cosine = 0.0;
    std::string branch;
};
using StepObserver = std::function<void(const StepDebug&)>;

struct TrainOutput {
    std::string checkpoint_path;
    std::string metrics_path;
    long steps = 0;
    double final_loss_fm = 0.0;
    double final_loss_mc = 0.0;
};

/// The full training loop: per step the batch is split by the consistency
/// fraction, the flow-matching partition regresses empirical velocities at
/// d = 0, the consistency partition regresses multi-step averaged targets
/// rolled out from a frozen parameter snapshot, the two gradients are taken
/// separately and composed by the allocator, and the optimizer applies the
/// result. Deterministic given the config seeds. On a non-finite loss or
/// direction the last good parameters are checkpointed and NumericError is
/// thrown.
TrainOutput train_model(const TrainConfig& config, const Dataset& data,
                        const std::string& out_dir, const StepObserver& observer = nullptr);

/// Dataset generation dispatch: toy generators or reach demonstrations.
Dataset build_dataset(const TrainConfig& config);
/// Held-out set for two-sample evaluation (unconditional tasks).
Dataset build_heldout(const TrainConfig& config);

/// Chunk policy backed by a trained model sampling at a fixed step count.
PolicyFactory model_policy_factory(const VelocityModel& model, const Codebook* codebook,
                                   int nfe);

struct EvalRow {
    int nfe = 1;
    std::string metric;
    double value = 0.0;
};

struct EvalReport {
    std::string task;
    std::vector<EvalRow> rows;
    nlohmann::json to_json() const;
    std::string to_csv() const;
};

/// Unconditional tasks: energy distance between generated and held-out samples
/// per step count. Reach: success rate over seeded episodes per step count.
EvalReport evaluate_checkpoint(const Checkpoint& ckpt, const std::vector<int>& steps_list,
                               std::uint64_t seed, int episodes = 100);

struct AblateCell {
    std::string label;
    std::vector<double> per_seed;
    double mean = 0.0;
    double stddev = 0.0;
};

struct AblateResult {
    std::string axis;
    std::string task;
    std::string metric;
    std::vector<AblateCell> cells;
    std::string to_csv() const;
    nlohmann::json to_json() const;
};

/// Axes: "schedule", "init-c", "nfe", "aga-onoff". Each grid point runs three
/// seeds and reports mean and standard deviation of the task metric.
AblateResult run_ablation(const TrainConfig& base, const std::string& axis,
                          const std::string& out_dir);

}  // namespace msfm
