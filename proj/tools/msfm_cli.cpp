#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "msfm/dataset_io.hpp"
#include "msfm/errors.hpp"
#include "msfm/metrics.hpp"
#include "msfm/train.hpp"

namespace {

using msfm::TrainConfig;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

std::vector<int> parse_steps(const std::string& list) {
    std::vector<int> steps;
    std::string token;
    for (char c : list + ",") {
        if (c == ',') {
            if (!token.empty()) {
                steps.push_back(std::stoi(token));
                token.clear();
            }
        } else {
            token += c;
        }
    }
    if (steps.empty()) throw msfm::ConfigError("--steps: empty list");
    return steps;
}

TrainConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
    TrainConfig cfg = TrainConfig::from_file(path);
    if (seed) cfg.override_seeds(*seed);
    return cfg;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw msfm::IoError("cannot open for writing: " + path);
    out << text;
}

int cmd_gen_data(const TrainConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    msfm::Dataset data = msfm::build_dataset(cfg);
    const std::string path = out_dir + "/" + cfg.task + ".msfm";
    msfm::save_dataset(path, data);
    std::cout << "wrote " << data.count() << " samples to " << path << "\n";
    return kExitOk;
}

int cmd_train(const TrainConfig& cfg, const std::string& dataset_path,
              const std::string& out_dir) {
    msfm::Dataset data =
        dataset_path.empty() ? msfm::build_dataset(cfg) : msfm::load_dataset(dataset_path);
    msfm::TrainOutput out = msfm::train_model(cfg, data, out_dir);
    std::cout << "trained " << out.steps << " steps; checkpoint " << out.checkpoint_path
              << "; metrics " << out.metrics_path << "\n";
    return kExitOk;
}

int cmd_sample(const std::string& ckpt_path, int steps, int count, std::uint64_t seed,
               const std::string& out_dir, bool svg) {
    if (steps < 1) throw msfm::ConfigError("--steps must be >= 1 for sampling");
    if (count < 1) throw msfm::ConfigError("--count must be >= 1");
    msfm::Checkpoint ckpt = msfm::load_checkpoint(ckpt_path);
    msfm::VelocityModel model = msfm::model_from_checkpoint(ckpt);
    TrainConfig cfg = TrainConfig::from_json(ckpt.header.at("config"));
    if (model.config().obs_dim > 0) {
        throw msfm::ConfigError("sample: checkpoint is conditional; use eval instead");
    }

    std::optional<msfm::Codebook> codebook;
    if (cfg.codebook.enabled) {
        codebook.emplace(cfg.codebook.entries, model.config().data_dim, cfg.codebook.seed);
    }

    msfm::Rng noise = msfm::Rng::stream(seed, 3);
    const int dim = model.config().data_dim;
    msfm::Array x0 = msfm::Array::zeros(count, dim);
    for (int i = 0; i < count; ++i) {
        msfm::Array z = msfm::draw_noise(codebook ? &*codebook : nullptr, dim, noise);
        std::copy(z.values().begin(), z.values().end(), x0.row(i).begin());
    }
    msfm::Array samples =
        msfm::euler_sample_batch(msfm::frozen_field(model), x0, nullptr, steps);

    std::filesystem::create_directories(out_dir);
    msfm::Dataset out;
    out.samples = samples;
    out.metadata = {{"name", cfg.task + "-samples"},
                    {"seed", seed},
                    {"generator", {{"nfe", steps}, {"count", count}, {"checkpoint", ckpt_path}}}};
    const std::string path = out_dir + "/samples.msfm";
    msfm::save_dataset(path, out);
    std::cout << "wrote " << count << " samples (NFE " << steps << ") to " << path << "\n";
    if (svg && dim == 2) {
        msfm::write_scatter_svg(out_dir + "/samples.svg", samples);
        std::cout << "wrote scatter to " << out_dir << "/samples.svg\n";
    }
    return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& task,
             const std::vector<int>& steps, std::uint64_t seed, int episodes,
             const std::string& out_dir) {
    msfm::Checkpoint ckpt = msfm::load_checkpoint(ckpt_path);
    const std::string ckpt_task = ckpt.header.at("task").get<std::string>();
    if (!task.empty() && task != ckpt_task) {
        throw msfm::ConfigError("task '" + task + "' does not match checkpoint task '" +
                                ckpt_task + "'");
    }
    msfm::EvalReport report = msfm::evaluate_checkpoint(ckpt, steps, seed, episodes);
    std::filesystem::create_directories(out_dir);
    write_text(out_dir + "/eval.json", report.to_json().dump(2) + "\n");
    write_text(out_dir + "/eval.csv", report.to_csv());
    std::cout << report.to_csv();
    std::cout << "report written to " << out_dir << "/eval.{json,csv}\n";
    return kExitOk;
}

int cmd_ablate(const TrainConfig& cfg, const std::string& axis, const std::string& out_dir) {
    msfm::AblateResult result = msfm::run_ablation(cfg, axis, out_dir);
    std::filesystem::create_directories(out_dir);
    write_text(out_dir + "/ablate-" + axis + ".csv", result.to_csv());
    write_text(out_dir + "/ablate-" + axis + ".json", result.to_json().dump(2) + "\n");
    std::cout << result.to_csv();
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-step consistency shortcut flow matching"};
    app.require_subcommand(1);

    std::string config_path, dataset_path, out_dir = "out", ckpt_path, steps_list = "1";
    std::string task, axis = "nfe";
    std::optional<std::uint64_t> seed_override;
    std::uint64_t eval_seed = 42;
    int sample_count = 4096;
    int episodes = 100;
    bool svg = false;

    CLI::App* gen = app.add_subcommand("gen-data", "generate a dataset file");
    gen->add_option("--config", config_path, "config JSON")->required();
    gen->add_option("--seed", seed_override, "override all config seeds");
    gen->add_option("--out", out_dir, "output directory");

    CLI::App* train = app.add_subcommand("train", "train a velocity model");
    train->add_option("--config", config_path, "config JSON")->required();
    train->add_option("--data", dataset_path, "dataset file (generated when omitted)");
    train->add_option("--seed", seed_override, "override all config seeds");
    train->add_option("--out", out_dir, "output directory");

    CLI::App* sample = app.add_subcommand("sample", "sample from a checkpoint");
    sample->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    sample->add_option("--steps", steps_list, "sampler step count");
    sample->add_option("--count", sample_count, "number of samples");
    sample->add_option("--seed", eval_seed, "noise seed");
    sample->add_option("--out", out_dir, "output directory");
    sample->add_flag("--svg", svg, "also write a scatter SVG (2-D tasks)");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint across step counts");
    eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    eval->add_option("--task", task, "expected task (checked against the checkpoint)");
    eval->add_option("--steps", steps_list, "comma-separated step counts");
    eval->add_option("--seed", eval_seed, "evaluation seed");
    eval->add_option("--episodes", episodes, "episodes per step count (reach)");
    eval->add_option("--out", out_dir, "output directory");

    CLI::App* ablate = app.add_subcommand("ablate", "run an ablation grid (3 seeds per cell)");
    ablate->add_option("--config", config_path, "base config JSON")->required();
    ablate->add_option("--axis", axis, "schedule | init-c | nfe | aga-onoff")->required();
    ablate->add_option("--seed", seed_override, "override all config seeds");
    ablate->add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(load_config(config_path, seed_override), out_dir);
        if (train->parsed()) {
            return cmd_train(load_config(config_path, seed_override), dataset_path, out_dir);
        }
        if (sample->parsed()) {
            return cmd_sample(ckpt_path, std::stoi(steps_list), sample_count, eval_seed,
                              out_dir, svg);
        }
        if (eval->parsed()) {
            return cmd_eval(ckpt_path, task, parse_steps(steps_list), eval_seed, episodes,
                            out_dir);
        }
        if (ablate->parsed()) {
            return cmd_ablate(load_config(config_path, seed_override), axis, out_dir);
        }
    } catch (const msfm::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
