// Copyright 2026 The lsmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Command-line front end for the study pipeline. Every subcommand reads its
// inputs from and writes its artifacts into one output directory, so the
// stages compose:
//
//   lsmpc generate-data
//   lsmpc train --kind gp && lsmpc train --kind bnn
//   lsmpc open-loop
//   lsmpc closed-loop --controller smpc-gp
//   lsmpc benchmark-timing
//   lsmpc plot
//
// Failures print a single-line JSON object on stderr and exit nonzero.

#include <cstdint>
#include <exception>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lsmpc/config.hpp"
#include "lsmpc/experiments.hpp"
#include "lsmpc/manifest.hpp"
#include "lsmpc/stats.hpp"

namespace {

using lsmpc::ExperimentConfig;

std::string join(const std::string& dir, const std::string& name) {
  return dir + "/" + name;
}

// Rethrows dataset/model load failures with a hint about the missing stage.
template <class Fn>
auto with_hint(Fn fn, const std::string& hint) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string(e.what()) + " (" + hint + ")");
  }
}

lsmpc::Dataset load_dataset_checked(const std::string& out_dir) {
  return with_hint([&] { return lsmpc::load_dataset(out_dir); },
                   "run generate-data first");
}

std::unique_ptr<lsmpc::ResidualModel> load_model_checked(
    const std::string& out_dir, lsmpc::ModelKind kind) {
  const std::string path =
      join(out_dir, "model_" + lsmpc::to_string(kind) + ".json");
  return with_hint(
      [&]() -> std::unique_ptr<lsmpc::ResidualModel> {
        if (kind == lsmpc::ModelKind::gp) {
          return lsmpc::GpResidualModel::load(path);
        }
        return lsmpc::BnnResidualModel::load(path);
      },
      "run train --kind " + lsmpc::to_string(kind) + " first");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Hybrid-model MPC study: data generation, GP and BNN residual "
      "training, open- and closed-loop experiments, solve-time benchmark"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  app.add_option("--config", config_path,
                 "JSON config; defaults are used when omitted")
      ->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "artifact directory (default: out)");
  CLI::Option* seed_opt = app.add_option(
      "--seed", seed,
      "master seed; overrides the data, training and benchmark seeds");

  CLI::App* cmd_gen =
      app.add_subcommand("generate-data", "run the noisy data episodes");

  std::string train_kind = "gp";
  CLI::App* cmd_train =
      app.add_subcommand("train", "fit a residual model on the dataset");
  cmd_train->add_option("--kind", train_kind, "gp or bnn")
      ->check(CLI::IsMember({"gp", "bnn"}));

  CLI::App* cmd_open =
      app.add_subcommand("open-loop", "flow-step prediction comparison");

  std::string controller = "smpc-gp";
  std::vector<std::uint64_t> cl_seeds;
  CLI::App* cmd_closed =
      app.add_subcommand("closed-loop", "survival-band episodes");
  cmd_closed
      ->add_option("--controller", controller,
                   "nominal, hybrid, smpc-gp or smpc-bnn")
      ->check(CLI::IsMember({"nominal", "hybrid", "smpc-gp", "smpc-bnn"}));
  cmd_closed->add_option("--seeds", cl_seeds, "episode seeds, comma separated")
      ->delimiter(',');

  CLI::App* cmd_bench =
      app.add_subcommand("benchmark-timing", "GP size vs network solve time");

  CLI::App* cmd_plot =
      app.add_subcommand("plot", "render SVG figures from result CSVs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    nlohmann::json err{{"error", e.what()}, {"command", "parse"}};
    std::cerr << err.dump() << std::endl;
    return 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    ExperimentConfig config = config_path.empty()
                                  ? ExperimentConfig::defaults()
                                  : ExperimentConfig::load(config_path);
    if (*seed_opt) {
      config.data.base_seed = seed;
      config.benchmark.seed = lsmpc::Rng::derive(seed, 2);
      config.gp.seed = lsmpc::Rng::derive(seed, 3);
      config.bnn.seed = lsmpc::Rng::derive(seed, 4);
    }
    if (!cl_seeds.empty()) config.closed_loop.seeds = cl_seeds;
    config.validate();

    std::string slug = command;
    if (cmd_train->parsed()) slug += "-" + train_kind;
    if (cmd_closed->parsed()) slug += "-" + controller;
    lsmpc::RunManifest manifest(slug, config.hash(),
                                *seed_opt ? seed : config.data.base_seed);

    if (cmd_gen->parsed()) {
      const lsmpc::DataGenResult r =
          lsmpc::run_generate_data(config, out_dir, &manifest);
      std::cout << "generate-data: " << r.episodes.size() << " episodes, "
                << r.dataset.train_count() << " train / "
                << r.dataset.test_count() << " test points -> " << out_dir
                << "\n";
    } else if (cmd_train->parsed()) {
      const lsmpc::ModelKind kind = lsmpc::parse_model_kind(train_kind);
      const lsmpc::Dataset dataset = load_dataset_checked(out_dir);
      const lsmpc::TrainResult r =
          lsmpc::run_train(config, dataset, kind, out_dir, &manifest);
      std::cout << "train " << train_kind << ": " << r.train_points_used
                << " points, test rmse (" << r.metrics.rmse[0] << ", "
                << r.metrics.rmse[1] << "), miscalibration ("
                << r.metrics.miscalibration[0] << ", "
                << r.metrics.miscalibration[1] << ")\n";
    } else if (cmd_open->parsed()) {
      const auto gp = load_model_checked(out_dir, lsmpc::ModelKind::gp);
      const auto bnn = load_model_checked(out_dir, lsmpc::ModelKind::bnn);
      const lsmpc::OpenLoopResult r =
          lsmpc::run_open_loop(config, *gp, *bnn, out_dir, &manifest);
      std::cout << "open-loop substrate error: nominal "
                << r.nominal_error[1] << ", gp " << r.gp_error[1] << ", bnn "
                << r.bnn_error[1] << " mg/L\n";
    } else if (cmd_closed->parsed()) {
      const lsmpc::ControllerKind kind =
          lsmpc::parse_controller_kind(controller);
      std::unique_ptr<lsmpc::ResidualModel> model;
      if (kind == lsmpc::ControllerKind::smpc_bnn) {
        model = load_model_checked(out_dir, lsmpc::ModelKind::bnn);
      } else if (kind != lsmpc::ControllerKind::nominal) {
        model = load_model_checked(out_dir, lsmpc::ModelKind::gp);
      }
      const lsmpc::ClosedLoopResult r = lsmpc::run_closed_loop(
          config, kind, model.get(), out_dir, &manifest);
      std::cout << "closed-loop " << controller << ": "
                << r.total_violations() << "/" << r.total_post_steps()
                << " band violations (" << 100.0 * r.violation_fraction()
                << "%) over " << r.per_seed.size() << " seeds\n";
    } else if (cmd_bench->parsed()) {
      const lsmpc::Dataset dataset = load_dataset_checked(out_dir);
      const lsmpc::BenchmarkResult r =
          lsmpc::run_benchmark(config, dataset, out_dir, &manifest);
      std::cout << "benchmark: bnn " << r.bnn_total_seconds
                << " s/episode, crossover at GP size " << r.crossover_size
                << "\n";
    } else if (cmd_plot->parsed()) {
      const std::vector<std::string> figures =
          lsmpc::render_plots(config, out_dir, &manifest);
      std::cout << "plot: " << figures.size() << " figures -> " << out_dir
                << "\n";
    }

    manifest.save(join(out_dir, "manifest_" + slug + ".json"));
  } catch (const std::exception& e) {
    nlohmann::json err{{"error", e.what()}, {"command", command}};
    std::cerr << err.dump() << std::endl;
    return 1;
  }
  return 0;
}
