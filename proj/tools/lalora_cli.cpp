// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: federated runs, privacy accounting, theory
// checks and the noise sweep.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "lalora/lalora.hpp"
#include "theory_report.hpp"

namespace {

using lalora::Json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw lalora::ConfigError("not a number: '" + item + "'");
    }
  }
  return out;
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw lalora::ConfigError("cannot write '" + path + "'");
  f << text;
}

lalora::ExperimentConfig config_or_defaults(const std::string& path) {
  if (!path.empty()) return lalora::load_config(path);
  Json j = lalora::default_config_json();
  return lalora::config_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private federated LoRA simulator"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run a federated experiment");
  std::string run_config;
  std::optional<std::uint64_t> run_seed;
  std::string run_out = "out";
  std::string run_strategy;
  bool run_sequential = false;
  run->add_option("--config", run_config, "Config file (flat JSON)")->required();
  run->add_option("--seed", run_seed, "Override the master seed");
  run->add_option("--out-dir", run_out, "Directory for rounds.csv and summary.json");
  run->add_option("--strategy", run_strategy,
                  "Override fed.strategy (dp-lora, ffa-lora, rolora, la-lora)");
  run->add_flag("--sequential", run_sequential, "Run clients one after another");

  // theory
  auto* theory = app.add_subcommand("theory", "Check the closed-form and convergence results");
  lalora::tools::TheoryOptions topt;
  std::string theory_out;
  theory->add_option("--seed", topt.seed, "Base seed");
  theory->add_option("--seeds", topt.seeds, "Seeds per randomized check");
  theory->add_option("--out", theory_out, "Write the JSON report here");

  // account
  auto* account = app.add_subcommand("account", "Epsilon spent by a training run");
  double acc_sigma = 1.0, acc_rate = 0.1, acc_delta = 1e-5;
  std::size_t acc_rounds = 50, acc_steps = 20;
  account->add_option("--sigma", acc_sigma, "Noise multiplier")->required();
  account->add_option("--rate", acc_rate, "Per-step sampling rate b");
  account->add_option("--delta", acc_delta, "Target delta");
  account->add_option("--rounds", acc_rounds, "Communication rounds T");
  account->add_option("--steps", acc_steps, "Local steps K");

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Noise multiplier for a target epsilon");
  double cal_eps = 1.0, cal_rate = 0.1, cal_delta = 1e-5;
  std::size_t cal_rounds = 50, cal_steps = 20;
  calibrate->add_option("--epsilon", cal_eps, "Target epsilon")->required();
  calibrate->add_option("--rate", cal_rate, "Per-step sampling rate b");
  calibrate->add_option("--delta", cal_delta, "Target delta");
  calibrate->add_option("--rounds", cal_rounds, "Communication rounds T");
  calibrate->add_option("--steps", cal_steps, "Local steps K");

  // sweep-noise
  auto* sweep = app.add_subcommand("sweep-noise", "Perturbation norms of LoRA vs full-weight noise");
  std::size_t sw_m = 64, sw_n = 64, sw_r = 8, sw_draws = 200;
  std::string sw_sigmas = "0.1,0.3,1,3,10";
  std::uint64_t sw_seed = 0;
  std::string sw_out;
  sweep->add_option("--m", sw_m, "Output dimension");
  sweep->add_option("--n", sw_n, "Input dimension");
  sweep->add_option("--rank", sw_r, "LoRA rank");
  sweep->add_option("--draws", sw_draws, "Monte Carlo draws per sigma");
  sweep->add_option("--sigmas", sw_sigmas, "Comma-separated noise levels");
  sweep->add_option("--seed", sw_seed, "Seed");
  sweep->add_option("--out", sw_out, "Write CSV here instead of stdout");

  // partition-stats
  auto* pstats = app.add_subcommand("partition-stats", "Client sizes and class counts of the split");
  std::string ps_config;
  std::optional<std::uint64_t> ps_seed;
  std::optional<std::size_t> ps_clients;
  std::optional<double> ps_beta;
  pstats->add_option("--config", ps_config, "Config file (defaults if omitted)");
  pstats->add_option("--seed", ps_seed, "Override the seed");
  pstats->add_option("--n-clients", ps_clients, "Override fed.n_clients");
  pstats->add_option("--beta", ps_beta, "Override fed.dirichlet_beta");

  // config dump-defaults
  auto* config = app.add_subcommand("config", "Configuration utilities");
  config->require_subcommand(1);
  auto* dump = config->add_subcommand("dump-defaults", "Print every key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) {
      lalora::ExperimentConfig cfg = lalora::load_config(run_config);
      if (run_seed) cfg.seed = *run_seed;
      if (!run_strategy.empty()) {
        try {
          cfg.plan.strategy = lalora::parse_strategy(run_strategy);
        } catch (const lalora::InvalidArgument& e) {
          throw lalora::ConfigError(e.what());
        }
      }
      if (run_sequential) cfg.plan.parallel = false;
      const lalora::ExperimentOutput out = lalora::run_configured(cfg);
      lalora::write_outputs(out, run_out);
      const auto& last = out.result.logs;
      std::cerr << fmt::format("{}: {} rounds, sigma {:.4g}", lalora::to_string(cfg.plan.strategy),
                               last.size(), out.sigma);
      if (!last.empty()) {
        std::cerr << fmt::format(", eval loss {:.4f}, eval acc {:.3f}", last.back().eval_loss,
                                 last.back().eval_acc);
      }
      std::cerr << fmt::format(" -> {}\n", run_out);
    } else if (*theory) {
      const Json rep = lalora::tools::theory_report(topt);
      emit(rep.dump(2) + "\n", theory_out);
      if (rep.at("status") != "pass") return kExitNumeric;
    } else if (*account) {
      const auto led = lalora::account_steps(acc_sigma, acc_rate, acc_delta, acc_rounds * acc_steps);
      Json j;
      j["epsilon"] = led.epsilon;
      j["delta"] = led.delta;
      j["argmin_order"] = led.argmin_order;
      j["sigma"] = acc_sigma;
      j["steps"] = led.steps_composed;
      std::cout << j.dump(2) << "\n";
    } else if (*calibrate) {
      const double sigma = lalora::calibrate_sigma(cal_eps, cal_delta, cal_rounds, cal_steps, cal_rate);
      const auto led = lalora::account_steps(sigma, cal_rate, cal_delta, cal_rounds * cal_steps);
      Json j;
      j["sigma"] = sigma;
      j["epsilon"] = led.epsilon;
      j["delta"] = led.delta;
      j["argmin_order"] = led.argmin_order;
      std::cout << j.dump(2) << "\n";
    } else if (*sweep) {
      lalora::SeededRng rng(sw_seed);
      lalora::SeededRng init = rng.derive(0, 0, 0, lalora::Purpose::kInit);
      const double sd = 1.0 / std::sqrt(static_cast<double>(sw_m));
      const auto b = lalora::gaussian_fill(sw_m, sw_r, init, sd);
      const auto a = lalora::gaussian_fill(sw_r, sw_n, init, sd);
      const auto rows = lalora::perturbation_sweep(b, a, parse_list(sw_sigmas), sw_draws, rng);
      std::string csv = "sigma,cross,linear,lora_total,full\n";
      for (const auto& r : rows) {
        csv += fmt::format("{},{},{},{},{}\n", r.sigma, r.cross, r.linear, r.lora_total, r.full);
      }
      emit(csv, sw_out);
    } else if (*pstats) {
      lalora::ExperimentConfig cfg = config_or_defaults(ps_config);
      if (ps_seed) cfg.seed = *ps_seed;
      if (ps_clients) cfg.plan.n_clients = *ps_clients;
      if (ps_beta) cfg.plan.dirichlet_beta = *ps_beta;
      const auto task = lalora::make_task(cfg);
      const auto parts = lalora::dirichlet_partition(task.train_labels(), cfg.plan.n_clients,
                                                     cfg.plan.dirichlet_beta,
                                                     lalora::SeededRng(cfg.seed));
      const std::size_t k = task.train().n_classes;
      std::string csv = "client,size";
      for (std::size_t c = 0; c < k; ++c) csv += fmt::format(",class_{}", c);
      csv += "\n";
      for (std::size_t i = 0; i < parts.size(); ++i) {
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t idx : parts[i]) ++counts[static_cast<std::size_t>(task.train_labels()[idx])];
        csv += fmt::format("{},{}", i, parts[i].size());
        for (std::size_t c : counts) csv += fmt::format(",{}", c);
        csv += "\n";
      }
      std::cout << csv;
    } else if (*dump) {
      std::cout << lalora::default_config_json().dump(2) << "\n";
    }
  } catch (const lalora::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const lalora::InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const lalora::Error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}
