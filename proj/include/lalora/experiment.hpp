// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"
#include "lalora/accountant.hpp"
#include "lalora/diagnostics.hpp"
#include "lalora/fedsim.hpp"
#include "lalora/smoothing.hpp"
#include "lalora/tasks.hpp"

namespace lalora {

using Json = nlohmann::json;

/// Every experiment setting. Serialized as one flat JSON object with dotted
/// keys; see default_config_json() for the full key set.
struct ExperimentConfig {
  std::uint64_t seed = 0;

  std::string task_kind = "blobs";  // blobs | csv
  BlobTaskOptions blobs;
  std::string csv_path;

  FedPlan plan;
  // privacy.sigma, when set, takes precedence over privacy.epsilon_target.
  PrivacySpec privacy = [] {
    PrivacySpec p;
    p.epsilon_target = 1.0;
    return p;
  }();
  bool private_mode = true;

  FilterKind filter = FilterKind::kBinomial5;
  double filter_sigma_s = 1.0;
  std::size_t filter_radius = 2;

  bool hessian = true;
  std::size_t hessian_iters = 200;
};

namespace detail {

enum class KeyType { kUint, kReal, kOptReal, kString, kBool };

struct KeySpec {
  const char* key;
  KeyType type;
};

inline const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys = {
      {"seed", KeyType::kUint},
      {"task.kind", KeyType::kString},
      {"task.n_classes", KeyType::kUint},
      {"task.dim", KeyType::kUint},
      {"task.per_class", KeyType::kUint},
      {"task.separation", KeyType::kReal},
      {"task.shift", KeyType::kReal},
      {"task.pretrain_per_class", KeyType::kUint},
      {"task.pretrain_steps", KeyType::kUint},
      {"task.pretrain_lr", KeyType::kReal},
      {"task.csv_path", KeyType::kString},
      {"fed.strategy", KeyType::kString},
      {"fed.n_clients", KeyType::kUint},
      {"fed.rounds", KeyType::kUint},
      {"fed.local_steps", KeyType::kUint},
      {"fed.client_rate", KeyType::kReal},
      {"fed.dirichlet_beta", KeyType::kReal},
      {"fed.lr_a", KeyType::kReal},
      {"fed.lr_b", KeyType::kReal},
      {"fed.lr_decay", KeyType::kReal},
      {"fed.schedule.block_len", KeyType::kUint},
      {"fed.schedule.first", KeyType::kString},
      {"fed.optimizer", KeyType::kString},
      {"fed.client_sampling", KeyType::kString},
      {"fed.parallel", KeyType::kBool},
      {"fed.record_cosine", KeyType::kBool},
      {"lora.rank", KeyType::kUint},
      {"lora.alpha", KeyType::kReal},
      {"privacy.mode", KeyType::kString},
      {"privacy.clip", KeyType::kReal},
      {"privacy.sigma", KeyType::kOptReal},
      {"privacy.epsilon_target", KeyType::kOptReal},
      {"privacy.delta", KeyType::kReal},
      {"privacy.batch_fraction", KeyType::kReal},
      {"filter.kind", KeyType::kString},
      {"filter.sigma_s", KeyType::kReal},
      {"filter.radius", KeyType::kUint},
      {"diagnostics.hessian", KeyType::kBool},
      {"diagnostics.hessian_iters", KeyType::kUint},
  };
  return keys;
}

inline const char* type_name(KeyType t) {
  switch (t) {
    case KeyType::kUint: return "a non-negative integer";
    case KeyType::kReal: return "a number";
    case KeyType::kOptReal: return "a number or null";
    case KeyType::kString: return "a string";
    case KeyType::kBool: return "a boolean";
  }
  return "?";
}

inline bool type_ok(KeyType t, const Json& v) {
  switch (t) {
    case KeyType::kUint:
      return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    case KeyType::kReal: return v.is_number();
    case KeyType::kOptReal: return v.is_number() || v.is_null();
    case KeyType::kString: return v.is_string();
    case KeyType::kBool: return v.is_boolean();
  }
  return false;
}

}  // namespace detail

inline Json config_to_json(const ExperimentConfig& c) {
  Json j;
  const auto opt = [](const std::optional<double>& v) {
    return v ? Json(*v) : Json(nullptr);
  };
  j["seed"] = c.seed;
  j["task.kind"] = c.task_kind;
  j["task.n_classes"] = c.blobs.n_classes;
  j["task.dim"] = c.blobs.dim;
  j["task.per_class"] = c.blobs.per_class;
  j["task.separation"] = c.blobs.separation;
  j["task.shift"] = c.blobs.shift;
  j["task.pretrain_per_class"] = c.blobs.pretrain_per_class;
  j["task.pretrain_steps"] = c.blobs.pretrain_steps;
  j["task.pretrain_lr"] = c.blobs.pretrain_lr;
  j["task.csv_path"] = c.csv_path;
  j["fed.strategy"] = std::string(to_string(c.plan.strategy));
  j["fed.n_clients"] = c.plan.n_clients;
  j["fed.rounds"] = c.plan.rounds;
  j["fed.local_steps"] = c.plan.local_steps;
  j["fed.client_rate"] = c.plan.client_rate;
  j["fed.dirichlet_beta"] = c.plan.dirichlet_beta;
  j["fed.lr_a"] = c.plan.lr_a;
  j["fed.lr_b"] = c.plan.lr_b;
  j["fed.lr_decay"] = c.plan.lr_decay;
  j["fed.schedule.block_len"] = c.plan.schedule.block_len;
  j["fed.schedule.first"] = c.plan.schedule.first_factor == Factor::kB ? "b" : "a";
  j["fed.optimizer"] = c.plan.optimizer == Optimizer::kPlain ? "plain" : "projected";
  j["fed.client_sampling"] =
      c.plan.sampling == ClientSampling::kUniform ? "uniform" : "poisson";
  j["fed.parallel"] = c.plan.parallel;
  j["fed.record_cosine"] = c.plan.record_cosine;
  j["lora.rank"] = c.plan.rank;
  j["lora.alpha"] = c.plan.alpha;
  j["privacy.mode"] = c.private_mode ? "private" : "none";
  j["privacy.clip"] = c.privacy.clip_c;
  j["privacy.sigma"] =
      opt(c.privacy.sigma > 0.0 ? std::optional<double>(c.privacy.sigma) : std::nullopt);
  j["privacy.epsilon_target"] = opt(c.privacy.epsilon_target);
  j["privacy.delta"] = c.privacy.delta;
  j["privacy.batch_fraction"] = c.privacy.batch_fraction;
  j["filter.kind"] = std::string(to_string(c.filter));
  j["filter.sigma_s"] = c.filter_sigma_s;
  j["filter.radius"] = c.filter_radius;
  j["diagnostics.hessian"] = c.hessian;
  j["diagnostics.hessian_iters"] = c.hessian_iters;
  // Reals are always written as floating point so a reload keeps the type.
  for (const auto& ks : detail::config_keys()) {
    if ((ks.type == detail::KeyType::kReal || ks.type == detail::KeyType::kOptReal) &&
        j[ks.key].is_number()) {
      j[ks.key] = j[ks.key].get<double>();
    }
  }
  return j;
}

inline Json default_config_json() { return config_to_json(ExperimentConfig{}); }

/// Builds a config from a flat JSON object. Unknown keys, wrong types and
/// a missing `fed.strategy` are ConfigErrors naming the key.
inline ExperimentConfig config_from_json(const Json& in) {
  if (!in.is_object()) throw ConfigError("config: top level must be a JSON object");
  std::set<std::string> known;
  for (const auto& ks : detail::config_keys()) known.insert(ks.key);
  for (auto it = in.begin(); it != in.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError("config: unknown key '" + it.key() + "'");
  }
  for (const char* req : {"fed.strategy"}) {
    if (!in.contains(req)) throw ConfigError(std::string("config: missing required key '") + req + "'");
  }
  Json m = default_config_json();
  for (const auto& ks : detail::config_keys()) {
    if (!in.contains(ks.key)) continue;
    const Json& v = in.at(ks.key);
    if (!detail::type_ok(ks.type, v)) {
      throw ConfigError(fmt::format("config: key '{}' must be {}", ks.key,
                                    detail::type_name(ks.type)));
    }
    m[ks.key] = v;
  }

  auto u = [&](const char* k) { return m.at(k).get<std::size_t>(); };
  auto r = [&](const char* k) { return m.at(k).get<double>(); };
  auto s = [&](const char* k) { return m.at(k).get<std::string>(); };
  auto b = [&](const char* k) { return m.at(k).get<bool>(); };
  auto wrap = [](const char* k, auto&& fn) {
    try {
      return fn();
    } catch (const InvalidArgument& e) {
      throw ConfigError(fmt::format("config: key '{}': {}", k, e.what()));
    }
  };

  ExperimentConfig c;
  c.seed = m.at("seed").get<std::uint64_t>();
  c.task_kind = s("task.kind");
  if (c.task_kind != "blobs" && c.task_kind != "csv") {
    throw ConfigError("config: key 'task.kind' must be 'blobs' or 'csv'");
  }
  c.blobs.n_classes = u("task.n_classes");
  c.blobs.dim = u("task.dim");
  c.blobs.per_class = u("task.per_class");
  c.blobs.separation = r("task.separation");
  c.blobs.shift = r("task.shift");
  c.blobs.pretrain_per_class = u("task.pretrain_per_class");
  c.blobs.pretrain_steps = u("task.pretrain_steps");
  c.blobs.pretrain_lr = r("task.pretrain_lr");
  c.csv_path = s("task.csv_path");
  if (c.task_kind == "csv" && c.csv_path.empty()) {
    throw ConfigError("config: missing required key 'task.csv_path' for task.kind = csv");
  }

  c.plan.strategy = wrap("fed.strategy", [&] { return parse_strategy(s("fed.strategy")); });
  c.plan.n_clients = u("fed.n_clients");
  c.plan.rounds = u("fed.rounds");
  c.plan.local_steps = u("fed.local_steps");
  c.plan.client_rate = r("fed.client_rate");
  c.plan.dirichlet_beta = r("fed.dirichlet_beta");
  c.plan.lr_a = r("fed.lr_a");
  c.plan.lr_b = r("fed.lr_b");
  c.plan.lr_decay = r("fed.lr_decay");
  c.plan.schedule.block_len = u("fed.schedule.block_len");
  const std::string first = s("fed.schedule.first");
  if (first != "a" && first != "b") {
    throw ConfigError("config: key 'fed.schedule.first' must be 'a' or 'b'");
  }
  c.plan.schedule.first_factor = first == "b" ? Factor::kB : Factor::kA;
  const std::string opt = s("fed.optimizer");
  if (opt != "plain" && opt != "projected") {
    throw ConfigError("config: key 'fed.optimizer' must be 'plain' or 'projected'");
  }
  c.plan.optimizer = opt == "plain" ? Optimizer::kPlain : Optimizer::kProjected;
  const std::string smp = s("fed.client_sampling");
  if (smp != "uniform" && smp != "poisson") {
    throw ConfigError("config: key 'fed.client_sampling' must be 'uniform' or 'poisson'");
  }
  c.plan.sampling = smp == "uniform" ? ClientSampling::kUniform : ClientSampling::kPoisson;
  c.plan.parallel = b("fed.parallel");
  c.plan.record_cosine = b("fed.record_cosine");
  c.plan.rank = u("lora.rank");
  c.plan.alpha = r("lora.alpha");
  wrap("fed", [&] { c.plan.validate(); return 0; });

  const std::string mode = s("privacy.mode");
  if (mode != "private" && mode != "none") {
    throw ConfigError("config: key 'privacy.mode' must be 'private' or 'none'");
  }
  c.private_mode = mode == "private";
  c.privacy.clip_c = r("privacy.clip");
  c.privacy.delta = r("privacy.delta");
  c.privacy.batch_fraction = r("privacy.batch_fraction");
  const Json& sig = m.at("privacy.sigma");
  const Json& eps = m.at("privacy.epsilon_target");
  if (!eps.is_null()) c.privacy.epsilon_target = eps.get<double>();
  c.privacy.sigma = sig.is_null() ? 0.0 : sig.get<double>();
  if (c.private_mode) {
    if (sig.is_null() && eps.is_null()) {
      throw ConfigError(
          "config: private mode needs 'privacy.sigma' or 'privacy.epsilon_target'");
    }
    if (!sig.is_null() && !(c.privacy.sigma > 0.0)) {
      throw ConfigError("config: key 'privacy.sigma' must be > 0 in private mode");
    }
  } else if (!sig.is_null() && c.privacy.sigma != 0.0) {
    throw ConfigError("config: key 'privacy.sigma' must be null or 0 when privacy.mode = none");
  }
  if (!(c.privacy.clip_c > 0.0)) throw ConfigError("config: key 'privacy.clip' must be > 0");
  if (!(c.privacy.delta > 0.0 && c.privacy.delta < 1.0)) {
    throw ConfigError("config: key 'privacy.delta' must be in (0, 1)");
  }
  if (!(c.privacy.batch_fraction > 0.0 && c.privacy.batch_fraction <= 1.0)) {
    throw ConfigError("config: key 'privacy.batch_fraction' must be in (0, 1]");
  }
  if (c.privacy.epsilon_target && !(*c.privacy.epsilon_target > 0.0)) {
    throw ConfigError("config: key 'privacy.epsilon_target' must be > 0");
  }

  c.filter = wrap("filter.kind", [&] { return parse_filter_kind(s("filter.kind")); });
  c.filter_sigma_s = r("filter.sigma_s");
  c.filter_radius = u("filter.radius");
  if (c.filter == FilterKind::kGaussian) {
    wrap("filter", [&] { return gaussian_kernel(c.filter_sigma_s, c.filter_radius); });
  }
  c.hessian = b("diagnostics.hessian");
  c.hessian_iters = u("diagnostics.hessian_iters");
  return c;
}

/// Reads a config file. A summary.json written by a previous run is also
/// accepted; its embedded "config" object is used.
inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(fmt::format("config '{}': {}", path, e.what()));
  }
  if (j.is_object() && j.contains("config") && j.at("config").is_object()) {
    j = j.at("config");
  }
  return config_from_json(j);
}

/// Result of a configured run: the simulator output plus derived metrics.
struct ExperimentOutput {
  ExperimentConfig config;
  ExperimentResult result;
  double sigma = 0.0;
  bool sigma_calibrated = false;
  std::optional<PrivacyLedger> ledger;
  std::optional<double> cosine_late_mean;
  std::optional<PowerIterationResult> hessian;
};

/// The variable part of a blob or CSV task for a config.
inline ClassificationTask make_task(const ExperimentConfig& c) {
  if (c.task_kind == "csv") {
    const Dataset all = load_csv_dataset(c.csv_path);
    SeededRng rng(c.seed, {0, 0, 0, Purpose::kData});
    SplitDataset split = split_dataset(all, rng);
    // Base weight: the zero matrix. A CSV task has no pretraining split.
    return ClassificationTask(std::move(split), DenseMatrix(all.n_classes, all.dim()));
  }
  return make_blob_task(c.blobs, c.seed);
}

inline ExperimentOutput run_configured(const ExperimentConfig& c) {
  ExperimentOutput out;
  out.config = c;
  const ClassificationTask task = make_task(c);
  PrivacySpec priv = c.privacy;
  if (c.private_mode) {
    if (!(priv.sigma > 0.0)) {
      priv.sigma = calibrate_sigma(*priv.epsilon_target, priv.delta, c.plan.rounds,
                                   c.plan.local_steps, priv.batch_fraction);
      out.sigma_calibrated = true;
    }
    out.ledger = account_training(priv, c.plan.rounds, c.plan.local_steps);
  } else {
    priv.sigma = 0.0;
  }
  out.sigma = priv.sigma;
  const auto kernel = make_kernel(c.filter, c.filter_sigma_s, c.filter_radius);
  out.result = run_experiment(task, c.plan, priv, kernel, c.seed);

  CosineTrace trace;
  for (double v : out.result.cosines) trace.add(v);
  out.cosine_late_mean = trace.late_window_mean();
  if (c.hessian) {
    out.hessian = lora_hessian_max_eig(task, out.result.final_factors.a,
                                       out.result.final_factors.b, out.result.scale,
                                       c.hessian_iters);
  }
  return out;
}

namespace detail {

// Shortest round-trip text; fmt prints nan and inf for the special values.
inline std::string num(double v) { return fmt::format("{}", v); }

inline Json num_or_null(double v) {
  return std::isfinite(v) ? Json(v) : Json(nullptr);
}

}  // namespace detail

inline std::string rounds_csv(const ExperimentOutput& out) {
  std::string s =
      "round,train_loss,eval_loss,eval_acc,grad_cosine_mean,eps_spent,sigma,strategy\n";
  const std::string strat(to_string(out.config.plan.strategy));
  for (const auto& l : out.result.logs) {
    s += fmt::format("{},{},{},{},{},{},{},{}\n", l.round, detail::num(l.train_loss),
                     detail::num(l.eval_loss), detail::num(l.eval_acc),
                     detail::num(l.grad_cosine_mean), detail::num(l.eps_spent),
                     detail::num(out.sigma), strat);
  }
  return s;
}

inline Json summary_json(const ExperimentOutput& out) {
  Json j;
  j["config"] = config_to_json(out.config);
  j["rng"] = std::string(SeededRng::kAlgorithm);
  Json fin;
  if (!out.result.logs.empty()) {
    const RoundLog& l = out.result.logs.back();
    fin["train_loss"] = detail::num_or_null(l.train_loss);
    fin["eval_loss"] = detail::num_or_null(l.eval_loss);
    fin["eval_acc"] = detail::num_or_null(l.eval_acc);
  }
  fin["rounds_completed"] = out.result.logs.size();
  fin["grad_cosine_late_mean"] =
      out.cosine_late_mean ? Json(*out.cosine_late_mean) : Json(nullptr);
  if (out.hessian) {
    fin["hessian_max_eig"] = detail::num_or_null(out.hessian->eigenvalue);
    fin["hessian_converged"] = out.hessian->converged;
  }
  j["final"] = fin;

  Json priv;
  priv["sigma"] = out.sigma;
  priv["sigma_calibrated"] = out.sigma_calibrated;
  if (out.ledger) {
    const PrivacyLedger& led = *out.ledger;
    priv["epsilon"] = led.epsilon;
    priv["delta"] = led.delta;
    priv["argmin_order"] = led.argmin_order;
    priv["steps_composed"] = led.steps_composed;
    priv["sampling_rate"] = led.rate;
    const ServerView sv = server_view(led.epsilon, led.delta, out.config.plan.n_clients,
                                      out.config.plan.client_rate);
    priv["server_epsilon"] = sv.epsilon;
    priv["server_delta"] = sv.delta;
    priv["rdp_orders"] = led.curve.orders;
    priv["rdp_values"] = led.curve.values;
  } else {
    priv["epsilon"] = nullptr;
  }
  j["privacy"] = priv;

  std::vector<std::size_t> sizes;
  for (const auto& s : out.result.partition) sizes.push_back(s.size());
  j["partition_sizes"] = sizes;
  return j;
}

inline void write_outputs(const ExperimentOutput& out, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream f(std::filesystem::path(dir) / name, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + name + "' in '" + dir + "'");
    f << body;
  };
  write("rounds.csv", rounds_csv(out));
  write("summary.json", summary_json(out).dump(2) + "\n");
}

}  // namespace lalora
