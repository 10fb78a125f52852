// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lalora/accountant.hpp"
#include "lalora/diagnostics.hpp"
#include "lalora/dp_mech.hpp"
#include "lalora/lora_core.hpp"
#include "lalora/smoothing.hpp"
#include "lalora/tasks.hpp"

namespace lalora {

enum class Strategy { kDpLora, kFfaLora, kRoLora, kLaLora };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kDpLora: return "dp-lora";
    case Strategy::kFfaLora: return "ffa-lora";
    case Strategy::kRoLora: return "rolora";
    case Strategy::kLaLora: return "la-lora";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "dp-lora") return Strategy::kDpLora;
  if (s == "ffa-lora") return Strategy::kFfaLora;
  if (s == "rolora") return Strategy::kRoLora;
  if (s == "la-lora") return Strategy::kLaLora;
  throw InvalidArgument("unknown strategy '" + std::string(s) +
                        "' (dp-lora, ffa-lora, rolora, la-lora)");
}

// kProjected replaces each factor gradient with its least-squares
// projection (projected_grad_b / projected_grad_a) before the step.
enum class Optimizer { kPlain, kProjected };

enum class ClientSampling { kUniform, kPoisson };

struct FedPlan {
  std::size_t n_clients = 8;
  std::size_t rounds = 50;
  std::size_t local_steps = 20;
  double client_rate = 0.5;
  double dirichlet_beta = 0.1;
  Strategy strategy = Strategy::kLaLora;
  AlternationSchedule schedule;
  double lr_a = 0.1;
  double lr_b = 0.1;
  double lr_decay = 0.99;
  std::size_t rank = 4;
  double alpha = 8.0;
  Optimizer optimizer = Optimizer::kPlain;
  ClientSampling sampling = ClientSampling::kUniform;
  bool record_cosine = true;
  // Run sampled clients concurrently. Results do not depend on it.
  bool parallel = false;

  std::size_t clients_per_round() const {
    return static_cast<std::size_t>(
        std::floor(client_rate * static_cast<double>(n_clients)));
  }

  void validate() const {
    if (n_clients < 1) throw InvalidArgument("FedPlan: n_clients must be >= 1");
    if (!(client_rate > 0.0 && client_rate <= 1.0)) {
      throw InvalidArgument("FedPlan: client_rate must be in (0, 1]");
    }
    if (clients_per_round() < 1) {
      throw InvalidArgument("FedPlan: floor(q * N) must be >= 1");
    }
    if (!(dirichlet_beta > 0.0)) {
      throw InvalidArgument("FedPlan: dirichlet_beta must be > 0");
    }
    if (schedule.block_len < 1) {
      throw InvalidArgument("FedPlan: schedule block_len must be >= 1");
    }
    if (rank < 1) throw InvalidArgument("FedPlan: rank must be >= 1");
    if (!(lr_a >= 0.0 && lr_b >= 0.0 && lr_decay > 0.0)) {
      throw InvalidArgument("FedPlan: learning rates must be >= 0, decay > 0");
    }
  }
};

/// Learning-rate multiplier of 1-based round t.
inline double lr_factor(const FedPlan& plan, std::size_t t) {
  return std::pow(plan.lr_decay, static_cast<double>(t) - 1.0);
}

/// Factor(s) a strategy updates at local step k of round t.
inline Phase strategy_phase(const FedPlan& plan, std::size_t t, std::size_t k) {
  switch (plan.strategy) {
    case Strategy::kLaLora: return phase_for_step(plan.schedule, k);
    case Strategy::kDpLora: return Phase::kUpdateBoth;
    case Strategy::kFfaLora: return Phase::kBOnly;
    case Strategy::kRoLora:
      return t % 2 == 1 ? Phase::kUpdateB : Phase::kUpdateA;
  }
  return Phase::kUpdateBoth;
}

struct Factors {
  DenseMatrix a;
  DenseMatrix b;
};

/// Non-iid split: per class, Dirichlet(beta) proportions over clients and
/// largest-remainder rounding of the class count. Redraws up to 100 times
/// until every client is nonempty, then moves single samples from the
/// largest sets into the empty ones. Each returned set is sorted.
inline std::vector<std::vector<std::size_t>> dirichlet_partition(
    const std::vector<int>& labels, std::size_t n_clients, double beta,
    const SeededRng& rng) {
  if (n_clients < 1) throw InvalidArgument("dirichlet_partition: no clients");
  if (!(beta > 0.0)) throw InvalidArgument("dirichlet_partition: beta must be > 0");
  if (labels.size() < n_clients) {
    throw InvalidArgument(fmt::format(
        "dirichlet_partition: {} samples cannot fill {} clients", labels.size(),
        n_clients));
  }
  int max_label = -1;
  for (int y : labels) {
    if (y < 0) throw InvalidArgument("dirichlet_partition: negative label");
    max_label = std::max(max_label, y);
  }
  std::vector<std::vector<std::size_t>> by_class(
      static_cast<std::size_t>(max_label + 1));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }

  std::vector<std::vector<std::size_t>> sets;
  for (std::size_t attempt = 0; attempt < 100; ++attempt) {
    SeededRng r = rng.derive(0, attempt, 0, Purpose::kPartition);
    sets.assign(n_clients, {});
    for (const auto& members : by_class) {
      if (members.empty()) continue;
      const auto order = shuffled(members, r);
      std::vector<double> logg(n_clients);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n_clients; ++i) {
        logg[i] = r.log_gamma_variate(beta);
        mx = std::max(mx, logg[i]);
      }
      double sum = 0.0;
      std::vector<double> p(n_clients);
      for (std::size_t i = 0; i < n_clients; ++i) {
        p[i] = std::exp(logg[i] - mx);
        sum += p[i];
      }
      const double n = static_cast<double>(order.size());
      std::vector<std::size_t> count(n_clients);
      std::vector<std::pair<double, std::size_t>> rem(n_clients);
      std::size_t assigned = 0;
      for (std::size_t i = 0; i < n_clients; ++i) {
        const double share = p[i] / sum * n;
        count[i] = static_cast<std::size_t>(std::floor(share));
        rem[i] = {share - std::floor(share), i};
        assigned += count[i];
      }
      std::stable_sort(rem.begin(), rem.end(), [](const auto& x, const auto& y) {
        return x.first > y.first;
      });
      for (std::size_t j = 0; assigned < order.size(); ++j, ++assigned) {
        ++count[rem[j % n_clients].second];
      }
      std::size_t pos = 0;
      for (std::size_t i = 0; i < n_clients; ++i) {
        for (std::size_t c = 0; c < count[i]; ++c) sets[i].push_back(order[pos++]);
      }
    }
    const bool all_nonempty = std::all_of(
        sets.begin(), sets.end(), [](const auto& s) { return !s.empty(); });
    if (all_nonempty) break;
  }
  for (auto& s : sets) {
    if (!s.empty()) continue;
    auto largest = std::max_element(
        sets.begin(), sets.end(),
        [](const auto& x, const auto& y) { return x.size() < y.size(); });
    if (largest->size() < 2) {
      throw InvalidArgument("dirichlet_partition: cannot make every client nonempty");
    }
    s.push_back(largest->back());
    largest->pop_back();
  }
  for (auto& s : sets) std::sort(s.begin(), s.end());
  return sets;
}

struct LocalResult {
  Factors factors;
  bool ok = true;
  std::string error;
  std::vector<double> cosines;
};

/// Everything a client needs besides its data slice and the globals.
struct LocalContext {
  const FedPlan* plan = nullptr;
  const PrivacySpec* privacy = nullptr;
  const SmoothingKernel* kernel = nullptr;  // null: filter off
  SeededRng root{0};
};

namespace detail {

inline void finite_or_throw(const DenseMatrix& m, const char* what) {
  if (!all_finite(m)) throw NumericFailure(std::string(what) + " is not finite");
}

}  // namespace detail

/// K local steps of one client starting from the global factors.
///
/// Step k of round t: sample floor(b R_i) indices of the client's slice
/// without replacement, compute per-sample factor gradients for the
/// factor(s) of this step, clip and privatize each factor, smooth the noisy
/// gradient if a kernel is set, and descend with the round's learning rate.
/// Any non-finite value aborts the client and is reported in the result.
template <class Task>
LocalResult local_update(const Task& task, std::span<const std::size_t> slice,
                         const Factors& globals, const LocalContext& ctx,
                         std::size_t round, std::uint64_t client_id) {
  const FedPlan& plan = *ctx.plan;
  LocalResult res;
  res.factors = globals;
  if (plan.local_steps == 0) return res;
  if (slice.empty()) {
    res.ok = false;
    res.error = "empty data slice";
    return res;
  }
  DenseMatrix& a = res.factors.a;
  DenseMatrix& b = res.factors.b;
  const DenseMatrix& w0 = task.base_weight();
  const double s = plan.alpha / static_cast<double>(a.rows());

  PrivacySpec spec = *ctx.privacy;
  spec.local_dataset_size = slice.size();
  const std::size_t batch = std::clamp<std::size_t>(spec.batch_size(), 1, slice.size());
  const std::vector<std::size_t> pool(slice.begin(), slice.end());
  const double lr_mult = lr_factor(plan, round);

  try {
    for (std::size_t k = 1; k <= plan.local_steps; ++k) {
      const Phase phase = strategy_phase(plan, round, k);
      const bool do_b = phase != Phase::kUpdateA;
      const bool do_a = phase == Phase::kUpdateA || phase == Phase::kUpdateBoth;

      SeededRng brng = ctx.root.derive(client_id, round, k, Purpose::kBatch);
      const auto idx = sample_without_replacement(pool, batch, brng);
      const DenseMatrix w = effective_weight(w0, b, a, s);

      if (plan.record_cosine) {
        const auto lg = task.batch_loss_and_grad(w, idx);
        const FactorGrads fg = factor_grads(lg.grad, b, a, s);
        if (auto c = induced_grad_cosine(b, a, fg.grad_a, fg.grad_b, s)) {
          res.cosines.push_back(*c);
        }
      }

      std::vector<DenseMatrix> ga;
      std::vector<DenseMatrix> gb;
      const DenseMatrix bt = transpose(b);
      const DenseMatrix at = transpose(a);
      for (std::size_t i : idx) {
        const DenseMatrix g = task.sample_grad(w, i);
        if (do_a) ga.push_back(s * matmul(bt, g));
        if (do_b) gb.push_back(s * matmul(g, at));
      }

      DenseMatrix step_a;
      DenseMatrix step_b;
      if (do_b) {
        SeededRng nrng = ctx.root.derive(client_id, round, k, Purpose::kNoiseB);
        step_b = privatize(gb, spec, nrng);
        if (ctx.kernel) step_b = smooth_grad_b(step_b, *ctx.kernel);
        if (plan.optimizer == Optimizer::kProjected) {
          step_b = projected_grad_b(step_b, a, s);
        }
      }
      if (do_a) {
        SeededRng nrng = ctx.root.derive(client_id, round, k, Purpose::kNoiseA);
        step_a = privatize(ga, spec, nrng);
        if (ctx.kernel) step_a = smooth_grad_a(step_a, *ctx.kernel);
        if (plan.optimizer == Optimizer::kProjected) {
          step_a = projected_grad_a(step_a, b, s);
        }
      }
      if (do_b) {
        axpy(-plan.lr_b * lr_mult, step_b, b);
        detail::finite_or_throw(b, "B");
      }
      if (do_a) {
        axpy(-plan.lr_a * lr_mult, step_a, a);
        detail::finite_or_throw(a, "A");
      }
    }
  } catch (const NumericFailure& e) {
    res.ok = false;
    res.error = e.what();
  } catch (const RankDeficient& e) {
    res.ok = false;
    res.error = e.what();
  }
  return res;
}

struct AggregateResult {
  Factors factors;
  std::size_t used = 0;
  std::vector<std::size_t> dropped;  // positions in the upload list
};

/// Entrywise mean of the uploads, summed in list order. Failed or
/// non-finite uploads are dropped and the rest renormalized; an upload list
/// with no usable entry is a NumericFailure.
inline AggregateResult aggregate(const std::vector<std::optional<Factors>>& uploads) {
  if (uploads.empty()) throw InvalidArgument("aggregate: no uploads");
  AggregateResult out;
  for (std::size_t i = 0; i < uploads.size(); ++i) {
    const auto& u = uploads[i];
    if (!u || !all_finite(u->a) || !all_finite(u->b)) {
      out.dropped.push_back(i);
      continue;
    }
    if (out.used == 0) {
      out.factors = *u;
    } else {
      out.factors.a += u->a;
      out.factors.b += u->b;
    }
    ++out.used;
  }
  if (out.used == 0) throw NumericFailure("aggregate: every client upload failed");
  const double inv = 1.0 / static_cast<double>(out.used);
  out.factors.a = inv * out.factors.a;
  out.factors.b = inv * out.factors.b;
  return out;
}

inline AggregateResult aggregate(const std::vector<Factors>& uploads) {
  std::vector<std::optional<Factors>> u(uploads.begin(), uploads.end());
  return aggregate(u);
}

struct RoundLog {
  std::size_t round = 0;
  double train_loss = 0.0;
  double eval_loss = 0.0;
  double eval_acc = 0.0;
  double grad_cosine_mean = std::numeric_limits<double>::quiet_NaN();
  double delta_a_norm = 0.0;  // ||A^t - A^{t-1}||_F
  double delta_b_norm = 0.0;
  double eps_spent = std::numeric_limits<double>::infinity();
  std::size_t clients_used = 0;
  std::size_t clients_dropped = 0;
};

struct ExperimentResult {
  std::vector<RoundLog> logs;
  Factors initial;
  Factors final_factors;
  double scale = 0.0;
  std::vector<std::vector<std::size_t>> partition;
  std::vector<double> cosines;  // every recorded step, in round/client order
};

/// Mutable state of a running experiment.
template <class Task>
class FedRunner {
 public:
  FedRunner(const Task& task, FedPlan plan, PrivacySpec privacy,
            std::optional<SmoothingKernel> kernel, std::uint64_t seed)
      : task_(task),
        plan_(std::move(plan)),
        privacy_(std::move(privacy)),
        kernel_(std::move(kernel)),
        root_(seed) {
    plan_.validate();
    if (!(privacy_.clip_c > 0.0) || !(privacy_.sigma >= 0.0) ||
        !(privacy_.batch_fraction > 0.0 && privacy_.batch_fraction <= 1.0)) {
      throw InvalidArgument("FedRunner: invalid privacy parameters");
    }
    SeededRng init = root_.derive(0, 0, 0, Purpose::kInit);
    const LoraAdapter ad = make_adapter(task_.base_weight(), plan_.rank, plan_.alpha, init);
    state_ = {ad.a, ad.b};
    result_.initial = state_;
    result_.scale = ad.scale();
    result_.partition = dirichlet_partition(task_.train_labels(), plan_.n_clients,
                                            plan_.dirichlet_beta, root_);
    if (privacy_.is_private()) {
      accountant_.emplace(privacy_.sigma, privacy_.batch_fraction, privacy_.delta);
    }
  }

  const Factors& factors() const { return state_; }
  const ExperimentResult& result() const { return result_; }
  std::size_t round() const { return t_; }

  // Clients taking part in round t, ascending.
  std::vector<std::size_t> sample_clients(std::size_t t) const {
    SeededRng r = root_.derive(0, t, 0, Purpose::kClientSample);
    std::vector<std::size_t> chosen;
    if (plan_.sampling == ClientSampling::kUniform) {
      chosen = sample_without_replacement(all_indices(plan_.n_clients),
                                          plan_.clients_per_round(), r);
    } else {
      for (std::size_t i = 0; i < plan_.n_clients; ++i) {
        if (r.uniform() < plan_.client_rate) chosen.push_back(i);
      }
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
  }

  RoundLog run_round() {
    const std::size_t t = ++t_;
    const auto chosen = sample_clients(t);
    LocalContext ctx{&plan_, &privacy_, kernel_ ? &*kernel_ : nullptr, root_};

    std::vector<LocalResult> locals(chosen.size());
    auto run_one = [&](std::size_t j) {
      const auto& slice = result_.partition[chosen[j]];
      return local_update(task_, slice, state_, ctx, t, chosen[j]);
    };
    if (plan_.parallel && chosen.size() > 1) {
      std::vector<std::future<LocalResult>> fut;
      for (std::size_t j = 0; j < chosen.size(); ++j) {
        fut.push_back(std::async(std::launch::async, run_one, j));
      }
      for (std::size_t j = 0; j < chosen.size(); ++j) locals[j] = fut[j].get();
    } else {
      for (std::size_t j = 0; j < chosen.size(); ++j) locals[j] = run_one(j);
    }

    RoundLog log;
    log.round = t;
    double cos_sum = 0.0;
    std::size_t cos_n = 0;
    std::vector<std::optional<Factors>> uploads;
    for (auto& l : locals) {
      for (double c : l.cosines) {
        cos_sum += c;
        ++cos_n;
        result_.cosines.push_back(c);
      }
      uploads.push_back(l.ok ? std::optional<Factors>(std::move(l.factors))
                             : std::nullopt);
    }
    if (cos_n > 0) log.grad_cosine_mean = cos_sum / static_cast<double>(cos_n);

    const Factors prev = state_;
    if (!uploads.empty()) {
      AggregateResult agg = aggregate(uploads);
      state_ = std::move(agg.factors);
      log.clients_used = agg.used;
      log.clients_dropped = agg.dropped.size();
    }
    log.delta_a_norm = frobenius_norm(state_.a - prev.a);
    log.delta_b_norm = frobenius_norm(state_.b - prev.b);

    const DenseMatrix w = effective_weight(task_.base_weight(), state_.b, state_.a,
                                           result_.scale);
    log.train_loss = task_.evaluate_train(w).loss;
    const EvalMetrics em = task_.evaluate(w);
    log.eval_loss = em.loss;
    log.eval_acc = em.accuracy;
    if (accountant_) log.eps_spent = accountant_->epsilon_after(t * plan_.local_steps);
    result_.logs.push_back(log);
    result_.final_factors = state_;
    return log;
  }

  ExperimentResult run() {
    result_.final_factors = state_;
    while (t_ < plan_.rounds) run_round();
    return result_;
  }

 private:
  const Task& task_;
  FedPlan plan_;
  PrivacySpec privacy_;
  std::optional<SmoothingKernel> kernel_;
  SeededRng root_;
  Factors state_;
  ExperimentResult result_;
  std::optional<RunningAccountant> accountant_;
  std::size_t t_ = 0;
};

/// Runs all rounds of a plan. The returned factors give the final model
/// W^T = W0 + s B^T A^T.
template <class Task>
ExperimentResult run_experiment(const Task& task, const FedPlan& plan,
                                const PrivacySpec& privacy,
                                const std::optional<SmoothingKernel>& kernel,
                                std::uint64_t seed) {
  FedRunner<Task> runner(task, plan, privacy, kernel, seed);
  return runner.run();
}

}  // namespace lalora
