#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "fedselect/baselines.hpp"
#include "fedselect/config.hpp"
#include "fedselect/data.hpp"
#include "fedselect/model.hpp"
#include "fedselect/server.hpp"

namespace fedselect {

struct Federation {
  Architecture arch;
  std::vector<ClientState> clients;
};

inline Dataset load_pool(const FLConfig& cfg) {
  if (cfg.data.source == DataSource::csv) return load_csv(cfg.data.csv_path);
  return synth_blobs(cfg.data.classes, cfg.data.input_dim, cfg.data.n_per_class, cfg.data.spread, cfg.master_seed);
}

// Builds client datasets and the shared initial model; masks follow the
// configured algorithm.
inline Federation setup_federation(const FLConfig& cfg) {
  cfg.validate();
  const Dataset pool = load_pool(cfg);
  std::vector<ClientData> parts = shard_partition(pool, cfg.partition_spec());
  Federation fed{Architecture::mlp(pool.input_dim, cfg.hidden, pool.class_count), {}};
  const ParamVector theta0 = init_params(fed.arch, cfg.master_seed);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (cfg.data.feature_shift > 0.0) {
      parts[k].train = apply_feature_shift(parts[k].train, k, cfg.data.feature_shift, cfg.master_seed);
      parts[k].test = apply_feature_shift(parts[k].test, k, cfg.data.feature_shift, cfg.master_seed);
    }
    fed.clients.push_back(ClientState{k, theta0, initial_mask(fed.arch, cfg.algorithm, k),
                                      std::make_shared<const ClientData>(std::move(parts[k]))});
  }
  return fed;
}

struct RunHistory {
  Architecture arch;
  std::vector<ClientState> initial;
  std::vector<RoundReport> rounds;
  std::vector<ClientState> final_clients;
  // Per-client accuracy of the delivered models (after fine-tuning for
  // fedavg_ft, otherwise the last round's).
  std::vector<double> final_accuracy;
  std::size_t no_eligible_warnings = 0;

  double final_mean_accuracy() const { return mean(final_accuracy); }
};

using RoundObserver = std::function<void(const RoundResult&)>;

inline RoundResult step_round(const Architecture& arch, const std::vector<ClientState>& clients, const FLConfig& cfg,
                              std::size_t round) {
  switch (cfg.algorithm.kind) {
    case AlgorithmKind::fedavg:
    case AlgorithmKind::fedavg_ft: return fedavg_round(arch, clients, cfg, round);
    case AlgorithmKind::local_only: return local_only_round(arch, clients, cfg, round);
    case AlgorithmKind::fixed_partition: return fixed_partition_round(arch, clients, cfg, round);
    default: return run_round(arch, clients, cfg, round);
  }
}

// Runs rounds [first_round, cfg.rounds) starting from `clients`.
inline RunHistory run_rounds(const Architecture& arch, std::vector<ClientState> clients, const FLConfig& cfg,
                             std::size_t first_round, const RoundObserver& observer = {}) {
  RunHistory h;
  h.arch = arch;
  h.initial = clients;
  for (std::size_t t = first_round; t < cfg.rounds; ++t) {
    RoundResult r = step_round(arch, clients, cfg, t);
    if (observer) observer(r);
    h.no_eligible_warnings += r.no_eligible_warnings;
    h.rounds.push_back(r.report);
    clients = std::move(r.clients);
  }
  if (cfg.algorithm.kind == AlgorithmKind::fedavg_ft) clients = fedavg_ft(arch, clients, cfg, *cfg.algorithm.ft_epochs);
  if (cfg.algorithm.kind == AlgorithmKind::fedavg_ft || h.rounds.empty()) {
    h.final_accuracy.assign(clients.size(), 0.0);
    parallel_for(clients.size(), cfg.threads, [&](std::size_t k) {
      h.final_accuracy[k] = evaluate_client(arch, clients[k].theta, clients[k].data->test);
    });
  } else {
    h.final_accuracy = h.rounds.back().per_client_accuracy;
  }
  h.final_clients = std::move(clients);
  return h;
}

inline RunHistory run_federation(const FLConfig& cfg, const RoundObserver& observer = {}) {
  Federation fed = setup_federation(cfg);
  return run_rounds(fed.arch, std::move(fed.clients), cfg, 0, observer);
}

}  // namespace fedselect
