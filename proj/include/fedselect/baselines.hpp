#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "fedselect/config.hpp"
#include "fedselect/mask.hpp"
#include "fedselect/model.hpp"
#include "fedselect/seed.hpp"
#include "fedselect/server.hpp"

namespace fedselect {

namespace detail {

// Plain SGD over whole epochs, independent of the block machinery.
inline ParamVector plain_sgd_epochs(const Architecture& arch, ParamVector params,
                                    const std::vector<std::vector<Batch>>& epochs, double lr, double momentum) {
  for (const auto& epoch : epochs) {
    std::vector<double> velocity(momentum > 0.0 ? params.size() : 0, 0.0);
    for (const Batch& b : epoch) {
      const ParamVector g = gradient(arch, params, b);
      if (momentum > 0.0) {
        for (std::size_t i = 0; i < params.size(); ++i) {
          velocity[i] = momentum * velocity[i] + g[i];
          params[i] -= lr * velocity[i];
        }
      } else {
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * g[i];
      }
    }
  }
  return params;
}

}  // namespace detail

// FedAvg: L local epochs of plain SGD at gamma_u, uniform mean, broadcast.
inline RoundResult fedavg_round(const Architecture& arch, const std::vector<ClientState>& clients, const FLConfig& cfg,
                                std::size_t round) {
  if (clients.empty()) throw InternalError("fedavg_round: no clients");
  std::vector<ParamVector> trained(clients.size());
  parallel_for(clients.size(), cfg.threads, [&](std::size_t k) {
    trained[k] = detail::plain_sgd_epochs(arch, clients[k].theta, local_epochs_for(clients[k], cfg, round, cfg.local_epochs),
                                          cfg.gamma_u, cfg.momentum);
  });

  const std::size_t d = arch.dimension();
  RoundResult out;
  out.scratch.theta_g = ParamVector(d);
  for (const ParamVector& t : trained)
    for (std::size_t i = 0; i < d; ++i) out.scratch.theta_g[i] += t[i];
  for (double& v : out.scratch.theta_g.values) v /= static_cast<double>(clients.size());
  out.scratch.omega.assign(d, clients.size());
  out.scratch.m_g = BinaryMask(d, true);

  for (std::size_t k = 0; k < clients.size(); ++k) {
    out.uploads.push_back(ClientUpload{trained[k], BinaryMask(d)});
    out.clients.push_back(ClientState{clients[k].id, out.scratch.theta_g, BinaryMask(d), clients[k].data});
  }
  out.report = make_report(arch, round, out.clients, std::vector<std::size_t>(clients.size(), d),
                           out.scratch.theta_g, cfg.threads);
  return out;
}

// Local fine-tuning of a finished FedAvg model: ft_epochs of plain SGD per
// client at ft_lr (gamma_v by default), continuing the batch streams after
// the last round.
inline std::vector<ClientState> fedavg_ft(const Architecture& arch, const std::vector<ClientState>& clients,
                                          const FLConfig& cfg, std::size_t ft_epochs) {
  const double lr = cfg.algorithm.ft_lr.value_or(cfg.gamma_v);
  std::vector<ClientState> out = clients;
  parallel_for(clients.size(), cfg.threads, [&](std::size_t k) {
    if (ft_epochs == 0) return;
    out[k].theta = detail::plain_sgd_epochs(arch, clients[k].theta, local_epochs_for(clients[k], cfg, cfg.rounds, ft_epochs),
                                            lr, cfg.momentum);
  });
  return out;
}

// Local-only training: L epochs of plain SGD at gamma_v per round, nothing
// uploaded. Clients carry an all-ones mask.
inline RoundResult local_only_round(const Architecture& arch, const std::vector<ClientState>& clients,
                                    const FLConfig& cfg, std::size_t round) {
  const std::size_t d = arch.dimension();
  RoundResult out;
  out.clients = clients;
  parallel_for(clients.size(), cfg.threads, [&](std::size_t k) {
    out.clients[k].theta = detail::plain_sgd_epochs(arch, clients[k].theta,
                                                    local_epochs_for(clients[k], cfg, round, cfg.local_epochs),
                                                    cfg.gamma_v, cfg.momentum);
    out.clients[k].mask = BinaryMask(d, true);
  });
  out.scratch = AggregationScratch{ParamVector(d), std::vector<std::size_t>(d, 0), BinaryMask(d)};
  out.report = make_report(arch, round, out.clients, std::vector<std::size_t>(clients.size(), 0),
                           out.scratch.theta_g, cfg.threads);
  return out;
}

// A FedSelect round whose masks never grow.
inline RoundResult fixed_partition_round(const Architecture& arch, const std::vector<ClientState>& clients,
                                         FLConfig cfg, std::size_t round) {
  for (const auto& c : clients)
    if (c.mask != clients.front().mask) throw InternalError("fixed_partition_round: clients must share one mask");
  cfg.algorithm.kind = AlgorithmKind::fixed_partition;
  if (!cfg.algorithm.partition) cfg.algorithm.partition = clients.front().mask;
  return run_round(arch, clients, cfg, round);
}

// Personalize-Least selection: the smallest p% of |delta| among eligible
// positions.
inline Selection personalize_least_select(std::span<const double> delta, const BinaryMask& eligible, double p) {
  return select_by_magnitude(delta, eligible, p, SelectOrder::smallest);
}

// ceil(fraction * d) positions drawn uniformly without replacement.
inline BinaryMask random_partition(std::size_t d, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("random partition fraction must lie in [0, 1]");
  const std::size_t count = std::min(d, ceil_count(fraction, d));
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, {kRandomMaskStream});
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(count);
  return BinaryMask::from_indices(d, order);
}

// Initial mask for client k under the configured algorithm.
inline BinaryMask initial_mask(const Architecture& arch, const AlgorithmSpec& spec, std::size_t client) {
  const std::size_t d = arch.dimension();
  switch (spec.kind) {
    case AlgorithmKind::local_only: return BinaryMask(d, true);
    case AlgorithmKind::fixed_partition: {
      if (const auto* lp = std::get_if<LayerPartition>(&*spec.partition)) {
        const long n = static_cast<long>(arch.layer_count());
        const long id = lp->layer < 0 ? n + lp->layer : lp->layer;
        if (id < 0 || id >= n) throw ConfigError("partition layer " + std::to_string(lp->layer) + " does not exist");
        return layer_mask(arch, static_cast<std::size_t>(id));
      }
      const BinaryMask& m = std::get<BinaryMask>(*spec.partition);
      if (m.size() != d) throw ConfigError("partition mask length does not match the model dimension");
      return m;
    }
    case AlgorithmKind::random_partition: {
      const auto& rp = std::get<RandomPartition>(*spec.partition);
      return random_partition(d, rp.fraction, derive_seed(rp.seed, {client}));
    }
    default: return BinaryMask(d);
  }
}

}  // namespace fedselect
