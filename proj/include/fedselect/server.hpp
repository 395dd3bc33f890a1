#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "fedselect/architecture.hpp"
#include "fedselect/config.hpp"
#include "fedselect/data.hpp"
#include "fedselect/errors.hpp"
#include "fedselect/local_update.hpp"
#include "fedselect/mask.hpp"
#include "fedselect/metrics.hpp"
#include "fedselect/model.hpp"
#include "fedselect/parallel.hpp"

namespace fedselect {

struct ClientState {
  std::size_t id = 0;
  ParamVector theta;
  BinaryMask mask;  // 1 = personalized
  std::shared_ptr<const ClientData> data;
};

// What a client sends to the server: its global-block values under the mask
// it trained with. Personalized positions are zeroed before leaving the
// client and are ignored by aggregation.
struct ClientUpload {
  ParamVector values;
  BinaryMask mask;
};

inline ClientUpload make_upload(const ParamVector& trained, const BinaryMask& mask) {
  if (trained.size() != mask.size()) throw InternalError("make_upload: dimension mismatch");
  ClientUpload up{trained, mask};
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) up.values[i] = 0.0;
  return up;
}

struct AggregationScratch {
  ParamVector theta_g;
  std::vector<std::size_t> omega;  // contributors per position
  BinaryMask m_g;                  // omega != 0
};

// Position-wise mean over the clients whose mask is 0 there, summed in
// ascending client order. Positions nobody contributes to stay 0 and are
// excluded from m_g.
inline AggregationScratch aggregate(std::span<const ClientUpload> uploads) {
  if (uploads.empty()) throw InternalError("aggregate: no uploads");
  const std::size_t d = uploads.front().values.size();
  AggregationScratch s{ParamVector(d), std::vector<std::size_t>(d, 0), BinaryMask(d)};
  for (const ClientUpload& up : uploads) {
    if (up.values.size() != d || up.mask.size() != d) throw InternalError("aggregate: dimension mismatch");
    for (std::size_t i = 0; i < d; ++i) {
      if (up.mask[i]) continue;
      s.theta_g[i] += up.values[i];
      ++s.omega[i];
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (s.omega[i] == 0) continue;
    s.m_g.set(i);
    s.theta_g[i] /= static_cast<double>(s.omega[i]);
  }
  return s;
}

// Installs theta_g on the client's old global positions and its trained
// personalized values on the old personalized positions, then switches it
// to the new mask. Old global positions without any contributor keep the
// locally trained value.
inline ClientState distribute(const AggregationScratch& scratch, const ClientState& client, const ParamVector& trained,
                              const BinaryMask& m_old, const BinaryMask& m_new) {
  const std::size_t d = scratch.theta_g.size();
  if (trained.size() != d || m_old.size() != d || m_new.size() != d)
    throw InternalError("distribute: dimension mismatch");
  if (!is_subset(m_old, m_new)) throw InternalError("distribute: client mask shrank");
  ClientState out{client.id, trained, m_new, client.data};
  for (std::size_t i = 0; i < d; ++i)
    if (!m_old[i] && scratch.m_g[i]) out.theta[i] = scratch.theta_g[i];
  return out;
}

struct RoundReport {
  std::size_t round = 0;
  std::vector<double> per_client_accuracy;
  double mean_accuracy = 0.0;
  std::vector<double> per_client_sparsity;  // personalized fraction of the mask after the round
  std::vector<std::size_t> per_client_upload;  // d - popcount(mask used for training)
  std::uint64_t theta_g_checksum = 0;

  bool operator==(const RoundReport&) const = default;
};

inline RoundReport make_report(const Architecture& arch, std::size_t round, const std::vector<ClientState>& clients,
                               const std::vector<std::size_t>& uploads, const ParamVector& theta_g,
                               std::size_t threads) {
  RoundReport r;
  r.round = round;
  r.per_client_accuracy.assign(clients.size(), 0.0);
  parallel_for(clients.size(), threads, [&](std::size_t k) {
    r.per_client_accuracy[k] = evaluate_client(arch, clients[k].theta, clients[k].data->test);
  });
  r.mean_accuracy = mean(r.per_client_accuracy);
  for (const auto& c : clients) r.per_client_sparsity.push_back(personalized_fraction(c.mask));
  r.per_client_upload = uploads;
  r.theta_g_checksum = checksum(theta_g);
  return r;
}

inline std::vector<std::vector<Batch>> local_epochs_for(const ClientState& c, const FLConfig& cfg, std::size_t round,
                                                        std::size_t epochs) {
  std::vector<std::vector<Batch>> out;
  out.reserve(epochs);
  for (std::size_t e = 0; e < epochs; ++e) {
    std::vector<Batch> seq = epoch_batches(c.data->train, cfg.batch_size, cfg.master_seed, c.id, round, e);
    if (cfg.tau > 0) {
      std::vector<Batch> capped;
      capped.reserve(cfg.tau);
      for (std::size_t i = 0; i < cfg.tau; ++i) capped.push_back(seq[i % seq.size()]);
      seq = std::move(capped);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

struct RoundResult {
  std::vector<ClientState> clients;
  RoundReport report;
  AggregationScratch scratch;
  std::vector<ClientUpload> uploads;
  std::size_t no_eligible_warnings = 0;
};

// One communication round: GradSelect on every client, aggregation under the
// masks the clients trained with, distribution, then the mask switch.
inline RoundResult run_round(const Architecture& arch, const std::vector<ClientState>& clients, const FLConfig& cfg,
                             std::size_t round) {
  if (round >= cfg.rounds) throw InternalError("run_round: round index beyond T");
  const LocalConfig lc = cfg.local_config();
  std::vector<GradSelectResult> local(clients.size());
  parallel_for(clients.size(), cfg.threads, [&](std::size_t k) {
    const auto epochs = local_epochs_for(clients[k], cfg, round, lc.local_epochs);
    local[k] = grad_select(arch, clients[k].theta, clients[k].mask, epochs, lc);
  });

  RoundResult out;
  out.uploads.reserve(clients.size());
  for (std::size_t k = 0; k < clients.size(); ++k) out.uploads.push_back(make_upload(local[k].theta, clients[k].mask));
  out.scratch = aggregate(out.uploads);

  std::vector<std::size_t> upload_counts;
  for (std::size_t k = 0; k < clients.size(); ++k) {
    out.clients.push_back(distribute(out.scratch, clients[k], local[k].theta, clients[k].mask, local[k].mask));
    upload_counts.push_back(clients[k].mask.size() - clients[k].mask.popcount());
    out.no_eligible_warnings += local[k].no_eligible ? 1 : 0;
  }
  out.report = make_report(arch, round, out.clients, upload_counts, out.scratch.theta_g, cfg.threads);
  return out;
}

}  // namespace fedselect
