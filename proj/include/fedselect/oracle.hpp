#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "fedselect/config.hpp"
#include "fedselect/errors.hpp"
#include "fedselect/federation.hpp"
#include "fedselect/mask.hpp"
#include "fedselect/model.hpp"
#include "fedselect/server.hpp"

namespace fedselect {

// ---------------------------------------------------------------------------
// Gradient oracle

inline ParamVector finite_difference_gradient(const Architecture& arch, const ParamVector& params, const Batch& batch,
                                              double step) {
  if (!(step > 0.0)) throw ConfigError("finite-difference step must be positive");
  ParamVector out(params.size());
  ParamVector probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = forward_loss(arch, probe, batch);
    probe[i] = orig - step;
    const double down = forward_loss(arch, probe, batch);
    probe[i] = orig;
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor keeps coordinates
// whose gradient is numerically zero from dividing roundoff by ~0.
inline double max_relative_error(const ParamVector& a, const ParamVector& b, double floor = 1e-4) {
  if (a.size() != b.size()) throw InternalError("max_relative_error: dimension mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Centralized block SGD over the union of global and personalized parameters

// U holds one value per position that at least one client treats as global;
// V holds each client's personalized values. The frozen masks decide which
// is which.
struct UnionProblem {
  std::vector<BinaryMask> masks;
  BinaryMask in_u;              // positions in U
  std::vector<double> global;   // U, indexed by position; 0 outside U
  std::vector<ParamVector> personal;  // V_k, indexed by position; 0 where m_k = 0
  std::vector<double> effective_lr;   // gamma_u * N / omega[i] on U, 0 elsewhere
  double gamma_u = 0.0;
  double gamma_v = 0.0;

  std::size_t clients() const noexcept { return masks.size(); }
  std::size_t dimension() const noexcept { return in_u.size(); }

  // Client k's full parameter vector (u_k from U, v_k from V_k).
  ParamVector assemble(std::size_t k) const {
    ParamVector theta(dimension());
    for (std::size_t i = 0; i < dimension(); ++i) theta[i] = masks[k][i] ? personal[k][i] : global[i];
    return theta;
  }
};

// Lifts client states into the union problem. Every client holding position i
// as global must carry the same value there (true right after distribution).
inline UnionProblem make_union_problem(const std::vector<ClientState>& clients, double gamma_u, double gamma_v) {
  if (clients.empty()) throw PreconditionError("union problem needs at least one client");
  const std::size_t d = clients.front().theta.size();
  const std::size_t n = clients.size();
  UnionProblem prob;
  prob.gamma_u = gamma_u;
  prob.gamma_v = gamma_v;
  prob.in_u = BinaryMask(d);
  prob.global.assign(d, 0.0);
  prob.effective_lr.assign(d, 0.0);
  std::vector<std::size_t> omega(d, 0);
  for (const auto& c : clients) {
    prob.masks.push_back(c.mask);
    ParamVector v(d);
    for (std::size_t i = 0; i < d; ++i) {
      if (c.mask[i]) {
        v[i] = c.theta[i];
        continue;
      }
      if (omega[i] == 0) {
        prob.global[i] = c.theta[i];
        prob.in_u.set(i);
      } else if (prob.global[i] != c.theta[i]) {
        throw PreconditionError("clients disagree on global position " + std::to_string(i));
      }
      ++omega[i];
    }
    prob.personal.push_back(std::move(v));
  }
  for (std::size_t i = 0; i < d; ++i)
    if (omega[i] > 0) prob.effective_lr[i] = gamma_u * static_cast<double>(n) / static_cast<double>(omega[i]);
  return prob;
}

// One alternating block step with tau = 1: every V_k moves along its own
// gradient at gamma_v, then U moves along dF/dU = (1/N) sum_k df_k/du_k at
// the per-position effective rate, with gradients taken at (U, V^+).
// `lr_perturbation` is added to every effective rate (negative controls).
inline UnionProblem centralized_block_sgd_round(const Architecture& arch, const UnionProblem& prob,
                                                const std::vector<Batch>& client_batches,
                                                double lr_perturbation = 0.0) {
  const std::size_t n = prob.clients();
  const std::size_t d = prob.dimension();
  if (client_batches.size() != n) throw InternalError("centralized_block_sgd_round: one batch per client expected");
  UnionProblem next = prob;

  for (std::size_t k = 0; k < n; ++k) {
    if (prob.masks[k].none()) continue;
    const ParamVector g = gradient(arch, prob.assemble(k), client_batches[k]);
    for (std::size_t i = 0; i < d; ++i)
      if (prob.masks[k][i]) next.personal[k][i] -= prob.gamma_v * g[i];
  }

  std::vector<double> dF(d, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    if (prob.masks[k].all()) continue;
    const ParamVector g = gradient(arch, next.assemble(k), client_batches[k]);
    for (std::size_t i = 0; i < d; ++i)
      if (!prob.masks[k][i]) dF[i] += g[i];
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (!prob.in_u[i]) continue;
    dF[i] /= static_cast<double>(n);
    next.global[i] -= (prob.effective_lr[i] + lr_perturbation) * dF[i];
  }
  return next;
}

struct LockstepResult {
  double max_deviation = 0.0;
  std::vector<double> per_round;  // max |FedSelect - oracle| after each round
  std::size_t rounds = 0;
};

// Runs FedSelect and the centralized oracle in lockstep from `clients`, whose
// masks must already be frozen, for `rounds` rounds starting at round index
// `first_round`. Both systems consume the same batch tape.
inline LockstepResult verify_block_sgd_lockstep(const Architecture& arch, std::vector<ClientState> clients, FLConfig cfg,
                                      std::size_t first_round, std::size_t rounds, double lr_perturbation = 0.0) {
  if (cfg.algorithm.kind != AlgorithmKind::fedselect)
    throw PreconditionError("block-SGD lockstep runs the fedselect algorithm");
  if (cfg.local_epochs != 1) throw PreconditionError("block-SGD lockstep needs local_epochs = 1");
  for (const auto& c : clients) {
    const std::size_t steps = cfg.tau > 0 ? cfg.tau : (c.data->train.size() + cfg.batch_size - 1) / cfg.batch_size;
    if (steps != 1) throw PreconditionError("block-SGD lockstep needs tau = 1");
    if (personalized_fraction(c.mask) < cfg.alpha) throw PreconditionError("client masks are not frozen");
  }
  cfg.rounds = first_round + rounds;
  cfg.threads = 1;

  LockstepResult res;
  UnionProblem prob = make_union_problem(clients, cfg.gamma_u, cfg.gamma_v);
  for (std::size_t t = first_round; t < first_round + rounds; ++t) {
    std::vector<Batch> tape;
    for (const auto& c : clients) tape.push_back(local_epochs_for(c, cfg, t, 1).front().front());

    RoundResult r = run_round(arch, clients, cfg, t);
    for (std::size_t k = 0; k < clients.size(); ++k)
      if (r.clients[k].mask != clients[k].mask) throw PreconditionError("a client mask changed during lockstep");
    clients = std::move(r.clients);
    prob = centralized_block_sgd_round(arch, prob, tape, lr_perturbation);

    double worst = 0.0;
    for (std::size_t k = 0; k < clients.size(); ++k) {
      const ParamVector ref = prob.assemble(k);
      for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(ref[i] - clients[k].theta[i]));
    }
    res.per_round.push_back(worst);
    res.max_deviation = std::max(res.max_deviation, worst);
    ++res.rounds;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Mask convergence

// Rounds of growth after which geometric growth at rate p has reached alpha,
// plus one: ceil(log(1 - alpha) / log(1 - p)) + 1.
inline std::size_t mask_convergence_bound(double p, double alpha) {
  if (alpha <= 0.0) return 1;
  if (p >= 1.0) return 2;
  if (alpha >= 1.0) return std::numeric_limits<std::size_t>::max();
  const double steps = std::log(1.0 - alpha) / std::log(1.0 - p);
  const double r = std::round(steps);
  const double growth = std::abs(steps - r) <= 1e-9 * std::max(1.0, steps) ? r : std::ceil(steps);
  return static_cast<std::size_t>(growth) + 1;
}

struct MaskConvergenceResult {
  std::size_t convergence_round = 0;  // first t with m^t = m^{t'} for all t' >= t
  std::size_t bound = 0;
  bool monotone = true;               // m^t ⊆ m^{t+1} for every client and round
  bool converged_within_bound = false;
  std::vector<double> final_fraction;
  double min_final_fraction = 0.0;
  double max_final_fraction = 0.0;
};

// Runs FedSelect for cfg.rounds rounds and checks that every client's mask
// sequence is a monotone chain that stops changing within the bound.
inline MaskConvergenceResult verify_mask_convergence(const FLConfig& cfg) {
  Federation fed = setup_federation(cfg);
  std::vector<std::vector<BinaryMask>> masks;  // masks[t][k] = m_k^t
  std::vector<BinaryMask> current;
  for (const auto& c : fed.clients) current.push_back(c.mask);
  masks.push_back(current);
  run_rounds(fed.arch, fed.clients, cfg, 0, [&](const RoundResult& r) {
    std::vector<BinaryMask> next;
    for (const auto& c : r.clients) next.push_back(c.mask);
    masks.push_back(std::move(next));
  });

  MaskConvergenceResult res;
  res.bound = mask_convergence_bound(cfg.p, cfg.alpha);
  for (std::size_t t = 0; t + 1 < masks.size(); ++t)
    for (std::size_t k = 0; k < masks[t].size(); ++k)
      if (!is_subset(masks[t][k], masks[t + 1][k])) res.monotone = false;
  std::size_t conv = masks.size() - 1;
  while (conv > 0 && masks[conv - 1] == masks.back()) --conv;
  res.convergence_round = conv;
  for (const auto& m : masks.back()) res.final_fraction.push_back(personalized_fraction(m));
  res.min_final_fraction = *std::min_element(res.final_fraction.begin(), res.final_fraction.end());
  res.max_final_fraction = *std::max_element(res.final_fraction.begin(), res.final_fraction.end());
  // A mask still below alpha at the last round has not frozen, however
  // early its last change happened.
  res.converged_within_bound = conv <= res.bound && res.min_final_fraction >= cfg.alpha;
  return res;
}

}  // namespace fedselect
