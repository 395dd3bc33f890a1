#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedselect/config.hpp"
#include "fedselect/federation.hpp"
#include "fedselect/oracle.hpp"

namespace fedselect {

// Canned oracle checks behind `fedselect verify`.

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

// Masks tiling the 3-client pattern m_1 = [1,1,0,0], m_2 = [1,0,1,0],
// m_3 = [1,0,0,1] over d positions.
inline std::vector<BinaryMask> tiled_pattern_masks(std::size_t d, std::size_t n_clients = 3) {
  std::vector<BinaryMask> out;
  for (std::size_t k = 0; k < n_clients; ++k) {
    BinaryMask m(d);
    for (std::size_t i = 0; i < d; ++i) m.set(i, i % (n_clients + 1) == 0 || i % (n_clients + 1) == k + 1);
    out.push_back(std::move(m));
  }
  return out;
}

// Small full-batch federation for the lockstep oracle: 3 clients on two
// blobs, tau = 1, one local epoch.
inline FLConfig lockstep_config(std::uint64_t seed = 11) {
  FLConfig cfg;
  cfg.algorithm.kind = AlgorithmKind::fedselect;
  cfg.n_clients = 3;
  cfg.rounds = 20;
  cfg.local_epochs = 1;
  cfg.batch_size = 20;
  cfg.gamma_u = 0.5;
  cfg.gamma_v = 0.5;
  cfg.p = 0.2;
  cfg.alpha = 0.5;
  cfg.hidden = {8};
  cfg.data.classes = 2;
  cfg.data.input_dim = 4;
  cfg.data.n_per_class = 60;
  cfg.data.spread = 1.0;
  cfg.data.shard = 2;
  cfg.data.train_size = 20;
  cfg.data.test_size = 20;
  cfg.master_seed = seed;
  return cfg;
}

// Federation for the mask-convergence check at one (p, alpha).
inline FLConfig mask_growth_config(double p, double alpha, std::uint64_t seed = 5) {
  FLConfig cfg;
  cfg.algorithm.kind = AlgorithmKind::fedselect;
  cfg.n_clients = 4;
  cfg.local_epochs = 1;
  cfg.batch_size = 20;
  cfg.gamma_u = 0.01;
  cfg.gamma_v = 0.1;
  cfg.p = p;
  cfg.alpha = alpha;
  cfg.hidden = {16};
  cfg.data.classes = 4;
  cfg.data.input_dim = 8;
  cfg.data.n_per_class = 40;
  cfg.data.shard = 2;
  cfg.data.train_size = 20;
  cfg.data.test_size = 10;
  cfg.master_seed = seed;
  const std::size_t bound = mask_convergence_bound(p, alpha);
  cfg.rounds = bound == std::numeric_limits<std::size_t>::max() ? 50 : bound + 3;
  return cfg;
}

inline double max_gradient_error(std::size_t pairs, std::uint64_t seed, double step = 1e-5) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> width(1, 6), classes(2, 4), rows(1, 5), depth(0, 2);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (std::size_t trial = 0; trial < pairs; ++trial) {
    const std::size_t in = width(rng), k = classes(rng);
    std::vector<std::size_t> hidden(depth(rng));
    for (auto& h : hidden) h = width(rng) + 1;
    const Architecture arch = Architecture::mlp(in, hidden, k);
    ParamVector params = init_params(arch, rng());
    for (double& v : params.values) v += 0.1 * normal(rng);
    Batch b{in, {}, {}};
    const std::size_t n = rows(rng);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t j = 0; j < in; ++j) b.inputs.push_back(normal(rng));
      b.labels.push_back(static_cast<int>(rng() % k));
    }
    worst = std::max(worst, max_relative_error(gradient(arch, params, b),
                                               finite_difference_gradient(arch, params, b, step)));
  }
  return worst;
}

inline std::vector<CheckResult> run_verification() {
  std::vector<CheckResult> out;

  {
    const double err = max_gradient_error(100, 2024);
    out.push_back({"gradient_vs_finite_differences", err <= 1e-6, err, 1e-6, "100 random (params, batch) pairs"});
  }

  for (double p : {0.05, 0.2, 0.5}) {
    for (double alpha : {0.3, 0.5, 0.8}) {
      const MaskConvergenceResult r = verify_mask_convergence(mask_growth_config(p, alpha));
      const bool ok = r.monotone && r.converged_within_bound && r.min_final_fraction >= alpha &&
                      r.max_final_fraction <= alpha + p;
      out.push_back({"mask_convergence p=" + std::to_string(p) + " alpha=" + std::to_string(alpha), ok,
                     static_cast<double>(r.convergence_round), static_cast<double>(r.bound),
                     "fraction in [" + std::to_string(r.min_final_fraction) + ", " +
                         std::to_string(r.max_final_fraction) + "]"});
    }
  }

  {
    FLConfig cfg = lockstep_config();
    Federation fed = setup_federation(cfg);
    const auto masks = tiled_pattern_masks(fed.arch.dimension());
    for (std::size_t k = 0; k < fed.clients.size(); ++k) fed.clients[k].mask = masks[k];
    const double dev = verify_block_sgd_lockstep(fed.arch, fed.clients, cfg, 0, 20).max_deviation;
    out.push_back({"block_sgd_equivalence tiled masks", dev <= 1e-10, dev, 1e-10, "20 lockstep rounds"});
    const double neg = verify_block_sgd_lockstep(fed.arch, fed.clients, cfg, 0, 20, 1e-3).max_deviation;
    out.push_back({"block_sgd_equivalence negative control", neg > 1e-4, neg, 1e-4, "oracle rate perturbed by 1e-3"});
  }
  {
    FLConfig cfg = lockstep_config();
    cfg.rounds = mask_convergence_bound(cfg.p, cfg.alpha);
    Federation fed = setup_federation(cfg);
    const RunHistory grown = run_rounds(fed.arch, fed.clients, cfg, 0);
    const double dev = verify_block_sgd_lockstep(fed.arch, grown.final_clients, cfg, cfg.rounds, 20).max_deviation;
    out.push_back({"block_sgd_equivalence grown masks", dev <= 1e-10, dev, 1e-10, "20 lockstep rounds after freeze"});
  }
  return out;
}

inline nlohmann::ordered_json verification_report(const std::vector<CheckResult>& checks) {
  nlohmann::ordered_json j;
  bool all = true;
  auto& arr = j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    all = all && c.passed;
    arr.push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"threshold", c.threshold},
                   {"detail", c.detail}});
  }
  j["all_passed"] = all;
  return j;
}

}  // namespace fedselect
