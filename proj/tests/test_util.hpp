#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fedselect/config.hpp"
#include "fedselect/model.hpp"

namespace fedselect::testing {

inline Batch random_batch(std::size_t n, std::size_t dim, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Batch b{dim, {}, {}};
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < dim; ++j) b.inputs.push_back(normal(rng));
    b.labels.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(classes)));
  }
  return b;
}

inline ParamVector random_params(std::size_t d, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  ParamVector p(d);
  for (double& v : p.values) v = normal(rng);
  return p;
}

// Small, fast federation used across server/baseline/harness tests.
inline FLConfig tiny_config(std::uint64_t seed = 3) {
  FLConfig cfg;
  cfg.algorithm.kind = AlgorithmKind::fedselect;
  cfg.n_clients = 4;
  cfg.rounds = 4;
  cfg.local_epochs = 2;
  cfg.batch_size = 8;
  cfg.gamma_u = 0.05;
  cfg.gamma_v = 0.1;
  cfg.p = 0.2;
  cfg.alpha = 0.5;
  cfg.hidden = {8};
  cfg.data.classes = 4;
  cfg.data.input_dim = 5;
  cfg.data.n_per_class = 40;
  cfg.data.shard = 2;
  cfg.data.train_size = 20;
  cfg.data.test_size = 10;
  cfg.master_seed = seed;
  return cfg;
}

inline double max_abs_diff(const ParamVector& a, const ParamVector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace fedselect::testing
