#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "fedselect/errors.hpp"
#include "fedselect/mask.hpp"
#include "fedselect/model.hpp"

namespace fedselect {

// How a client's mask grows after local training.
enum class GrowthRule {
  largest_change,   // FedSelect: promote the global params that moved most
  smallest_change,  // ablation: promote the ones that moved least
  frozen,           // fixed partitions: never grow
};

struct LocalConfig {
  std::size_t local_epochs = 3;  // L
  double gamma_v = 0.1;          // personalized-block rate
  double gamma_u = 0.001;        // global-block rate
  double p = 0.05;               // personalization rate
  double alpha = 0.5;            // personalization limit
  double momentum = 0.0;
  GrowthRule growth = GrowthRule::largest_change;

  void validate() const {
    if (local_epochs == 0) throw ConfigError("local_epochs must be >= 1");
    if (!(gamma_v >= 0.0) || !(gamma_u >= 0.0)) throw ConfigError("learning rates must be nonnegative");
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("p must lie in (0, 1]");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  }
};

// One LocalAlt pass: tau steps on the personalized block (m = 1) at gamma_v,
// then tau steps on the global block (m = 0) at gamma_u over the same batch
// sequence, each step taking the full gradient at the current parameters
// and applying it to the active block only.
inline ParamVector local_alt(const Architecture& arch, const ParamVector& theta, const BinaryMask& m,
                             std::span<const Batch> batch_seq, const LocalConfig& cfg) {
  if (batch_seq.empty()) throw InputError("local_alt needs at least one batch");
  if (m.size() != theta.size()) throw InternalError("local_alt: mask/parameter dimension mismatch");
  ParamVector params = theta;

  if (!m.none()) {
    BlockSgd sgd(params.size(), cfg.momentum);
    for (const Batch& b : batch_seq) sgd.step(params, gradient(arch, params, b), m, cfg.gamma_v);
  }
  if (!m.all()) {
    const BinaryMask global = invert(m);
    BlockSgd sgd(params.size(), cfg.momentum);
    for (const Batch& b : batch_seq) sgd.step(params, gradient(arch, params, b), global, cfg.gamma_u);
  }
  return params;
}

struct GradSelectResult {
  ParamVector theta;       // trained under the incoming mask
  BinaryMask mask;         // next round's mask
  bool grew = false;       // the alpha guard allowed a selection
  bool no_eligible = false;
};

// L LocalAlt epochs followed by mask growth. The alpha guard is evaluated on
// the incoming mask, so a single step may overshoot alpha.
inline GradSelectResult grad_select(const Architecture& arch, const ParamVector& theta, const BinaryMask& m,
                                    std::span<const std::vector<Batch>> epochs, const LocalConfig& cfg) {
  if (epochs.size() != cfg.local_epochs)
    throw InternalError("grad_select: expected " + std::to_string(cfg.local_epochs) + " epochs of batches");
  if (m.size() != theta.size()) throw InternalError("grad_select: mask/parameter dimension mismatch");

  GradSelectResult out{theta, m, false, false};
  for (const auto& epoch : epochs) out.theta = local_alt(arch, out.theta, m, epoch, cfg);

  if (cfg.growth == GrowthRule::frozen || !(personalized_fraction(m) < cfg.alpha)) return out;

  const BinaryMask eligible = invert(m);
  std::vector<double> delta(theta.size(), 0.0);
  for (std::size_t i = 0; i < delta.size(); ++i)
    if (eligible[i]) delta[i] = std::abs(out.theta[i] - theta[i]);
  const SelectOrder order = cfg.growth == GrowthRule::largest_change ? SelectOrder::largest : SelectOrder::smallest;
  Selection sel = select_by_magnitude(delta, eligible, cfg.p, order);
  out.grew = true;
  out.no_eligible = sel.no_eligible;
  out.mask = m | sel.mask;
  return out;
}

}  // namespace fedselect
