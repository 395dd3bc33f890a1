#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedselect/architecture.hpp"
#include "fedselect/errors.hpp"
#include "fedselect/mask.hpp"
#include "fedselect/seed.hpp"

namespace fedselect {

// Flat parameter vector. Its layout lives in the Architecture, which is
// identical for every client in a run.
struct ParamVector {
  std::vector<double> values;

  ParamVector() = default;
  explicit ParamVector(std::size_t d, double fill = 0.0) : values(d, fill) {}
  explicit ParamVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const noexcept { return values.size(); }
  double& operator[](std::size_t i) noexcept { return values[i]; }
  double operator[](std::size_t i) const noexcept { return values[i]; }
  std::span<const double> view() const noexcept { return values; }

  bool operator==(const ParamVector&) const = default;
};

// Row-major samples with integer labels in [0, K).
struct Batch {
  std::size_t input_dim = 0;
  std::vector<double> inputs;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const noexcept {
    return std::span<const double>(inputs).subspan(i * input_dim, input_dim);
  }
};

struct LayerParams {
  std::vector<double> weights;  // [output][input]
  std::vector<double> bias;

  bool operator==(const LayerParams&) const = default;
};

inline std::vector<LayerParams> unflatten(const Architecture& arch, const ParamVector& params) {
  if (params.size() != arch.dimension()) throw InternalError("unflatten: dimension mismatch");
  std::vector<LayerParams> out;
  for (const LayerSpan& s : arch.layout()) {
    LayerParams lp;
    lp.weights.assign(params.values.begin() + static_cast<std::ptrdiff_t>(s.weight_begin),
                      params.values.begin() + static_cast<std::ptrdiff_t>(s.weight_end));
    lp.bias.assign(params.values.begin() + static_cast<std::ptrdiff_t>(s.bias_begin),
                   params.values.begin() + static_cast<std::ptrdiff_t>(s.bias_end));
    out.push_back(std::move(lp));
  }
  return out;
}

inline ParamVector flatten(const Architecture& arch, const std::vector<LayerParams>& layers) {
  if (layers.size() != arch.layer_count()) throw InternalError("flatten: layer count mismatch");
  ParamVector out;
  out.values.reserve(arch.dimension());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerSpec& spec = arch.layers()[l];
    if (layers[l].weights.size() != spec.input_dim * spec.output_dim || layers[l].bias.size() != spec.output_dim)
      throw InternalError("flatten: layer " + std::to_string(l) + " has the wrong shape");
    out.values.insert(out.values.end(), layers[l].weights.begin(), layers[l].weights.end());
    out.values.insert(out.values.end(), layers[l].bias.begin(), layers[l].bias.end());
  }
  return out;
}

// Weights ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)], biases 0.
inline ParamVector init_params(const Architecture& arch, std::uint64_t seed) {
  ParamVector params(arch.dimension());
  Rng rng = make_rng(seed, {kInitStream});
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    const LayerSpan& s = arch.layout()[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(arch.layers()[l].input_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = s.weight_begin; i < s.weight_end; ++i) params[i] = dist(rng);
  }
  return params;
}

namespace detail {

inline void check_batch(const Architecture& arch, const ParamVector& params, const Batch& batch) {
  if (params.size() != arch.dimension())
    throw InternalError("parameter vector has length " + std::to_string(params.size()) + ", expected " +
                        std::to_string(arch.dimension()));
  if (batch.size() == 0) throw InputError("empty batch");
  if (batch.input_dim != arch.input_dim())
    throw InputError("batch input_dim " + std::to_string(batch.input_dim) + " does not match architecture input " +
                     std::to_string(arch.input_dim()));
  if (batch.inputs.size() != batch.size() * batch.input_dim) throw InputError("batch inputs/labels size mismatch");
  const int k = static_cast<int>(arch.class_count());
  for (int y : batch.labels)
    if (y < 0 || y >= k) throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
}

// Per-sample activations. pre[l] holds the pre-activation of layer l,
// post[l] the layer input (post[0] = x).
struct Trace {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> post;

  explicit Trace(const Architecture& arch) {
    for (const auto& spec : arch.layers()) {
      post.emplace_back(spec.input_dim);
      pre.emplace_back(spec.output_dim);
    }
  }
};

inline void forward_sample(const Architecture& arch, const ParamVector& params, std::span<const double> x,
                           Trace& trace) {
  std::copy(x.begin(), x.end(), trace.post[0].begin());
  const std::size_t n_layers = arch.layer_count();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const LayerSpec& spec = arch.layers()[l];
    const LayerSpan& span = arch.layout()[l];
    const double* w = params.values.data() + span.weight_begin;
    const double* b = params.values.data() + span.bias_begin;
    const std::vector<double>& in = trace.post[l];
    std::vector<double>& z = trace.pre[l];
    for (std::size_t o = 0; o < spec.output_dim; ++o) {
      double acc = b[o];
      const double* row = w + o * spec.input_dim;
      for (std::size_t i = 0; i < spec.input_dim; ++i) acc += row[i] * in[i];
      z[o] = acc;
    }
    if (l + 1 < n_layers) {
      std::vector<double>& next = trace.post[l + 1];
      for (std::size_t o = 0; o < spec.output_dim; ++o)
        next[o] = spec.activation == Activation::relu ? (z[o] > 0.0 ? z[o] : 0.0) : z[o];
    }
  }
}

// -log softmax(z)[y] with log-sum-exp; fills probs with softmax(z).
inline double cross_entropy(std::span<const double> z, int y, std::vector<double>& probs) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    probs[c] = std::exp(z[c] - zmax);
    sum += probs[c];
  }
  for (double& p : probs) p /= sum;
  return -(z[static_cast<std::size_t>(y)] - zmax - std::log(sum));
}

}  // namespace detail

// Mean cross-entropy over the batch.
inline double forward_loss(const Architecture& arch, const ParamVector& params, const Batch& batch) {
  detail::check_batch(arch, params, batch);
  detail::Trace trace(arch);
  std::vector<double> probs(arch.class_count());
  double total = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    detail::forward_sample(arch, params, batch.row(s), trace);
    total += detail::cross_entropy(trace.pre.back(), batch.labels[s], probs);
  }
  return total / static_cast<double>(batch.size());
}

struct LossAndGradient {
  double loss = 0.0;
  ParamVector grad;
};

// Loss and exact gradient of the mean cross-entropy w.r.t. every parameter.
inline LossAndGradient loss_and_gradient(const Architecture& arch, const ParamVector& params, const Batch& batch) {
  detail::check_batch(arch, params, batch);
  const std::size_t n_layers = arch.layer_count();
  detail::Trace trace(arch);
  std::vector<double> probs(arch.class_count());
  std::vector<double> delta(arch.widest_layer());
  std::vector<double> delta_prev(arch.widest_layer());
  LossAndGradient out{0.0, ParamVector(arch.dimension())};
  double* g = out.grad.values.data();

  for (std::size_t s = 0; s < batch.size(); ++s) {
    detail::forward_sample(arch, params, batch.row(s), trace);
    out.loss += detail::cross_entropy(trace.pre.back(), batch.labels[s], probs);
    for (std::size_t c = 0; c < probs.size(); ++c) delta[c] = probs[c];
    delta[static_cast<std::size_t>(batch.labels[s])] -= 1.0;

    for (std::size_t l = n_layers; l-- > 0;) {
      const LayerSpec& spec = arch.layers()[l];
      const LayerSpan& span = arch.layout()[l];
      const std::vector<double>& in = trace.post[l];
      double* gw = g + span.weight_begin;
      double* gb = g + span.bias_begin;
      for (std::size_t o = 0; o < spec.output_dim; ++o) {
        const double d = delta[o];
        gb[o] += d;
        if (d == 0.0) continue;
        double* row = gw + o * spec.input_dim;
        for (std::size_t i = 0; i < spec.input_dim; ++i) row[i] += d * in[i];
      }
      if (l == 0) break;
      const double* w = params.values.data() + span.weight_begin;
      std::fill(delta_prev.begin(), delta_prev.begin() + static_cast<std::ptrdiff_t>(spec.input_dim), 0.0);
      for (std::size_t o = 0; o < spec.output_dim; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* row = w + o * spec.input_dim;
        for (std::size_t i = 0; i < spec.input_dim; ++i) delta_prev[i] += row[i] * d;
      }
      const LayerSpec& below = arch.layers()[l - 1];
      const std::vector<double>& z_below = trace.pre[l - 1];
      for (std::size_t i = 0; i < spec.input_dim; ++i)
        delta[i] = (below.activation == Activation::relu && !(z_below[i] > 0.0)) ? 0.0 : delta_prev[i];
    }
  }
  const double n = static_cast<double>(batch.size());
  out.loss /= n;
  for (double& v : out.grad.values) v /= n;
  return out;
}

inline ParamVector gradient(const Architecture& arch, const ParamVector& params, const Batch& batch) {
  return loss_and_gradient(arch, params, batch).grad;
}

inline std::vector<double> logits(const Architecture& arch, const ParamVector& params, std::span<const double> x) {
  if (x.size() != arch.input_dim()) throw InputError("logits: input dimension mismatch");
  detail::Trace trace(arch);
  detail::forward_sample(arch, params, x, trace);
  return trace.pre.back();
}

// Argmax class; ties go to the lowest class index.
inline int predict(const Architecture& arch, const ParamVector& params, std::span<const double> x) {
  const std::vector<double> z = logits(arch, params, x);
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

// values[i] -= lr * grad[i] on active positions; inactive positions are
// left bit-identical.
inline ParamVector masked_sgd_step(const ParamVector& params, const ParamVector& grad, const BinaryMask& active,
                                   double lr) {
  if (params.size() != grad.size() || params.size() != active.size())
    throw InternalError("masked_sgd_step: dimension mismatch");
  ParamVector out = params;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (active[i]) out[i] -= lr * grad[i];
  return out;
}

// Stateful SGD over an active block with optional heavy-ball momentum.
// With momentum = 0 the update is exactly masked_sgd_step.
class BlockSgd {
 public:
  BlockSgd(std::size_t d, double momentum) : momentum_(momentum), velocity_(momentum > 0.0 ? d : 0, 0.0) {}

  void step(ParamVector& params, const ParamVector& grad, const BinaryMask& active, double lr) {
    if (params.size() != grad.size() || params.size() != active.size())
      throw InternalError("BlockSgd::step: dimension mismatch");
    if (momentum_ > 0.0) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (!active[i]) continue;
        velocity_[i] = momentum_ * velocity_[i] + grad[i];
        params[i] -= lr * velocity_[i];
      }
      return;
    }
    for (std::size_t i = 0; i < params.size(); ++i)
      if (active[i]) params[i] -= lr * grad[i];
  }

 private:
  double momentum_;
  std::vector<double> velocity_;
};

}  // namespace fedselect
