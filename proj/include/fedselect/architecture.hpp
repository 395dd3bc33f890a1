#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fedselect/errors.hpp"

namespace fedselect {

enum class Activation { relu, identity };

struct LayerSpec {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  Activation activation = Activation::relu;

  bool operator==(const LayerSpec&) const = default;
};

// Index spans of one layer inside the flat parameter vector. Weights are
// stored row-major as [output][input], followed by the bias.
struct LayerSpan {
  std::size_t layer = 0;
  std::size_t weight_begin = 0;
  std::size_t weight_end = 0;
  std::size_t bias_begin = 0;
  std::size_t bias_end = 0;

  std::size_t begin() const noexcept { return weight_begin; }
  std::size_t end() const noexcept { return bias_end; }
  std::size_t size() const noexcept { return bias_end - weight_begin; }

  bool operator==(const LayerSpan&) const = default;
};

// A validated feed-forward architecture and its flat parameter layout.
// The layout is shared by every client in a run.
class Architecture {
 public:
  Architecture() = default;

  explicit Architecture(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ConfigError("architecture has no layers");
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const LayerSpec& spec = layers_[l];
      if (spec.input_dim == 0 || spec.output_dim == 0)
        throw ConfigError("layer " + std::to_string(l) + " has a zero dimension");
      if (l > 0 && layers_[l - 1].output_dim != spec.input_dim)
        throw ConfigError("layer " + std::to_string(l) + " input_dim " + std::to_string(spec.input_dim) +
                          " does not match previous output_dim " + std::to_string(layers_[l - 1].output_dim));
      LayerSpan span;
      span.layer = l;
      span.weight_begin = offset;
      span.weight_end = offset + spec.input_dim * spec.output_dim;
      span.bias_begin = span.weight_end;
      span.bias_end = span.bias_begin + spec.output_dim;
      offset = span.bias_end;
      layout_.push_back(span);
    }
    if (layers_.back().activation != Activation::identity)
      throw ConfigError("final layer must use the identity activation (logits)");
    dimension_ = offset;
  }

  // input -> hidden... -> classes, relu on hidden layers.
  static Architecture mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t classes) {
    std::vector<LayerSpec> layers;
    std::size_t in = input_dim;
    for (std::size_t h : hidden) {
      layers.push_back({in, h, Activation::relu});
      in = h;
    }
    layers.push_back({in, classes, Activation::identity});
    return Architecture(std::move(layers));
  }

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const std::vector<LayerSpan>& layout() const noexcept { return layout_; }
  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t input_dim() const noexcept { return layers_.front().input_dim; }
  std::size_t class_count() const noexcept { return layers_.back().output_dim; }
  std::size_t layer_count() const noexcept { return layers_.size(); }

  const LayerSpan& span(std::size_t layer_id) const {
    if (layer_id >= layout_.size()) throw ConfigError("unknown layer id " + std::to_string(layer_id));
    return layout_[layer_id];
  }

  std::size_t widest_layer() const noexcept {
    std::size_t w = input_dim();
    for (const auto& l : layers_) w = w < l.output_dim ? l.output_dim : w;
    return w;
  }

  bool operator==(const Architecture& other) const { return layers_ == other.layers_; }

 private:
  std::vector<LayerSpec> layers_;
  std::vector<LayerSpan> layout_;
  std::size_t dimension_ = 0;
};

}  // namespace fedselect
