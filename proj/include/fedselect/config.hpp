#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fedselect/data.hpp"
#include "fedselect/errors.hpp"
#include "fedselect/local_update.hpp"
#include "fedselect/mask.hpp"

namespace fedselect {

enum class AlgorithmKind {
  fedselect,
  fedavg,
  fedavg_ft,
  local_only,
  fixed_partition,
  personalize_least,
  random_partition,
};

inline const char* to_string(AlgorithmKind k) {
  switch (k) {
    case AlgorithmKind::fedselect: return "fedselect";
    case AlgorithmKind::fedavg: return "fedavg";
    case AlgorithmKind::fedavg_ft: return "fedavg_ft";
    case AlgorithmKind::local_only: return "local_only";
    case AlgorithmKind::fixed_partition: return "fixed_partition";
    case AlgorithmKind::personalize_least: return "personalize_least";
    case AlgorithmKind::random_partition: return "random_partition";
  }
  return "?";
}

inline AlgorithmKind algorithm_from_string(const std::string& s) {
  for (auto k : {AlgorithmKind::fedselect, AlgorithmKind::fedavg, AlgorithmKind::fedavg_ft, AlgorithmKind::local_only,
                 AlgorithmKind::fixed_partition, AlgorithmKind::personalize_least, AlgorithmKind::random_partition})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown algorithm '" + s + "'");
}

// Personalize one whole layer (negative ids count from the output layer).
struct LayerPartition {
  long layer = -1;
};

// Each client gets its own ceil(fraction * d) random personalized positions.
struct RandomPartition {
  double fraction = 0.5;
  std::uint64_t seed = 0;
};

using PartitionSource = std::variant<LayerPartition, BinaryMask, RandomPartition>;

struct AlgorithmSpec {
  AlgorithmKind kind = AlgorithmKind::fedselect;
  std::optional<PartitionSource> partition;
  std::optional<std::size_t> ft_epochs;
  // Fine-tuning rate; defaults to gamma_v when unset.
  std::optional<double> ft_lr;

  void validate() const {
    const bool wants_partition =
        kind == AlgorithmKind::fixed_partition || kind == AlgorithmKind::random_partition;
    if (wants_partition != partition.has_value())
      throw ConfigError(std::string("algorithm ") + to_string(kind) +
                        (wants_partition ? " requires a partition" : " does not take a partition"));
    if (kind == AlgorithmKind::random_partition && !std::holds_alternative<RandomPartition>(*partition))
      throw ConfigError("random_partition needs a fraction");
    if (kind == AlgorithmKind::fixed_partition && std::holds_alternative<RandomPartition>(*partition))
      throw ConfigError("fixed_partition needs a layer or an explicit mask");
    if ((kind == AlgorithmKind::fedavg_ft) != ft_epochs.has_value())
      throw ConfigError(kind == AlgorithmKind::fedavg_ft ? "fedavg_ft requires ft_epochs"
                                                         : "ft_epochs is only valid for fedavg_ft");
  }
};

enum class DataSource { blobs, csv };

struct DataConfig {
  DataSource source = DataSource::blobs;
  std::string csv_path;
  std::size_t classes = 10;  // K, for blobs
  std::size_t input_dim = 16;
  std::size_t n_per_class = 200;
  double spread = 1.0;
  double feature_shift = 0.0;  // severity, 0 disables
  std::size_t shard = 2;
  std::size_t train_size = 100;  // N_k
  std::size_t test_size = 100;
};

struct FLConfig {
  AlgorithmSpec algorithm;
  std::size_t n_clients = 10;
  std::size_t rounds = 200;  // T
  std::size_t local_epochs = 3;
  std::size_t batch_size = 10;
  // Steps per block pass. 0 derives tau = ceil(N_k / batch_size), i.e. one
  // pass over the local data; a positive value takes the first tau batches
  // of the epoch's shuffled order, wrapping around when needed.
  std::size_t tau = 0;
  double gamma_u = 0.001;
  double gamma_v = 0.1;
  double p = 0.05;
  double alpha = 0.3;
  double momentum = 0.0;
  std::vector<std::size_t> hidden = {64, 64};
  DataConfig data;
  std::uint64_t master_seed = 0;
  std::size_t snapshot_interval = 0;
  std::size_t threads = 1;
  std::string out_dir = "out";

  LocalConfig local_config() const {
    LocalConfig lc;
    lc.local_epochs = local_epochs;
    lc.gamma_v = gamma_v;
    lc.gamma_u = gamma_u;
    lc.p = p;
    lc.alpha = alpha;
    lc.momentum = momentum;
    switch (algorithm.kind) {
      case AlgorithmKind::personalize_least: lc.growth = GrowthRule::smallest_change; break;
      case AlgorithmKind::fixed_partition:
      case AlgorithmKind::random_partition: lc.growth = GrowthRule::frozen; break;
      default: lc.growth = GrowthRule::largest_change; break;
    }
    return lc;
  }

  PartitionSpec partition_spec() const {
    return PartitionSpec{n_clients, data.shard, data.train_size, data.test_size, master_seed};
  }

  void validate() const {
    algorithm.validate();
    local_config().validate();
    if (n_clients == 0) throw ConfigError("n_clients must be >= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (threads == 0) throw ConfigError("threads must be >= 1");
    if (data.train_size == 0 || data.test_size == 0) throw ConfigError("train_size and test_size must be >= 1");
    if (data.source == DataSource::csv && data.csv_path.empty()) throw ConfigError("csv source needs a path");
  }
};

}  // namespace fedselect
