#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"

#include "fedselect/config.hpp"
#include "fedselect/errors.hpp"
#include "fedselect/mask.hpp"

namespace fedselect {

// Run configuration file: a JSON document with nested sections.
//
//   {
//     "algorithm": {"kind": "fedselect"},            // or just "fedselect"
//     "federation": {"n_clients": 10, "rounds": 100, "local_epochs": 3,
//                    "batch_size": 10, "tau": 0, "threads": 1},
//     "optimizer": {"gamma_u": 0.001, "gamma_v": 0.1, "momentum": 0.0},
//     "personalization": {"p": 0.05, "alpha": 0.3},
//     "model": {"hidden": [64, 64]},
//     "data": {"source": "blobs", "classes": 10, "input_dim": 16,
//              "n_per_class": 200, "spread": 1.0, "feature_shift": 0,
//              "shard": 2, "train_size": 100, "test_size": 100},
//     "seed": 0,
//     "output": {"dir": "out", "snapshot_interval": 0}
//   }
//
// algorithm.kind, federation.n_clients and federation.rounds are required.
// Partitions: {"layer": -1}, {"mask": "<rle>"} or {"fraction": 0.5, "seed": 7}.
// Unknown keys are rejected.

namespace config_detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> known) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline void read_size(const json& obj, const char* key, std::size_t& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(where + "." + key + " must be a nonnegative integer");
  out = v.get<std::size_t>();
}

inline void require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw ConfigError("missing required field " + where + "." + key);
}

inline PartitionSource parse_partition(const json& j, std::uint64_t default_seed) {
  reject_unknown(j, "algorithm.partition", {"layer", "mask", "fraction", "seed"});
  if (j.contains("layer")) {
    if (!j.at("layer").is_number_integer()) throw ConfigError("algorithm.partition.layer must be an integer");
    return LayerPartition{j.at("layer").get<long>()};
  }
  if (j.contains("mask")) {
    try {
      return from_rle(j.at("mask").get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("algorithm.partition.mask: ") + e.what());
    }
  }
  if (j.contains("fraction")) {
    RandomPartition rp{0.5, default_seed};
    read(j, "fraction", rp.fraction, "algorithm.partition");
    read(j, "seed", rp.seed, "algorithm.partition");
    return rp;
  }
  throw ConfigError("algorithm.partition needs one of layer, mask or fraction");
}

}  // namespace config_detail

inline FLConfig parse_config(const nlohmann::json& j) {
  using namespace config_detail;
  FLConfig cfg;
  reject_unknown(j, "config",
                 {"algorithm", "federation", "optimizer", "personalization", "model", "data", "seed", "output"});
  read(j, "seed", cfg.master_seed, "config");

  require(j, "algorithm", "config");
  const json& alg = j.at("algorithm");
  if (alg.is_string()) {
    cfg.algorithm.kind = algorithm_from_string(alg.get<std::string>());
  } else {
    reject_unknown(alg, "algorithm", {"kind", "partition", "ft_epochs", "ft_lr"});
    require(alg, "kind", "algorithm");
    cfg.algorithm.kind = algorithm_from_string(alg.at("kind").get<std::string>());
    if (alg.contains("partition")) cfg.algorithm.partition = parse_partition(alg.at("partition"), cfg.master_seed);
    if (alg.contains("ft_epochs")) {
      std::size_t e = 0;
      read_size(alg, "ft_epochs", e, "algorithm");
      cfg.algorithm.ft_epochs = e;
    }
    if (alg.contains("ft_lr")) {
      double lr = 0.0;
      read(alg, "ft_lr", lr, "algorithm");
      cfg.algorithm.ft_lr = lr;
    }
  }

  require(j, "federation", "config");
  const json& fed = j.at("federation");
  reject_unknown(fed, "federation", {"n_clients", "rounds", "local_epochs", "batch_size", "tau", "threads"});
  require(fed, "n_clients", "federation");
  require(fed, "rounds", "federation");
  read_size(fed, "n_clients", cfg.n_clients, "federation");
  read_size(fed, "rounds", cfg.rounds, "federation");
  read_size(fed, "local_epochs", cfg.local_epochs, "federation");
  read_size(fed, "batch_size", cfg.batch_size, "federation");
  read_size(fed, "tau", cfg.tau, "federation");
  read_size(fed, "threads", cfg.threads, "federation");

  if (j.contains("optimizer")) {
    const json& opt = j.at("optimizer");
    reject_unknown(opt, "optimizer", {"gamma_u", "gamma_v", "momentum"});
    read(opt, "gamma_u", cfg.gamma_u, "optimizer");
    read(opt, "gamma_v", cfg.gamma_v, "optimizer");
    read(opt, "momentum", cfg.momentum, "optimizer");
  }
  if (j.contains("personalization")) {
    const json& per = j.at("personalization");
    reject_unknown(per, "personalization", {"p", "alpha"});
    read(per, "p", cfg.p, "personalization");
    read(per, "alpha", cfg.alpha, "personalization");
  }
  if (j.contains("model")) {
    const json& model = j.at("model");
    reject_unknown(model, "model", {"hidden"});
    read(model, "hidden", cfg.hidden, "model");
  }
  if (j.contains("data")) {
    const json& data = j.at("data");
    reject_unknown(data, "data",
                   {"source", "csv_path", "classes", "input_dim", "n_per_class", "spread", "feature_shift", "shard",
                    "train_size", "test_size"});
    std::string source = "blobs";
    read(data, "source", source, "data");
    if (source == "blobs") cfg.data.source = DataSource::blobs;
    else if (source == "csv") cfg.data.source = DataSource::csv;
    else throw ConfigError("data.source must be 'blobs' or 'csv'");
    read(data, "csv_path", cfg.data.csv_path, "data");
    read_size(data, "classes", cfg.data.classes, "data");
    read_size(data, "input_dim", cfg.data.input_dim, "data");
    read_size(data, "n_per_class", cfg.data.n_per_class, "data");
    read(data, "spread", cfg.data.spread, "data");
    read(data, "feature_shift", cfg.data.feature_shift, "data");
    read_size(data, "shard", cfg.data.shard, "data");
    read_size(data, "train_size", cfg.data.train_size, "data");
    read_size(data, "test_size", cfg.data.test_size, "data");
  }
  if (j.contains("output")) {
    const json& out = j.at("output");
    reject_unknown(out, "output", {"dir", "snapshot_interval"});
    read(out, "dir", cfg.out_dir, "output");
    read_size(out, "snapshot_interval", cfg.snapshot_interval, "output");
  }
  cfg.validate();
  return cfg;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline FLConfig load_config(const std::string& path) { return parse_config(read_json_file(path)); }

}  // namespace fedselect
