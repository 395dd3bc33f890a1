#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedselect/config.hpp"
#include "fedselect/config_io.hpp"
#include "fedselect/federation.hpp"
#include "fedselect/metrics.hpp"

namespace fedselect {

namespace fs = std::filesystem;

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline nlohmann::ordered_json report_to_json(const RoundReport& r) {
  nlohmann::ordered_json j;
  j["round"] = r.round;
  j["mean_accuracy"] = r.mean_accuracy;
  j["per_client_accuracy"] = r.per_client_accuracy;
  j["per_client_sparsity"] = r.per_client_sparsity;
  j["per_client_upload"] = r.per_client_upload;
  j["theta_g_checksum"] = r.theta_g_checksum;
  return j;
}

inline std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

inline void write_history_jsonl(const std::vector<RoundReport>& rounds, const fs::path& path) {
  auto out = open_output(path);
  for (const auto& r : rounds) out << report_to_json(r).dump() << '\n';
}

inline void write_matrix_csv(const Matrix& m, const fs::path& path) {
  auto out = open_output(path);
  for (const auto& row : m) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << format_double(row[j]);
    out << '\n';
  }
}

inline void write_summary_csv(const RunHistory& h, const fs::path& path) {
  auto out = open_output(path);
  out << "client_id,accuracy,sparsity\n";
  for (std::size_t k = 0; k < h.final_clients.size(); ++k)
    out << h.final_clients[k].id << ',' << format_double(h.final_accuracy[k]) << ','
        << format_double(personalized_fraction(h.final_clients[k].mask)) << '\n';
}

inline void write_curve_csv(const RunHistory& h, const fs::path& path) {
  auto out = open_output(path);
  out << "round,mean_accuracy\n";
  for (const auto& r : h.rounds) out << r.round << ',' << format_double(r.mean_accuracy) << '\n';
}

inline void write_snapshot(const RoundResult& r, const fs::path& path) {
  nlohmann::ordered_json j;
  j["round"] = r.report.round;
  j["theta_g"] = r.scratch.theta_g.values;
  j["m_g"] = to_rle(r.scratch.m_g);
  auto& clients = j["clients"] = nlohmann::ordered_json::array();
  for (const auto& c : r.clients) {
    nlohmann::ordered_json cj;
    cj["id"] = c.id;
    cj["mask"] = to_rle(c.mask);
    cj["theta"] = c.theta.values;
    clients.push_back(std::move(cj));
  }
  open_output(path) << j.dump() << '\n';
}

struct ExperimentOutputs {
  fs::path history, summary, iou, iou_final_layer, curve;
};

inline ExperimentOutputs output_paths(const fs::path& dir) {
  return {dir / "history.jsonl", dir / "summary.csv", dir / "iou.csv", dir / "iou_final_layer.csv", dir / "curve.csv"};
}

// Runs one configured experiment and writes history.jsonl, summary.csv,
// iou.csv (all parameters), iou_final_layer.csv and curve.csv into
// cfg.out_dir, plus snapshots/round_<t>.json every snapshot_interval rounds.
// IoU values are raw; an all-empty mask set yields a matrix of ones, which
// is flagged by `iou_degenerate`.
inline RunHistory run_experiment(const FLConfig& cfg) {
  cfg.validate();
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  if (cfg.snapshot_interval > 0) fs::create_directories(dir / "snapshots");

  RoundObserver observer;
  if (cfg.snapshot_interval > 0) {
    observer = [&](const RoundResult& r) {
      if ((r.report.round + 1) % cfg.snapshot_interval == 0)
        write_snapshot(r, dir / "snapshots" / ("round_" + std::to_string(r.report.round) + ".json"));
    };
  }
  RunHistory h = run_federation(cfg, observer);

  const ExperimentOutputs out = output_paths(dir);
  write_history_jsonl(h.rounds, out.history);
  write_summary_csv(h, out.summary);
  std::vector<BinaryMask> masks;
  for (const auto& c : h.final_clients) masks.push_back(c.mask);
  write_matrix_csv(iou_matrix(masks), out.iou);
  write_matrix_csv(iou_matrix(masks, h.arch, h.arch.layer_count() - 1), out.iou_final_layer);
  write_curve_csv(h, out.curve);
  return h;
}

// ---------------------------------------------------------------------------
// Grids

struct GridAxis {
  std::string key;
  std::vector<nlohmann::json> values;
};

struct GridRow {
  std::size_t cell = 0;
  std::vector<std::pair<std::string, nlohmann::json>> settings;
  double mean_accuracy = 0.0;
};

inline constexpr const char* kGridKeys[] = {"algorithm", "seed",  "alpha",  "p",         "train_size",
                                            "gamma_u",   "gamma_v", "rounds", "n_clients", "shard"};

// Sweep file: {"alpha": [0.05, 0.3], "p": [0.05, 0.2], ...}. Axes expand in
// the fixed order of kGridKeys regardless of their order in the file.
inline std::vector<GridAxis> parse_sweep(const nlohmann::json& j) {
  if (!j.is_object() || j.empty()) throw ConfigError("sweep must be a non-empty object of arrays");
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kGridKeys), std::end(kGridKeys), key) == std::end(kGridKeys))
      throw ConfigError("unsupported sweep key '" + key + "'");
    if (!value.is_array() || value.empty()) throw ConfigError("sweep key '" + key + "' needs a non-empty array");
  }
  std::vector<GridAxis> axes;
  for (const char* key : kGridKeys)
    if (j.contains(key)) axes.push_back({key, j.at(key).get<std::vector<nlohmann::json>>()});
  return axes;
}

// Applies one sweep setting. Switching the algorithm fills in what the new
// kind needs: fedavg_ft fine-tunes for local_epochs epochs, fixed_partition
// personalizes the output layer, random_partition uses fraction alpha.
inline void apply_setting(FLConfig& cfg, const std::string& key, const nlohmann::json& v) {
  try {
    if (key == "algorithm") {
      cfg.algorithm = AlgorithmSpec{algorithm_from_string(v.get<std::string>()), {}, {}, {}};
      if (cfg.algorithm.kind == AlgorithmKind::fedavg_ft) cfg.algorithm.ft_epochs = cfg.local_epochs;
      if (cfg.algorithm.kind == AlgorithmKind::fixed_partition) cfg.algorithm.partition = LayerPartition{-1};
    } else if (key == "seed") {
      cfg.master_seed = v.get<std::uint64_t>();
    } else if (key == "alpha") {
      cfg.alpha = v.get<double>();
    } else if (key == "p") {
      cfg.p = v.get<double>();
    } else if (key == "train_size") {
      cfg.data.train_size = v.get<std::size_t>();
    } else if (key == "gamma_u") {
      cfg.gamma_u = v.get<double>();
    } else if (key == "gamma_v") {
      cfg.gamma_v = v.get<double>();
    } else if (key == "rounds") {
      cfg.rounds = v.get<std::size_t>();
    } else if (key == "n_clients") {
      cfg.n_clients = v.get<std::size_t>();
    } else if (key == "shard") {
      cfg.data.shard = v.get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("sweep value for '" + key + "': " + e.what());
  }
}

inline void finalize_cell(FLConfig& cfg) {
  if (cfg.algorithm.kind == AlgorithmKind::random_partition && !cfg.algorithm.partition)
    cfg.algorithm.partition = RandomPartition{cfg.alpha, cfg.master_seed};
}

// Expands the sweep into cells (last axis fastest). Every cell keeps the
// base master seed unless "seed" is itself swept, so cells differ only in
// the swept settings.
inline std::vector<std::pair<FLConfig, GridRow>> expand_grid(const FLConfig& base, const std::vector<GridAxis>& axes) {
  std::vector<std::pair<FLConfig, GridRow>> cells;
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    FLConfig cfg = base;
    GridRow row;
    row.cell = cells.size();
    for (std::size_t a = 0; a < axes.size(); ++a) {
      apply_setting(cfg, axes[a].key, axes[a].values[idx[a]]);
      row.settings.emplace_back(axes[a].key, axes[a].values[idx[a]]);
    }
    finalize_cell(cfg);
    cfg.out_dir = (fs::path(base.out_dir) / ("cell_" + std::to_string(row.cell))).string();
    cfg.validate();
    cells.emplace_back(std::move(cfg), std::move(row));
    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++idx[a] < axes[a].values.size()) break;
      idx[a] = 0;
      if (a == 0) return cells;
    }
    if (axes.empty()) return cells;
  }
}

inline std::vector<GridRow> run_grid(const FLConfig& base, const std::vector<GridAxis>& axes) {
  std::vector<GridRow> rows;
  for (auto& [cfg, row] : expand_grid(base, axes)) {
    row.mean_accuracy = run_experiment(cfg).final_mean_accuracy();
    rows.push_back(std::move(row));
  }
  fs::create_directories(base.out_dir);
  auto out = open_output(fs::path(base.out_dir) / "grid.csv");
  out << "cell";
  for (const auto& axis : axes) out << ',' << axis.key;
  out << ",mean_accuracy\n";
  for (const auto& row : rows) {
    out << row.cell;
    for (const auto& [key, value] : row.settings)
      out << ',' << (value.is_string() ? value.get<std::string>() : value.dump());
    out << ',' << format_double(row.mean_accuracy) << '\n';
  }
  return rows;
}

}  // namespace fedselect
