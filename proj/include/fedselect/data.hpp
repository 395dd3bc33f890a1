#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "fedselect/errors.hpp"
#include "fedselect/model.hpp"
#include "fedselect/seed.hpp"

namespace fedselect {

struct Dataset {
  std::size_t input_dim = 0;
  std::size_t class_count = 0;
  std::vector<double> inputs;  // row-major, size() * input_dim
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const noexcept {
    return std::span<const double>(inputs).subspan(i * input_dim, input_dim);
  }

  void push_back(std::span<const double> x, int label) {
    inputs.insert(inputs.end(), x.begin(), x.end());
    labels.push_back(label);
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out{input_dim, class_count, {}, {}};
    out.inputs.reserve(indices.size() * input_dim);
    for (std::size_t i : indices) out.push_back(row(i), labels[i]);
    return out;
  }

  Batch as_batch() const { return Batch{input_dim, inputs, labels}; }

  std::vector<std::size_t> class_histogram() const {
    std::vector<std::size_t> h(class_count, 0);
    for (int y : labels) ++h[static_cast<std::size_t>(y)];
    return h;
  }

  bool operator==(const Dataset&) const = default;
};

// K isotropic Gaussian blobs. Class means are standard normal vectors; each
// sample is mean + spread * N(0, I). Samples are stored class by class.
inline Dataset synth_blobs(std::size_t classes, std::size_t input_dim, std::size_t n_per_class, double spread,
                           std::uint64_t seed) {
  if (classes < 2) throw ConfigError("synth_blobs needs at least 2 classes");
  if (input_dim == 0) throw ConfigError("synth_blobs needs input_dim >= 1");
  if (spread < 0.0) throw ConfigError("synth_blobs spread must be nonnegative");
  Rng rng = make_rng(seed, {kBlobStream});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> means(classes * input_dim);
  for (double& m : means) m = normal(rng);

  Dataset ds{input_dim, classes, {}, {}};
  ds.inputs.reserve(classes * n_per_class * input_dim);
  std::vector<double> x(input_dim);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t s = 0; s < n_per_class; ++s) {
      for (std::size_t j = 0; j < input_dim; ++j) x[j] = means[c * input_dim + j] + spread * normal(rng);
      ds.push_back(x, static_cast<int>(c));
    }
  }
  return ds;
}

struct PartitionSpec {
  std::size_t n_clients = 10;
  std::size_t shard = 2;  // classes per client
  std::size_t train_size = 100;
  std::size_t test_size = 100;
  std::uint64_t seed = 0;
};

struct ClientData {
  Dataset train;
  Dataset test;
  std::vector<int> classes;
  // Row indices into the source pool, kept for disjointness checks.
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

// Class slots are dealt round-robin: slot j carries class j mod K and client
// k owns slots [k*s, (k+1)*s). With N*s = 2K every class lands on exactly two
// clients. Each class's pool is shuffled once and handed out to its holders
// in client order, train quota first, so no row is used twice.
inline std::vector<int> shard_classes(std::size_t client, std::size_t shard, std::size_t classes) {
  std::vector<int> out;
  for (std::size_t j = 0; j < shard; ++j) out.push_back(static_cast<int>((client * shard + j) % classes));
  return out;
}

inline std::vector<ClientData> shard_partition(const Dataset& pool, const PartitionSpec& spec) {
  const std::size_t K = pool.class_count;
  if (spec.n_clients == 0) throw ConfigError("partition needs at least one client");
  if (spec.shard == 0 || spec.shard > K)
    throw ConfigError("shard s=" + std::to_string(spec.shard) + " must lie in [1, " + std::to_string(K) + "]");

  std::vector<std::vector<std::size_t>> rows_by_class(K);
  for (std::size_t i = 0; i < pool.size(); ++i) rows_by_class[static_cast<std::size_t>(pool.labels[i])].push_back(i);
  for (std::size_t c = 0; c < K; ++c) {
    Rng rng = make_rng(spec.seed, {kPartitionStream, c});
    std::shuffle(rows_by_class[c].begin(), rows_by_class[c].end(), rng);
  }

  auto quota = [&](std::size_t total, std::size_t slot) { return total / spec.shard + (slot < total % spec.shard); };

  std::vector<ClientData> clients(spec.n_clients);
  std::vector<std::size_t> cursor(K, 0);
  for (std::size_t k = 0; k < spec.n_clients; ++k) {
    ClientData& cd = clients[k];
    cd.classes = shard_classes(k, spec.shard, K);
    for (std::size_t slot = 0; slot < spec.shard; ++slot) {
      const auto c = static_cast<std::size_t>(cd.classes[slot]);
      const std::size_t n_train = quota(spec.train_size, slot);
      const std::size_t n_test = quota(spec.test_size, slot);
      if (cursor[c] + n_train + n_test > rows_by_class[c].size())
        throw ConfigError("class " + std::to_string(c) + " has " + std::to_string(rows_by_class[c].size()) +
                          " samples, not enough for its clients' train/test quotas");
      for (std::size_t i = 0; i < n_train; ++i) cd.train_rows.push_back(rows_by_class[c][cursor[c]++]);
      for (std::size_t i = 0; i < n_test; ++i) cd.test_rows.push_back(rows_by_class[c][cursor[c]++]);
    }
    cd.train = pool.subset(cd.train_rows);
    cd.test = pool.subset(cd.test_rows);
  }
  return clients;
}

// Per-client covariate shift: x -> A x + b + noise with
// A = I + (severity/5) * G / sqrt(dim), b = (severity/5) * N(0, I) and noise
// std 0.1 * severity/5. The transform is drawn from (seed, client_id).
inline Dataset apply_feature_shift(const Dataset& ds, std::size_t client_id, double severity, std::uint64_t seed) {
  if (severity < 0.0) throw ConfigError("feature-shift severity must be nonnegative");
  if (severity == 0.0) return ds;
  const std::size_t dim = ds.input_dim;
  const double scale = severity / 5.0;
  Rng rng = make_rng(seed, {kShiftStream, client_id});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> a(dim * dim), b(dim);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j)
      a[i * dim + j] = (i == j ? 1.0 : 0.0) + scale * normal(rng) / std::sqrt(static_cast<double>(dim));
  for (double& v : b) v = scale * normal(rng);

  Dataset out = ds;
  for (std::size_t s = 0; s < ds.size(); ++s) {
    const auto x = ds.row(s);
    for (std::size_t i = 0; i < dim; ++i) {
      double acc = b[i];
      for (std::size_t j = 0; j < dim; ++j) acc += a[i * dim + j] * x[j];
      out.inputs[s * dim + i] = acc + 0.1 * scale * normal(rng);
    }
  }
  return out;
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    std::string_view field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    out.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

}  // namespace detail

// Reads `f0,...,f{m-1},label`. Labels are integers; they are re-indexed to
// 0..K-1 in ascending order of their original values.
inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("missing header row", 1);
  ++line_no;
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header.back() != "label")
    throw ParseError("header must be f0,...,f{m-1},label with the label column last", line_no);
  const std::size_t dim = header.size() - 1;

  Dataset ds{dim, 0, {}, {}};
  std::vector<long long> raw_labels;
  std::vector<double> x(dim);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != dim + 1)
      throw ParseError("expected " + std::to_string(dim + 1) + " fields, found " + std::to_string(fields.size()),
                       line_no);
    for (std::size_t j = 0; j < dim; ++j)
      if (!detail::parse_number(fields[j], x[j]) || !std::isfinite(x[j]))
        throw ParseError("field " + std::to_string(j) + " is not a finite number: '" + std::string(fields[j]) + "'",
                         line_no);
    long long label = 0;
    if (!detail::parse_number(fields[dim], label))
      throw ParseError("label is not an integer: '" + std::string(fields[dim]) + "'", line_no);
    ds.inputs.insert(ds.inputs.end(), x.begin(), x.end());
    raw_labels.push_back(label);
  }
  std::map<long long, int> dense;
  for (long long l : raw_labels) dense.emplace(l, 0);
  int next = 0;
  for (auto& [raw, idx] : dense) idx = next++;
  for (long long l : raw_labels) ds.labels.push_back(dense[l]);
  ds.class_count = dense.size();
  return ds;
}

inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  for (std::size_t j = 0; j < ds.input_dim; ++j) out << 'f' << j << ',';
  out << "label\n";
  char buf[64];
  for (std::size_t s = 0; s < ds.size(); ++s) {
    for (double v : ds.row(s)) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      out.write(buf, res.ptr - buf);
      out << ',';
    }
    out << ds.labels[s] << '\n';
  }
}

// Seeded shuffle, then contiguous batches; the last one may be short.
inline std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (ds.size() == 0) throw InputError("cannot batch an empty dataset");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t stop = std::min(order.size(), start + batch_size);
    Batch b{ds.input_dim, {}, {}};
    b.inputs.reserve((stop - start) * ds.input_dim);
    for (std::size_t i = start; i < stop; ++i) {
      const auto r = ds.row(order[i]);
      b.inputs.insert(b.inputs.end(), r.begin(), r.end());
      b.labels.push_back(ds.labels[order[i]]);
    }
    out.push_back(std::move(b));
  }
  return out;
}

// Batches for one local epoch of one client in one round. Every algorithm
// draws its order from here, so equal seeds give equal batch sequences.
inline std::vector<Batch> epoch_batches(const Dataset& ds, std::size_t batch_size, std::uint64_t master_seed,
                                        std::size_t client, std::size_t round, std::size_t epoch) {
  Rng rng = make_rng(master_seed, {kBatchStream, client, round, epoch});
  return batches(ds, batch_size, rng);
}

}  // namespace fedselect
