// ============================================================================
// dataset_io.hpp - domain directory format
//
// meta.json    {domain_id, K, C, T, n, chronological}
// data.f32     row-major little-endian float32, shape [n, C, T]
// labels.i64   little-endian int64, shape [n]
//
// Pre-split variants train.* / val.* / test.* (each with its own meta) are
// loaded verbatim; otherwise the split policy is applied at load time.
// ============================================================================
#pragma once

#include "tsuda/data.hpp"
#include "tsuda/splits.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>

namespace tsuda {

namespace detail {

struct DomainMeta {
  std::string domain_id;
  int K = 0, C = 0, T = 0, n = 0;
  bool chronological = false;
};

inline DomainMeta read_meta(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error(file.string() + ": cannot open");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(file.string() + ": malformed header: " + e.what());
  }
  DomainMeta m;
  try {
    m.domain_id = j.at("domain_id").get<std::string>();
    m.K = j.at("K").get<int>();
    m.C = j.at("C").get<int>();
    m.T = j.at("T").get<int>();
    m.n = j.at("n").get<int>();
    m.chronological = j.value("chronological", false);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(file.string() + ": malformed header: " + e.what());
  }
  if (m.K < 1 || m.C < 1 || m.T < 1 || m.n < 0)
    throw std::runtime_error(file.string() + ": malformed header: non-positive dimension");
  return m;
}

inline std::vector<char> read_exact(const std::filesystem::path& file,
                                    std::size_t expected_bytes) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error(file.string() + ": cannot open");
  in.seekg(0, std::ios::end);
  const auto found = static_cast<std::size_t>(in.tellg());
  if (found != expected_bytes) {
    throw std::runtime_error(file.string() + ": expected " + std::to_string(expected_bytes) +
                             " bytes, found " + std::to_string(found) +
                             " (mismatch at byte offset " +
                             std::to_string(std::min(found, expected_bytes)) + ")");
  }
  in.seekg(0, std::ios::beg);
  std::vector<char> buf(expected_bytes);
  in.read(buf.data(), static_cast<std::streamsize>(expected_bytes));
  if (!in) throw std::runtime_error(file.string() + ": short read");
  return buf;
}

inline TimeSeriesBatch read_batch(const std::filesystem::path& dir, const std::string& stem,
                                  const DomainMeta& m) {
  TimeSeriesBatch b;
  b.channels = m.C;
  b.steps = m.T;
  const auto data_file = dir / (stem + "data.f32");
  const auto label_file = dir / (stem + "labels.i64");
  auto raw = read_exact(data_file, static_cast<std::size_t>(m.n) * m.C * m.T * 4);
  b.values = Mat::Zero(m.n, m.C * m.T);
  const float* f = reinterpret_cast<const float*>(raw.data());
  for (int i = 0; i < m.n; ++i)
    for (int j = 0; j < m.C * m.T; ++j) b.values(i, j) = static_cast<double>(f[static_cast<std::size_t>(i) * m.C * m.T + j]);
  auto lraw = read_exact(label_file, static_cast<std::size_t>(m.n) * 8);
  const std::int64_t* L = reinterpret_cast<const std::int64_t*>(lraw.data());
  std::vector<int> labels(m.n);
  for (int i = 0; i < m.n; ++i) {
    if (L[i] < 0 || L[i] >= m.K)
      throw std::runtime_error(label_file.string() + ": label " + std::to_string(L[i]) +
                               " out of range [0," + std::to_string(m.K) + ") at index " +
                               std::to_string(i) + " (byte offset " + std::to_string(i * 8) +
                               ")");
    labels[i] = static_cast<int>(L[i]);
  }
  b.labels = std::move(labels);
  return b;
}

inline void write_batch(const std::filesystem::path& dir, const std::string& stem,
                        const TimeSeriesBatch& b) {
  {
    std::ofstream out(dir / (stem + "data.f32"), std::ios::binary);
    for (int i = 0; i < b.n(); ++i)
      for (int j = 0; j < b.channels * b.steps; ++j) {
        const float f = static_cast<float>(b.values(i, j));
        out.write(reinterpret_cast<const char*>(&f), 4);
      }
  }
  {
    std::ofstream out(dir / (stem + "labels.i64"), std::ios::binary);
    for (int i = 0; i < b.n(); ++i) {
      const std::int64_t v = b.labels ? (*b.labels)[i] : -1;
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
  }
}

}  // namespace detail

inline DomainDataset load_domain(const std::filesystem::path& dir,
                                 const SplitPolicy& policy = {},
                                 SplitRole role = SplitRole::Source) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw std::runtime_error(dir.string() + ": not a domain directory");
  DomainDataset d;
  const bool presplit = fs::exists(dir / "train.meta.json");
  if (presplit) {
    const char* stems[] = {"train.", "val.", "test."};
    TimeSeriesBatch* dests[] = {&d.train, &d.val, &d.test};
    for (int s = 0; s < 3; ++s) {
      auto m = detail::read_meta(dir / (std::string(stems[s]) + "meta.json"));
      *dests[s] = detail::read_batch(dir, stems[s], m);
      if (s == 0) {
        d.domain_id = m.domain_id;
        d.num_classes = m.K;
        d.chronological = m.chronological;
      } else if (m.K != d.num_classes) {
        throw std::runtime_error(dir.string() + ": split metas disagree on K");
      }
    }
  } else {
    auto m = detail::read_meta(dir / "meta.json");
    d.domain_id = m.domain_id;
    d.num_classes = m.K;
    d.chronological = m.chronological;
    auto all = detail::read_batch(dir, "", m);
    SplitPolicy p = policy;
    p.causal = policy.causal && m.chronological;
    auto sp = make_splits(all, p, role);
    d.train = std::move(sp.train);
    d.val = std::move(sp.val);
    d.test = std::move(sp.test);
  }
  for (const auto* b : {&d.train, &d.val, &d.test}) {
    auto issues = validate_batch(*b, d.num_classes);
    if (!issues.empty())
      throw std::runtime_error(dir.string() + ": invalid batch: " + issues.front());
  }
  return d;
}

inline void save_domain(const std::filesystem::path& dir, const DomainDataset& d,
                        bool presplit = true) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto meta_json = [&](const TimeSeriesBatch& b) {
    return nlohmann::json{{"domain_id", d.domain_id}, {"K", d.num_classes},
                          {"C", b.channels},          {"T", b.steps},
                          {"n", b.n()},               {"chronological", d.chronological}};
  };
  if (presplit) {
    const char* stems[] = {"train.", "val.", "test."};
    const TimeSeriesBatch* srcs[] = {&d.train, &d.val, &d.test};
    for (int s = 0; s < 3; ++s) {
      std::ofstream out(dir / (std::string(stems[s]) + "meta.json"));
      out << meta_json(*srcs[s]).dump(2) << "\n";
      detail::write_batch(dir, stems[s], *srcs[s]);
    }
  } else {
    TimeSeriesBatch all;
    all.channels = d.train.channels;
    all.steps = d.train.steps;
    const int n = d.train.n() + d.val.n() + d.test.n();
    all.values = Mat::Zero(n, all.channels * all.steps);
    std::vector<int> labels;
    int row = 0;
    for (const auto* b : {&d.train, &d.val, &d.test}) {
      for (int i = 0; i < b->n(); ++i) {
        all.values.row(row++) = b->values.row(i);
        if (b->labels) labels.push_back((*b->labels)[i]);
      }
    }
    all.labels = std::move(labels);
    std::ofstream out(dir / "meta.json");
    out << meta_json(all).dump(2) << "\n";
    detail::write_batch(dir, "", all);
  }
}

}  // namespace tsuda
