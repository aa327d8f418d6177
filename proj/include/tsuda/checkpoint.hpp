// ============================================================================
// checkpoint.hpp - named-tensor container with a JSON sidecar
//
// <stem>.tensors  binary: magic, count, then per tensor
//                 name_len u32 | name | rows u32 | cols u32 | trainable u8 |
//                 rows*cols float64 little-endian (row-major)
// <stem>.json     arbitrary metadata the caller wants alongside
// ============================================================================
#pragma once

#include "tsuda/nets.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

namespace tsuda {

inline void save_params(const std::filesystem::path& stem, const ParamSet& ps,
                        const nlohmann::json& sidecar = {}) {
  std::ofstream out(stem.string() + ".tensors", std::ios::binary);
  if (!out) throw std::runtime_error("save_params: cannot open " + stem.string());
  const char magic[8] = {'N', 'T', 'E', 'N', 'S', 'O', 'R', '1'};
  out.write(magic, 8);
  const std::uint32_t count = static_cast<std::uint32_t>(ps.entries.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& e : ps.entries) {
    const std::uint32_t nl = static_cast<std::uint32_t>(e.name.size());
    out.write(reinterpret_cast<const char*>(&nl), 4);
    out.write(e.name.data(), nl);
    const std::uint32_t r = static_cast<std::uint32_t>(e.value.rows());
    const std::uint32_t c = static_cast<std::uint32_t>(e.value.cols());
    out.write(reinterpret_cast<const char*>(&r), 4);
    out.write(reinterpret_cast<const char*>(&c), 4);
    const std::uint8_t tr = e.trainable ? 1 : 0;
    out.write(reinterpret_cast<const char*>(&tr), 1);
    for (std::uint32_t i = 0; i < r; ++i)
      for (std::uint32_t j = 0; j < c; ++j) {
        const double v = e.value(i, j);
        out.write(reinterpret_cast<const char*>(&v), 8);
      }
  }
  std::ofstream meta(stem.string() + ".json");
  meta << sidecar.dump(2) << "\n";
}

inline ParamSet load_params(const std::filesystem::path& stem,
                            nlohmann::json* sidecar = nullptr) {
  std::ifstream in(stem.string() + ".tensors", std::ios::binary);
  if (!in) throw std::runtime_error("load_params: cannot open " + stem.string());
  char magic[8];
  in.read(magic, 8);
  if (std::memcmp(magic, "NTENSOR1", 8) != 0)
    throw std::runtime_error("load_params: bad magic in " + stem.string());
  std::uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), 4);
  ParamSet ps;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::uint32_t nl = 0;
    in.read(reinterpret_cast<char*>(&nl), 4);
    std::string name(nl, '\0');
    in.read(name.data(), nl);
    std::uint32_t r = 0, c = 0;
    std::uint8_t tr = 1;
    in.read(reinterpret_cast<char*>(&r), 4);
    in.read(reinterpret_cast<char*>(&c), 4);
    in.read(reinterpret_cast<char*>(&tr), 1);
    Mat m(r, c);
    for (std::uint32_t i = 0; i < r; ++i)
      for (std::uint32_t j = 0; j < c; ++j) {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        m(i, j) = v;
      }
    if (!in) throw std::runtime_error("load_params: truncated " + stem.string());
    ps.add(name, std::move(m), tr != 0);
  }
  if (sidecar) {
    std::ifstream meta(stem.string() + ".json");
    if (meta) meta >> *sidecar;
  }
  return ps;
}

}  // namespace tsuda
