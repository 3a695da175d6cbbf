#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fsmix/tensor.hpp"
#include "json.hpp"

namespace fsmix {

// Single-file archive: a JSON manifest followed by named double arrays.
// Doubles are stored raw (little-endian), so save/load round-trips are
// bit-exact.
struct Archive {
  nlohmann::json manifest;
  std::vector<std::pair<std::string, Tensor>> arrays;

  void add(const std::string& name, Tensor t) { arrays.emplace_back(name, std::move(t)); }
  bool has(const std::string& name) const;
  const Tensor& get(const std::string& name) const;

  void save(const std::string& path) const;
  static Archive load(const std::string& path);
};

}  // namespace fsmix
