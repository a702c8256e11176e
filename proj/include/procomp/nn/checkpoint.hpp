#pragma once
// Versioned checkpoint container: named float32 arrays plus a JSON metadata
// blob. Byte layout is stable across save/load; not meant for interchange
// beyond this project (grids also export to a flat binary for that).

#include <string>
#include <vector>

#include <json.hpp>

#include "procomp/core/tensor.hpp"

namespace procomp::nn {

struct Checkpoint {
  nlohmann::json meta;

  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
  };
  std::vector<Entry> entries;

  void add(const std::string& name, const std::vector<int>& shape,
           const float* data, size_t n);
  void add(const std::string& name, const TensorF& t) {
    add(name, t.shape, t.ptr(), t.numel());
  }
  void add_param(const Param<float>& p) { add(p.name, p.value); }

  const Entry* find(const std::string& name) const;
  const Entry& require(const std::string& name) const;  // throws when missing
  void load_into(const std::string& name, TensorF& t) const;
  void load_param(Param<float>& p) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace procomp::nn
