#include "procomp/nn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace procomp::nn {

namespace {
constexpr char kMagic[4] = {'P', 'C', 'P', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
}  // namespace

void Checkpoint::add(const std::string& name, const std::vector<int>& shape,
                     const float* data, size_t n) {
  if (find(name)) throw std::runtime_error("checkpoint: duplicate entry " + name);
  Entry e;
  e.name = name;
  e.shape = shape;
  e.data.assign(data, data + n);
  entries.push_back(std::move(e));
}

const Checkpoint::Entry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

const Checkpoint::Entry& Checkpoint::require(const std::string& name) const {
  const Entry* e = find(name);
  if (!e) throw std::runtime_error("checkpoint: missing entry " + name);
  return *e;
}

void Checkpoint::load_into(const std::string& name, TensorF& t) const {
  const Entry& e = require(name);
  t.shape = e.shape;
  t.data = e.data;
}

void Checkpoint::load_param(Param<float>& p) const {
  const Entry& e = require(p.name);
  if (Tensor<float>::count(e.shape) != p.value.numel())
    throw std::runtime_error("checkpoint: shape mismatch for " + p.name);
  p.value.shape = e.shape;
  p.value.data = e.data;
  p.grad.resize(e.shape);
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  os.write(kMagic, 4);
  put(os, kVersion);
  std::string m = meta.dump();
  put(os, (uint64_t)m.size());
  os.write(m.data(), (std::streamsize)m.size());
  put(os, (uint32_t)entries.size());
  for (const auto& e : entries) {
    put(os, (uint16_t)e.name.size());
    os.write(e.name.data(), (std::streamsize)e.name.size());
    put(os, (uint8_t)e.shape.size());
    for (int d : e.shape) put(os, (int32_t)d);
    put(os, (uint64_t)e.data.size());
    os.write(reinterpret_cast<const char*>(e.data.data()),
             (std::streamsize)(e.data.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  uint32_t ver = get<uint32_t>(is);
  if (ver != kVersion)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  Checkpoint ck;
  uint64_t mlen = get<uint64_t>(is);
  std::string m(mlen, '\0');
  is.read(m.data(), (std::streamsize)mlen);
  ck.meta = nlohmann::json::parse(m);
  uint32_t n = get<uint32_t>(is);
  for (uint32_t i = 0; i < n; ++i) {
    Entry e;
    uint16_t nl = get<uint16_t>(is);
    e.name.resize(nl);
    is.read(e.name.data(), nl);
    uint8_t nd = get<uint8_t>(is);
    for (int d = 0; d < nd; ++d) e.shape.push_back(get<int32_t>(is));
    uint64_t cnt = get<uint64_t>(is);
    e.data.resize(cnt);
    is.read(reinterpret_cast<char*>(e.data.data()),
            (std::streamsize)(cnt * sizeof(float)));
    ck.entries.push_back(std::move(e));
  }
  if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
  return ck;
}

}  // namespace procomp::nn
