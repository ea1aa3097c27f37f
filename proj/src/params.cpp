#include "textsr/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace textsr {

namespace {

void write_u16(std::ostream& o, uint16_t v) {
  uint8_t b[2] = {static_cast<uint8_t>(v & 0xff), static_cast<uint8_t>(v >> 8)};
  o.write(reinterpret_cast<const char*>(b), 2);
}

void write_u32(std::ostream& o, uint32_t v) {
  uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
  o.write(reinterpret_cast<const char*>(b), 4);
}

uint16_t read_u16(std::istream& in) {
  uint8_t b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t read_u32(std::istream& in) {
  uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_f64_le(std::ostream& o, const double* data, size_t n) {
  // Little-endian host assumed; asserted at startup in practice for x86.
  o.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 8));
}

}  // namespace

Tensor& ParameterStore::create(const std::string& name, std::vector<int> shape,
                               const std::function<double(Rng&)>& init, Rng& rng) {
  if (has(name)) throw std::invalid_argument("ParameterStore: duplicate name " + name);
  Entry e;
  e.value = Tensor(shape);
  for (double& x : e.value.v) x = init(rng);
  e.m1 = Tensor(shape);
  e.m2 = Tensor(shape);
  return index_.emplace(name, std::move(e)).first->second.value;
}

Tensor& ParameterStore::create_zeros(const std::string& name, std::vector<int> shape) {
  return create_const(name, std::move(shape), 0.0);
}

Tensor& ParameterStore::create_const(const std::string& name, std::vector<int> shape,
                                     double value) {
  if (has(name)) throw std::invalid_argument("ParameterStore: duplicate name " + name);
  Entry e;
  e.value = Tensor(shape, value);
  e.m1 = Tensor(shape);
  e.m2 = Tensor(shape);
  return index_.emplace(name, std::move(e)).first->second.value;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParameterStore: unknown name " + name);
  return it->second.value;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParameterStore: unknown name " + name);
  return it->second.value;
}

Tensor& ParameterStore::moment1(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParameterStore: unknown name " + name);
  return it->second.m1;
}

Tensor& ParameterStore::moment2(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParameterStore: unknown name " + name);
  return it->second.m2;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(index_.size());
  for (const auto& [k, _] : index_) out.push_back(k);
  return out;
}

std::vector<std::string> ParameterStore::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [k, _] : index_)
    if (k.rfind(prefix, 0) == 0) out.push_back(k);
  return out;
}

long long ParameterStore::total_params() const {
  long long n = 0;
  for (const auto& [_, e] : index_) n += e.value.numel();
  return n;
}

void ParameterStore::merge_from(const ParameterStore& other) {
  for (const auto& name : other.names()) {
    if (has(name)) {
      get(name) = other.get(name);
    } else {
      Entry e;
      e.value = other.get(name);
      e.m1 = Tensor(e.value.shape);
      e.m2 = Tensor(e.value.shape);
      index_.emplace(name, std::move(e));
    }
  }
}

void save_checkpoint(const ParameterStore& store, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write("DTSR", 4);
  write_u32(f, kCheckpointVersion);
  auto names = store.names();
  write_u32(f, static_cast<uint32_t>(names.size()));
  for (const auto& name : names) {
    const Tensor& t = store.get(name);
    if (name.size() > 0xffff) throw std::invalid_argument("save_checkpoint: name too long");
    write_u16(f, static_cast<uint16_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    f.put(static_cast<char>(1));  // dtype f64
    f.put(static_cast<char>(t.rank()));
    for (int d : t.shape) write_u32(f, static_cast<uint32_t>(d));
    write_f64_le(f, t.v.data(), t.v.size());
  }
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ParameterStore load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "DTSR", 4) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  uint32_t version = read_u32(f);
  if (version != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version");
  uint32_t count = read_u32(f);
  ParameterStore store;
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t nl = read_u16(f);
    std::string name(nl, '\0');
    f.read(name.data(), nl);
    int dtype = f.get();
    int rank = f.get();
    if (dtype != 0 && dtype != 1) throw std::runtime_error("load_checkpoint: bad dtype tag");
    std::vector<int> shape(rank);
    long long numel = 1;
    for (int d = 0; d < rank; ++d) {
      shape[d] = static_cast<int>(read_u32(f));
      numel *= shape[d];
    }
    Tensor t(shape);
    if (dtype == 1) {
      f.read(reinterpret_cast<char*>(t.v.data()), numel * 8);
    } else {
      std::vector<float> tmp(static_cast<size_t>(numel));
      f.read(reinterpret_cast<char*>(tmp.data()), numel * 4);
      for (long long k = 0; k < numel; ++k) t.v[k] = tmp[k];
    }
    if (!f) throw std::runtime_error("load_checkpoint: truncated file " + path);
    store.create_zeros(name, shape) = std::move(t);
  }
  return store;
}

void save_optimizer_state(ParameterStore& store, long long step, const std::string& path) {
  ParameterStore opt;
  for (const auto& name : store.names()) {
    opt.create_zeros(name + ".m1", store.get(name).shape) = store.moment1(name);
    opt.create_zeros(name + ".m2", store.get(name).shape) = store.moment2(name);
  }
  Tensor& s = opt.create_zeros("adam.step", {1});
  s.v[0] = static_cast<double>(step);
  save_checkpoint(opt, path);
}

long long load_optimizer_state(ParameterStore& store, const std::string& path) {
  ParameterStore opt = load_checkpoint(path);
  for (const auto& name : store.names()) {
    if (opt.has(name + ".m1")) store.moment1(name) = opt.get(name + ".m1");
    if (opt.has(name + ".m2")) store.moment2(name) = opt.get(name + ".m2");
  }
  return static_cast<long long>(opt.get("adam.step").v[0]);
}

void Adam::step(ParameterStore& store, const std::map<std::string, Tensor>& grads) {
  double norm2 = 0.0;
  for (const auto& [name, g] : grads)
    for (double x : g.v) norm2 += x * x;
  double scale = 1.0;
  if (cfg_.clip_norm > 0.0) {
    double norm = std::sqrt(norm2);
    if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
  }
  ++step_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (const auto& [name, g] : grads) {
    Tensor& p = store.get(name);
    Tensor& m1 = store.moment1(name);
    Tensor& m2 = store.moment2(name);
    require_same_shape(p, g, "Adam::step");
    for (size_t i = 0; i < p.v.size(); ++i) {
      double gi = g.v[i] * scale;
      m1.v[i] = cfg_.beta1 * m1.v[i] + (1.0 - cfg_.beta1) * gi;
      m2.v[i] = cfg_.beta2 * m2.v[i] + (1.0 - cfg_.beta2) * gi * gi;
      double mhat = m1.v[i] / bc1;
      double vhat = m2.v[i] / bc2;
      p.v[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

int Binder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  int id = g_.leaf(store_.get(name), trainable_);
  bound_.emplace(name, id);
  return id;
}

std::map<std::string, Tensor> Binder::collect_grads() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : bound_) {
    const Tensor* g = nullptr;
    try {
      g = &g_.grad_of(id);
    } catch (const std::logic_error&) {
      continue;  // parameter did not participate in the loss
    }
    out.emplace(name, *g);
  }
  return out;
}

}  // namespace textsr
