#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "textsr/autograd.hpp"
#include "textsr/rng.hpp"
#include "textsr/tensor.hpp"

namespace textsr {

// Named parameter tensors plus Adam moments. Serialized via the checkpoint
// format below (values only; optimizer state goes to a sidecar file).
class ParameterStore {
 public:
  Tensor& create(const std::string& name, std::vector<int> shape,
                 const std::function<double(Rng&)>& init, Rng& rng);
  Tensor& create_zeros(const std::string& name, std::vector<int> shape);
  Tensor& create_const(const std::string& name, std::vector<int> shape, double value);

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  Tensor& moment1(const std::string& name);
  Tensor& moment2(const std::string& name);

  std::vector<std::string> names() const;  // sorted
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  long long total_params() const;
  void merge_from(const ParameterStore& other);  // overwrite/add values

 private:
  struct Entry {
    Tensor value, m1, m2;
  };
  std::map<std::string, Entry> index_;
};

// Checkpoint format: magic "DTSR", version u32, tensor count u32, then per
// tensor: name length u16 + UTF-8 name, dtype u8 (0=f32, 1=f64), rank u8,
// dims u32 each, raw little-endian data. Tensors are written sorted by name.
inline constexpr uint32_t kCheckpointVersion = 1;
void save_checkpoint(const ParameterStore& store, const std::string& path);
ParameterStore load_checkpoint(const std::string& path);

// Optimizer sidecar: same container holding <name>.m1 / <name>.m2 plus a
// scalar "adam.step".
void save_optimizer_state(ParameterStore& store, long long step, const std::string& path);
long long load_optimizer_state(ParameterStore& store, const std::string& path);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  long long step_count() const { return step_; }
  void set_step_count(long long s) { step_ = s; }

  // Applies one update from accumulated gradients. Gradients are clipped by
  // global norm over the update set before the moment update.
  void step(ParameterStore& store, const std::map<std::string, Tensor>& grads);

 private:
  AdamConfig cfg_;
  long long step_ = 0;
};

// Binds store parameters into a graph as leaves (copying values), remembers
// node ids, and collects gradients after backward.
class Binder {
 public:
  Binder(Graph& g, ParameterStore& store, bool trainable = true)
      : g_(g), store_(store), trainable_(trainable) {}

  int operator()(const std::string& name);
  std::map<std::string, Tensor> collect_grads() const;

 private:
  Graph& g_;
  ParameterStore& store_;
  bool trainable_;
  std::map<std::string, int> bound_;
};

}  // namespace textsr
