#pragma once

#include <cstdint>
#include <vector>

#include "util.hpp"

namespace npudse::nn {

struct Dataset {
  long dim = 0;
  int classes = 0;
  std::vector<std::vector<float>> x;
  std::vector<int> y;
  size_t size() const { return x.size(); }
};

// Seeded Gaussian clusters: class means drawn from `task_seed` (so train and
// test splits share a distribution), samples at `spread` standard deviation.
// task_seed of UINT64_MAX reuses `seed`.
Dataset make_synthetic(uint64_t seed, size_t n, long dim = 16, int classes = 4,
                       double spread = 1.0, uint64_t task_seed = UINT64_MAX);

// Two-layer MLP with relu hidden activation; trained in float, quantized
// for deployment-side experiments.
struct TinyNet {
  std::vector<long> dims;                // e.g. {16, 16, 4}
  std::vector<std::vector<float>> W;     // per layer, out x in row-major
  std::vector<std::vector<float>> bias;  // per layer

  size_t layers() const { return W.size(); }
  long weight_count() const;

  static TinyNet init(const std::vector<long>& dims, uint64_t seed);

  // forward pass; if acts != nullptr it receives post-activation values of
  // every layer (hidden relu outputs, then logits)
  std::vector<float> forward(const std::vector<float>& x,
                             std::vector<std::vector<float>>* acts = nullptr) const;
  int predict(const std::vector<float>& x) const;
  double accuracy(const Dataset& d) const;
  double loss(const Dataset& d) const;  // mean softmax cross-entropy
};

// Analytic gradient of the mean cross-entropy loss over `d` w.r.t. all
// weights and biases, same layout as TinyNet::W / bias.
struct Gradients {
  std::vector<std::vector<float>> dW;
  std::vector<std::vector<float>> db;
};
Gradients backward(const TinyNet& net, const Dataset& d);

// Seeded minibatch SGD. `mask`, when non-null, has one 0/1 entry per weight
// (same layout as W); masked weights are held at zero with zero gradient.
void train_sgd(TinyNet& net, const Dataset& d, int epochs, float lr,
               size_t batch, uint64_t seed,
               const std::vector<std::vector<float>>* mask = nullptr);

// Symmetric fixed-point with per-tensor power-of-two scale.
struct QuantizedTensor {
  std::vector<int8_t> q;
  float scale = 1.0f;
  int width = 8;
};

QuantizedTensor quantize(const std::vector<float>& w, int width = 8);

struct QuantizedNet {
  std::vector<long> dims;
  std::vector<QuantizedTensor> W;
  std::vector<std::vector<float>> bias;

  long weight_count() const;
  // weight words in a single flat address space across layers
  int8_t get_word(long word) const;
  void set_word(long word, int8_t v);

  std::vector<float> forward(const std::vector<float>& x,
                             std::vector<std::vector<float>>* acts = nullptr) const;
  int predict(const std::vector<float>& x) const;
  double accuracy(const Dataset& d) const;
};

QuantizedNet quantize_net(const TinyNet& net, int width = 8);

}  // namespace npudse::nn
