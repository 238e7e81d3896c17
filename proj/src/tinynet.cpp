#include "npudse/tinynet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace npudse::nn {

Dataset make_synthetic(uint64_t seed, size_t n, long dim, int classes,
                       double spread, uint64_t task_seed) {
  if (dim <= 0 || classes <= 0) throw std::invalid_argument("bad dataset shape");
  if (task_seed == UINT64_MAX) task_seed = seed;
  Rng rng(seed);
  // class centers: deterministic unit-ish directions scaled up so clusters
  // are separable at spread ~1
  std::vector<std::vector<float>> centers(classes, std::vector<float>(dim, 0.0f));
  Rng crng(Rng::derive(task_seed, 1));
  for (int c = 0; c < classes; ++c)
    for (long j = 0; j < dim; ++j)
      centers[c][j] = static_cast<float>(3.0 * crng.next_gaussian());

  Dataset d;
  d.dim = dim;
  d.classes = classes;
  d.x.reserve(n);
  d.y.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    int c = static_cast<int>(rng.next_below(static_cast<uint64_t>(classes)));
    std::vector<float> v(dim);
    for (long j = 0; j < dim; ++j)
      v[j] = centers[c][j] + static_cast<float>(spread * rng.next_gaussian());
    d.x.push_back(std::move(v));
    d.y.push_back(c);
  }
  return d;
}

long TinyNet::weight_count() const {
  long n = 0;
  for (const auto& w : W) n += static_cast<long>(w.size());
  return n;
}

TinyNet TinyNet::init(const std::vector<long>& dims, uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("net needs >= 2 dims");
  TinyNet net;
  net.dims = dims;
  Rng rng(seed);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    long in = dims[l], out = dims[l + 1];
    double s = std::sqrt(2.0 / static_cast<double>(in));
    std::vector<float> w(static_cast<size_t>(in * out));
    for (auto& v : w) v = static_cast<float>(s * rng.next_gaussian());
    net.W.push_back(std::move(w));
    net.bias.emplace_back(static_cast<size_t>(out), 0.0f);
  }
  return net;
}

std::vector<float> TinyNet::forward(const std::vector<float>& x,
                                    std::vector<std::vector<float>>* acts) const {
  if (acts) acts->clear();
  std::vector<float> cur = x;
  for (size_t l = 0; l < W.size(); ++l) {
    long in = dims[l], out = dims[l + 1];
    std::vector<float> nxt(static_cast<size_t>(out));
    for (long f = 0; f < out; ++f) {
      float acc = bias[l][static_cast<size_t>(f)];
      const float* row = W[l].data() + f * in;
      for (long i = 0; i < in; ++i) acc += row[i] * cur[static_cast<size_t>(i)];
      nxt[static_cast<size_t>(f)] = acc;
    }
    if (l + 1 < W.size())
      for (auto& v : nxt) v = std::max(v, 0.0f);
    if (acts) acts->push_back(nxt);
    cur = std::move(nxt);
  }
  return cur;
}

namespace {

int argmax(const std::vector<float>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<double> softmax(const std::vector<float>& z) {
  double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0;
  for (size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(static_cast<double>(z[i]) - m);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

template <class Net>
double net_accuracy(const Net& net, const Dataset& d) {
  if (d.size() == 0) return 0.0;
  size_t hit = 0;
  for (size_t i = 0; i < d.size(); ++i)
    if (net.predict(d.x[i]) == d.y[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(d.size());
}

}  // namespace

int TinyNet::predict(const std::vector<float>& x) const { return argmax(forward(x)); }

double TinyNet::accuracy(const Dataset& d) const { return net_accuracy(*this, d); }

double TinyNet::loss(const Dataset& d) const {
  if (d.size() == 0) return 0.0;
  double total = 0;
  for (size_t i = 0; i < d.size(); ++i) {
    auto p = softmax(forward(d.x[i]));
    total += -std::log(std::max(p[static_cast<size_t>(d.y[i])], 1e-30));
  }
  return total / static_cast<double>(d.size());
}

Gradients backward(const TinyNet& net, const Dataset& d) {
  Gradients g;
  for (size_t l = 0; l < net.W.size(); ++l) {
    g.dW.emplace_back(net.W[l].size(), 0.0f);
    g.db.emplace_back(net.bias[l].size(), 0.0f);
  }
  if (d.size() == 0) return g;
  const double inv_n = 1.0 / static_cast<double>(d.size());
  for (size_t s = 0; s < d.size(); ++s) {
    std::vector<std::vector<float>> acts;
    auto logits = net.forward(d.x[s], &acts);
    auto p = softmax(logits);
    // delta at output
    std::vector<float> delta(p.size());
    for (size_t c = 0; c < p.size(); ++c)
      delta[c] = static_cast<float>((p[c] - (static_cast<int>(c) == d.y[s] ? 1.0 : 0.0)) * inv_n);
    for (size_t li = net.W.size(); li-- > 0;) {
      long in = net.dims[li], out = net.dims[li + 1];
      const std::vector<float>& input =
          li == 0 ? d.x[s] : acts[li - 1];
      for (long f = 0; f < out; ++f) {
        float df = delta[static_cast<size_t>(f)];
        g.db[li][static_cast<size_t>(f)] += df;
        float* grow = g.dW[li].data() + f * in;
        for (long i = 0; i < in; ++i) grow[i] += df * input[static_cast<size_t>(i)];
      }
      if (li == 0) break;
      std::vector<float> prev(static_cast<size_t>(in), 0.0f);
      for (long i = 0; i < in; ++i) {
        if (input[static_cast<size_t>(i)] <= 0.0f) continue;  // relu gate
        float acc = 0;
        for (long f = 0; f < out; ++f)
          acc += net.W[li][static_cast<size_t>(f * in + i)] * delta[static_cast<size_t>(f)];
        prev[static_cast<size_t>(i)] = acc;
      }
      delta = std::move(prev);
    }
  }
  return g;
}

void train_sgd(TinyNet& net, const Dataset& d, int epochs, float lr,
               size_t batch, uint64_t seed,
               const std::vector<std::vector<float>>* mask) {
  if (d.size() == 0 || batch == 0) return;
  auto apply_mask = [&] {
    if (!mask) return;
    for (size_t l = 0; l < net.W.size(); ++l)
      for (size_t i = 0; i < net.W[l].size(); ++i)
        net.W[l][i] *= (*mask)[l][i];
  };
  apply_mask();
  Rng rng(seed);
  std::vector<size_t> order(d.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (int e = 0; e < epochs; ++e) {
    // Fisher-Yates with our own rng for reproducibility
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(rng.next_below(i));
      std::swap(order[i - 1], order[j]);
    }
    for (size_t start = 0; start < order.size(); start += batch) {
      Dataset mb;
      mb.dim = d.dim;
      mb.classes = d.classes;
      for (size_t i = start; i < std::min(start + batch, order.size()); ++i) {
        mb.x.push_back(d.x[order[i]]);
        mb.y.push_back(d.y[order[i]]);
      }
      Gradients g = backward(net, mb);
      for (size_t l = 0; l < net.W.size(); ++l) {
        for (size_t i = 0; i < net.W[l].size(); ++i) {
          float m = mask ? (*mask)[l][i] : 1.0f;
          net.W[l][i] -= lr * g.dW[l][i] * m;
        }
        for (size_t i = 0; i < net.bias[l].size(); ++i)
          net.bias[l][i] -= lr * g.db[l][i];
      }
    }
  }
  apply_mask();
}

QuantizedTensor quantize(const std::vector<float>& w, int width) {
  if (width < 2 || width > 8) throw std::invalid_argument("width out of range");
  QuantizedTensor t;
  t.width = width;
  const long qmax = (1L << (width - 1)) - 1;
  float amax = 0;
  for (float v : w) amax = std::max(amax, std::abs(v));
  // smallest power-of-two scale with amax/scale <= qmax
  float scale = 1.0f;
  if (amax > 0) {
    int k = static_cast<int>(
        std::ceil(std::log2(static_cast<double>(amax) / static_cast<double>(qmax))));
    scale = std::ldexp(1.0f, k);
    while (amax / scale > static_cast<float>(qmax)) scale *= 2.0f;
  }
  t.scale = scale;
  t.q.resize(w.size());
  for (size_t i = 0; i < w.size(); ++i) {
    long q = std::lround(w[i] / scale);
    q = std::clamp(q, -qmax, qmax);
    t.q[i] = static_cast<int8_t>(q);
  }
  return t;
}

long QuantizedNet::weight_count() const {
  long n = 0;
  for (const auto& w : W) n += static_cast<long>(w.q.size());
  return n;
}

int8_t QuantizedNet::get_word(long word) const {
  for (const auto& w : W) {
    if (word < static_cast<long>(w.q.size())) return w.q[static_cast<size_t>(word)];
    word -= static_cast<long>(w.q.size());
  }
  throw std::out_of_range("weight word index");
}

void QuantizedNet::set_word(long word, int8_t v) {
  for (auto& w : W) {
    if (word < static_cast<long>(w.q.size())) {
      w.q[static_cast<size_t>(word)] = v;
      return;
    }
    word -= static_cast<long>(w.q.size());
  }
  throw std::out_of_range("weight word index");
}

std::vector<float> QuantizedNet::forward(const std::vector<float>& x,
                                         std::vector<std::vector<float>>* acts) const {
  if (acts) acts->clear();
  std::vector<float> cur = x;
  for (size_t l = 0; l < W.size(); ++l) {
    long in = dims[l], out = dims[l + 1];
    std::vector<float> nxt(static_cast<size_t>(out));
    for (long f = 0; f < out; ++f) {
      float acc = bias[l][static_cast<size_t>(f)];
      for (long i = 0; i < in; ++i)
        acc += static_cast<float>(W[l].q[static_cast<size_t>(f * in + i)]) * W[l].scale *
               cur[static_cast<size_t>(i)];
      nxt[static_cast<size_t>(f)] = acc;
    }
    if (l + 1 < W.size())
      for (auto& v : nxt) v = std::max(v, 0.0f);
    if (acts) acts->push_back(nxt);
    cur = std::move(nxt);
  }
  return cur;
}

int QuantizedNet::predict(const std::vector<float>& x) const { return argmax(forward(x)); }

double QuantizedNet::accuracy(const Dataset& d) const { return net_accuracy(*this, d); }

QuantizedNet quantize_net(const TinyNet& net, int width) {
  QuantizedNet q;
  q.dims = net.dims;
  q.bias = net.bias;
  for (const auto& w : net.W) q.W.push_back(quantize(w, width));
  return q;
}

}  // namespace npudse::nn
