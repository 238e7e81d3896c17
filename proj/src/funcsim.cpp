#include "npudse/funcsim.hpp"

#include <algorithm>
#include <cmath>

namespace npudse::sim {

using design::Hierarchy;
using mapping::Schedule;
using workload::Operand;
using workload::OperatorNest;

Tensor::Tensor(std::vector<long> s) : shape(std::move(s)) {
  long n = 1;
  for (long d : shape) {
    if (d <= 0) throw InputError("tensor: non-positive extent");
    n *= d;
  }
  data.assign(static_cast<size_t>(n), 0);
}

long Tensor::size() const { return static_cast<long>(data.size()); }

namespace {
long flat_index(const std::vector<long>& shape, const std::vector<long>& idx) {
  long f = 0;
  for (size_t i = 0; i < shape.size(); ++i) f = f * shape[i] + idx[i];
  return f;
}
}  // namespace

int64_t& Tensor::at(const std::vector<long>& idx) {
  return data[static_cast<size_t>(flat_index(shape, idx))];
}
int64_t Tensor::at(const std::vector<long>& idx) const {
  return data[static_cast<size_t>(flat_index(shape, idx))];
}

std::vector<long> operand_shape(const workload::OperatorNest& nest, int operand) {
  std::vector<long> shape;
  for (const auto& e : nest.operands[static_cast<size_t>(operand)]) {
    if (e.is_window())
      shape.push_back(e.a_stride * (nest.bound(e.a) - 1) + nest.bound(e.b));
    else
      shape.push_back(nest.bound(e.a));
  }
  return shape;
}

Tensor random_tensor(const std::vector<long>& shape, uint64_t seed, long lo, long hi) {
  Tensor t(shape);
  Rng rng(seed);
  for (auto& v : t.data)
    v = lo + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(hi - lo + 1)));
  return t;
}

namespace {

// One flattened temporal loop of the walk, outermost first.
struct Loop {
  std::string dim;
  size_t dim_idx;
  long trips;
};

struct WalkCtx {
  const OperatorNest& nest;
  const Hierarchy& hier;
  const Schedule& s;
  size_t L;                          // temporal levels
  std::vector<std::string> dims;     // nest dim labels in order
  std::vector<long> bounds;          // true bounds
  std::vector<Loop> loops;           // temporal loops, outermost first
  std::vector<std::vector<long>> radix;  // radix[b][d] = prod tiles levels <= b
  std::vector<long> uf;              // spatial factor per dim
  std::vector<int> sp_axis;          // -1 none, 0 rows, 1 cols, per dim
};

WalkCtx make_ctx(const Hierarchy& hier, const OperatorNest& nest, const Schedule& s) {
  WalkCtx c{nest, hier, s, hier.levels.size() + 1, {}, {}, {}, {}, {}, {}};
  auto rep = mapping::validate_schedule(s, nest, hier);
  if (!rep.ok()) throw InputError("funcsim: invalid schedule: " + rep.to_string());

  for (const auto& [d, b] : nest.dims) {
    c.dims.push_back(d);
    c.bounds.push_back(b);
  }
  auto dim_idx = [&](const std::string& d) {
    return static_cast<size_t>(std::find(c.dims.begin(), c.dims.end(), d) -
                               c.dims.begin());
  };
  for (size_t l = c.L; l-- > 0;)
    for (const auto& d : s.loop_order[l])
      c.loops.push_back({d, dim_idx(d), s.tile(l, d)});

  c.radix.assign(c.L, std::vector<long>(c.dims.size(), 1));
  for (size_t b = 0; b < c.L; ++b)
    for (size_t d = 0; d < c.dims.size(); ++d) {
      long p = 1;
      for (size_t k = 0; k <= b; ++k) p *= s.tile(k, c.dims[d]);
      c.radix[b][d] = p;
    }
  c.uf.assign(c.dims.size(), 1);
  c.sp_axis.assign(c.dims.size(), -1);
  if (s.spatial.rows) {
    size_t d = dim_idx(s.spatial.rows->dim);
    c.uf[d] = s.spatial.rows->factor;
    c.sp_axis[d] = 0;
  }
  if (s.spatial.cols) {
    size_t d = dim_idx(s.spatial.cols->dim);
    c.uf[d] = s.spatial.cols->factor;
    c.sp_axis[d] = 1;
  }
  return c;
}

// Walks every temporal step in schedule order and calls
// step(idx_t, first) with the per-dim temporal composite indices.
template <class Fn>
long walk_temporal(const WalkCtx& c, Fn&& step) {
  std::vector<long> digit(c.loops.size(), 0);
  std::vector<long> idx_t(c.dims.size(), 0);
  long steps = 0;
  bool first = true;
  for (;;) {
    std::fill(idx_t.begin(), idx_t.end(), 0);
    for (const auto& l : c.loops) idx_t[l.dim_idx] = 0;
    // compose outermost-first: idx = idx * trips + digit per dim
    for (size_t i = 0; i < c.loops.size(); ++i) {
      size_t d = c.loops[i].dim_idx;
      idx_t[d] = idx_t[d] * c.loops[i].trips + digit[i];
    }
    step(idx_t, first);
    first = false;
    ++steps;
    // odometer, innermost digit fastest
    size_t i = c.loops.size();
    while (i-- > 0) {
      if (++digit[i] < c.loops[i].trips) break;
      digit[i] = 0;
      if (i == 0) return steps;
    }
    if (c.loops.empty()) return steps;
  }
}

std::vector<long> operand_element(const OperatorNest& nest, int o,
                                  const std::vector<std::string>& dims,
                                  const std::vector<long>& idx) {
  auto val = [&](const std::string& d) {
    return idx[static_cast<size_t>(std::find(dims.begin(), dims.end(), d) -
                                   dims.begin())];
  };
  std::vector<long> e;
  for (const auto& ex : nest.operands[static_cast<size_t>(o)]) {
    if (ex.is_window())
      e.push_back(ex.a_stride * val(ex.a) + val(ex.b));
    else
      e.push_back(val(ex.a));
  }
  return e;
}

SimResult run_walk(const Hierarchy& hier, const OperatorNest& nest,
                   const Schedule& s, const Tensor& input, const Tensor& weight,
                   const rel::FaultMap* fm, const FaultSimOptions* opt) {
  WalkCtx c = make_ctx(hier, nest, s);
  if (input.shape != operand_shape(nest, 0))
    throw InputError("funcsim: input shape mismatch");
  if (weight.shape != operand_shape(nest, 1))
    throw InputError("funcsim: weight shape mismatch");
  for (const auto& step : nest.epilogue)
    if (step.op != "relu")
      throw InputError("funcsim: unsupported epilogue op '" + step.op + "'");

  SimResult r;
  r.output = Tensor(operand_shape(nest, 2));

  const long ur = s.spatial.rows ? s.spatial.rows->factor : 1;
  const long uc = s.spatial.cols ? s.spatial.cols->factor : 1;

  // fetch counting state: previous tile coordinate per (boundary, operand)
  const size_t nb = c.L - 1;
  std::vector<std::array<std::vector<long>, 3>> prev(nb);
  std::vector<std::array<long, 3>> fetches(nb, {0, 0, 0});

  std::vector<long> full(c.dims.size(), 0);
  std::vector<long> coord;
  std::vector<char> te_skip(static_cast<size_t>(r.output.size()), 0);
  Rng te_rng(opt ? opt->te_seed : 0);

  long temporal_steps = walk_temporal(c, [&](const std::vector<long>& idx_t, bool first) {
    for (size_t b = 0; b < nb; ++b) {
      for (int o = 0; o < 3; ++o) {
        coord.clear();
        for (size_t d = 0; d < c.dims.size(); ++d) coord.push_back(idx_t[d] / c.radix[b][d]);
        // project onto the operand's dims so unrelated loops don't fetch
        std::vector<long> proj;
        auto odims = c.nest.operand_dims(static_cast<Operand>(o));
        for (size_t d = 0; d < c.dims.size(); ++d)
          if (odims.count(c.dims[d])) proj.push_back(coord[d]);
        if (first || proj != prev[b][static_cast<size_t>(o)]) {
          ++fetches[b][static_cast<size_t>(o)];
          prev[b][static_cast<size_t>(o)] = std::move(proj);
        }
      }
    }
    for (long sr = 0; sr < ur; ++sr) {
      for (long sc = 0; sc < uc; ++sc) {
        bool oob = false;
        for (size_t d = 0; d < c.dims.size(); ++d) {
          long sp = c.sp_axis[d] == 0 ? sr : (c.sp_axis[d] == 1 ? sc : 0);
          full[d] = idx_t[d] * c.uf[d] + sp;
          if (full[d] >= c.bounds[d]) oob = true;
        }
        if (oob) continue;  // padding
        auto ii = operand_element(nest, 0, c.dims, full);
        auto wi = operand_element(nest, 1, c.dims, full);
        auto oi = operand_element(nest, 2, c.dims, full);
        int64_t prod = input.at(ii) * weight.at(wi);
        long oflat = flat_index(r.output.shape, oi);
        int64_t& acc = r.output.data[static_cast<size_t>(oflat)];
        if (!fm) {
          acc += prod;
          continue;
        }
        long pr = sr;
        long pc = sc;
        if (opt && opt->col_map) pc = (*opt->col_map)[static_cast<size_t>(sc)];
        bool faulty = fm->pe_faulty(pr, pc);
        if (faulty && !(opt && opt->fap)) {
          // stuck MAC: the running partial sum through this unit is lost
          acc = 0;
          te_skip[static_cast<size_t>(oflat)] = 0;
          continue;
        }
        if (faulty) continue;  // FAP bypass drops only this product
        if (te_skip[static_cast<size_t>(oflat)]) {
          te_skip[static_cast<size_t>(oflat)] = 0;
          continue;
        }
        if (opt && opt->te_drop_p > 0 && te_rng.bernoulli(opt->te_drop_p))
          te_skip[static_cast<size_t>(oflat)] = 1;  // own update still lands
        acc += prod;
      }
    }
  });

  for (const auto& step : nest.epilogue)
    if (step.op == "relu")
      for (auto& v : r.output.data) v = std::max<int64_t>(v, 0);
  if (opt && opt->clamp)
    for (auto& v : r.output.data)
      v = std::clamp(v, opt->clamp->first, opt->clamp->second);

  r.compute_cycles = static_cast<long>(std::ceil(
      static_cast<double>(temporal_steps) /
      static_cast<double>(hier.array.macs_per_cycle)));
  long latency = r.compute_cycles;
  for (size_t b = 0; b < nb; ++b) {
    long total = 0;
    for (int o = 0; o < 3; ++o) {
      long words = fetches[b][static_cast<size_t>(o)] *
                   static_cast<long>(mapping::operand_footprint(
                       s, nest, b, static_cast<Operand>(o)));
      r.boundary_words[{static_cast<int>(b), o}] = words;
      total += words;
    }
    double bw = hier.levels[c.L - 2 - b].bw_to_inner;
    long cyc = bw > 0 ? static_cast<long>(std::ceil(static_cast<double>(total) / bw)) : 0;
    r.transfer_cycles[static_cast<int>(b)] = cyc;
    latency = std::max(latency, cyc);
  }
  r.latency_cycles = std::max(latency, 1L);
  return r;
}

}  // namespace

SimResult simulate(const Hierarchy& hier, const OperatorNest& nest,
                   const Schedule& s, const Tensor& input, const Tensor& weight) {
  return run_walk(hier, nest, s, input, weight, nullptr, nullptr);
}

SimResult simulate_with_faults(const Hierarchy& hier, const OperatorNest& nest,
                               const Schedule& s, const Tensor& input,
                               const Tensor& weight, const rel::FaultMap& fm,
                               const FaultSimOptions& opt) {
  return run_walk(hier, nest, s, input, weight, &fm, &opt);
}

namespace {

Tensor fetch(const std::map<std::string, Tensor>& pool, const std::string& name,
             const std::string& ctx) {
  auto it = pool.find(name);
  if (it == pool.end()) throw InputError(ctx + ": missing tensor '" + name + "'");
  return it->second;
}

void apply_epilogue(Tensor& t, const std::vector<workload::EpilogueStep>& steps,
                    const std::map<std::string, Tensor>& pool,
                    const std::string& ctx) {
  for (const auto& step : steps) {
    if (step.op == "relu") {
      for (auto& v : t.data) v = std::max<int64_t>(v, 0);
    } else if (step.op == "add") {
      Tensor aux = fetch(pool, step.aux, ctx);
      if (aux.shape != t.shape) throw InputError(ctx + ": add shape mismatch");
      for (size_t i = 0; i < t.data.size(); ++i) t.data[i] += aux.data[i];
    } else {
      throw InputError(ctx + ": unknown epilogue op '" + step.op + "'");
    }
  }
}

}  // namespace

std::map<std::string, Tensor> reference_execute(
    const workload::ModelGraph& model, const std::map<std::string, Tensor>& inputs) {
  std::map<std::string, Tensor> pool = inputs;
  for (const auto& [name, t] : pool) {
    auto it = model.tensors.find(name);
    if (it != model.tensors.end() && it->second != t.shape)
      throw InputError("reference_execute: shape mismatch for '" + name + "'");
  }
  for (const auto& op : model.operators) {
    const std::string& out_name = op.outputs.at(0);
    Tensor out(model.tensors.at(out_name));
    switch (op.kind) {
      case workload::OpKind::Matmul: {
        Tensor a = fetch(pool, op.inputs.at(0), op.name);
        Tensor b = fetch(pool, op.inputs.at(1), op.name);
        long M = a.shape[0], K = a.shape[1], N = b.shape[1];
        for (long m = 0; m < M; ++m)
          for (long n = 0; n < N; ++n) {
            int64_t acc = 0;
            for (long k = 0; k < K; ++k) acc += a.at({m, k}) * b.at({k, n});
            out.at({m, n}) = acc;
          }
        break;
      }
      case workload::OpKind::Conv2d: {
        Tensor in = fetch(pool, op.inputs.at(0), op.name);
        Tensor w = fetch(pool, op.inputs.at(1), op.name);
        long sy = op.attrs.count("stride_h") ? op.attrs.at("stride_h") : 1;
        long sx = op.attrs.count("stride_w") ? op.attrs.at("stride_w") : 1;
        long N = out.shape[0], Kc = out.shape[1], Y = out.shape[2], X = out.shape[3];
        long C = w.shape[1], R = w.shape[2], S = w.shape[3];
        for (long n = 0; n < N; ++n)
          for (long k = 0; k < Kc; ++k)
            for (long y = 0; y < Y; ++y)
              for (long x = 0; x < X; ++x) {
                int64_t acc = 0;
                for (long cch = 0; cch < C; ++cch)
                  for (long rr = 0; rr < R; ++rr)
                    for (long ss = 0; ss < S; ++ss)
                      acc += in.at({n, cch, y * sy + rr, x * sx + ss}) *
                             w.at({k, cch, rr, ss});
                out.at({n, k, y, x}) = acc;
              }
        break;
      }
      case workload::OpKind::Elementwise: {
        Tensor a = fetch(pool, op.inputs.at(0), op.name);
        out = a;
        if (op.ew_op == "relu") {
          for (auto& v : out.data) v = std::max<int64_t>(v, 0);
        } else if (op.ew_op == "add") {
          Tensor b = fetch(pool, op.inputs.at(1), op.name);
          for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
        } else {
          throw InputError(op.name + ": unknown elementwise op");
        }
        break;
      }
      case workload::OpKind::Pooling: {
        Tensor in = fetch(pool, op.inputs.at(0), op.name);
        long kh = op.attrs.at("kernel_h"), kw = op.attrs.at("kernel_w");
        long sy = op.attrs.count("stride_h") ? op.attrs.at("stride_h") : 1;
        long sx = op.attrs.count("stride_w") ? op.attrs.at("stride_w") : 1;
        long N = out.shape[0], Cc = out.shape[1], Y = out.shape[2], X = out.shape[3];
        for (long n = 0; n < N; ++n)
          for (long cch = 0; cch < Cc; ++cch)
            for (long y = 0; y < Y; ++y)
              for (long x = 0; x < X; ++x) {
                int64_t m = INT64_MIN;
                for (long a2 = 0; a2 < kh; ++a2)
                  for (long b2 = 0; b2 < kw; ++b2)
                    m = std::max(m, in.at({n, cch, y * sy + a2, x * sx + b2}));
                out.at({n, cch, y, x}) = m;
              }
        break;
      }
    }
    apply_epilogue(out, op.epilogue, pool, op.name);
    pool[out_name] = std::move(out);
  }
  return pool;
}

std::vector<int> run_inference(const nn::QuantizedNet& net, const nn::Dataset& d,
                               InferenceMode mode, const rel::FaultMap& fm,
                               const rel::Mitigations& mit) {
  std::vector<int> preds;
  preds.reserve(d.size());
  for (size_t s = 0; s < d.size(); ++s) {
    if (mode == InferenceMode::Reference) {
      preds.push_back(net.predict(d.x[s]));
    } else {
      auto out = rel::mapped_forward(net, d.x[s], fm, mit);
      preds.push_back(static_cast<int>(
          std::max_element(out.begin(), out.end()) - out.begin()));
    }
  }
  return preds;
}

}  // namespace npudse::sim
