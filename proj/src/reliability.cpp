#include "npudse/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace npudse::rel {

long FaultMap::faults_in_col(long c) const {
  long n = 0;
  for (const auto& [fr, fc] : pe_faults)
    if (fc == c) ++n;
  return n;
}

json FaultMap::to_json() const {
  json j;
  j["rows"] = rows;
  j["cols"] = cols;
  json pes = json::array();
  for (const auto& [r, c] : pe_faults) pes.push_back({{"row", r}, {"col", c}});
  j["pe_faults"] = pes;
  json mems = json::array();
  for (const auto& m : mem_faults)
    mems.push_back({{"word", m.word}, {"bit", m.bit}, {"stuck", m.stuck}});
  j["mem_faults"] = mems;
  return j;
}

FaultMap FaultMap::from_json(const json& j) {
  FaultMap fm;
  fm.rows = require_field(j, "rows", "fault map").get<long>();
  fm.cols = require_field(j, "cols", "fault map").get<long>();
  if (fm.rows <= 0 || fm.cols <= 0) throw InputError("fault map: bad array shape");
  for (const auto& p : require_field(j, "pe_faults", "fault map")) {
    long r = require_field(p, "row", "pe fault").get<long>();
    long c = require_field(p, "col", "pe fault").get<long>();
    if (r < 0 || r >= fm.rows || c < 0 || c >= fm.cols)
      throw InputError("fault map: PE fault out of bounds");
    fm.pe_faults.insert({r, c});
  }
  for (const auto& m : require_field(j, "mem_faults", "fault map")) {
    MemFault f;
    f.word = require_field(m, "word", "mem fault").get<long>();
    f.bit = require_field(m, "bit", "mem fault").get<int>();
    f.stuck = require_field(m, "stuck", "mem fault").get<int>();
    if (f.word < 0 || f.bit < 0 || (f.stuck != 0 && f.stuck != 1))
      throw InputError("fault map: bad mem fault");
    fm.mem_faults.push_back(f);
  }
  return fm;
}

FaultMap generate_fault_map(long rows, long cols, double pe_rate, double mem_ber,
                            long word_count, int word_width, uint64_t seed) {
  if (rows <= 0 || cols <= 0) throw InputError("fault map: bad array shape");
  if (pe_rate < 0 || pe_rate > 1 || mem_ber < 0 || mem_ber > 1)
    throw InputError("fault map: rate out of [0,1]");
  FaultMap fm;
  fm.rows = rows;
  fm.cols = cols;
  Rng pe_rng(Rng::derive(seed, 0));
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c)
      if (pe_rng.bernoulli(pe_rate)) fm.pe_faults.insert({r, c});
  Rng mem_rng(Rng::derive(seed, 1));
  for (long w = 0; w < word_count; ++w)
    for (int b = 0; b < word_width; ++b)
      if (mem_rng.bernoulli(mem_ber))
        fm.mem_faults.push_back({w, b, static_cast<int>(mem_rng.next_below(2))});
  return fm;
}

std::vector<double> channel_saliency(const std::vector<float>& w, long out, long in) {
  if (static_cast<long>(w.size()) != out * in)
    throw InputError("saliency: weight shape mismatch");
  std::vector<double> sal(static_cast<size_t>(out), 0.0);
  for (long f = 0; f < out; ++f)
    for (long i = 0; i < in; ++i)
      sal[static_cast<size_t>(f)] += std::abs(static_cast<double>(w[static_cast<size_t>(f * in + i)]));
  return sal;
}

std::vector<long> fault_aware_map(const std::vector<double>& saliency,
                                  const FaultMap& fm) {
  const long n = static_cast<long>(saliency.size());
  if (n != fm.cols) throw InputError("fault_aware_map: channels must equal columns");
  std::vector<long> cnt(static_cast<size_t>(n));
  for (long c = 0; c < n; ++c) cnt[static_cast<size_t>(c)] = fm.faults_in_col(c);

  if (n <= 8) {
    // exact assignment over column subsets; perm[f] chosen filter-by-filter,
    // preferring the lexicographically smallest optimal permutation
    const long full = (1L << n) - 1;
    std::vector<double> best(static_cast<size_t>(1L << n),
                             std::numeric_limits<double>::infinity());
    best[0] = 0.0;  // no columns free, all filters placed
    // best[mask] = min cost of placing filters n-popcount(mask) .. n-1 into
    // the columns still free in mask; submasks are numerically smaller, so
    // ascending order has every dependency ready
    for (long mask = 1; mask <= full; ++mask) {
      long placed = n - __builtin_popcountl(static_cast<unsigned long>(mask));
      double b = std::numeric_limits<double>::infinity();
      for (long c = 0; c < n; ++c) {
        if (!((mask >> c) & 1)) continue;
        double v = saliency[static_cast<size_t>(placed)] *
                       static_cast<double>(cnt[static_cast<size_t>(c)]) +
                   best[static_cast<size_t>(mask & ~(1L << c))];
        b = std::min(b, v);
      }
      best[static_cast<size_t>(mask)] = b;
    }
    std::vector<long> perm(static_cast<size_t>(n));
    long mask = full;
    for (long f = 0; f < n; ++f) {
      for (long c = 0; c < n; ++c) {
        if (!((mask >> c) & 1)) continue;
        double v = saliency[static_cast<size_t>(f)] *
                       static_cast<double>(cnt[static_cast<size_t>(c)]) +
                   best[static_cast<size_t>(mask & ~(1L << c))];
        if (v <= best[static_cast<size_t>(mask)] + 1e-12) {
          perm[static_cast<size_t>(f)] = c;
          mask &= ~(1L << c);
          break;
        }
      }
    }
    return perm;
  }

  // rearrangement: most salient filters take the least faulty columns
  std::vector<long> fidx(static_cast<size_t>(n)), cidx(static_cast<size_t>(n));
  std::iota(fidx.begin(), fidx.end(), 0L);
  std::iota(cidx.begin(), cidx.end(), 0L);
  std::stable_sort(fidx.begin(), fidx.end(), [&](long a, long b) {
    return saliency[static_cast<size_t>(a)] > saliency[static_cast<size_t>(b)];
  });
  std::stable_sort(cidx.begin(), cidx.end(), [&](long a, long b) {
    return cnt[static_cast<size_t>(a)] < cnt[static_cast<size_t>(b)];
  });
  std::vector<long> perm(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i)
    perm[static_cast<size_t>(fidx[static_cast<size_t>(i)])] = cidx[static_cast<size_t>(i)];
  return perm;
}

std::vector<float> apply_fap(const std::vector<float>& w, long out, long in,
                             const FaultMap& fm, const std::vector<long>& col_map) {
  if (static_cast<long>(w.size()) != out * in)
    throw InputError("apply_fap: weight shape mismatch");
  std::vector<float> eff = w;
  for (long f = 0; f < out; ++f) {
    long lc = f % fm.cols;
    long c = col_map.empty() ? lc : col_map[static_cast<size_t>(lc)];
    for (long i = 0; i < in; ++i)
      if (fm.pe_faulty(i % fm.rows, c)) eff[static_cast<size_t>(f * in + i)] = 0.0f;
  }
  return eff;
}

RangeBounds profile_ranges(const nn::QuantizedNet& net, const nn::Dataset& calib) {
  RangeBounds rb;
  for (size_t l = 0; l + 1 < net.dims.size(); ++l) {
    size_t n = static_cast<size_t>(net.dims[l + 1]);
    rb.low.emplace_back(n, calib.size() ? std::numeric_limits<float>::max() : 0.0f);
    rb.high.emplace_back(n, calib.size() ? std::numeric_limits<float>::lowest() : 0.0f);
  }
  for (size_t s = 0; s < calib.size(); ++s) {
    std::vector<std::vector<float>> acts;
    net.forward(calib.x[s], &acts);
    for (size_t l = 0; l < acts.size(); ++l)
      for (size_t i = 0; i < acts[l].size(); ++i) {
        rb.low[l][i] = std::min(rb.low[l][i], acts[l][i]);
        rb.high[l][i] = std::max(rb.high[l][i], acts[l][i]);
      }
  }
  return rb;
}

float range_restrict(float v, float low, float high) {
  if (std::isnan(v)) return high;
  if (v > high) return high;
  if (v < low) return low;
  return v;
}

void range_restrict(std::vector<float>& v, float low, float high) {
  for (auto& x : v) x = range_restrict(x, low, high);
}

namespace {

// Stuck memory bits applied to a copy of the quantized weights.
nn::QuantizedNet with_mem_faults(const nn::QuantizedNet& net, const FaultMap& fm) {
  nn::QuantizedNet out = net;
  const long total = out.weight_count();
  for (const auto& mf : fm.mem_faults) {
    if (mf.word >= total || mf.bit >= 8) continue;
    uint8_t v = static_cast<uint8_t>(out.get_word(mf.word));
    if (mf.stuck)
      v |= static_cast<uint8_t>(1u << mf.bit);
    else
      v &= static_cast<uint8_t>(~(1u << mf.bit));
    out.set_word(mf.word, static_cast<int8_t>(v));
  }
  return out;
}

}  // namespace

std::vector<float> mapped_forward(const nn::QuantizedNet& net,
                                  const std::vector<float>& x, const FaultMap& fm,
                                  const Mitigations& mit) {
  const nn::QuantizedNet eff =
      fm.mem_faults.empty() ? net : with_mem_faults(net, fm);
  Rng te_rng(mit.te_seed);
  std::vector<float> cur = x;
  for (size_t l = 0; l < eff.W.size(); ++l) {
    long in = eff.dims[l], out = eff.dims[l + 1];
    std::vector<float> nxt(static_cast<size_t>(out));
    for (long f = 0; f < out; ++f) {
      long lc = f % fm.cols;
      long col = mit.col_map ? (*mit.col_map)[static_cast<size_t>(lc)] : lc;
      float acc = 0.0f;
      bool skip_next = false;
      for (long i = 0; i < in; ++i) {
        bool faulty = fm.pe_faulty(i % fm.rows, col);
        float prod = static_cast<float>(eff.W[l].q[static_cast<size_t>(f * in + i)]) *
                     eff.W[l].scale * cur[static_cast<size_t>(i)];
        if (faulty && !mit.fap) {
          // stuck MAC forwards a zero partial sum, wiping the prefix
          acc = 0.0f;
          skip_next = false;
          continue;
        }
        if (faulty && mit.fap) continue;  // bypass: only this product lost
        if (skip_next) {
          skip_next = false;
          continue;
        }
        if (mit.te_drop_p > 0 && te_rng.bernoulli(mit.te_drop_p)) {
          // erroneous update recomputed locally; its neighbor pays instead
          skip_next = true;
        }
        acc += prod;
      }
      acc += eff.bias[l][static_cast<size_t>(f)];
      nxt[static_cast<size_t>(f)] = acc;
    }
    if (l + 1 < eff.W.size())
      for (auto& v : nxt) v = std::max(v, 0.0f);
    if (mit.bounds)
      for (size_t i = 0; i < nxt.size(); ++i)
        nxt[i] = range_restrict(nxt[i], mit.bounds->low[l][i], mit.bounds->high[l][i]);
    cur = std::move(nxt);
  }
  return cur;
}

double mapped_accuracy(const nn::QuantizedNet& net, const nn::Dataset& d,
                       const FaultMap& fm, const Mitigations& mit) {
  if (d.size() == 0) return 0.0;
  size_t hit = 0;
  for (size_t s = 0; s < d.size(); ++s) {
    auto out = mapped_forward(net, d.x[s], fm, mit);
    int pred = static_cast<int>(std::max_element(out.begin(), out.end()) - out.begin());
    if (pred == d.y[s]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(d.size());
}

float te_drop_dot(const std::vector<float>& w, const std::vector<float>& x,
                  double p, uint64_t seed) {
  if (w.size() != x.size()) throw InputError("te_drop_dot: length mismatch");
  Rng rng(seed);
  float acc = 0.0f;
  bool skip_next = false;
  for (size_t i = 0; i < w.size(); ++i) {
    if (skip_next) {
      skip_next = false;
      continue;
    }
    if (rng.bernoulli(p)) skip_next = true;  // own update still lands
    acc += w[i] * x[i];
  }
  return acc;
}

void inject_bit_flips(nn::QuantizedNet& net,
                      const std::vector<std::pair<long, int>>& flips) {
  for (const auto& [word, bit] : flips) {
    if (word < 0 || word >= net.weight_count() || bit < 0 || bit >= 8)
      throw InputError("bit flip out of range");
    uint8_t v = static_cast<uint8_t>(net.get_word(word));
    v ^= static_cast<uint8_t>(1u << bit);
    net.set_word(word, static_cast<int8_t>(v));
  }
}

std::vector<std::pair<long, int>> sample_bit_flips(const nn::QuantizedNet& net,
                                                   double ber, uint64_t seed) {
  if (ber < 0 || ber > 1) throw InputError("bit error rate out of [0,1]");
  Rng rng(seed);
  std::vector<std::pair<long, int>> flips;
  const long total = net.weight_count();
  for (long w = 0; w < total; ++w)
    for (int b = 0; b < 8; ++b)
      if (rng.bernoulli(ber)) flips.push_back({w, b});
  return flips;
}

std::vector<std::pair<long, int>> find_vulnerable_bits(const nn::QuantizedNet& net,
                                                       const nn::Dataset& d, int k,
                                                       uint64_t seed,
                                                       size_t pool_size) {
  std::vector<std::pair<long, int>> pool;
  const long total = net.weight_count();
  if (pool_size == 0 || pool_size >= static_cast<size_t>(total) * 8) {
    for (long w = 0; w < total; ++w)
      for (int b = 0; b < 8; ++b) pool.push_back({w, b});
  } else {
    Rng rng(seed);
    std::set<std::pair<long, int>> seen;
    while (seen.size() < pool_size) {
      long w = static_cast<long>(rng.next_below(static_cast<uint64_t>(total)));
      int b = static_cast<int>(rng.next_below(8));
      seen.insert({w, b});
    }
    pool.assign(seen.begin(), seen.end());
  }

  std::vector<std::pair<long, int>> chosen;
  nn::QuantizedNet cur = net;
  for (int step = 0; step < k && !pool.empty(); ++step) {
    double best = std::numeric_limits<double>::infinity();
    size_t best_i = 0;
    for (size_t i = 0; i < pool.size(); ++i) {
      nn::QuantizedNet trial = cur;
      inject_bit_flips(trial, {pool[i]});
      double acc = trial.accuracy(d);
      if (acc < best) {  // pool is sorted, first win is smallest (word, bit)
        best = acc;
        best_i = i;
      }
    }
    chosen.push_back(pool[best_i]);
    inject_bit_flips(cur, {pool[best_i]});
    pool.erase(pool.begin() + static_cast<long>(best_i));
  }
  return chosen;
}

nn::TinyNet fault_aware_retrain(const nn::TinyNet& net, const nn::Dataset& d,
                                const FaultMap& fm,
                                const std::vector<long>& col_map, int epochs,
                                float lr, size_t batch, uint64_t seed) {
  nn::TinyNet out = net;
  std::vector<std::vector<float>> mask;
  for (size_t l = 0; l < net.W.size(); ++l) {
    long in = net.dims[l], outd = net.dims[l + 1];
    std::vector<float> m(net.W[l].size(), 1.0f);
    for (long f = 0; f < outd; ++f) {
      long lc = f % fm.cols;
      long c = col_map.empty() ? lc : col_map[static_cast<size_t>(lc)];
      for (long i = 0; i < in; ++i)
        if (fm.pe_faulty(i % fm.rows, c)) m[static_cast<size_t>(f * in + i)] = 0.0f;
    }
    mask.push_back(std::move(m));
  }
  nn::train_sgd(out, d, epochs, lr, batch, seed, &mask);
  return out;
}

}  // namespace npudse::rel
