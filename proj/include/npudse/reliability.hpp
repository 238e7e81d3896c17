#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tinynet.hpp"
#include "util.hpp"

namespace npudse::rel {

// Stuck weight-memory bit: word index in a flat address space over all
// weight words, bit position within the word, stuck value 0 or 1.
struct MemFault {
  long word = 0;
  int bit = 0;
  int stuck = 0;
};

// Hard faults of one device instance: MAC units stuck at producing a zero
// partial sum, plus stuck weight-memory bits.
struct FaultMap {
  long rows = 0;
  long cols = 0;
  std::set<std::pair<long, long>> pe_faults;  // (row, col), stuck-MAC
  std::vector<MemFault> mem_faults;

  bool pe_faulty(long r, long c) const {
    return pe_faults.count({r, c}) != 0;
  }
  long faults_in_col(long c) const;

  json to_json() const;
  static FaultMap from_json(const json& j);
};

// Bernoulli sampling per PE (rate) and per memory bit (ber). Word space is
// [0, word_count) with word_width bits each.
FaultMap generate_fault_map(long rows, long cols, double pe_rate, double mem_ber,
                            long word_count, int word_width, uint64_t seed);

// Saliency of each output channel of a weight matrix (out x in row-major):
// sum of absolute weights.
std::vector<double> channel_saliency(const std::vector<float>& w, long out, long in);

// Permutation perm[channel] = physical column minimizing
// sum_f saliency[f] * faults_in_col(perm[f]). Exact for <= 8 channels,
// rearrangement greedy above that. saliency.size() must equal fm.cols.
std::vector<long> fault_aware_map(const std::vector<double>& saliency,
                                  const FaultMap& fm);

// Zeroes every weight whose MAC would land on a faulty PE under the given
// column permutation, so the faulty unit can be bypassed instead of
// corrupting the partial sum. w is out x in row-major.
std::vector<float> apply_fap(const std::vector<float>& w, long out, long in,
                             const FaultMap& fm, const std::vector<long>& col_map);

// Per-neuron activation bounds observed on a calibration set.
struct RangeBounds {
  std::vector<std::vector<float>> low;   // [layer][neuron]
  std::vector<std::vector<float>> high;  // [layer][neuron]
};

RangeBounds profile_ranges(const nn::QuantizedNet& net, const nn::Dataset& calib);

// Clamp to [low, high]; non-finite values snap to the nearest bound
// (NaN and +inf -> high, -inf -> low).
float range_restrict(float v, float low, float high);
void range_restrict(std::vector<float>& v, float low, float high);

// What protections the mapped execution applies, in order: column
// remapping, FAP bypass, TE-Drop, range restriction.
struct Mitigations {
  std::optional<std::vector<long>> col_map;
  bool fap = false;
  double te_drop_p = 0.0;  // per-MAC error probability for TE-Drop runs
  uint64_t te_seed = 0;
  std::optional<RangeBounds> bounds;
};

// Runs the quantized net on the PE array described by fm, weight (f, i)
// served by PE (i mod rows, col_map[f mod cols]). A stuck MAC without FAP
// zeroes the partial sum flowing through it; with FAP only its own product
// is dropped. Returns final-layer outputs.
std::vector<float> mapped_forward(const nn::QuantizedNet& net,
                                  const std::vector<float>& x, const FaultMap& fm,
                                  const Mitigations& mit);

double mapped_accuracy(const nn::QuantizedNet& net, const nn::Dataset& d,
                       const FaultMap& fm, const Mitigations& mit);

// TE-Drop in isolation: dot product of w and x on one accumulation chain
// where each update is erroneous with probability p; an erroneous MAC
// recomputes its own update and the next update in the chain is skipped.
float te_drop_dot(const std::vector<float>& w, const std::vector<float>& x,
                  double p, uint64_t seed);

// Flip the given (word, bit) positions in the flat weight space.
void inject_bit_flips(nn::QuantizedNet& net,
                      const std::vector<std::pair<long, int>>& flips);
// Sample flips at the given bit error rate.
std::vector<std::pair<long, int>> sample_bit_flips(const nn::QuantizedNet& net,
                                                   double ber, uint64_t seed);

// Progressive greedy search for the k bit positions whose combined flip
// hurts accuracy most. pool_size == 0 searches every (word, bit) pair;
// otherwise a seeded sample of that many candidates. Ties resolve to the
// smallest (word, bit).
std::vector<std::pair<long, int>> find_vulnerable_bits(const nn::QuantizedNet& net,
                                                       const nn::Dataset& d, int k,
                                                       uint64_t seed,
                                                       size_t pool_size = 0);

// Retrains the float net with weights that FAP would drop pinned to zero,
// letting the surviving weights compensate. Returns the adapted net.
nn::TinyNet fault_aware_retrain(const nn::TinyNet& net, const nn::Dataset& d,
                                const FaultMap& fm,
                                const std::vector<long>& col_map, int epochs,
                                float lr, size_t batch, uint64_t seed);

}  // namespace npudse::rel
