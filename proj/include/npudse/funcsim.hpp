#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "design_space.hpp"
#include "mapping.hpp"
#include "reliability.hpp"
#include "util.hpp"
#include "workload.hpp"

namespace npudse::sim {

// Dense integer tensor, row-major.
struct Tensor {
  std::vector<long> shape;
  std::vector<int64_t> data;

  Tensor() = default;
  explicit Tensor(std::vector<long> s);
  long size() const;
  int64_t& at(const std::vector<long>& idx);
  int64_t at(const std::vector<long>& idx) const;
};

// Tensor shapes an operator nest expects for its input / weight / output.
std::vector<long> operand_shape(const workload::OperatorNest& nest, int operand);

// Fill a tensor with small deterministic values.
Tensor random_tensor(const std::vector<long>& shape, uint64_t seed, long lo = -4,
                     long hi = 4);

struct SimResult {
  Tensor output;
  long compute_cycles = 0;
  long latency_cycles = 0;
  // words moved per hierarchy boundary per operand, boundary index 0 =
  // array<-innermost buffer; matches the analytic model keying
  std::map<std::pair<int, int>, long> boundary_words;
  std::map<int, long> transfer_cycles;  // per boundary
};

// Executes the schedule loop-by-loop: walks the full padded iteration
// space in schedule order, performing one MAC per in-bounds point and
// counting a tile fetch whenever an operand's tile coordinate at a
// boundary changes between consecutive steps.
SimResult simulate(const design::Hierarchy& hier, const workload::OperatorNest& nest,
                   const mapping::Schedule& s, const Tensor& input,
                   const Tensor& weight);

// Same walk with hard faults and mitigations. Reduction chains follow the
// walk's arrival order per output point; fault semantics match the mapped
// TinyNet executor (stuck MAC wipes the running partial sum, FAP drops only
// the product, TE-Drop skips the update after an erroneous one).
struct FaultSimOptions {
  bool fap = false;
  std::optional<std::vector<long>> col_map;  // logical -> physical column
  double te_drop_p = 0.0;
  uint64_t te_seed = 0;
  std::optional<std::pair<int64_t, int64_t>> clamp;  // output range restriction
};

SimResult simulate_with_faults(const design::Hierarchy& hier,
                               const workload::OperatorNest& nest,
                               const mapping::Schedule& s, const Tensor& input,
                               const Tensor& weight, const rel::FaultMap& fm,
                               const FaultSimOptions& opt);

// Straight-line executor over a model graph; supports conv2d, matmul,
// elementwise (relu / add), pooling (max), and fused epilogue chains.
// Returns every tensor produced, keyed by name.
std::map<std::string, Tensor> reference_execute(
    const workload::ModelGraph& model, const std::map<std::string, Tensor>& inputs);

// End-to-end classifier runs used by the CLI. "reference" is a plain
// nested-loop forward over the quantized net; "mapped" goes through the
// fault-aware array executor. With no faults and no mitigations they agree
// exactly.
enum class InferenceMode { Reference, Mapped };

std::vector<int> run_inference(const nn::QuantizedNet& net, const nn::Dataset& d,
                               InferenceMode mode, const rel::FaultMap& fm,
                               const rel::Mitigations& mit);

}  // namespace npudse::sim
