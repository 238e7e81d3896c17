#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "util.hpp"

namespace npudse::workload {

enum class OpKind { Conv2d, Matmul, Elementwise, Pooling };

std::string to_string(OpKind k);
OpKind op_kind_from_string(const std::string& s);

// One step of a fused epilogue chain. `aux` names the second input of a
// binary op (e.g. the addend tensor of `add`); empty for unary ops.
struct EpilogueStep {
  std::string op;   // relu | add
  std::string aux;
  bool operator==(const EpilogueStep&) const = default;
};

struct OperatorSpec {
  std::string name;
  OpKind kind = OpKind::Matmul;
  std::string ew_op;  // elementwise only: relu | add
  std::map<std::string, long> attrs;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<EpilogueStep> epilogue;  // populated by fuse_operators
};

struct ModelGraph {
  std::map<std::string, std::vector<long>> tensors;
  std::vector<OperatorSpec> operators;

  const OperatorSpec* producer_of(const std::string& tensor) const;
  std::vector<const OperatorSpec*> consumers_of(const std::string& tensor) const;
};

// Structured model document, schema v1. Throws InputError naming the
// offending node on any malformed input or shape mismatch.
ModelGraph parse_model(const std::string& text);
std::string serialize_model(const ModelGraph& g);

// Absorbs elementwise nodes into their sole conv2d/matmul producer as an
// epilogue chain. Non-fusable graphs come back unchanged.
ModelGraph fuse_operators(const ModelGraph& g);

// An operand index expression: either a single dim label or a sliding
// window a*stride + b (canonically Y+R, X+S with stride from the op).
struct IndexExpr {
  std::string a;
  long a_stride = 1;
  std::string b;  // empty unless window
  bool is_window() const { return !b.empty(); }
};

enum class Operand { Input = 0, Weight = 1, Output = 2 };

struct OperatorNest {
  std::string name;
  std::vector<std::pair<std::string, long>> dims;  // ordered (label, bound)
  std::array<std::vector<IndexExpr>, 3> operands;  // input, weight, output
  std::set<std::string> reduction;
  std::vector<EpilogueStep> epilogue;

  long bound(const std::string& label) const;
  bool has_dim(const std::string& label) const;
  // dim labels appearing in the operand's index expressions
  std::set<std::string> operand_dims(Operand o) const;
  long total_macs() const;
};

// Lowers conv2d/matmul to the canonical perfectly nested loop. Throws on
// unsupported kinds (elementwise/pooling are not mappable nests).
OperatorNest lower_to_nest(const OperatorSpec& op, const ModelGraph& g);

}  // namespace npudse::workload
