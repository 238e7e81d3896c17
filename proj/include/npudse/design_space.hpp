#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "util.hpp"

namespace npudse::design {

enum class CompKind { ComputePe, Buffer, Dram, NocLink, Dma, Controller, Group };

std::string to_string(CompKind k);
CompKind comp_kind_from_string(const std::string& s);

// Finite parameter domain; ranges in documents are expanded to explicit
// sorted value lists at load time.
struct ParamDomain {
  std::vector<long> values;
  bool contains(long v) const;
};

struct Costs {
  double area = 0;               // per unit (buffers: per word)
  double energy_per_access = 0;  // pJ-equivalents per word
  double energy_per_op = 0;      // per MAC, compute components
  double latency = 1;            // cycles per op
  double fit_rate = 0;           // failures per 1e9 device-hours, abstract
  double harden_area_factor = 1;
  double harden_fit_factor = 1;
};

struct ComponentDef {
  std::string name;
  CompKind kind = CompKind::Buffer;
  std::map<std::string, ParamDomain> params;
  Costs costs;
  std::map<std::string, double> attrs;  // free-form cost/semantic attributes
};

struct ComponentLibrary {
  std::map<std::string, ComponentDef> components;
  const ComponentDef& get(const std::string& name) const;
};

ComponentLibrary load_component_library(const std::string& text);
std::string serialize_component_library(const ComponentLibrary& lib);

struct Node {
  std::string id;
  std::string component;  // library entry name
  CompKind kind = CompKind::Buffer;
  std::map<std::string, long> params;
  bool hardened = false;
  std::vector<std::string> children;  // groups only
  std::string parent;
};

struct Edge {
  std::string src, dst;
  double bandwidth = 0;  // words/cycle; 0 = ideal (no transfer cost)
};

struct FlowGraph {
  std::map<std::string, Node> nodes;
  std::vector<Edge> edges;
  std::string root;  // designated off-chip memory

  bool has_node(const std::string& id) const { return nodes.count(id) > 0; }
};

// Directive-driven construction. The description document lists nodes
// (with optional rows x cols replication, which materializes a group and
// its children) and edges. Node ids are deterministic.
FlowGraph build_flow_graph(const json& desc, const ComponentLibrary& lib);
FlowGraph build_flow_graph(const std::string& text, const ComponentLibrary& lib);

struct Violation {
  std::string rule;
  std::vector<std::string> subjects;  // node/edge ids
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string() const;
};

// A side-effect-free predicate over a flow graph, with a stable name.
struct Rule {
  enum class Kind { Uniform, Compare };
  std::string name;
  Kind kind = Kind::Compare;
  bool pruning = false;  // pruning rules skip candidates; legality rules reject
  // Uniform: all nodes instantiating `component` agree on `param`
  std::string component;
  std::string param;
  // Compare: lhs <op> rhs where a side is "<node-id>.<param>", the derived
  // quantity "pe_count", or a numeric literal
  std::string lhs, op, rhs;
};

struct RuleSet {
  std::vector<Rule> legality;
  std::vector<Rule> pruning;
};

RuleSet parse_rules(const json& j);

// Built-in rules (reachability from root, non-empty groups, parameter range
// membership) always run; user legality rules are additive.
ValidationReport check_legality(const FlowGraph& g, const RuleSet& rules,
                                const ComponentLibrary& lib);

struct ConfiguredDesign {
  FlowGraph graph;
  std::string topology_sig;  // canonical signature of the node arrangement
  std::string id() const;    // stable content hash
};

std::string serialize_design(const ConfiguredDesign& d);
ConfiguredDesign parse_design(const std::string& text);

// Structural skeleton: a root memory, an optional chain of buffer levels and
// a single spatial PE array, the shape assumed by the mapper (arbitrary flow
// graphs are checked, but only this family is enumerated).
struct Skeleton {
  std::string dram_component;
  std::string buffer_component;
  std::vector<long> buffer_depths;  // allowed hierarchy depths, sorted
  std::string pe_component;
  std::vector<long> rows_choices;
  std::vector<long> cols_choices;
};

struct Constraints {
  std::map<std::string, double> bounds;  // latency|energy|area|edp|fit -> max
};

struct DesignSpaceSpec {
  ComponentLibrary library;
  Skeleton skeleton;
  RuleSet rules;
  Constraints constraints;
};

DesignSpaceSpec load_design_space(const std::string& text);
DesignSpaceSpec load_design_space(const json& j);

// Vertical exploration: each legal topology exactly once, canonical order.
std::vector<FlowGraph> enumerate_topologies(const DesignSpaceSpec& spec);

// Horizontal exploration: Cartesian product of per-node parameter ranges
// filtered by pruning rules, deterministic order.
std::vector<ConfiguredDesign> enumerate_hyperparameters(const FlowGraph& topo,
                                                        const DesignSpaceSpec& spec);

double base_area(const ConfiguredDesign& d, const ComponentLibrary& lib);

// Selective hardening: set hardened flags in descending vulnerability order
// while the added area stays within budget x base area.
ConfiguredDesign harden(const ConfiguredDesign& d, double budget,
                        const std::map<std::string, double>& vulnerability,
                        const ComponentLibrary& lib);

// Mapper-facing view of a configured design: the memory level chain from the
// root outward-in, plus the spatial array.
struct MemLevel {
  std::string node_id;
  long capacity_words = 0;  // 0 = pass-through wire level
  double bw_to_inner = 0;   // words/cycle on the edge toward the array
  double energy_per_access = 0;
};

struct ArrayInfo {
  std::string group_id;
  long rows = 1, cols = 1;
  long macs_per_cycle = 1;
  bool row_accumulate = false;
  bool col_accumulate = false;
  long regs_words = 1;  // per-PE register file
  double energy_per_mac = 0;
  double energy_per_access = 0;
};

struct Hierarchy {
  std::vector<MemLevel> levels;  // outermost (root DRAM) first
  ArrayInfo array;
  long pe_count() const { return array.rows * array.cols; }
};

Hierarchy extract_hierarchy(const ConfiguredDesign& d, const ComponentLibrary& lib);

}  // namespace npudse::design
