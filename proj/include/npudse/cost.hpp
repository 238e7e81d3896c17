#pragma once

#include "mapping.hpp"

namespace npudse::cost {

using design::ComponentLibrary;
using design::ConfiguredDesign;
using mapping::Schedule;
using workload::OperatorNest;

struct InvalidScheduleError : InputError {
  design::ValidationReport report;
  explicit InvalidScheduleError(design::ValidationReport r)
      : InputError("invalid schedule:\n" + r.to_string()), report(std::move(r)) {}
};

struct DatapathCost {
  std::string id;  // "compute" or "xfer:<outer>-><inner>"
  double cycles = 0;
};

struct CostReport {
  double latency_cycles = 0;
  double energy = 0;
  double area = 0;
  std::vector<DatapathCost> datapaths;
  std::map<std::string, double> utilization;  // node id -> [0,1]
  double total_fit = 0;
  double padding_overhead = 0;
  // per boundary (innermost first), per operand {input, weight, output}
  std::vector<std::array<double, 3>> boundary_words;

  double edp() const { return latency_cycles * energy; }
  double metric(const std::string& name) const;  // latency|energy|area|edp|fit
  json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

// Latency, energy, area and reliability aggregation for one schedule.
// Latency contract (shared verbatim with funcsim): compute cycles =
// ceil(padded MACs / (utilized PEs * MACs/cycle)), per-boundary transfer =
// ceil(total words / bandwidth) with bandwidth 0 meaning ideal, total
// latency = max over datapaths (full double-buffered overlap).
CostReport evaluate_cost(const ConfiguredDesign& d, const Schedule& s,
                         const OperatorNest& nest, const ComponentLibrary& lib);

struct CostGraph {
  struct Item {
    std::string id;  // node id or datapath id
    double latency = 0, energy = 0, area = 0, fit = 0;
    // (parameter, why it governs this contribution)
    std::vector<std::pair<std::string, std::string>> governing;
  };
  std::vector<Item> items;
  CostReport totals;
};

CostGraph build_cost_graph(const ConfiguredDesign& d, const Schedule& s,
                           const OperatorNest& nest, const ComponentLibrary& lib);

struct BottleneckDiagnosis {
  std::string dominant;   // datapath id (latency) or node id (energy)
  double ratio = 1;       // dominant / second largest; inf when degenerate
  std::vector<std::pair<std::string, std::string>> mitigations;  // (param, direction)
};

BottleneckDiagnosis identify_bottleneck(const CostGraph& cg,
                                        const std::string& objective);

struct ReliabilityMetrics {
  double total_fit = 0;
  double expected_faulty_pe_fraction = 0;
};

// Exact expectation: each PE faulty independently with probability p; a
// faulty PE hits all of its MAC lanes.
ReliabilityMetrics reliability_metrics(const ConfiguredDesign& d, const Schedule& s,
                                       const OperatorNest& nest,
                                       const ComponentLibrary& lib,
                                       double pe_fault_rate);

// Area of one node with hardening applied; buffers scale per word.
double node_area(const design::Node& n, const ComponentLibrary& lib);

}  // namespace npudse::cost
