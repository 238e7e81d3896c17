#include "npudse/cost.hpp"

#include <algorithm>
#include <cmath>

namespace npudse::cost {

using design::CompKind;
using design::Hierarchy;

double CostReport::metric(const std::string& name) const {
  if (name == "latency") return latency_cycles;
  if (name == "energy") return energy;
  if (name == "area") return area;
  if (name == "edp") return edp();
  if (name == "fit") return total_fit;
  throw InputError("unknown metric '" + name + "'");
}

json CostReport::to_json() const {
  json j;
  j["latency_cycles"] = latency_cycles;
  j["energy"] = energy;
  j["area"] = area;
  j["edp"] = edp();
  j["total_fit"] = total_fit;
  j["padding_overhead"] = padding_overhead;
  j["datapaths"] = json::object();
  for (const auto& dp : datapaths) j["datapaths"][dp.id] = dp.cycles;
  j["utilization"] = json::object();
  for (const auto& [id, u] : utilization) j["utilization"][id] = u;
  return j;
}

std::string CostReport::csv_header() {
  return "latency_cycles,energy,area,edp,total_fit,padding_overhead";
}

std::string CostReport::csv_row() const {
  char buf[256];
  snprintf(buf, sizeof(buf), "%.6g,%.6g,%.6g,%.6g,%.6g,%.6g", latency_cycles,
           energy, area, edp(), total_fit, padding_overhead);
  return buf;
}

double node_area(const design::Node& n, const ComponentLibrary& lib) {
  const design::ComponentDef& c = lib.get(n.component);
  double a = c.costs.area;
  if (n.kind == CompKind::Buffer) {
    long sz = n.params.count("size_words") ? n.params.at("size_words") : 1;
    a *= static_cast<double>(sz);
  }
  if (n.kind == CompKind::Group) return 0;
  if (n.hardened) a *= c.costs.harden_area_factor;
  return a;
}

namespace {

struct Breakdown {
  Hierarchy hier;
  double padded_macs = 0;
  long used_pes = 1;
  double compute_cycles = 0;
  std::vector<double> transfer_cycles;               // per boundary
  std::vector<std::array<double, 3>> volumes;        // per boundary
  std::vector<std::string> boundary_ids;             // "xfer:outer->inner"
};

Breakdown compute_breakdown(const ConfiguredDesign& d, const Schedule& s,
                            const OperatorNest& nest, const ComponentLibrary& lib) {
  Breakdown b;
  b.hier = design::extract_hierarchy(d, lib);
  auto rep = mapping::validate_schedule(s, nest, b.hier);
  if (!rep.ok()) throw InvalidScheduleError(std::move(rep));

  b.padded_macs = 1;
  for (const auto& [dim, bound] : nest.dims)
    b.padded_macs *= static_cast<double>(s.padded_bound(dim));
  long ur = s.spatial.rows ? s.spatial.rows->factor : 1;
  long uc = s.spatial.cols ? s.spatial.cols->factor : 1;
  b.used_pes = ur * uc;
  b.compute_cycles = std::ceil(
      b.padded_macs / static_cast<double>(b.used_pes * b.hier.array.macs_per_cycle));

  b.volumes = mapping::data_movement_volume(s, nest, b.hier);
  size_t L = b.hier.levels.size() + 1;
  for (size_t i = 0; i + 1 < L; ++i) {
    const design::MemLevel& outer = b.hier.levels[L - 2 - i];
    std::string inner = (i == 0) ? b.hier.array.group_id
                                 : b.hier.levels[L - 1 - i].node_id;
    b.boundary_ids.push_back("xfer:" + outer.node_id + "->" + inner);
    double total = b.volumes[i][0] + b.volumes[i][1] + b.volumes[i][2];
    double cyc = outer.bw_to_inner > 0 ? std::ceil(total / outer.bw_to_inner) : 0.0;
    b.transfer_cycles.push_back(cyc);
  }
  return b;
}

}  // namespace

CostReport evaluate_cost(const ConfiguredDesign& d, const Schedule& s,
                         const OperatorNest& nest, const ComponentLibrary& lib) {
  Breakdown b = compute_breakdown(d, s, nest, lib);
  const Hierarchy& h = b.hier;
  size_t L = h.levels.size() + 1;

  CostReport r;
  r.boundary_words = b.volumes;
  r.datapaths.push_back({"compute", b.compute_cycles});
  for (size_t i = 0; i < b.transfer_cycles.size(); ++i)
    r.datapaths.push_back({b.boundary_ids[i], b.transfer_cycles[i]});
  r.latency_cycles = 0;
  for (const auto& dp : r.datapaths)
    r.latency_cycles = std::max(r.latency_cycles, dp.cycles);
  if (r.latency_cycles <= 0) r.latency_cycles = 1;

  // energy: MACs plus per-word access energy on both sides of each boundary
  r.energy = b.padded_macs * h.array.energy_per_mac;
  for (size_t i = 0; i + 1 < L; ++i) {
    double total = b.volumes[i][0] + b.volumes[i][1] + b.volumes[i][2];
    double e_out = h.levels[L - 2 - i].energy_per_access;
    double e_in = (i == 0) ? h.array.energy_per_access
                           : h.levels[L - 1 - i].energy_per_access;
    r.energy += total * (e_out + e_in);
  }

  for (const auto& [id, n] : d.graph.nodes) r.area += node_area(n, lib);

  // utilization: PEs inside the spatial footprint run while compute runs
  long ur = s.spatial.rows ? s.spatial.rows->factor : 1;
  long uc = s.spatial.cols ? s.spatial.cols->factor : 1;
  double pe_util = b.compute_cycles / r.latency_cycles;
  for (const auto& [id, n] : d.graph.nodes) {
    if (n.kind != CompKind::ComputePe) continue;
    auto us = id.rfind("pe_");
    long rr = -1, cc = -1;
    if (us != std::string::npos) {
      sscanf(id.c_str() + us, "pe_%ld_%ld", &rr, &cc);
    }
    bool used = rr >= 0 ? (rr < ur && cc < uc) : true;
    r.utilization[id] = used ? pe_util : 0.0;
  }
  for (size_t i = 0; i + 1 < L; ++i) {
    const std::string& id = h.levels[L - 2 - i].node_id;
    r.utilization[id] = r.latency_cycles > 0
                            ? b.transfer_cycles[i] / r.latency_cycles
                            : 0.0;
  }

  for (const auto& [id, n] : d.graph.nodes) {
    const design::ComponentDef& c = lib.get(n.component);
    double util = r.utilization.count(id) ? r.utilization.at(id) : 0.0;
    double fit = c.costs.fit_rate * util;
    if (n.hardened) fit *= c.costs.harden_fit_factor;
    r.total_fit += fit;
  }

  r.padding_overhead = mapping::padding_overhead(s, nest);
  return r;
}

CostGraph build_cost_graph(const ConfiguredDesign& d, const Schedule& s,
                           const OperatorNest& nest, const ComponentLibrary& lib) {
  Breakdown b = compute_breakdown(d, s, nest, lib);
  CostGraph cg;
  cg.totals = evaluate_cost(d, s, nest, lib);
  const Hierarchy& h = b.hier;
  size_t L = h.levels.size() + 1;

  CostGraph::Item comp;
  comp.id = "compute";
  comp.latency = b.compute_cycles;
  comp.energy = b.padded_macs * h.array.energy_per_mac;
  comp.governing = {{"array.rows", "spatial PEs divide the MAC count"},
                    {"array.cols", "spatial PEs divide the MAC count"},
                    {"pe.macs_per_cycle", "per-PE throughput"},
                    {"schedule.spatial_unroll", "utilized fraction of the array"}};
  cg.items.push_back(comp);

  for (size_t i = 0; i + 1 < L; ++i) {
    const design::MemLevel& outer = h.levels[L - 2 - i];
    std::string inner_id = (i == 0) ? h.array.group_id : h.levels[L - 1 - i].node_id;
    CostGraph::Item it;
    it.id = b.boundary_ids[i];
    it.latency = b.transfer_cycles[i];
    double total = b.volumes[i][0] + b.volumes[i][1] + b.volumes[i][2];
    double e_in = (i == 0) ? h.array.energy_per_access
                           : h.levels[L - 1 - i].energy_per_access;
    it.energy = total * (outer.energy_per_access + e_in);
    it.governing = {{outer.node_id + ".bandwidth", "words per cycle across the boundary"},
                    {"schedule.reuse_retile", "reuse lowers fetched volume"}};
    if (i == 0) {
      it.governing.push_back({"pe.regs_words", "larger register tiles raise reuse"});
    } else {
      it.governing.push_back({inner_id + ".size_words", "capacity enables larger tiles"});
    }
    cg.items.push_back(it);
  }

  // per-node area / fit leaves
  for (const auto& [id, n] : d.graph.nodes) {
    if (n.kind == CompKind::Group) continue;
    CostGraph::Item it;
    it.id = "node:" + id;
    it.area = node_area(n, lib);
    const design::ComponentDef& c = lib.get(n.component);
    double util = cg.totals.utilization.count(id) ? cg.totals.utilization.at(id) : 0.0;
    it.fit = c.costs.fit_rate * util * (n.hardened ? c.costs.harden_fit_factor : 1.0);
    cg.items.push_back(it);
  }
  return cg;
}

BottleneckDiagnosis identify_bottleneck(const CostGraph& cg,
                                        const std::string& objective) {
  if (objective != "latency" && objective != "energy")
    throw InputError("identify_bottleneck: objective must be latency or energy");
  BottleneckDiagnosis diag;
  const CostGraph::Item* best = nullptr;
  double second = -1;
  for (const auto& it : cg.items) {
    double v = (objective == "latency") ? it.latency : it.energy;
    if (objective == "latency" && it.id.substr(0, 5) == "node:") continue;
    if (!best) {
      best = &it;
      continue;
    }
    double bv = (objective == "latency") ? best->latency : best->energy;
    if (v > bv || (v == bv && it.id < best->id)) {
      second = std::max(second, bv);
      best = &it;
    } else {
      second = std::max(second, v);
    }
  }
  if (!best) throw InputError("identify_bottleneck: empty cost graph");
  diag.dominant = best->id;
  double bv = (objective == "latency") ? best->latency : best->energy;
  diag.ratio = (second > 0) ? bv / second
                            : std::numeric_limits<double>::infinity();
  diag.mitigations = best->governing;
  if (diag.mitigations.empty())
    diag.mitigations = {{"schedule.reuse_retile", "re-optimize the mapping"}};
  return diag;
}

ReliabilityMetrics reliability_metrics(const ConfiguredDesign& d, const Schedule& s,
                                       const OperatorNest& nest,
                                       const ComponentLibrary& lib,
                                       double pe_fault_rate) {
  if (pe_fault_rate < 0 || pe_fault_rate > 1)
    throw InputError("reliability_metrics: fault rate must be in [0,1]");
  ReliabilityMetrics m;
  CostReport r = evaluate_cost(d, s, nest, lib);
  m.total_fit = r.total_fit;
  Hierarchy h = design::extract_hierarchy(d, lib);
  double lanes = static_cast<double>(h.array.macs_per_cycle);
  m.expected_faulty_pe_fraction = 1.0 - std::pow(1.0 - pe_fault_rate, lanes);
  return m;
}

}  // namespace npudse::cost
