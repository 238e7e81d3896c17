#pragma once

#include <functional>
#include <optional>

#include "cost.hpp"

namespace npudse::dse {

using cost::CostReport;

// One evaluated (design, schedule) pair. `id` is content-derived and stable
// across runs and thread counts.
struct Point {
  std::string id;
  design::ConfiguredDesign design;
  mapping::Schedule schedule;
  CostReport report;

  double metric(const std::string& name) const { return report.metric(name); }
};

// Non-dominated set over the given metric axes. Insertion order does not
// affect the final contents; duplicates on all axes keep the lowest id.
class ParetoFront {
 public:
  explicit ParetoFront(std::vector<std::string> axes = {"latency", "energy",
                                                        "area"});
  // true if the point is kept (not dominated by an existing member)
  bool insert(Point p);
  // members sorted by id
  std::vector<Point> points() const;
  const std::vector<std::string>& axes() const { return axes_; }
  size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }

 private:
  std::vector<std::string> axes_;
  std::vector<Point> members_;
};

struct TraceEntry {
  long step = 0;
  std::string action;     // "eval", "accept", "reject", "restart", ...
  std::string candidate;  // point id
  double objective = 0;
  bool feasible = true;
  std::string detail;
};

struct SearchOptions {
  std::string objective = "latency";  // latency|energy|area|edp|fit
  std::map<std::string, double> constraints;
  long budget = 0;  // max cost evaluations; <= 0 means unlimited
  uint64_t seed = 0;
  int jobs = 1;
};

struct SearchResult {
  ParetoFront front;
  std::vector<TraceEntry> trace;
  long evaluations = 0;
  bool exhaustive = false;
  std::optional<Point> best;  // feasible objective minimizer

  json to_json() const;
};

// Designs x schedules in the whole space (after pruning rules).
unsigned long long space_size(const design::DesignSpaceSpec& spec,
                              const workload::OperatorNest& nest);

// Gray-box search: when the budget covers the whole space the front is the
// exhaustive one; otherwise bottleneck-guided hill climbing per topology,
// steered by the cost-graph diagnosis, with seeded restarts.
SearchResult explore(const design::DesignSpaceSpec& spec,
                     const workload::OperatorNest& nest,
                     const SearchOptions& opt);

// Baseline: uniform seeded sampling of (design, schedule) pairs.
SearchResult random_search(const design::DesignSpaceSpec& spec,
                           const workload::OperatorNest& nest,
                           const SearchOptions& opt);

// Metropolis over single-axis neighbor moves on a scalar objective.
// t0 == 0 degenerates to greedy descent; cooling in (0, 1].
SearchResult simulated_annealing(const design::DesignSpaceSpec& spec,
                                 const workload::OperatorNest& nest,
                                 const SearchOptions& opt, double t0,
                                 double cooling);

// Deterministic parallel evaluation: results are ordered by input index and
// identical for any worker count.
void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn);

}  // namespace npudse::dse
