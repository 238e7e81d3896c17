#include "npudse/dse.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace npudse::dse {

using design::ConfiguredDesign;
using design::DesignSpaceSpec;
using mapping::MappingSpace;
using mapping::Schedule;
using workload::OperatorNest;

ParetoFront::ParetoFront(std::vector<std::string> axes) : axes_(std::move(axes)) {
  if (axes_.empty()) throw InputError("pareto front needs at least one axis");
}

bool ParetoFront::insert(Point p) {
  std::vector<double> pv;
  for (const auto& a : axes_) pv.push_back(p.metric(a));
  auto values = [&](const Point& q) {
    std::vector<double> v;
    for (const auto& a : axes_) v.push_back(q.metric(a));
    return v;
  };
  for (const auto& m : members_) {
    std::vector<double> mv = values(m);
    bool all_le = true, any_lt = false;
    for (size_t i = 0; i < pv.size(); ++i) {
      if (mv[i] > pv[i]) all_le = false;
      if (mv[i] < pv[i]) any_lt = true;
    }
    if (all_le && (any_lt || m.id <= p.id)) return false;  // dominated or dup
  }
  members_.erase(
      std::remove_if(members_.begin(), members_.end(),
                     [&](const Point& m) {
                       std::vector<double> mv = values(m);
                       bool all_ge = true, any_gt = false;
                       for (size_t i = 0; i < pv.size(); ++i) {
                         if (mv[i] < pv[i]) all_ge = false;
                         if (mv[i] > pv[i]) any_gt = true;
                       }
                       return all_ge && (any_gt || p.id < m.id);
                     }),
      members_.end());
  members_.push_back(std::move(p));
  return true;
}

std::vector<Point> ParetoFront::points() const {
  std::vector<Point> out = members_;
  std::sort(out.begin(), out.end(),
            [](const Point& a, const Point& b) { return a.id < b.id; });
  return out;
}

void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        if (!failed.exchange(true)) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  int nw = std::min<int>(jobs, static_cast<int>(n));
  for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failed.load()) std::rethrow_exception(err);
}

json SearchResult::to_json() const {
  json j;
  j["evaluations"] = evaluations;
  j["exhaustive"] = exhaustive;
  json front_j = json::array();
  for (const auto& p : front.points()) {
    json pj;
    pj["id"] = p.id;
    for (const auto& a : front.axes()) pj[a] = p.metric(a);
    pj["edp"] = p.report.edp();
    front_j.push_back(pj);
  }
  j["front"] = front_j;
  if (best) {
    j["best"] = {{"id", best->id},
                 {"design", json::parse(design::serialize_design(best->design))},
                 {"schedule", json::parse(best->schedule.serialize())},
                 {"report", best->report.to_json()}};
  }
  json tr = json::array();
  for (const auto& e : trace)
    tr.push_back({{"step", e.step},
                  {"action", e.action},
                  {"candidate", e.candidate},
                  {"objective", e.objective},
                  {"feasible", e.feasible},
                  {"detail", e.detail}});
  j["trace"] = tr;
  return j;
}

namespace {

const std::set<std::string> kMetrics = {"latency", "energy", "area", "edp", "fit"};

struct Axis {
  std::string node;  // "array", "array.pe", or a chain node id
  std::string param;
  std::vector<long> values;
};

// One topology with its full configured-design list and an axis-value index
// for neighbor moves.
struct TopoSpace {
  std::vector<ConfiguredDesign> designs;
  std::vector<Axis> axes;
  std::map<std::vector<long>, size_t> by_key;
};

std::vector<std::string> chain_ids(const design::FlowGraph& topo) {
  std::vector<std::string> chain;
  std::string cur = topo.root;
  while (!cur.empty()) {
    if (topo.nodes.at(cur).kind != design::CompKind::Group) chain.push_back(cur);
    std::string next;
    for (const auto& e : topo.edges)
      if (e.src == cur) {
        next = e.dst;
        break;
      }
    cur = next;
  }
  return chain;
}

std::vector<long> axis_key(const TopoSpace& ts, const ConfiguredDesign& d) {
  std::vector<long> key;
  const design::Node& grp = d.graph.nodes.at("array");
  for (const auto& ax : ts.axes) {
    if (ax.node == "array") {
      key.push_back(grp.params.at(ax.param));
    } else if (ax.node == "array.pe") {
      key.push_back(d.graph.nodes.at(grp.children.front()).params.at(ax.param));
    } else {
      key.push_back(d.graph.nodes.at(ax.node).params.at(ax.param));
    }
  }
  return key;
}

std::vector<TopoSpace> build_spaces(const DesignSpaceSpec& spec) {
  std::vector<TopoSpace> out;
  for (const auto& topo : design::enumerate_topologies(spec)) {
    TopoSpace ts;
    ts.axes.push_back({"array", "rows", spec.skeleton.rows_choices});
    ts.axes.push_back({"array", "cols", spec.skeleton.cols_choices});
    for (const auto& [p, dom] : spec.library.get(spec.skeleton.pe_component).params)
      ts.axes.push_back({"array.pe", p, dom.values});
    for (const auto& id : chain_ids(topo)) {
      const auto& comp = spec.library.get(topo.nodes.at(id).component);
      for (const auto& [p, dom] : comp.params) ts.axes.push_back({id, p, dom.values});
    }
    ts.designs = design::enumerate_hyperparameters(topo, spec);
    for (size_t i = 0; i < ts.designs.size(); ++i)
      ts.by_key[axis_key(ts, ts.designs[i])] = i;
    if (!ts.designs.empty()) out.push_back(std::move(ts));
  }
  return out;
}

std::string point_id(const ConfiguredDesign& d, const Schedule& s) {
  return stable_hash(d.id() + "|" + s.serialize());
}

struct Evaluator {
  const DesignSpaceSpec& spec;
  const OperatorNest& nest;
  const SearchOptions& opt;
  SearchResult& res;

  bool feasible(const CostReport& r) const {
    for (const auto& [m, bound] : opt.constraints)
      if (r.metric(m) > bound + 1e-9) return false;
    return true;
  }

  bool budget_left() const {
    return opt.budget <= 0 || res.evaluations < opt.budget;
  }

  // evaluates, records, and returns the point; nullopt for invalid schedules
  std::optional<Point> eval(const ConfiguredDesign& d, const Schedule& s,
                            const std::string& action) {
    Point p;
    p.design = d;
    p.schedule = s;
    try {
      p.report = cost::evaluate_cost(d, s, nest, spec.library);
    } catch (const cost::InvalidScheduleError&) {
      return std::nullopt;
    }
    ++res.evaluations;
    p.id = point_id(d, s);
    bool ok = feasible(p.report);
    res.trace.push_back({res.evaluations, action, p.id,
                         p.report.metric(opt.objective), ok, ""});
    if (ok) {
      res.front.insert(p);
      if (!res.best || p.metric(opt.objective) < res.best->metric(opt.objective) ||
          (p.metric(opt.objective) == res.best->metric(opt.objective) &&
           p.id < res.best->id))
        res.best = p;
    }
    return p;
  }
};

void check_options(const SearchOptions& opt) {
  if (!kMetrics.count(opt.objective))
    throw InputError("unknown objective '" + opt.objective + "'");
  for (const auto& [m, v] : opt.constraints) {
    if (!kMetrics.count(m)) throw InputError("unknown constraint metric '" + m + "'");
    if (v <= 0) throw InputError("constraint bound must be positive");
  }
  if (opt.jobs < 1) throw InputError("jobs must be >= 1");
}

// exhaustive sweep: evaluates every (design, schedule) pair in canonical
// order; parallel over candidates, merged in index order
void run_exhaustive(const DesignSpaceSpec& spec, const OperatorNest& nest,
                    const SearchOptions& opt, const std::vector<TopoSpace>& spaces,
                    SearchResult& res) {
  struct Task {
    const ConfiguredDesign* d;
    Schedule s;
  };
  std::vector<Task> tasks;
  for (const auto& ts : spaces)
    for (const auto& d : ts.designs) {
      MappingSpace ms =
          mapping::formulate_mapping_space(nest, d, spec.library);
      mapping::for_each_schedule(ms, [&](const Schedule& s) {
        tasks.push_back({&d, s});
        return true;
      });
    }
  std::vector<CostReport> reports(tasks.size());
  std::vector<char> valid(tasks.size(), 0);
  parallel_for(tasks.size(), opt.jobs, [&](size_t i) {
    try {
      reports[i] = cost::evaluate_cost(*tasks[i].d, tasks[i].s, nest, spec.library);
      valid[i] = 1;
    } catch (const cost::InvalidScheduleError&) {
    }
  });
  Evaluator ev{spec, nest, opt, res};
  for (size_t i = 0; i < tasks.size(); ++i) {
    if (!valid[i]) continue;
    Point p;
    p.design = *tasks[i].d;
    p.schedule = tasks[i].s;
    p.report = reports[i];
    p.id = point_id(p.design, p.schedule);
    ++res.evaluations;
    bool ok = ev.feasible(p.report);
    res.trace.push_back({res.evaluations, "exhaustive", p.id,
                         p.report.metric(opt.objective), ok, ""});
    if (ok) {
      res.front.insert(p);
      if (!res.best || p.metric(opt.objective) < res.best->metric(opt.objective) ||
          (p.metric(opt.objective) == res.best->metric(opt.objective) &&
           p.id < res.best->id))
        res.best = p;
    }
  }
  res.exhaustive = true;
}

// (axis, +1/-1) neighbor in the configured-design lattice; nullopt when the
// move leaves the domain or lands on a pruned configuration
std::optional<size_t> axis_move(const TopoSpace& ts, size_t design_idx,
                                size_t axis, int dir) {
  std::vector<long> key = axis_key(ts, ts.designs[design_idx]);
  const auto& vals = ts.axes[axis].values;
  auto it = std::find(vals.begin(), vals.end(), key[axis]);
  if (it == vals.end()) return std::nullopt;
  long pos = it - vals.begin() + dir;
  if (pos < 0 || pos >= static_cast<long>(vals.size())) return std::nullopt;
  key[axis] = vals[static_cast<size_t>(pos)];
  auto hit = ts.by_key.find(key);
  if (hit == ts.by_key.end()) return std::nullopt;
  return hit->second;
}

// maps a diagnosis parameter name to an axis of the topology lattice
std::optional<size_t> axis_for_param(const TopoSpace& ts, const std::string& param) {
  std::string node, p;
  if (param == "array.rows" || param == "array.cols") {
    node = "array";
    p = param.substr(6);
  } else if (param.rfind("pe.", 0) == 0) {
    node = "array.pe";
    p = param.substr(3);
  } else {
    auto dot = param.rfind('.');
    if (dot == std::string::npos) return std::nullopt;
    node = param.substr(0, dot);
    p = param.substr(dot + 1);
  }
  for (size_t a = 0; a < ts.axes.size(); ++a)
    if (ts.axes[a].node == node && ts.axes[a].param == p) return a;
  return std::nullopt;
}

Schedule pick_schedule(const MappingSpace& ms, Rng& rng) {
  return mapping::sample_schedule(ms, rng);
}

}  // namespace

unsigned long long space_size(const DesignSpaceSpec& spec,
                              const OperatorNest& nest) {
  unsigned long long total = 0;
  for (const auto& ts : build_spaces(spec))
    for (const auto& d : ts.designs) {
      MappingSpace ms = mapping::formulate_mapping_space(nest, d, spec.library);
      total += mapping::count_schedules(ms);
    }
  return total;
}

SearchResult explore(const DesignSpaceSpec& spec, const OperatorNest& nest,
                     const SearchOptions& opt) {
  check_options(opt);
  SearchResult res;
  std::vector<TopoSpace> spaces = build_spaces(spec);
  if (spaces.empty()) return res;

  unsigned long long total = 0;
  for (const auto& ts : spaces)
    for (const auto& d : ts.designs) {
      MappingSpace ms = mapping::formulate_mapping_space(nest, d, spec.library);
      total += mapping::count_schedules(ms);
    }
  if (opt.budget <= 0 || static_cast<unsigned long long>(opt.budget) >= total) {
    run_exhaustive(spec, nest, opt, spaces, res);
    return res;
  }

  Evaluator ev{spec, nest, opt, res};
  long per_topo = std::max<long>(1, opt.budget / static_cast<long>(spaces.size()));
  std::string diag_objective =
      (opt.objective == "energy") ? "energy" : "latency";

  for (size_t t = 0; t < spaces.size(); ++t) {
    const TopoSpace& ts = spaces[t];
    Rng rng(Rng::derive(opt.seed, t));
    long topo_start = res.evaluations;
    auto topo_budget_left = [&] {
      return ev.budget_left() && res.evaluations - topo_start < per_topo;
    };

    // start from the smallest configuration: fewest resources, bottleneck
    // diagnosis then walks toward whatever limits the objective
    size_t cur_idx = 0;
    std::optional<Point> cur;
    auto eval_design = [&](size_t idx, const std::string& action,
                           int samples) -> std::optional<Point> {
      MappingSpace ms =
          mapping::formulate_mapping_space(nest, ts.designs[idx], spec.library);
      std::optional<Point> best_local;
      for (int k = 0; k < samples && topo_budget_left(); ++k) {
        auto p = ev.eval(ts.designs[idx], pick_schedule(ms, rng), action);
        if (p && (!best_local ||
                  p->metric(opt.objective) < best_local->metric(opt.objective)))
          best_local = p;
      }
      return best_local;
    };
    cur = eval_design(cur_idx, "seed", 2);

    while (topo_budget_left()) {
      if (!cur) {
        cur_idx = static_cast<size_t>(rng.next_below(ts.designs.size()));
        cur = eval_design(cur_idx, "restart", 1);
        continue;
      }
      cost::CostGraph cg = cost::build_cost_graph(cur->design, cur->schedule,
                                                  nest, spec.library);
      cost::BottleneckDiagnosis diag =
          cost::identify_bottleneck(cg, diag_objective);
      bool improved = false;
      for (const auto& [param, why] : diag.mitigations) {
        if (!topo_budget_left()) break;
        (void)why;
        if (param.rfind("schedule.", 0) == 0) {
          auto p = eval_design(cur_idx, "retile:" + param, 1);
          if (p && p->metric(opt.objective) < cur->metric(opt.objective)) {
            cur = p;
            improved = true;
            break;
          }
          continue;
        }
        auto ax = axis_for_param(ts, param);
        if (!ax) continue;
        auto nb = axis_move(ts, cur_idx, *ax, +1);
        if (!nb) continue;
        auto p = eval_design(*nb, "grow:" + param, 1);
        if (p && p->metric(opt.objective) < cur->metric(opt.objective)) {
          cur_idx = *nb;
          cur = p;
          improved = true;
          break;
        }
      }
      if (!improved) {
        // local optimum under the diagnosis; seeded restart elsewhere
        cur_idx = static_cast<size_t>(rng.next_below(ts.designs.size()));
        cur = eval_design(cur_idx, "restart", 1);
      }
    }
  }
  return res;
}

SearchResult random_search(const DesignSpaceSpec& spec, const OperatorNest& nest,
                           const SearchOptions& opt) {
  check_options(opt);
  if (opt.budget <= 0) throw InputError("random search needs a positive budget");
  SearchResult res;
  std::vector<TopoSpace> spaces = build_spaces(spec);
  std::vector<const ConfiguredDesign*> all;
  for (const auto& ts : spaces)
    for (const auto& d : ts.designs) all.push_back(&d);
  if (all.empty()) return res;

  struct Draw {
    const ConfiguredDesign* d;
    Schedule s;
  };
  std::vector<Draw> draws(static_cast<size_t>(opt.budget));
  parallel_for(draws.size(), opt.jobs, [&](size_t i) {
    Rng rng(Rng::derive(opt.seed, i));
    const ConfiguredDesign* d =
        all[static_cast<size_t>(rng.next_below(all.size()))];
    MappingSpace ms = mapping::formulate_mapping_space(nest, *d, spec.library);
    draws[i] = {d, pick_schedule(ms, rng)};
  });
  std::vector<CostReport> reports(draws.size());
  std::vector<char> valid(draws.size(), 0);
  parallel_for(draws.size(), opt.jobs, [&](size_t i) {
    try {
      reports[i] = cost::evaluate_cost(*draws[i].d, draws[i].s, nest, spec.library);
      valid[i] = 1;
    } catch (const cost::InvalidScheduleError&) {
    }
  });
  Evaluator ev{spec, nest, opt, res};
  for (size_t i = 0; i < draws.size(); ++i) {
    if (!valid[i]) continue;
    Point p;
    p.design = *draws[i].d;
    p.schedule = draws[i].s;
    p.report = reports[i];
    p.id = point_id(p.design, p.schedule);
    ++res.evaluations;
    bool ok = ev.feasible(p.report);
    res.trace.push_back({res.evaluations, "random", p.id,
                         p.report.metric(opt.objective), ok, ""});
    if (ok) {
      res.front.insert(p);
      if (!res.best || p.metric(opt.objective) < res.best->metric(opt.objective) ||
          (p.metric(opt.objective) == res.best->metric(opt.objective) &&
           p.id < res.best->id))
        res.best = p;
    }
  }
  return res;
}

SearchResult simulated_annealing(const DesignSpaceSpec& spec,
                                 const OperatorNest& nest,
                                 const SearchOptions& opt, double t0,
                                 double cooling) {
  check_options(opt);
  if (opt.budget <= 0) throw InputError("annealing needs a positive budget");
  if (t0 < 0 || cooling <= 0 || cooling > 1)
    throw InputError("bad annealing parameters");
  SearchResult res;
  std::vector<TopoSpace> spaces = build_spaces(spec);
  if (spaces.empty()) return res;
  Rng rng(opt.seed);
  Evaluator ev{spec, nest, opt, res};

  size_t ti = static_cast<size_t>(rng.next_below(spaces.size()));
  const TopoSpace& ts = spaces[ti];
  size_t cur_idx = static_cast<size_t>(rng.next_below(ts.designs.size()));
  MappingSpace ms =
      mapping::formulate_mapping_space(nest, ts.designs[cur_idx], spec.library);
  std::optional<Point> cur = ev.eval(ts.designs[cur_idx], pick_schedule(ms, rng), "init");
  double temp = t0;
  while (ev.budget_left()) {
    size_t nxt_idx = cur_idx;
    if (!ts.axes.empty() && rng.next_double() < 0.7) {
      size_t ax = static_cast<size_t>(rng.next_below(ts.axes.size()));
      int dir = rng.bernoulli(0.5) ? 1 : -1;
      auto nb = axis_move(ts, cur_idx, ax, dir);
      if (nb) nxt_idx = *nb;
    }
    MappingSpace nms =
        mapping::formulate_mapping_space(nest, ts.designs[nxt_idx], spec.library);
    auto p = ev.eval(ts.designs[nxt_idx], pick_schedule(nms, rng), "anneal");
    if (!p) continue;
    if (!cur) {
      cur = p;
      cur_idx = nxt_idx;
      continue;
    }
    double dv = p->metric(opt.objective) - cur->metric(opt.objective);
    bool accept;
    if (dv <= 0) {
      accept = true;
    } else if (std::isinf(temp)) {
      accept = true;  // infinite temperature: pure random walk
    } else if (temp <= 0) {
      accept = false;  // greedy descent
    } else {
      accept = rng.next_double() < std::exp(-dv / temp);
    }
    if (accept) {
      cur = p;
      cur_idx = nxt_idx;
    }
    temp *= cooling;
  }
  return res;
}

}  // namespace npudse::dse
