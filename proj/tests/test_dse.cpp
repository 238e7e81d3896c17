#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <atomic>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "npudse/dse.hpp"
#include "npudse/funcsim.hpp"

using namespace npudse;
using namespace npudse::dse;

namespace {

std::string slurp(const std::string& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Point mk(const std::string& id, double lat, double en, double area) {
  Point p;
  p.id = id;
  p.report.latency_cycles = lat;
  p.report.energy = en;
  p.report.area = area;
  return p;
}

// 4 designs x 50 schedules on a 2x2x2 matmul; small enough to enumerate
design::DesignSpaceSpec tiny_spec() {
  json lib = {{"version", 1},
              {"components",
               json::array(
                   {{{"name", "ddr"},
                     {"kind", "dram"},
                     {"parameters", {{"bandwidth", {{"values", {2, 4}}}}}},
                     {"costs", {{"energy_per_access", 64.0}, {"fit_rate", 20.0}}},
                     {"attributes", {{"capacity_words", -1}}}},
                    {{"name", "sram"},
                     {"kind", "buffer"},
                     {"parameters",
                      {{"size_words", {{"values", {32, 64}}}},
                       {"bandwidth", {{"values", {8}}}}}},
                     {"costs",
                      {{"area", 0.02}, {"energy_per_access", 4.0}, {"fit_rate", 2.0}}}},
                    {{"name", "mac_pe"},
                     {"kind", "compute_pe"},
                     {"costs",
                      {{"area", 1.5},
                       {"energy_per_op", 1.0},
                       {"energy_per_access", 0.5},
                       {"fit_rate", 5.0}}},
                     {"attributes",
                      {{"macs_per_cycle", 1},
                       {"regs_words", 4},
                       {"row_accumulate", 1},
                       {"col_accumulate", 0}}}}})}};
  json space = {{"version", 1},
                {"library", lib},
                {"skeleton",
                 {{"dram", {{"component", "ddr"}}},
                  {"buffer_chain", {{"component", "sram"}, {"depths", {1}}}},
                  {"array", {{"component", "mac_pe"}, {"rows", {2}}, {"cols", {2}}}}}}};
  return design::load_design_space(space.dump());
}

workload::OperatorNest tiny_nest() {
  json model = {{"version", 1},
                {"tensors", {{"a", {2, 2}}, {"b", {2, 2}}, {"c", {2, 2}}}},
                {"operators",
                 {{{"name", "mm"},
                   {"kind", "matmul"},
                   {"inputs", {"a", "b"}},
                   {"outputs", {"c"}}}}}};
  auto g = workload::parse_model(model.dump());
  return workload::lower_to_nest(g.operators[0], g);
}

// every (design, schedule) pair, evaluated directly
std::vector<Point> enumerate_all(const design::DesignSpaceSpec& spec,
                                 const workload::OperatorNest& nest) {
  std::vector<Point> out;
  for (const auto& topo : design::enumerate_topologies(spec))
    for (const auto& d : design::enumerate_hyperparameters(topo, spec)) {
      design::Hierarchy h = design::extract_hierarchy(d, spec.library);
      auto ms = mapping::formulate_mapping_space(nest, h);
      for (const auto& s : mapping::enumerate_schedules(ms)) {
        Point p;
        p.design = d;
        p.schedule = s;
        p.id = stable_hash(d.id() + "|" + s.serialize());
        p.report = cost::evaluate_cost(d, s, nest, spec.library);
        out.push_back(std::move(p));
      }
    }
  return out;
}

bool dominates(const Point& a, const Point& b, const std::vector<std::string>& axes) {
  bool strict = false;
  for (const auto& ax : axes) {
    if (a.metric(ax) > b.metric(ax)) return false;
    if (a.metric(ax) < b.metric(ax)) strict = true;
  }
  return strict;
}

// reference Pareto filter: quadratic scan, lowest id on full ties
std::set<std::string> reference_front_ids(const std::vector<Point>& pts,
                                          const std::vector<std::string>& axes) {
  std::set<std::string> keep;
  for (const auto& p : pts) {
    bool dead = false;
    for (const auto& q : pts) {
      if (dominates(q, p, axes)) dead = true;
      bool tie = true;
      for (const auto& ax : axes) tie &= (q.metric(ax) == p.metric(ax));
      if (tie && q.id < p.id) dead = true;
    }
    if (!dead) keep.insert(p.id);
  }
  return keep;
}

}  // namespace

TEST_CASE("pareto front keeps exactly the non-dominated set") {
  ParetoFront f({"latency", "energy"});
  CHECK(f.insert(mk("a", 10, 10, 1)));
  CHECK(f.insert(mk("b", 5, 20, 1)));   // trade-off, kept
  CHECK_FALSE(f.insert(mk("c", 11, 11, 1)));  // dominated by a
  CHECK(f.insert(mk("d", 9, 9, 1)));    // dominates a, evicts it
  auto pts = f.points();
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].id == "b");
  CHECK(pts[1].id == "d");
}

TEST_CASE("pareto front is insertion-order independent and de-duplicates ties") {
  std::vector<Point> pts = {mk("e", 3, 7, 2), mk("a", 1, 9, 2), mk("c", 3, 7, 2),
                            mk("b", 9, 1, 2), mk("d", 2, 8, 2), mk("f", 4, 9, 2)};
  std::set<std::string> expect = reference_front_ids(pts, {"latency", "energy"});
  std::sort(pts.begin(), pts.end(), [](const Point& x, const Point& y) {
    return x.id < y.id;
  });
  do {
    ParetoFront f({"latency", "energy"});
    for (const auto& p : pts) f.insert(p);
    std::set<std::string> got;
    for (const auto& p : f.points()) got.insert(p.id);
    CHECK(got == expect);
  } while (std::next_permutation(pts.begin(), pts.end(),
                                 [](const Point& x, const Point& y) {
                                   return x.id < y.id;
                                 }));
  // "c" ties "e" on both axes; the smaller id survives
  CHECK(expect.count("c"));
  CHECK_FALSE(expect.count("e"));
}

TEST_CASE("space size counts designs x valid schedules") {
  auto spec = tiny_spec();
  auto nest = tiny_nest();
  unsigned long long expect = 0;
  for (const auto& topo : design::enumerate_topologies(spec))
    for (const auto& d : design::enumerate_hyperparameters(topo, spec)) {
      design::Hierarchy h = design::extract_hierarchy(d, spec.library);
      expect += mapping::count_schedules(mapping::formulate_mapping_space(nest, h));
    }
  CHECK(space_size(spec, nest) == expect);
  CHECK(expect == 200);
}

TEST_CASE("unlimited-budget explore returns the exhaustive pareto front") {
  auto spec = tiny_spec();
  auto nest = tiny_nest();
  SearchOptions opt;
  opt.objective = "latency";
  opt.budget = 0;  // unlimited
  SearchResult r = explore(spec, nest, opt);
  CHECK(r.exhaustive);
  CHECK(r.evaluations == 200);

  auto all = enumerate_all(spec, nest);
  std::set<std::string> expect = reference_front_ids(all, r.front.axes());
  std::set<std::string> got;
  for (const auto& p : r.front.points()) got.insert(p.id);
  CHECK(got == expect);

  REQUIRE(r.best.has_value());
  double best_lat = 1e300;
  for (const auto& p : all) best_lat = std::min(best_lat, p.report.latency_cycles);
  CHECK(r.best->report.latency_cycles == best_lat);
}

TEST_CASE("constraints mark points infeasible") {
  auto spec = tiny_spec();
  auto nest = tiny_nest();
  SearchOptions opt;
  opt.budget = 0;
  opt.constraints["latency"] = 0.5;  // impossible: latency >= 1
  SearchResult r = explore(spec, nest, opt);
  CHECK(r.front.empty());
  CHECK_FALSE(r.best.has_value());

  opt.constraints.clear();
  opt.constraints["area"] = 1e9;  // slack: everything feasible
  SearchResult r2 = explore(spec, nest, opt);
  CHECK_FALSE(r2.front.empty());
}

TEST_CASE("budgeted explore stays within budget and is deterministic across jobs") {
  auto spec = design::load_design_space(
      slurp(std::string(NPUDSE_DATA_DIR) + "/space.json"));
  auto g = workload::parse_model(slurp(std::string(NPUDSE_DATA_DIR) + "/model.json"));
  auto nest = workload::lower_to_nest(g.operators[0], g);

  SearchOptions opt;
  opt.objective = "latency";
  opt.budget = 120;
  opt.seed = 7;
  opt.jobs = 1;
  SearchResult a = explore(spec, nest, opt);
  CHECK_FALSE(a.exhaustive);
  CHECK(a.evaluations <= 120);
  CHECK_FALSE(a.front.empty());
  REQUIRE(a.best.has_value());
  CHECK_FALSE(a.trace.empty());

  opt.jobs = 4;
  SearchResult b = explore(spec, nest, opt);
  CHECK(a.to_json().dump() == b.to_json().dump());

  opt.jobs = 1;
  opt.seed = 8;
  SearchResult c = explore(spec, nest, opt);
  CHECK(c.evaluations <= 120);  // different seed still respects the budget
}

TEST_CASE("random search is seeded and job-count invariant") {
  auto spec = tiny_spec();
  auto nest = tiny_nest();
  SearchOptions opt;
  opt.objective = "edp";
  opt.budget = 40;
  opt.seed = 11;
  opt.jobs = 1;
  SearchResult a = random_search(spec, nest, opt);
  CHECK(a.evaluations == 40);
  CHECK_FALSE(a.front.empty());
  opt.jobs = 4;
  SearchResult b = random_search(spec, nest, opt);
  CHECK(a.to_json().dump() == b.to_json().dump());
  opt.jobs = 1;
  opt.seed = 12;
  SearchResult c = random_search(spec, nest, opt);
  CHECK(a.to_json().dump() != c.to_json().dump());
}

TEST_CASE("simulated annealing improves over its first sample") {
  auto spec = tiny_spec();
  auto nest = tiny_nest();
  SearchOptions opt;
  opt.objective = "latency";
  opt.budget = 60;
  opt.seed = 3;
  SearchResult r = simulated_annealing(spec, nest, opt, 1.0, 0.9);
  CHECK(r.evaluations <= 60);
  REQUIRE(r.best.has_value());
  // greedy (t0 = 0) also runs and never exceeds the budget
  SearchResult g0 = simulated_annealing(spec, nest, opt, 0.0, 0.9);
  CHECK(g0.evaluations <= 60);
  REQUIRE(g0.best.has_value());

  // with this tiny space the annealer should land near the optimum
  SearchOptions full;
  full.budget = 0;
  SearchResult ex = explore(spec, nest, full);
  CHECK(r.best->report.latency_cycles <=
        2.0 * ex.best->report.latency_cycles);
}

TEST_CASE("parallel_for covers every index exactly once, any job count") {
  for (int jobs : {1, 2, 8}) {
    std::vector<std::atomic<int>> hits(257);
    for (auto& h : hits) h = 0;
    parallel_for(257, jobs, [&](size_t i) { hits[i]++; });
    for (auto& h : hits) CHECK(h == 1);
  }
  parallel_for(0, 4, [&](size_t) { FAIL("no work expected"); });
}

TEST_CASE("search result serialization carries the essentials") {
  auto spec = tiny_spec();
  auto nest = tiny_nest();
  SearchOptions opt;
  opt.budget = 0;
  SearchResult r = explore(spec, nest, opt);
  json j = r.to_json();
  CHECK(j["evaluations"] == 200);
  CHECK(j["exhaustive"] == true);
  CHECK(j["front"].size() == r.front.size());
  CHECK(j.contains("best"));
}
