// Acceptance gate: one self-contained check per shipped guarantee, one
// [PASS]/[FAIL] line each, nonzero exit if anything fails. Each check
// re-derives its expected answer with an independent method (brute force,
// finite differences, exhaustive enumeration) rather than trusting the
// library under test.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "npudse/dse.hpp"
#include "npudse/funcsim.hpp"
#include "npudse/util.hpp"

using namespace npudse;
using workload::OperatorNest;

namespace {

int failures = 0;

void report(int idx, const char* what, bool ok, const std::string& detail) {
  std::printf("[%s] %d %s%s%s\n", ok ? "PASS" : "FAIL", idx, what,
              detail.empty() ? "" : ": ", detail.c_str());
  if (!ok) ++failures;
}

std::string slurp(const std::string& p) {
  std::ifstream f(p);
  if (!f.good()) throw std::runtime_error("cannot read " + p);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string data(const std::string& name) {
  return std::string(NPUDSE_DATA_DIR) + "/" + name;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

OperatorNest matmul_nest(long m, long n, long k) {
  json j = {{"version", 1},
            {"tensors", {{"a", {m, k}}, {"b", {k, n}}, {"c", {m, n}}}},
            {"operators",
             {{{"name", "mm"},
               {"kind", "matmul"},
               {"inputs", {"a", "b"}},
               {"outputs", {"c"}}}}}};
  workload::ModelGraph g = workload::parse_model(j.dump());
  return workload::lower_to_nest(g.operators[0], g);
}

design::Hierarchy two_level(long rows, long cols, long buf_words, bool row_acc,
                            bool col_acc) {
  design::Hierarchy h;
  h.levels.push_back({"dram", -1, 4.0, 32.0});
  h.levels.push_back({"buf1", buf_words, 8.0, 2.0});
  h.array.group_id = "array";
  h.array.rows = rows;
  h.array.cols = cols;
  h.array.row_accumulate = row_acc;
  h.array.col_accumulate = col_acc;
  h.array.regs_words = 4;
  h.array.energy_per_mac = 1.0;
  return h;
}

// ---- independent schedule generator (check 2) --------------------------

std::string schedule_key(const mapping::Schedule& s) {
  json j;
  for (size_t l = 0; l < s.tiles.size(); ++l) {
    json jl;
    for (const auto& [d, t] : s.tiles[l]) jl["tiles"][d] = t;
    jl["order"] = json::array();
    for (const auto& d : s.loop_order[l])
      if (s.tile(l, d) > 1) jl["order"].push_back(d);
    j.push_back(jl);
  }
  if (s.spatial.rows) j.push_back({s.spatial.rows->dim, s.spatial.rows->factor});
  if (s.spatial.cols) j.push_back({s.spatial.cols->dim, s.spatial.cols->factor});
  return j.dump();
}

void ordered_factor_rec(long rem, size_t parts, std::vector<long>& cur,
                        std::vector<std::vector<long>>& out) {
  if (cur.size() + 1 == parts) {
    cur.push_back(rem);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (long d = 1; d <= rem; ++d)
    if (rem % d == 0) {
      cur.push_back(d);
      ordered_factor_rec(rem / d, parts, cur, out);
      cur.pop_back();
    }
}

std::vector<std::vector<long>> all_factorizations(long n, size_t parts) {
  std::vector<std::vector<long>> out;
  std::vector<long> cur;
  ordered_factor_rec(n, parts, cur, out);
  return out;
}

// flat generator: every spatial assignment, every per-dim ordered
// factorization, every permutation at every level; dedup by key, filter by
// the public validator
std::set<std::string> brute_force_keys(const OperatorNest& nest,
                                       const design::Hierarchy& hier) {
  size_t L = hier.levels.size() + 1;
  std::vector<std::string> dims;
  for (const auto& [d, b] : nest.dims) dims.push_back(d);

  std::vector<mapping::SpatialMap> opts;
  opts.push_back({});
  auto eligible = [&](const std::string& d, bool acc) {
    return !nest.reduction.count(d) || acc;
  };
  bool row_primary = hier.array.rows > 1;
  long pext = row_primary ? hier.array.rows : hier.array.cols;
  bool pacc = row_primary ? hier.array.row_accumulate : hier.array.col_accumulate;
  if (pext > 1)
    for (const auto& [d, b] : nest.dims) {
      if (b <= 1 || !eligible(d, pacc)) continue;
      mapping::SpatialMap m;
      mapping::SpatialAxis ax{d, std::min(pext, b)};
      if (row_primary) m.rows = ax; else m.cols = ax;
      opts.push_back(m);
    }
  if (hier.array.rows > 1 && hier.array.cols > 1)
    for (const auto& [d1, b1] : nest.dims)
      for (const auto& [d2, b2] : nest.dims) {
        if (d1 == d2 || b1 <= 1 || b2 <= 1) continue;
        if (!eligible(d1, hier.array.row_accumulate)) continue;
        if (!eligible(d2, hier.array.col_accumulate)) continue;
        mapping::SpatialMap m;
        m.rows = mapping::SpatialAxis{d1, std::min(hier.array.rows, b1)};
        m.cols = mapping::SpatialAxis{d2, std::min(hier.array.cols, b2)};
        opts.push_back(m);
      }

  std::vector<std::vector<std::string>> perms;
  {
    std::vector<std::string> p = dims;
    std::sort(p.begin(), p.end());
    do {
      perms.push_back(p);
    } while (std::next_permutation(p.begin(), p.end()));
  }

  std::set<std::string> keys;
  for (const auto& opt : opts) {
    std::vector<std::vector<std::vector<long>>> tuples;
    for (const auto& [d, b] : nest.dims) {
      long u = opt.factor_of(d);
      tuples.push_back(all_factorizations((b + u - 1) / u, L));
    }
    std::vector<size_t> ti(nest.dims.size(), 0);
    while (true) {
      mapping::Schedule s;
      s.spatial = opt;
      s.tiles.assign(L, {});
      s.loop_order.assign(L, {});
      for (size_t di = 0; di < nest.dims.size(); ++di)
        for (size_t l = 0; l < L; ++l)
          s.tiles[l][nest.dims[di].first] = tuples[di][ti[di]][L - 1 - l];
      std::vector<size_t> oi(L, 0);
      while (true) {
        for (size_t l = 0; l < L; ++l) s.loop_order[l] = perms[oi[l]];
        if (mapping::validate_schedule(s, nest, hier).ok())
          keys.insert(schedule_key(s));
        size_t l = 0;
        while (l < L && ++oi[l] == perms.size()) oi[l++] = 0;
        if (l == L) break;
      }
      size_t di = 0;
      while (di < nest.dims.size() && ++ti[di] == tuples[di].size()) ti[di++] = 0;
      if (di == nest.dims.size()) break;
    }
  }
  return keys;
}

// ---- tiny exhaustive design space (check 4a) ---------------------------

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

std::vector<dse::Point> enumerate_all(const design::DesignSpaceSpec& spec,
                                      const OperatorNest& nest) {
  std::vector<dse::Point> out;
  for (const auto& topo : design::enumerate_topologies(spec))
    for (const auto& d : design::enumerate_hyperparameters(topo, spec)) {
      design::Hierarchy h = design::extract_hierarchy(d, spec.library);
      auto ms = mapping::formulate_mapping_space(nest, h);
      for (const auto& s : mapping::enumerate_schedules(ms)) {
        dse::Point p;
        p.design = d;
        p.schedule = s;
        p.id = stable_hash(d.id() + "|" + s.serialize());
        p.report = cost::evaluate_cost(d, s, nest, spec.library);
        out.push_back(std::move(p));
      }
    }
  return out;
}

bool dominates(const dse::Point& a, const dse::Point& b,
               const std::vector<std::string>& axes) {
  bool strict = false;
  for (const auto& ax : axes) {
    if (a.metric(ax) > b.metric(ax)) return false;
    if (a.metric(ax) < b.metric(ax)) strict = true;
  }
  return strict;
}

std::set<std::string> reference_front_ids(const std::vector<dse::Point>& pts,
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

// ---- shared classifier benchmark (checks 5 and 6) ----------------------

struct Bench {
  nn::Dataset train, test;
  nn::TinyNet net;
  nn::QuantizedNet qnet;
};

Bench make_bench(uint64_t seed) {
  Bench b;
  uint64_t task = Rng::derive(seed, 100);
  b.train = nn::make_synthetic(Rng::derive(seed, 101), 256, 16, 4, 1.0, task);
  b.test = nn::make_synthetic(Rng::derive(seed, 102), 256, 16, 4, 1.0, task);
  b.net = nn::TinyNet::init({16, 16, 4}, Rng::derive(seed, 103));
  nn::train_sgd(b.net, b.train, 30, 0.05f, 16, Rng::derive(seed, 104));
  b.qnet = nn::quantize_net(b.net);
  return b;
}

double perm_cost(const std::vector<double>& sal, const std::vector<long>& perm,
                 const rel::FaultMap& fm) {
  double c = 0;
  for (size_t f = 0; f < sal.size(); ++f)
    c += sal[f] * static_cast<double>(fm.faults_in_col(perm[f]));
  return c;
}

// ---- CLI runner (check 8) ----------------------------------------------

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run_tool(const std::string& args) {
  std::string cmd = std::string(NPUDSE_TOOL_PATH) + " " + args + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  RunResult r;
  if (!p) return r;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof(buf), p)) > 0) r.out.append(buf, n);
  int st = pclose(p);
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string tmp_dir(const std::string& tag) {
  std::string tmpl = "/tmp/npudse_acc_" + tag + "_XXXXXX";
  std::vector<char> buf(tmpl.begin(), tmpl.end());
  buf.push_back('\0');
  if (!mkdtemp(buf.data())) throw std::runtime_error("mkdtemp failed");
  return std::string(buf.data());
}

// ---- checks --------------------------------------------------------------

// analytic cost model and the tile-functional simulator agree exactly
// (latency and per-boundary traffic) on 51 sampled design/schedule/tensor
// triples, plus the simulated output matches a naive matmul
void check1() {
  auto spec = design::load_design_space(slurp(data("space.json")));
  auto g = workload::parse_model(slurp(data("model.json")));
  OperatorNest nest = workload::lower_to_nest(g.operators[0], g);  // 8x8x8
  auto topos = design::enumerate_topologies(spec);
  std::vector<design::ConfiguredDesign> designs;
  for (const auto& t : topos)
    for (const auto& d : design::enumerate_hyperparameters(t, spec))
      designs.push_back(d);

  long triples = 0, mismatches = 0;
  Rng rng(20240817);
  size_t stride = designs.size() / 17;
  for (size_t di = 0; di < designs.size() && triples < 51; di += stride) {
    const auto& d = designs[di];
    design::Hierarchy h = design::extract_hierarchy(d, spec.library);
    auto ms = mapping::formulate_mapping_space(nest, h);
    for (int k = 0; k < 3 && triples < 51; ++k) {
      mapping::Schedule s = mapping::sample_schedule(ms, rng);
      cost::CostReport r = cost::evaluate_cost(d, s, nest, spec.library);
      sim::Tensor a = sim::random_tensor(sim::operand_shape(nest, 0),
                                         Rng::derive(7, triples));
      sim::Tensor b = sim::random_tensor(sim::operand_shape(nest, 1),
                                         Rng::derive(8, triples));
      sim::SimResult sr = sim::simulate(h, nest, s, a, b);
      ++triples;

      bool ok = static_cast<double>(sr.latency_cycles) == r.latency_cycles;
      for (size_t bd = 0; bd < r.boundary_words.size(); ++bd)
        for (int op = 0; op < 3; ++op)
          ok &= r.boundary_words[bd][static_cast<size_t>(op)] ==
                static_cast<double>(sr.boundary_words.at(
                    {static_cast<int>(bd), op}));
      // functional result vs naive matmul
      for (long i = 0; i < 8 && ok; ++i)
        for (long j = 0; j < 8; ++j) {
          int64_t acc = 0;
          for (long kk = 0; kk < 8; ++kk)
            acc += a.at({i, kk}) * b.at({kk, j});
          if (sr.output.at({i, j}) != acc) { ok = false; break; }
        }
      if (!ok) ++mismatches;
    }
  }
  report(1, "cost model == functional simulation", triples >= 51 && mismatches == 0,
         std::to_string(triples) + " triples, " + std::to_string(mismatches) +
             " mismatches");
}

// schedule enumeration matches an independent flat brute force
void check2() {
  struct Cfg {
    long m, n, k, rows, cols, buf;
    bool racc, cacc;
  };
  std::vector<Cfg> cfgs = {{4, 4, 4, 2, 2, 64, true, false},
                           {8, 2, 4, 2, 2, 64, false, false},
                           {2, 2, 2, 1, 2, 32, false, true}};
  bool ok = true;
  std::string detail;
  for (const auto& c : cfgs) {
    OperatorNest nest = matmul_nest(c.m, c.n, c.k);
    design::Hierarchy h = two_level(c.rows, c.cols, c.buf, c.racc, c.cacc);
    auto ms = mapping::formulate_mapping_space(nest, h);
    auto scheds = mapping::enumerate_schedules(ms);
    std::set<std::string> got;
    for (const auto& s : scheds) got.insert(schedule_key(s));
    std::set<std::string> want = brute_force_keys(nest, h);
    bool match = got == want && got.size() == scheds.size() &&
                 mapping::count_schedules(ms) == scheds.size();
    ok &= match;
    detail += std::to_string(want.size()) + (match ? "=" : "!") + " ";
  }
  report(2, "schedule enumeration == brute force", ok, detail + "schedules");
}

// column remapping is optimal on 4x4 arrays vs all 24 permutations
void check3() {
  int matched = 0;
  for (uint64_t t = 0; t < 100; ++t) {
    Rng rng(Rng::derive(900, t));
    rel::FaultMap fm;
    fm.rows = 4;
    fm.cols = 4;
    double rate = 0.1 + 0.05 * static_cast<double>(t % 8);
    for (long r = 0; r < 4; ++r)
      for (long c = 0; c < 4; ++c)
        if (rng.bernoulli(rate)) fm.pe_faults.insert({r, c});
    std::vector<double> sal(4);
    for (auto& v : sal) v = rng.next_double();
    auto got = rel::fault_aware_map(sal, fm);
    std::vector<long> perm = {0, 1, 2, 3}, sorted = got;
    double best = 1e300;
    do {
      best = std::min(best, perm_cost(sal, perm, fm));
    } while (std::next_permutation(perm.begin(), perm.end()));
    std::sort(sorted.begin(), sorted.end());
    if (sorted == std::vector<long>{0, 1, 2, 3} &&
        std::abs(perm_cost(sal, got, fm) - best) <= 1e-12)
      ++matched;
  }
  report(3, "fault-aware mapping optimal on 4x4", matched == 100,
         std::to_string(matched) + "/100 instances optimal");
}

// unlimited-budget explore reproduces the exhaustive Pareto front
void check4a() {
  auto spec = tiny_spec();
  OperatorNest nest = matmul_nest(2, 2, 2);
  auto pts = enumerate_all(spec, nest);
  std::set<std::string> want =
      reference_front_ids(pts, {"latency", "energy", "area"});
  dse::SearchOptions opt;
  opt.budget = 0;
  auto res = dse::explore(spec, nest, opt);
  std::set<std::string> got;
  for (const auto& p : res.front.points()) got.insert(p.id);
  bool ok = pts.size() <= 1000 && res.exhaustive && got == want;
  report(4, "exhaustive explore == reference Pareto front (a)", ok,
         std::to_string(pts.size()) + " points, front " +
             std::to_string(got.size()) + "/" + std::to_string(want.size()));
}

// guided search reaches within 10% of the latency optimum in at most half
// the evaluations the random baseline needs (median over 10 seeds)
void check4b() {
  auto spec = design::load_design_space(slurp(data("space.json")));
  auto g = workload::parse_model(slurp(data("model.json")));
  OperatorNest nest = workload::lower_to_nest(g.operators[0], g);
  const double threshold = 12.0 * 1.1;
  const long budget = 500;
  auto evals_to_hit = [&](const dse::SearchResult& r) {
    for (const auto& e : r.trace)
      if (e.feasible && e.objective <= threshold) return static_cast<double>(e.step);
    return static_cast<double>(budget);
  };
  std::vector<double> guided, rnd;
  for (uint64_t s = 1; s <= 10; ++s) {
    dse::SearchOptions opt;
    opt.objective = "latency";
    opt.budget = budget;
    opt.seed = s;
    guided.push_back(evals_to_hit(dse::explore(spec, nest, opt)));
    rnd.push_back(evals_to_hit(dse::random_search(spec, nest, opt)));
  }
  double mg = median(guided), mr = median(rnd);
  char buf[96];
  std::snprintf(buf, sizeof buf, "median evals guided %.1f vs random %.1f", mg, mr);
  report(4, "guided search sample-efficiency (b)", mg <= 0.5 * mr, buf);
}

// range restriction recovers accuracy under stuck high-order weight bits
void check5a() {
  int wins = 0;
  for (uint64_t t = 0; t < 20; ++t) {
    Bench b = make_bench(300 + t);
    rel::FaultMap fm;
    fm.rows = 4;
    fm.cols = 4;
    Rng rng(Rng::derive(400 + t, 2));
    for (long w = 0; w < b.qnet.weight_count(); ++w)
      if (rng.bernoulli(0.01)) fm.mem_faults.push_back({w, 6, 1});
    rel::Mitigations none;
    rel::Mitigations ranger;
    ranger.bounds = rel::profile_ranges(b.qnet, b.train);
    if (rel::mapped_accuracy(b.qnet, b.test, fm, ranger) >=
        rel::mapped_accuracy(b.qnet, b.test, fm, none))
      ++wins;
  }
  report(5, "range restriction >= unprotected (a)", wins >= 18,
         std::to_string(wins) + "/20 trials");
}

// bypass + retraining beats plain bypass at 25% dead PEs
void check5b() {
  std::vector<double> margins;
  std::vector<long> ident = {0, 1, 2, 3};
  for (uint64_t s = 1; s <= 10; ++s) {
    Bench b = make_bench(s);
    rel::FaultMap fm = rel::generate_fault_map(4, 4, 0.25, 0.0, 0, 8,
                                               Rng::derive(s, 5));
    rel::Mitigations fap;
    fap.fap = true;
    double masked = rel::mapped_accuracy(b.qnet, b.test, fm, fap);
    nn::TinyNet adapted = rel::fault_aware_retrain(b.net, b.train, fm, ident, 10,
                                                   0.05f, 16, Rng::derive(s, 7));
    double retrained =
        rel::mapped_accuracy(nn::quantize_net(adapted), b.test, fm, fap);
    margins.push_back(retrained - masked);
  }
  double m = median(margins);
  char buf[64];
  std::snprintf(buf, sizeof buf, "median margin %+.3f", m);
  report(5, "fault-aware retraining >= bypass + 5pp (b)", m >= 0.05, buf);
}

// 0->1 weight-bit flips hurt at least as much as 1->0 flips
void check5c() {
  double sum01 = 0, sum10 = 0;
  for (uint64_t t = 0; t < 20; ++t) {
    Bench b = make_bench(600 + t);
    double clean = b.qnet.accuracy(b.test);
    Rng rng(Rng::derive(700 + t, 9));
    std::vector<std::pair<long, int>> zeros, ones;
    while (zeros.size() < 6 || ones.size() < 6) {
      long w = static_cast<long>(rng.next_below(
          static_cast<uint64_t>(b.qnet.weight_count())));
      int bit = static_cast<int>(rng.next_below(8));
      bool is_one = (static_cast<uint8_t>(b.qnet.get_word(w)) >> bit) & 1;
      if (is_one && ones.size() < 6) ones.push_back({w, bit});
      if (!is_one && zeros.size() < 6) zeros.push_back({w, bit});
    }
    nn::QuantizedNet q01 = b.qnet, q10 = b.qnet;
    rel::inject_bit_flips(q01, zeros);
    rel::inject_bit_flips(q10, ones);
    sum01 += clean - q01.accuracy(b.test);
    sum10 += clean - q10.accuracy(b.test);
  }
  char buf[80];
  std::snprintf(buf, sizeof buf, "mean drop 0->1 %.4f vs 1->0 %.4f", sum01 / 20,
                sum10 / 20);
  report(5, "0->1 flips >= 1->0 flips (c)", sum01 >= sum10, buf);
}

// progressive bit search beats random flips; k=1 equals the full sweep
void check6() {
  Bench b = make_bench(41);
  nn::Dataset sub;
  sub.x.assign(b.test.x.begin(), b.test.x.begin() + 64);
  sub.y.assign(b.test.y.begin(), b.test.y.begin() + 64);
  double clean = b.qnet.accuracy(sub);

  bool ok = true;
  std::string detail;
  for (int k : {1, 2, 4}) {
    auto greedy = rel::find_vulnerable_bits(b.qnet, sub, k, 0);
    nn::QuantizedNet qg = b.qnet;
    rel::inject_bit_flips(qg, greedy);
    double gd = clean - qg.accuracy(sub);
    std::vector<double> rd;
    for (uint64_t t = 0; t < 20; ++t) {
      Rng rng(Rng::derive(800, 20 * static_cast<uint64_t>(k) + t));
      std::set<std::pair<long, int>> flips;
      while (static_cast<int>(flips.size()) < k)
        flips.insert({static_cast<long>(rng.next_below(
                          static_cast<uint64_t>(b.qnet.weight_count()))),
                      static_cast<int>(rng.next_below(8))});
      nn::QuantizedNet qr = b.qnet;
      rel::inject_bit_flips(qr, {flips.begin(), flips.end()});
      rd.push_back(clean - qr.accuracy(sub));
    }
    bool beat = gd >= median(rd);
    ok &= beat;
    detail += "k=" + std::to_string(k) + (beat ? " ok " : " lost ");
  }

  // independent exhaustive sweep for k=1, ties to the smallest (word, bit)
  auto g1 = rel::find_vulnerable_bits(b.qnet, sub, 1, 0);
  double worst = 2.0;
  std::pair<long, int> worst_bit{-1, -1};
  for (long w = 0; w < b.qnet.weight_count(); ++w)
    for (int bit = 0; bit < 8; ++bit) {
      nn::QuantizedNet q = b.qnet;
      rel::inject_bit_flips(q, {{w, bit}});
      double acc = q.accuracy(sub);
      if (acc < worst) {
        worst = acc;
        worst_bit = {w, bit};
      }
    }
  bool sweep = g1.size() == 1 && g1[0] == worst_bit;
  ok &= sweep;
  report(6, "greedy bit search >= random, k=1 == sweep", ok,
         detail + (sweep ? "sweep ok" : "sweep mismatch"));
}

// analytic gradients match central differences; clamping is idempotent
void check7() {
  nn::Dataset d = nn::make_synthetic(501, 64, 16, 4, 1.0, 502);
  nn::TinyNet net = nn::TinyNet::init({16, 50, 4}, 503);  // 1000 weights
  nn::Gradients gr = nn::backward(net, d);
  const double h = 3e-4;
  double maxrel = 0;
  long nw = 0;
  for (size_t l = 0; l < net.W.size(); ++l)
    for (size_t i = 0; i < net.W[l].size(); ++i) {
      float orig = net.W[l][i];
      net.W[l][i] = static_cast<float>(orig + h);
      double lp = net.loss(d);
      net.W[l][i] = static_cast<float>(orig - h);
      double lm = net.loss(d);
      net.W[l][i] = orig;
      double num = (lp - lm) / (2.0 * h);
      double rel = std::abs(num - gr.dW[l][i]) /
                   std::max(1.0, std::abs(num) + std::abs(gr.dW[l][i]));
      maxrel = std::max(maxrel, rel);
      ++nw;
    }

  Rng rng(77);
  long nonidem = 0;
  for (long i = 0; i < 100000; ++i) {
    float v;
    switch (i % 20) {
      case 17: v = std::numeric_limits<float>::quiet_NaN(); break;
      case 18: v = std::numeric_limits<float>::infinity(); break;
      case 19: v = -std::numeric_limits<float>::infinity(); break;
      default: v = static_cast<float>(rng.next_gaussian() * 10.0); break;
    }
    float once = rel::range_restrict(v, -2.5f, 3.5f);
    float twice = rel::range_restrict(once, -2.5f, 3.5f);
    if (once != twice || once < -2.5f || once > 3.5f) ++nonidem;
  }

  char buf[96];
  std::snprintf(buf, sizeof buf, "max grad rel err %.2e over %ld weights", maxrel,
                nw);
  report(7, "gradient check + clamp idempotence", maxrel <= 1e-3 && nw >= 1000 &&
                                                      nonidem == 0,
         buf);
}

// CLI reruns are byte-identical across --jobs 1 and --jobs 4
void check8() {
  std::string base = "explore --model " + data("model.json") + " --space " +
                     data("space.json") +
                     " --objective latency --budget 80 --seed 5 --json";
  std::string o1 = tmp_dir("j1"), o1b = tmp_dir("j1b"), o4 = tmp_dir("j4");
  RunResult r1 = run_tool(base + " --jobs 1 --out " + o1);
  RunResult r1b = run_tool(base + " --jobs 1 --out " + o1b);
  RunResult r4 = run_tool(base + " --jobs 4 --out " + o4);
  bool ok = r1.code == 0 && r1b.code == 0 && r4.code == 0 &&
            r1.out == r1b.out && r1.out == r4.out;
  for (const char* f : {"/result.json", "/front.csv"}) {
    std::string a = slurp(o1 + f);
    ok &= a == slurp(o1b + f) && a == slurp(o4 + f);
  }
  report(8, "CLI rerun determinism at jobs 1 and 4", ok,
         ok ? "stdout + artifacts byte-identical" : "outputs differ");
}

}  // namespace

int main() {
  check1();
  check2();
  check3();
  check4a();
  check4b();
  check5a();
  check5b();
  check5c();
  check6();
  check7();
  check8();
  return failures == 0 ? 0 : 1;
}
