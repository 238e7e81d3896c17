#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <set>

#include "doctest.h"
#include "npudse/mapping.hpp"

using namespace npudse;
using namespace npudse::mapping;
using workload::Operand;
using workload::OperatorNest;

namespace {

OperatorNest matmul_nest(long m, long n, long k) {
  json j = {{"version", 1},
            {"tensors",
             {{"a", {m, k}}, {"b", {k, n}}, {"c", {m, n}}}},
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

Schedule uniform_schedule(size_t levels, const OperatorNest& nest) {
  Schedule s;
  s.tiles.assign(levels, {});
  s.loop_order.assign(levels, {});
  for (size_t l = 0; l < levels; ++l)
    for (const auto& [d, b] : nest.dims) {
      s.tiles[l][d] = 1;
      s.loop_order[l].push_back(d);
    }
  return s;
}

// order-insensitive-for-inactive-dims schedule key: tiles, spatial, and the
// per-level loop order restricted to dims that actually iterate there
std::string schedule_key(const Schedule& s) {
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

// independent flat generator: every spatial assignment, every per-dim
// factorization, every permutation of all dims at every level, deduplicated
// by key and filtered by the validator
std::set<std::string> brute_force_keys(const OperatorNest& nest,
                                       const design::Hierarchy& hier) {
  size_t L = hier.levels.size() + 1;
  std::vector<std::string> dims;
  for (const auto& [d, b] : nest.dims) dims.push_back(d);

  std::vector<SpatialMap> opts;
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
      SpatialMap m;
      SpatialAxis ax{d, std::min(pext, b)};
      if (row_primary) m.rows = ax; else m.cols = ax;
      opts.push_back(m);
    }
  if (hier.array.rows > 1 && hier.array.cols > 1)
    for (const auto& [d1, b1] : nest.dims)
      for (const auto& [d2, b2] : nest.dims) {
        if (d1 == d2 || b1 <= 1 || b2 <= 1) continue;
        if (!eligible(d1, hier.array.row_accumulate)) continue;
        if (!eligible(d2, hier.array.col_accumulate)) continue;
        SpatialMap m;
        m.rows = SpatialAxis{d1, std::min(hier.array.rows, b1)};
        m.cols = SpatialAxis{d2, std::min(hier.array.cols, b2)};
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
      Schedule s;
      s.spatial = opt;
      s.tiles.assign(L, {});
      s.loop_order.assign(L, {});
      for (size_t di = 0; di < nest.dims.size(); ++di)
        for (size_t l = 0; l < L; ++l)
          s.tiles[l][nest.dims[di].first] = tuples[di][ti[di]][L - 1 - l];
      std::vector<size_t> oi(L, 0);
      while (true) {
        for (size_t l = 0; l < L; ++l) s.loop_order[l] = perms[oi[l]];
        if (validate_schedule(s, nest, hier).ok()) keys.insert(schedule_key(s));
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

}  // namespace

TEST_CASE("schedule accessors and round-trip") {
  OperatorNest nest = matmul_nest(4, 4, 4);
  Schedule s = uniform_schedule(3, nest);
  s.tiles[1]["M"] = 2;
  s.tiles[2]["M"] = 2;
  s.tiles[1]["K"] = 4;
  s.tiles[2]["N"] = 4;
  s.spatial.rows = SpatialAxis{"M", 1};
  CHECK(s.tile(1, "M") == 2);
  CHECK(s.tile(1, "absent") == 1);  // missing dims default to 1
  CHECK(s.cumulative_tile(1, "M") == 2);
  CHECK(s.padded_bound("M") == 4);
  CHECK(s.padded_bound("K") == 4);
  Schedule p = Schedule::parse(s.serialize());
  CHECK(p.serialize() == s.serialize());
  CHECK(p.spatial.rows->dim == "M");
  CHECK_THROWS_AS(Schedule::parse("{"), InputError);
}

TEST_CASE("operand footprints, including sliding windows") {
  OperatorNest nest = matmul_nest(4, 4, 4);
  Schedule s = uniform_schedule(2, nest);
  s.tiles[1] = {{"M", 4}, {"N", 4}, {"K", 4}};
  CHECK(operand_footprint(s, nest, 1, Operand::Input) == 16);
  CHECK(operand_footprint(s, nest, 1, Operand::Weight) == 16);
  CHECK(operand_footprint(s, nest, 0, Operand::Output) == 1);

  // conv window: H covers stride*(tile(Y)-1) + tile(R)
  json j = {{"version", 1},
            {"tensors",
             {{"i", {1, 1, 9, 9}}, {"w", {1, 1, 3, 3}}, {"o", {1, 1, 4, 4}}}},
            {"operators",
             {{{"name", "c"},
               {"kind", "conv2d"},
               {"inputs", {"i", "w"}},
               {"outputs", {"o"}},
               {"attributes", {{"stride_h", 2}, {"stride_w", 2}}}}}}};
  workload::ModelGraph g = workload::parse_model(j.dump());
  OperatorNest cnest = workload::lower_to_nest(g.operators[0], g);
  Schedule cs = uniform_schedule(2, cnest);
  cs.tiles[1] = {{"N", 1}, {"K", 1}, {"C", 1}, {"Y", 3}, {"X", 3}, {"R", 3}, {"S", 3}};
  // input tile = (2*(3-1)+3)^2 = 49 words
  CHECK(operand_footprint(cs, cnest, 1, Operand::Input) == 49);
  CHECK(operand_footprint(cs, cnest, 1, Operand::Weight) == 9);
  CHECK(operand_footprint(cs, cnest, 1, Operand::Output) == 9);
}

TEST_CASE("validator catches the standard failure modes") {
  OperatorNest nest = matmul_nest(4, 4, 4);
  design::Hierarchy h = two_level(2, 2, 64, true, false);

  Schedule wrong_levels = uniform_schedule(2, nest);
  CHECK_FALSE(validate_schedule(wrong_levels, nest, h).ok());

  Schedule s = uniform_schedule(3, nest);
  s.tiles[2] = {{"M", 4}, {"N", 4}, {"K", 4}};
  CHECK(validate_schedule(s, nest, h).ok());

  Schedule under = s;
  under.tiles[2]["M"] = 2;  // covers only 2 of 4
  auto r = validate_schedule(under, nest, h);
  REQUIRE_FALSE(r.ok());
  CHECK(r.violations[0].rule == "coverage");

  Schedule sp = s;
  sp.spatial.rows = SpatialAxis{"M", 4};  // exceeds 2 rows
  CHECK_FALSE(validate_schedule(sp, nest, h).ok());

  Schedule red = s;
  red.spatial.cols = SpatialAxis{"K", 2};  // cols don't accumulate
  red.tiles[2]["K"] = 2;
  CHECK_FALSE(validate_schedule(red, nest, h).ok());
  red.spatial.cols.reset();
  red.spatial.rows = SpatialAxis{"K", 2};  // rows do
  CHECK(validate_schedule(red, nest, h).ok());

  Schedule fat = s;
  fat.tiles[0] = {{"M", 2}, {"N", 2}, {"K", 2}};  // 4+4+4 words > 4 regs
  fat.tiles[2] = {{"M", 2}, {"N", 2}, {"K", 2}};
  CHECK_FALSE(validate_schedule(fat, nest, h).ok());

  design::Hierarchy tiny = two_level(2, 2, 8, true, false);
  Schedule big = uniform_schedule(3, nest);
  big.tiles[1] = {{"M", 4}, {"N", 4}, {"K", 4}};  // 48 words in an 8-word buffer
  CHECK_FALSE(validate_schedule(big, nest, tiny).ok());

  design::Hierarchy wire = two_level(2, 2, 0, true, false);
  Schedule thru = uniform_schedule(3, nest);
  thru.tiles[1]["M"] = 2;
  thru.tiles[2] = {{"M", 2}, {"N", 4}, {"K", 4}};
  auto rw = validate_schedule(thru, nest, wire);
  REQUIRE_FALSE(rw.ok());
  CHECK(rw.violations[0].rule == "pass_through");
}

TEST_CASE("data movement volumes match hand-computed fetch counts") {
  // single memory level, 1x1 array, M=N=K=2, everything resident at root
  OperatorNest nest = matmul_nest(2, 2, 2);
  design::Hierarchy h;
  h.levels.push_back({"dram", -1, 4.0, 32.0});
  h.array.rows = h.array.cols = 1;
  h.array.regs_words = 4;
  Schedule s = uniform_schedule(2, nest);
  s.tiles[1] = {{"M", 2}, {"N", 2}, {"K", 2}};
  s.loop_order[1] = {"M", "N", "K"};
  REQUIRE(validate_schedule(s, nest, h).ok());
  auto vol = data_movement_volume(s, nest, h);
  REQUIRE(vol.size() == 1);
  // loops M,N,K of 2: A re-fetched under N? no (A has M,K): innermost A loop
  // is K -> 8; B(K,N) innermost K -> 8; C(M,N) innermost N -> 4
  CHECK(vol[0][0] == 8);
  CHECK(vol[0][1] == 8);
  CHECK(vol[0][2] == 4);

  // two memory levels with a 2x2 spatial array over M,N
  OperatorNest nest4 = matmul_nest(4, 4, 4);
  design::Hierarchy h2 = two_level(2, 2, 64, true, false);
  Schedule s2 = uniform_schedule(3, nest4);
  s2.spatial.rows = SpatialAxis{"M", 2};
  s2.spatial.cols = SpatialAxis{"N", 2};
  s2.tiles[1] = {{"M", 2}, {"N", 2}, {"K", 4}};
  s2.loop_order[1] = {"K", "M", "N"};
  REQUIRE(validate_schedule(s2, nest4, h2).ok());
  auto vol2 = data_movement_volume(s2, nest4, h2);
  REQUIRE(vol2.size() == 2);
  // boundary 1 (dram -> buf): no outer trips, one 4x4 tile per operand
  CHECK(vol2[1][0] == 16);
  CHECK(vol2[1][1] == 16);
  CHECK(vol2[1][2] == 16);
  // boundary 0 (buf -> array), loops K(4),M(2),N(2):
  //   A fetches 4*2 = 8, tile 2 words; B fetches 16, tile 2; C fetches 16, tile 4
  CHECK(vol2[0][0] == 16);
  CHECK(vol2[0][1] == 32);
  CHECK(vol2[0][2] == 64);
}

TEST_CASE("enumeration equals an independent brute force") {
  OperatorNest nest = matmul_nest(4, 2, 2);
  design::Hierarchy h = two_level(2, 2, 32, true, false);
  MappingSpace space = formulate_mapping_space(nest, h);
  CHECK(space.raw_size > 0);

  std::vector<Schedule> scheds = enumerate_schedules(space);
  CHECK(count_schedules(space) == scheds.size());
  std::set<std::string> keys;
  std::set<std::string> serialized;
  for (const auto& s : scheds) {
    CHECK(validate_schedule(s, nest, h).ok());
    keys.insert(schedule_key(s));
    serialized.insert(s.serialize());
  }
  CHECK(serialized.size() == scheds.size());  // no duplicate schedules
  CHECK(keys.size() == scheds.size());

  std::set<std::string> expect = brute_force_keys(nest, h);
  CHECK(keys == expect);
}

TEST_CASE("enumeration restriction knobs shrink the space") {
  OperatorNest nest = matmul_nest(4, 2, 2);
  design::Hierarchy h = two_level(2, 2, 32, true, false);
  MappingSpace space = formulate_mapping_space(nest, h);
  unsigned long long full = count_schedules(space);
  MappingSpace no_orders = space;
  no_orders.enumerate_orders = false;
  MappingSpace no_spatial = space;
  no_spatial.enumerate_spatial = false;
  CHECK(count_schedules(no_orders) < full);
  CHECK(count_schedules(no_spatial) < full);
  for (const auto& s : enumerate_schedules(no_spatial)) {
    CHECK_FALSE(s.spatial.rows.has_value());
    CHECK_FALSE(s.spatial.cols.has_value());
  }
}

TEST_CASE("sampling is valid and seed-deterministic") {
  OperatorNest nest = matmul_nest(4, 4, 4);
  design::Hierarchy h = two_level(2, 2, 64, true, false);
  MappingSpace space = formulate_mapping_space(nest, h);
  Rng a(42), b(42), c(7);
  std::set<std::string> seen;
  for (int i = 0; i < 20; ++i) {
    Schedule s = sample_schedule(space, a);
    CHECK(validate_schedule(s, nest, h).ok());
    CHECK(sample_schedule(space, b).serialize() == s.serialize());
    seen.insert(s.serialize());
    sample_schedule(space, c);
  }
  CHECK(seen.size() > 1);  // actually explores the space
}
