#include "npudse/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace npudse::mapping {

long SpatialMap::factor_of(const std::string& dim) const {
  if (rows && rows->dim == dim) return rows->factor;
  if (cols && cols->dim == dim) return cols->factor;
  return 1;
}

long Schedule::tile(size_t level, const std::string& dim) const {
  const auto& m = tiles.at(level);
  auto it = m.find(dim);
  return it == m.end() ? 1 : it->second;
}

long Schedule::cumulative_tile(size_t level, const std::string& dim) const {
  long c = spatial.factor_of(dim);
  for (size_t l = 0; l <= level && l < tiles.size(); ++l) c *= tile(l, dim);
  return c;
}

long Schedule::padded_bound(const std::string& dim) const {
  return cumulative_tile(tiles.size() - 1, dim);
}

std::string Schedule::serialize() const {
  json j;
  j["version"] = 1;
  j["levels"] = json::array();
  for (size_t l = 0; l < tiles.size(); ++l) {
    json jl;
    jl["tiles"] = json::object();
    for (const auto& [d, t] : tiles[l]) jl["tiles"][d] = t;
    jl["order"] = loop_order[l];
    j["levels"].push_back(jl);
  }
  j["spatial"] = json::object();
  if (spatial.rows)
    j["spatial"]["rows"] = {{"dim", spatial.rows->dim}, {"factor", spatial.rows->factor}};
  if (spatial.cols)
    j["spatial"]["cols"] = {{"dim", spatial.cols->dim}, {"factor", spatial.cols->factor}};
  return j.dump(2);
}

Schedule Schedule::parse(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed schedule document: ") + e.what());
  }
  Schedule s;
  for (const auto& jl : require_field(j, "levels", "schedule")) {
    std::map<std::string, long> t;
    for (const auto& [d, v] : jl.at("tiles").items()) t[d] = v.get<long>();
    s.tiles.push_back(std::move(t));
    s.loop_order.push_back(jl.at("order").get<std::vector<std::string>>());
  }
  if (j.contains("spatial")) {
    const json& sp = j["spatial"];
    if (sp.contains("rows"))
      s.spatial.rows = SpatialAxis{sp["rows"].at("dim").get<std::string>(),
                                   sp["rows"].at("factor").get<long>()};
    if (sp.contains("cols"))
      s.spatial.cols = SpatialAxis{sp["cols"].at("dim").get<std::string>(),
                                   sp["cols"].at("factor").get<long>()};
  }
  return s;
}

double padding_overhead(const Schedule& s, const OperatorNest& nest) {
  double padded = 1, true_ = 1;
  for (const auto& [d, b] : nest.dims) {
    padded *= static_cast<double>(s.padded_bound(d));
    true_ *= static_cast<double>(b);
  }
  return padded / true_ - 1.0;
}

double operand_footprint(const Schedule& s, const OperatorNest& nest,
                         size_t level, Operand operand) {
  double fp = 1;
  for (const auto& e : nest.operands[static_cast<size_t>(operand)]) {
    long ca = s.cumulative_tile(level, e.a);
    if (e.is_window()) {
      long cb = s.cumulative_tile(level, e.b);
      fp *= static_cast<double>(e.a_stride * (ca - 1) + cb);
    } else {
      fp *= static_cast<double>(ca);
    }
  }
  return fp;
}

namespace {

// per-PE register footprint: level-0 tiles only, no spatial factors
double pe_footprint(const Schedule& s, const OperatorNest& nest) {
  double total = 0;
  for (int o = 0; o < 3; ++o) {
    double fp = 1;
    for (const auto& e : nest.operands[o]) {
      long ca = s.tile(0, e.a);
      if (e.is_window()) {
        fp *= static_cast<double>(e.a_stride * (ca - 1) + s.tile(0, e.b));
      } else {
        fp *= static_cast<double>(ca);
      }
    }
    total += fp;
  }
  return total;
}

const char* operand_name(int o) {
  return o == 0 ? "input" : (o == 1 ? "weight" : "output");
}

}  // namespace

design::ValidationReport validate_schedule(const Schedule& s,
                                           const OperatorNest& nest,
                                           const Hierarchy& hier) {
  design::ValidationReport rep;
  size_t L = hier.levels.size() + 1;
  if (s.tiles.size() != L || s.loop_order.size() != L) {
    rep.violations.push_back({"level_count", {},
                              "schedule has " + std::to_string(s.tiles.size()) +
                                  " levels, design has " + std::to_string(L)});
    return rep;
  }

  for (const auto& [d, b] : nest.dims) {
    for (size_t l = 0; l < L; ++l)
      if (s.tile(l, d) < 1)
        rep.violations.push_back({"tile_positive", {d}, "tile < 1 at level " + std::to_string(l)});
    if (s.padded_bound(d) < b)
      rep.violations.push_back({"coverage", {d},
                                "tile product " + std::to_string(s.padded_bound(d)) +
                                    " below bound " + std::to_string(b)});
  }

  // spatial legality
  auto check_axis = [&](const std::optional<SpatialAxis>& ax, long extent,
                        bool accumulates, const char* name) {
    if (!ax) return;
    if (!nest.has_dim(ax->dim)) {
      rep.violations.push_back({"spatial_dim", {ax->dim}, "unknown dim on axis"});
      return;
    }
    if (ax->factor > extent)
      rep.violations.push_back({"spatial_extent", {ax->dim},
                                std::string(name) + " unroll " + std::to_string(ax->factor) +
                                    " exceeds axis extent " + std::to_string(extent)});
    if (nest.reduction.count(ax->dim) && !accumulates)
      rep.violations.push_back({"spatial_reduction", {ax->dim},
                                std::string(name) + " axis has no accumulating interconnect"});
  };
  check_axis(s.spatial.rows, hier.array.rows, hier.array.row_accumulate, "row");
  check_axis(s.spatial.cols, hier.array.cols, hier.array.col_accumulate, "col");
  if (s.spatial.rows && s.spatial.cols && s.spatial.rows->dim == s.spatial.cols->dim)
    rep.violations.push_back({"spatial_distinct", {s.spatial.rows->dim},
                              "dim mapped to both axes"});

  // capacity: per-PE registers at level 0, buffers above
  double regs = pe_footprint(s, nest);
  if (regs > static_cast<double>(hier.array.regs_words))
    rep.violations.push_back({"capacity", {"registers"},
                              "per-PE footprint " + std::to_string(regs) +
                                  " exceeds " + std::to_string(hier.array.regs_words) + " words"});
  for (size_t l = 1; l < L; ++l) {
    long cap = hier.levels[L - 1 - l].capacity_words;
    const std::string& id = hier.levels[L - 1 - l].node_id;
    if (cap == 0) {
      for (const auto& [d, b] : nest.dims)
        if (s.tile(l, d) != 1)
          rep.violations.push_back({"pass_through", {id},
                                    "zero-storage level admits only tile 1 (dim " + d + ")"});
      continue;
    }
    if (cap < 0) continue;  // unbounded root
    double need = 0;
    for (int o = 0; o < 3; ++o) {
      double fp = operand_footprint(s, nest, l, static_cast<Operand>(o));
      need += fp;
      if (fp > static_cast<double>(cap))
        rep.violations.push_back({"capacity", {id, operand_name(o)},
                                  "tile of " + std::to_string(fp) + " words exceeds " +
                                      std::to_string(cap) + "-word buffer"});
    }
    if (need > static_cast<double>(cap)) {
      bool already = false;
      for (const auto& v : rep.violations)
        if (v.rule == "capacity" && !v.subjects.empty() && v.subjects[0] == id) already = true;
      if (!already)
        rep.violations.push_back({"capacity", {id},
                                  "combined tiles " + std::to_string(need) +
                                      " words exceed " + std::to_string(cap) + "-word buffer"});
    }
  }
  return rep;
}

std::vector<std::array<double, 3>> data_movement_volume(const Schedule& s,
                                                        const OperatorNest& nest,
                                                        const Hierarchy& hier) {
  size_t L = hier.levels.size() + 1;
  std::vector<std::array<double, 3>> out(L - 1, {0, 0, 0});
  std::array<std::set<std::string>, 3> odims = {
      nest.operand_dims(Operand::Input), nest.operand_dims(Operand::Weight),
      nest.operand_dims(Operand::Output)};
  for (size_t b = 0; b + 1 < L; ++b) {
    // loops above the boundary, outermost first
    std::vector<std::pair<std::string, long>> loops;
    for (size_t l = L; l-- > b + 1;)
      for (const auto& d : s.loop_order[l]) loops.push_back({d, s.tile(l, d)});
    for (int o = 0; o < 3; ++o) {
      long fetches = 1;
      long prefix = 1;
      for (const auto& [d, trips] : loops) {
        prefix *= trips;
        if (trips > 1 && odims[o].count(d)) fetches = prefix;
      }
      out[b][o] = static_cast<double>(fetches) *
                  operand_footprint(s, nest, b, static_cast<Operand>(o));
    }
  }
  return out;
}

namespace {

std::vector<std::vector<long>> ordered_factorizations(long n, size_t parts) {
  std::vector<std::vector<long>> out;
  std::vector<long> cur(parts, 1);
  std::function<void(size_t, long)> rec = [&](size_t idx, long rem) {
    if (idx + 1 == parts) {
      cur[idx] = rem;
      out.push_back(cur);
      return;
    }
    for (long d = 1; d <= rem; ++d)
      if (rem % d == 0) {
        cur[idx] = d;
        rec(idx + 1, rem / d);
      }
  };
  if (parts == 0) return out;
  rec(0, n);
  return out;
}

bool axis_eligible(const OperatorNest& nest, const std::string& dim,
                   bool accumulates) {
  return !nest.reduction.count(dim) || accumulates;
}

}  // namespace

MappingSpace formulate_mapping_space(const OperatorNest& nest, const Hierarchy& h) {
  MappingSpace sp;
  sp.nest = nest;
  sp.hier = h;
  sp.num_levels = h.levels.size() + 1;
  sp.pass_through.assign(sp.num_levels, false);
  for (size_t l = 1; l < sp.num_levels; ++l)
    sp.pass_through[l] = h.levels[sp.num_levels - 1 - l].capacity_words == 0;

  // spatial assignments: none, then single dims (primary axis), then pairs
  sp.spatial_options.push_back(SpatialMap{});
  long rows = h.array.rows, cols = h.array.cols;
  bool row_primary = rows > 1;
  long prim_extent = row_primary ? rows : cols;
  bool prim_acc = row_primary ? h.array.row_accumulate : h.array.col_accumulate;
  if (prim_extent > 1) {
    for (const auto& [d, b] : nest.dims) {
      if (b <= 1 || !axis_eligible(nest, d, prim_acc)) continue;
      SpatialMap m;
      SpatialAxis ax{d, std::min(prim_extent, b)};
      if (row_primary) m.rows = ax; else m.cols = ax;
      sp.spatial_options.push_back(m);
    }
  }
  if (rows > 1 && cols > 1) {
    for (const auto& [d1, b1] : nest.dims)
      for (const auto& [d2, b2] : nest.dims) {
        if (d1 == d2 || b1 <= 1 || b2 <= 1) continue;
        if (!axis_eligible(nest, d1, h.array.row_accumulate)) continue;
        if (!axis_eligible(nest, d2, h.array.col_accumulate)) continue;
        SpatialMap m;
        m.rows = SpatialAxis{d1, std::min(rows, b1)};
        m.cols = SpatialAxis{d2, std::min(cols, b2)};
        sp.spatial_options.push_back(m);
      }
  }

  // raw combinatorial count (orders counted by factorial, no validation)
  size_t free_levels = 0;
  for (size_t l = 0; l < sp.num_levels; ++l)
    if (!sp.pass_through[l]) ++free_levels;
  const unsigned long long cap = 100000000ull;
  unsigned long long total = 0;
  for (const auto& opt : sp.spatial_options) {
    unsigned long long tile_combos = 1;
    for (const auto& [d, b] : nest.dims) {
      long u = opt.factor_of(d);
      long rem = (b + u - 1) / u;
      tile_combos *= ordered_factorizations(rem, free_levels).size();
      if (tile_combos > cap) break;
    }
    // order count varies by combo; bound with the max permutation count
    unsigned long long orders = 1;
    for (size_t l = 0; l < sp.num_levels && orders < cap; ++l) {
      if (sp.pass_through[l]) continue;
      unsigned long long f = 1;
      for (size_t k = 2; k <= nest.dims.size(); ++k) f *= k;
      orders *= f;
    }
    total += std::min(cap, tile_combos * std::min(orders, cap));
    if (total > cap) { total = cap; break; }
  }
  sp.raw_size = total;
  return sp;
}

MappingSpace formulate_mapping_space(const OperatorNest& nest,
                                     const design::ConfiguredDesign& d,
                                     const design::ComponentLibrary& lib) {
  return formulate_mapping_space(nest, design::extract_hierarchy(d, lib));
}

namespace {

// permutations of `active` (given as ranks into nest order), lexicographic
std::vector<std::vector<size_t>> level_orders(const std::vector<size_t>& active) {
  std::vector<std::vector<size_t>> out;
  std::vector<size_t> p = active;
  std::sort(p.begin(), p.end());
  do {
    out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

std::vector<std::string> full_order(const OperatorNest& nest,
                                    const std::vector<size_t>& perm,
                                    const std::vector<size_t>& active) {
  std::set<size_t> act(active.begin(), active.end());
  std::vector<std::string> order;
  for (size_t r : perm) order.push_back(nest.dims[r].first);
  for (size_t r = 0; r < nest.dims.size(); ++r)
    if (!act.count(r)) order.push_back(nest.dims[r].first);
  return order;
}

}  // namespace

void for_each_schedule(const MappingSpace& sp,
                       const std::function<bool(const Schedule&)>& visit) {
  const OperatorNest& nest = sp.nest;
  size_t L = sp.num_levels;
  std::vector<size_t> free_levels;
  for (size_t l = 0; l < L; ++l)
    if (!sp.pass_through[l]) free_levels.push_back(l);

  std::vector<SpatialMap> options = sp.spatial_options;
  if (!sp.enumerate_spatial) options = {SpatialMap{}};
  for (const auto& opt : options) {
    // per-dim factor tuples across free levels
    std::vector<std::vector<std::vector<long>>> dim_tuples;
    for (const auto& [d, b] : nest.dims) {
      long u = opt.factor_of(d);
      dim_tuples.push_back(ordered_factorizations((b + u - 1) / u, free_levels.size()));
    }
    std::vector<size_t> ti(nest.dims.size(), 0);
    bool tiles_done = nest.dims.empty();
    while (!tiles_done) {
      Schedule s;
      s.spatial = opt;
      s.tiles.assign(L, {});
      s.loop_order.assign(L, {});
      for (size_t di = 0; di < nest.dims.size(); ++di) {
        const auto& tuple = dim_tuples[di][ti[di]];
        for (size_t fi = 0; fi < free_levels.size(); ++fi)
          s.tiles[free_levels[fi]][nest.dims[di].first] = tuple[fi];
        for (size_t l = 0; l < L; ++l)
          if (!s.tiles[l].count(nest.dims[di].first))
            s.tiles[l][nest.dims[di].first] = 1;
      }
      // per-level order choices over dims with tile > 1
      std::vector<std::vector<std::vector<size_t>>> orders(L);
      for (size_t l = 0; l < L; ++l) {
        std::vector<size_t> active;
        for (size_t r = 0; r < nest.dims.size(); ++r)
          if (s.tile(l, nest.dims[r].first) > 1) active.push_back(r);
        if (sp.enumerate_orders) {
          orders[l] = level_orders(active);
        } else {
          std::vector<size_t> nest_order = active;
          orders[l] = {nest_order};
        }
        if (orders[l].empty()) orders[l].push_back({});
      }
      std::vector<size_t> oi(L, 0);
      bool orders_done = false;
      while (!orders_done) {
        for (size_t l = 0; l < L; ++l) {
          std::vector<size_t> active;
          for (size_t r = 0; r < nest.dims.size(); ++r)
            if (s.tile(l, nest.dims[r].first) > 1) active.push_back(r);
          s.loop_order[l] = full_order(nest, orders[l][oi[l]], active);
        }
        if (validate_schedule(s, nest, sp.hier).ok())
          if (!visit(s)) return;
        // odometer over orders, innermost level fastest
        size_t l = 0;
        while (true) {
          if (++oi[l] < orders[l].size()) break;
          oi[l] = 0;
          if (++l == L) { orders_done = true; break; }
        }
      }
      // odometer over tiles, first dim fastest
      size_t di = 0;
      while (true) {
        if (++ti[di] < dim_tuples[di].size()) break;
        ti[di] = 0;
        if (++di == nest.dims.size()) { tiles_done = true; break; }
      }
    }
  }
}

std::vector<Schedule> enumerate_schedules(const MappingSpace& space) {
  std::vector<Schedule> out;
  for_each_schedule(space, [&](const Schedule& s) {
    out.push_back(s);
    return true;
  });
  return out;
}

unsigned long long count_schedules(const MappingSpace& space) {
  unsigned long long n = 0;
  for_each_schedule(space, [&](const Schedule&) {
    ++n;
    return true;
  });
  return n;
}

Schedule sample_schedule(const MappingSpace& sp, Rng& rng) {
  const OperatorNest& nest = sp.nest;
  size_t L = sp.num_levels;
  std::vector<size_t> free_levels;
  for (size_t l = 0; l < L; ++l)
    if (!sp.pass_through[l]) free_levels.push_back(l);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const SpatialMap& opt =
        sp.enumerate_spatial
            ? sp.spatial_options[rng.next_below(sp.spatial_options.size())]
            : sp.spatial_options.front();
    Schedule s;
    s.spatial = opt;
    s.tiles.assign(L, {});
    s.loop_order.assign(L, {});
    for (const auto& [d, b] : nest.dims) {
      long u = opt.factor_of(d);
      auto tuples = ordered_factorizations((b + u - 1) / u, free_levels.size());
      const auto& tuple = tuples[rng.next_below(tuples.size())];
      for (size_t l = 0; l < L; ++l) s.tiles[l][d] = 1;
      for (size_t fi = 0; fi < free_levels.size(); ++fi)
        s.tiles[free_levels[fi]][d] = tuple[fi];
    }
    for (size_t l = 0; l < L; ++l) {
      std::vector<std::string> order;
      for (const auto& [d, b] : nest.dims) order.push_back(d);
      if (sp.enumerate_orders) {
        // Fisher-Yates with the seeded stream
        for (size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1], order[rng.next_below(i)]);
      }
      s.loop_order[l] = order;
    }
    if (validate_schedule(s, nest, sp.hier).ok()) return s;
  }
  // canonical fallback: everything streamed from the root, unit tiles below
  Schedule s;
  s.tiles.assign(L, {});
  s.loop_order.assign(L, {});
  for (const auto& [d, b] : nest.dims) {
    for (size_t l = 0; l < L; ++l) s.tiles[l][d] = 1;
    s.tiles[L - 1][d] = b;
  }
  for (size_t l = 0; l < L; ++l)
    for (const auto& [d, b] : nest.dims) s.loop_order[l].push_back(d);
  return s;
}

}  // namespace npudse::mapping
