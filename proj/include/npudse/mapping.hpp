#pragma once

#include <functional>
#include <optional>

#include "design_space.hpp"
#include "workload.hpp"

namespace npudse::mapping {

using design::Hierarchy;
using workload::Operand;
using workload::OperatorNest;

struct SpatialAxis {
  std::string dim;
  long factor = 1;
  bool operator==(const SpatialAxis&) const = default;
};

struct SpatialMap {
  std::optional<SpatialAxis> rows, cols;
  long factor_of(const std::string& dim) const;
  bool operator==(const SpatialMap&) const = default;
};

// A mapping of a nest onto a hierarchy. Temporal levels are innermost
// first: level 0 is the PE register level, level L-1 the root memory.
// Loop orders list dims outermost-first within their level.
struct Schedule {
  std::vector<std::map<std::string, long>> tiles;
  std::vector<std::vector<std::string>> loop_order;
  SpatialMap spatial;

  size_t num_levels() const { return tiles.size(); }
  long tile(size_t level, const std::string& dim) const;
  // spatial-inclusive cumulative tile at `level`
  long cumulative_tile(size_t level, const std::string& dim) const;
  long padded_bound(const std::string& dim) const;

  std::string serialize() const;
  static Schedule parse(const std::string& text);
};

double padding_overhead(const Schedule& s, const OperatorNest& nest);

// Words of `operand` resident at temporal `level` under the schedule's
// cumulative tiles. Sliding-window expressions Y+R span
// stride*(tile(Y)-1) + tile(R).
double operand_footprint(const Schedule& s, const OperatorNest& nest,
                         size_t level, Operand operand);

design::ValidationReport validate_schedule(const Schedule& s,
                                           const OperatorNest& nest,
                                           const Hierarchy& hier);

// Words crossing each level boundary per operand. Boundary i feeds the
// storage of temporal level i; entry [i][operand] = fetches x footprint.
// The fetch count is the exact single-resident-tile model: the product of
// trip counts of every loop from the outermost down to the innermost
// trip>1 loop whose dim indexes the operand.
std::vector<std::array<double, 3>> data_movement_volume(const Schedule& s,
                                                        const OperatorNest& nest,
                                                        const Hierarchy& hier);

struct MappingSpace {
  OperatorNest nest;
  Hierarchy hier;
  size_t num_levels = 0;
  std::vector<bool> pass_through;  // per level; forced tile 1
  std::vector<SpatialMap> spatial_options;
  unsigned long long raw_size = 0;  // pre-validation combinatorial count
  // restriction knobs: fix loop orders to nest order / drop spatial choices
  bool enumerate_orders = true;
  bool enumerate_spatial = true;
};

MappingSpace formulate_mapping_space(const OperatorNest& nest,
                                     const design::ConfiguredDesign& d,
                                     const design::ComponentLibrary& lib);
MappingSpace formulate_mapping_space(const OperatorNest& nest, const Hierarchy& h);

// Visits every valid schedule in deterministic canonical order. The visitor
// returns false to stop early.
void for_each_schedule(const MappingSpace& space,
                       const std::function<bool(const Schedule&)>& visit);

std::vector<Schedule> enumerate_schedules(const MappingSpace& space);
unsigned long long count_schedules(const MappingSpace& space);

// Seeded uniform-ish sampling over the raw space with validity retry; falls
// back to the canonical all-resident-at-root schedule.
Schedule sample_schedule(const MappingSpace& space, Rng& rng);

}  // namespace npudse::mapping
