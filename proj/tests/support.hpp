#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "psys/assembly.hpp"
#include "psys/dataset.hpp"
#include "psys/pool.hpp"
#include "psys/synthetic.hpp"

namespace psys::testing {

// The 101-person example with every split set to all rows.
struct FigureOneRun {
  FigureOne fixture;
  SplitBundle bundle;
  ModelPool pool;
  std::vector<ParticipatorySystem> systems;

  const ParticipatorySystem& get(std::string_view name) const {
    for (const auto& s : systems)
      if (s.name == name) return s;
    throw std::out_of_range(std::string(name));
  }
};

inline FigureOneRun figure_one_run(std::vector<SystemKind> kinds = {SystemKind::kMinimal, SystemKind::kFlat,
                                                                     SystemKind::kSequential}) {
  FigureOneRun run;
  run.fixture = figure_one();
  run.bundle = SplitBundle{run.fixture.data, run.fixture.data, run.fixture.data, 0, true};
  run.pool = ModelPool(run.fixture.data.schema(), {run.fixture.h, run.fixture.h0});
  LearnOptions o;
  o.kinds = std::move(kinds);
  run.systems = learn_systems(run.bundle, run.pool, o);
  return run;
}

// Task i of the randomized suite: k in 1..3, n in 600..2000.
inline TaskOptions suite_task(std::uint64_t i) {
  TaskOptions o;
  o.k = 1 + i % 3;
  o.max_levels = 3;
  o.n = 600 + (i * 277) % 1401;
  o.d = 2 + i % 3;
  o.seed = 1000 + i;
  return o;
}

struct TaskRun {
  Dataset data;
  SplitBundle bundle;
  ModelPool pool;
  std::vector<ParticipatorySystem> systems;
};

inline TaskRun run_task(const TaskOptions& t, std::vector<SystemKind> kinds = {SystemKind::kMinimal, SystemKind::kFlat,
                                                                               SystemKind::kSequential},
                        std::uint64_t seed = 7) {
  TaskRun run;
  run.data = random_task(t);
  SplitOptions so;
  so.seed = seed;
  run.bundle = split_dataset(run.data, so);
  PoolOptions po;
  po.seed = seed;
  run.pool = build_pool(run.bundle, po);
  LearnOptions lo;
  lo.kinds = std::move(kinds);
  lo.seed = seed;
  lo.constraints.max_trees = 16;
  run.systems = learn_systems(run.bundle, run.pool, lo);
  return run;
}

}  // namespace psys::testing
