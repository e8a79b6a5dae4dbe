#pragma once

#include <cstdint>

#include "psys/dataset.hpp"
#include "psys/models.hpp"

namespace psys {

// The 101-person example: sex x age with counts (female, old) 0+/24-,
// (female, young) 25+/0-, (male, old) 25+/0-, (male, young) 0+/27-, a
// traditional model h that reads both attributes and a generic h0.
struct FigureOne {
  SchemaConfig config;
  Dataset data;
  TrainedModel h;
  TrainedModel h0;
};

FigureOne figure_one();

struct TaskOptions {
  std::size_t k = 2;           // group attributes
  std::size_t max_levels = 3;  // each attribute gets 2..max_levels levels
  std::size_t n = 1000;
  std::size_t d = 3;           // numeric features
  double group_effect = 1.5;   // scale of per-group intercept shifts
  std::uint64_t seed = 0;
};

// Logistic data where some full groups carry their own intercept shift.
Dataset random_task(const TaskOptions& options);

// Sex x age data with an interaction the additive one-hot model cannot fit:
// it flips the majority label for the (male, young) group while a model
// without group attributes does not. Group sizes are (30, 30, 30, 15) * scale.
Dataset worsenalization_task(std::uint64_t seed, std::size_t scale = 10);

// Schema document matching a generated dataset (label "y", features x1..xd,
// one column per attribute).
SchemaConfig config_for(const Dataset& d);

}  // namespace psys
