#pragma once

#include <cstddef>
#include <vector>

#include "twakit/beat_model.hpp"

namespace twakit::synth {

// Deterministic bank of synthetic subject morphologies. Every entry passes
// the corrected-QT gate over the dataset HR grid.
std::vector<beats::MorphologyTemplate> builtin_templates(std::size_t count = 47);

}  // namespace twakit::synth
