#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "almcflow/core.hpp"

namespace almcflow {

/// CSV `particle,coord_0..coord_{d-1},log_weight` plus a sidecar
/// `<path>.json` holding {n, d, step_index, seed}. Values use round-trip
/// precision, so reading back gives identical doubles.
void write_ensemble_csv(const std::filesystem::path& path, const Ensemble& e, std::uint64_t seed);
Ensemble read_ensemble_csv(const std::filesystem::path& path);

/// Same layout for unweighted samples (log_weight column all zero).
void write_samples_csv(const std::filesystem::path& path, const Points& x, std::uint64_t seed);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace almcflow
