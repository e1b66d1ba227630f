// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "nlf/dataset.hpp"
#include "nlf/network.hpp"

namespace nlf {

/// Runs one `nlf` subcommand. `args` excludes the program name. Returns the
/// process exit code; usage errors return 2 and leave no output behind.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Loads a weight file written by `nlf train` or `nlf distill`, including the
/// camera it was trained for.
std::pair<Model<float>, ModelCamera> load_trained(const std::filesystem::path& weights);

/// Poses from a JSON file: an array of 12-number arrays, {"poses": [...]}, or
/// a dataset manifest.
std::vector<Pose> read_pose_file(const std::filesystem::path& path);

/// n cameras evenly spaced in azimuth at a fixed elevation (degrees).
std::vector<Pose> orbit_trajectory(int n, double elevation_deg, double radius);

}  // namespace nlf
