#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmebal/sim.hpp"

namespace cmebal::io {

/// %.17g, the shortest fixed format that round-trips every double.
std::string format_double(double v);

/// CSV with header `time,<labels...>`; labels default to y1..yr.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

/// Header `index,sigma`, 1-based.
void write_hsv_csv(std::ostream& out, const Vector& hsv);

/// Writes a whole file, creating parent directories. Throws std::runtime_error on failure.
void write_file(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(const std::string& s);

}  // namespace cmebal::io
