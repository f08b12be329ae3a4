#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace cmebal::cli {

/// Fully resolved command line of one invocation.
struct RunConfig {
    std::string command;
    std::string network;
    std::string output_dir = "out";
    std::vector<std::string> select;
    std::optional<std::size_t> order;
    double ratio = 1e-3;
    std::string method = "truncate";
    double t_start = 0.0;
    double t_stop = 5.0;
    std::size_t t_count = 501;
    std::string t_spacing = "linear";
    std::uint64_t seed = 0;
    std::size_t runs = 1000;
    std::size_t threads = 0;
    double eps = 1e-3;
    std::vector<int> counts;
    std::vector<std::string> vary;
    std::size_t reps = 5;
    std::size_t max_states = 200'000;
    bool skip_full = false;
};

/// Range and consistency checks; throws std::invalid_argument.
void validate(const RunConfig& cfg);

nlohmann::json to_json(const RunConfig& cfg);

int cmd_enumerate(const RunConfig& cfg, std::ostream& out);
int cmd_reduce(const RunConfig& cfg, std::ostream& out);
int cmd_simulate(const RunConfig& cfg, std::ostream& out);
int cmd_ssa(const RunConfig& cfg, std::ostream& out);
int cmd_bench(const RunConfig& cfg, std::ostream& out);

/// Parses argv, validates, dispatches. Errors go to `err` and yield a nonzero exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cmebal::cli
