#pragma once

// Scenario orchestration behind the CLI: simulate / optimize / verify /
// converge. All artifacts are written atomically (temp file + rename).

#include <optional>
#include <string>

#include "convexctrl/config.hpp"
#include "convexctrl/pmp.hpp"

namespace convexctrl {

// exit codes: 0 success, 2 non-convergence or failed checks, 1 error
int run_scenario(const ExperimentConfig& config, const std::string& command,
                 const std::string& out_dir_override = "",
                 std::optional<std::uint64_t> seed_override = std::nullopt);

// serialization helpers (exposed for tests)
void write_text_atomic(const std::string& path, const std::string& content);
std::string trajectory_csv(const Trajectory& traj);
std::string costates_csv(const CostatePath& path);
std::string schedule_to_json(const ControlSchedule& schedule, const ControlDictionary& dictionary);
ControlSchedule schedule_from_json(const std::string& text, const Model& model);
std::string sweep_report_json(const SweepReport& report);

}  // namespace convexctrl
