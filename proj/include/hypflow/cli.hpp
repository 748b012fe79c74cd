#pragma once

// Command-line front end: flow, curvature, gradcheck, train and compare.
// Exit codes: 0 success, 1 runtime failure (including a check that did not
// pass), 2 rejected configuration or precondition.

#include <filesystem>
#include <iosfwd>

#include "hypflow/config.hpp"
#include "hypflow/datasets.hpp"
#include "hypflow/eucl2hyp2eucl.hpp"
#include "hypflow/ricci_flow.hpp"

namespace hypflow {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitRejected = 2;

FlowConfig flow_config_from(const Config& cfg);
TrainConfig train_config_from(const Config& cfg);
Dataset dataset_from(const Config& cfg);

/// Each command writes its artifacts plus the effective configuration
/// (config.txt) into `out`, holding an exclusive lock file for the
/// duration of the run, and reports progress on `log`. They throw on
/// errors; run_cli maps exceptions to exit codes.
int cmd_flow(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_curvature(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_gradcheck(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_train(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_compare(const Config& cfg, const std::filesystem::path& out, std::ostream& log);

int run_cli(int argc, char** argv);

}  // namespace hypflow
