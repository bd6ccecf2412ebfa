#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "dmatch/config.hpp"

namespace dmatch {

// Environment variable that prefixes relative output directories.
inline constexpr const char* kOutRootEnv = "DM_OUT_ROOT";

// Exit codes shared by the CLI and the experiment drivers.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDiverged = 3;

// --out wins over [run] out_dir; a relative result is prefixed by the
// DM_OUT_ROOT env var when set. The directory is created.
std::string resolve_out_dir(const Config& cfg, const std::string& experiment,
                            const std::string& out_override);

// Individual drivers. Each consumes its config keys up front, validates with
// require_all_consumed, writes CSVs under out_dir and returns an exit code.
// Config mistakes throw std::invalid_argument.
int run_gradcheck(const Config& cfg, const std::string& out_dir);
int run_stability(const Config& cfg, const std::string& out_dir);
int run_separation(const Config& cfg, const std::string& out_dir);
int run_fairness(const Config& cfg, const std::string& out_dir);
int run_train(const Config& cfg, const std::string& out_dir);
int run_eval(const Config& cfg, const std::string& out_dir);
int run_plotdata(const Config& cfg, const std::string& out_dir);

// Dispatch by experiment name with CLI overrides applied; maps exceptions to
// exit codes (invalid_argument -> 2, DivergenceError -> 3).
int run_experiment(const std::string& name, Config config, const std::string& out_override,
                   std::optional<std::uint64_t> seed_override);

}  // namespace dmatch
