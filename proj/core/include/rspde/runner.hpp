#pragma once

#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>

namespace rspde {

/// Exit codes of the experiment driver: 0 success, 1 acceptance-check
/// failure (failing metric named in the report and on stderr), 2 I/O or
/// configuration error.
enum RunnerExit { kRunOk = 0, kRunCheckFailed = 1, kRunConfigError = 2 };

/// Run one subcommand on a parsed configuration. Outputs land in out_dir
/// (created if needed); re-running with identical inputs produces
/// byte-identical files regardless of the worker count.
int run_command(const std::string& command, const nlohmann::json& config,
                const std::string& out_dir);

/// File-based front end: loads the config, applies the optional seed
/// override and thread count, then dispatches.
int run_cli(const std::string& command, const std::string& config_path,
            std::optional<std::uint64_t> seed_override,
            const std::string& out_dir, int threads);

}  // namespace rspde
