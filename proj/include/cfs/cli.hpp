#pragma once

#include "cfs/core.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace cfs {

/// Flat key/value settings from a config file, with flag overrides applied on top.
struct RunConfig {
    std::map<std::string, std::string> values;

    bool has(std::string_view key) const;
    /// Throws BadConfig naming the key when it is absent.
    const std::string& require(std::string_view key) const;
    std::string get(std::string_view key, std::string_view fallback) const;
};

/// One `key = value` per line, `#` starts a comment. Repeated keys and lines without '=' are BadConfig.
RunConfig parse_config_text(std::string_view text);
RunConfig load_config(const std::string& path);

/// Throws BadConfig for the first key not in `allowed`.
void reject_unknown_keys(const RunConfig& cfg, const std::vector<std::string_view>& allowed);

std::string cmd_models();
/// Both return the process exit code; reports go to cfg's `out` directory, a summary to `out`.
int cmd_smallball(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_battery(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Exit codes: 0 success, 2 bad configuration or input, 3 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Entry point without the program name: args = {"battery", "--config", "run.cfg", ...}.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace cfs
