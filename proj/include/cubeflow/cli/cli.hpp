#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cubeflow/core/density.hpp"
#include "cubeflow/core/velocity_field.hpp"
#include "cubeflow/flow/flow.hpp"

namespace cubeflow::cli {

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kConfigError = 2, kBoundFailure = 3 };

struct GlobalOptions {
  std::filesystem::path config;
  std::filesystem::path out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

/// Full command line: `cubeflow <kr|fit|rate|verify|spline|sample|eval> --config PATH [--out DIR]
/// [--seed U64] [--threads N]`. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Runs one command on an already parsed config; used by `run` and by tests.
int run_command(const std::string& command, const nlohmann::json& config, const GlobalOptions& opt, std::ostream& out,
                std::ostream& err);

std::vector<std::string> command_names();

/// Parses JSON text; syntax errors become ConfigError with line and column.
nlohmann::json parse_config_text(const std::string& text, const std::string& source);

/// 1-based line of the first occurrence of "key" in text, or 0.
int locate_key_line(const std::string& text, const std::string& key);

/// Writes through a temporary file in the same directory and renames it into place.
void atomic_write(const std::filesystem::path& path, const std::string& contents);

AnalyticDensity density_from_json(const nlohmann::json& j, const std::string& where);
FlowConfig flow_config_from_json(const nlohmann::json& j, const std::string& where);
nlohmann::json flow_config_to_json(const FlowConfig& c);

}  // namespace cubeflow::cli
