#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace ccphot::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kValidation = 2, kFitFailure = 3 };

const std::vector<std::string>& commands();

struct RunConfig {
  std::string command;
  std::map<std::string, std::vector<std::filesystem::path>> inputs;  // role -> files
  nlohmann::ordered_json parameters = nlohmann::ordered_json::object();
  std::filesystem::path output_dir = ".";
  bool emit_plot_data = false;

  /// Known command, documented input roles and parameter keys, existing files.
  void validate() const;
  nlohmann::ordered_json to_json() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Maps a library exception onto the documented exit codes.
int exit_code_for(const std::exception& e);

/// Executes one validated configuration, writing reports into output_dir.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Full command-line entry point.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ccphot::cli
