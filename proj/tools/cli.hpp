#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace anchorlab::cli {

inline constexpr const char* kToolName = "anchorlab";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kSeedEnv = "ANCHORLAB_SEED";

enum ExitCode : int { kOk = 0, kIoError = 1, kUsageError = 2 };

/// Bad flags or configuration; exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Unreadable/unwritable files, malformed annotation data, changed inputs on
/// replay; exit code 1.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Artifact {
  std::string text;
  nlohmann::json inputs = nlohmann::json::object();  // name -> {path, sha256}
};

/// Runs a subcommand from its fully resolved parameters.
Artifact execute(const std::string& subcommand, const nlohmann::json& params, unsigned threads);

nlohmann::json make_manifest(const std::string& subcommand, const nlohmann::json& params,
                             const nlohmann::json& inputs);

std::string sha256_hex(const std::string& data);

/// Entry point shared by the executable and the tests.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace anchorlab::cli
