#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

// Command-line front end.  Every subcommand is driven by a flat key=value
// configuration (dotted keys, e.g. "ihvp.method=woodfisher") that can come
// from a config file, an environment fallback, and command-line flags, in
// increasing order of precedence.  All artifacts embed the fully resolved
// configuration so any run can be reproduced from its own report.

namespace fairij {

/// Flat string-to-string configuration map with dotted keys.
using FlatConfig = std::map<std::string, std::string>;

/// Parses "key = value" lines.  Blank lines and lines starting with '#' are
/// ignored; values keep any '=' characters after the first separator.
/// Duplicate keys keep the last assignment.  Throws InputError on a line
/// without '='.
FlatConfig parse_config_text(const std::string& text);

/// Loads a configuration from a file.  Plain key=value files are parsed with
/// parse_config_text.  If the file contents start with '{' the file is
/// treated as a JSON report produced by this tool and the embedded "config"
/// object is extracted, which makes every emitted report directly reusable
/// as a config file.
FlatConfig config_from_file(const std::string& path);

/// Resolved settings: registry defaults overlaid with file, environment and
/// flag overrides.  Unknown keys are rejected so typos fail loudly.
class Settings {
 public:
  /// The full registry of known keys and their default values.
  static const FlatConfig& defaults();

  /// Builds resolved settings from layered overrides (applied in order;
  /// later layers win).  Throws InputError on unknown keys.
  explicit Settings(const std::vector<FlatConfig>& layers);

  const std::string& str(const std::string& key) const;
  int integer(const std::string& key) const;
  std::int64_t integer64(const std::string& key) const;
  std::uint64_t seed(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  /// Comma-separated lists; an empty string yields an empty vector.
  std::vector<int> int_list(const std::string& key) const;
  std::vector<double> real_list(const std::string& key) const;
  std::vector<std::string> str_list(const std::string& key) const;

  /// The resolved configuration to embed in artifacts.  Excludes keys that
  /// only describe where/how this process ran (run.out, run.jobs), so a
  /// re-run from an embedded config reproduces the numbers bitwise no matter
  /// where the artifacts land or how many workers are used.
  FlatConfig embedded() const;

  /// The complete resolved map (exposed for tests and debugging).
  const FlatConfig& resolved() const { return values_; }

 private:
  FlatConfig values_;
};

/// Entry point used by the fairij binary.  Returns the process exit code:
/// 0 on success, 1 on input/configuration errors, 2 on numerical failures.
int run_cli(int argc, const char* const* argv);

}  // namespace fairij
