#pragma once

#include <stdexcept>
#include <string>

namespace treetomo {

/// Malformed configuration file or invalid CLI override.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// File-system failures and malformed data files (schema violations included).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Process exit codes used by the CLI. Solver non-convergence throws
// SolverError (see reconstruct.hpp) which carries the best iterate.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitSolver = 4;

}  // namespace treetomo
