#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace fwlab::experiment {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitNumerical = 2;

/// Environment variable overriding the thread count of a run (below --threads).
inline constexpr const char* kThreadsEnv = "FWLAB_THREADS";

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output;
  std::optional<int> threads;
};

/// Executes the configured task, writing its artifacts and manifest.json
/// into the output directory. Diagnostics go to `err`.
int run(const std::filesystem::path& config, const RunOverrides& overrides, std::ostream& out, std::ostream& err);

/// Aggregate tables over artifact directories. With `destination` the tables
/// are written there as CSV files, otherwise printed to `out`.
int report(const std::vector<std::filesystem::path>& dirs, const std::optional<std::filesystem::path>& destination,
           std::ostream& out, std::ostream& err);

/// Assumption diagnostics of the config's model printed as CSV.
int check_model(const std::filesystem::path& config, std::ostream& out, std::ostream& err);

}  // namespace fwlab::experiment
