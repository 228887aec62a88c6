#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "istab/dnmap.hpp"
#include "istab/grid.hpp"
#include "istab/pipeline.hpp"
#include "istab/potential.hpp"

namespace istab {

/// Flat key-value experiment configuration (one `key = value` per line,
/// `#` comments). Unknown keys are rejected. See README for the key table.
struct ExperimentConfig {
  // Geometry.
  GridSpec grid;

  // Potential-pair family: "frozen8" (the increasing-stability family),
  // "holdout4" (disjoint verification family incl. one identical pair),
  // "identical" (one self-pair), or "file" with q1_file/q2_file.
  std::string family = "frozen8";
  std::string q1_file, q2_file;

  std::vector<double> omega_grid{2.0, 4.0, 8.0, 16.0};
  Vec3 alpha = Vec3::UnitX();
  double epsilon = 0.25;

  // Schedule overrides.
  double theta = 0.5;
  double s = 3.0;
  double m = 10.0;
  double lambda0 = 1.0;
  double c2m = 0.0;
  double margin = 0.1;
  double log_c = 0.0;

  // Solver tolerances (part of the cache key).
  double c_small = 1e-3;
  double cgo_tol = 1e-10;

  // forward subcommand.
  double forward_omega = 0.0;
  std::string forward_q = "zero";       // zero | base | file:PATH
  std::string forward_data = "affine";  // affine | plane_wave
  Vec3 forward_dir = Vec3::UnitX();

  // cgo-check subcommand.
  std::vector<double> cgo_lambdas{2.0, 4.0, 8.0};

  // carleman-check subcommand.
  int carleman_fields = 50;
  double carleman_lambda = 2.0;

  // fourier-recon subcommand.
  double recon_omega = 4.0;
  double recon_lambda = 6.0;
  double recon_rho = 3.5;

  std::string output_dir = ".";
  std::string cache_dir;  // empty = caching disabled
  std::uint64_t seed = 1;
  int jobs = 1;

  std::string source_path;  // config file this came from
};

/// Parses the flat key-value text into a raw map (keys must be unique).
std::map<std::string, std::string> parse_key_values(std::istream& in);

/// Loads and validates a config file. Throws InvalidArgument with the
/// offending key on any violation (unknown key, malformed value,
/// non-increasing omega_grid, missing referenced file, out-of-range
/// epsilon/theta, ...).
ExperimentConfig load_config(const std::string& path);

/// Builds the named potential-pair family on the grid.
std::vector<std::pair<PotentialField, PotentialField>> build_family(
    const ExperimentConfig& cfg, const DomainGrid& grid);

/// Disk cache of DN operators keyed by the content hash of
/// (grid spec, potential values, omega, epsilon, tolerances). Stored as the
/// versioned checksummed DN record; corrupted entries are detected at load
/// and recomputed. Writes are atomic (tmp file + rename). Emits one
/// machine-countable log line per access: "dn-solve", "dn-cache-hit" or
/// "dn-cache-corrupt".
class DnDiskCache {
 public:
  /// Empty directory disables the disk layer (every access is a solve).
  DnDiskCache(std::string dir, double epsilon, double c_small, double cgo_tol,
              int jobs, std::ostream* log);

  DNOperator get(const DomainGrid& grid, const PotentialField& q,
                 double omega);

  int solves = 0;
  int hits = 0;
  int corrupt = 0;

 private:
  std::string dir_;
  double epsilon_, c_small_, cgo_tol_;
  int jobs_ = 1;
  std::ostream* log_ = nullptr;
};

// Subcommand entry points. Exit statuses: 0 success, 1 failure (validation,
// assumption or property failure), 3 partial failure (some sweep points
// failed, output still written).
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitPartial = 3;

int cmd_forward(const ExperimentConfig& cfg, std::ostream& log);
int cmd_dnmap(const ExperimentConfig& cfg, std::ostream& log);
int cmd_cgo_check(const ExperimentConfig& cfg, std::ostream& log);
int cmd_carleman_check(const ExperimentConfig& cfg, std::ostream& log);
int cmd_fourier_recon(const ExperimentConfig& cfg, std::ostream& log);
int cmd_sweep(const ExperimentConfig& cfg, std::ostream& log);
int cmd_verify(const ExperimentConfig& cfg, std::ostream& log);
int cmd_report(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace istab
