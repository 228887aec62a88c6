#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "istab/cli.hpp"
#include "istab/forward.hpp"

using namespace istab;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = "cli_test_work";

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path);
  REQUIRE(f.good());
  f << content;
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

ExperimentConfig config_from(const std::string& body, const std::string& tag) {
  const fs::path path = kWork / (tag + ".cfg");
  write_file(path, body);
  return load_config(path.string());
}

int count_lines(const std::string& text, const std::string& needle) {
  int count = 0;
  for (auto pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + 1))
    ++count;
  return count;
}

struct CliRun {
  int exit_code = -1;
  std::string output;
};

/// Runs the built binary with stdout+stderr captured to a file.
CliRun run_cli(const std::string& args, const std::string& tag) {
  const fs::path log = kWork / (tag + ".log");
  fs::create_directories(kWork);
  const std::string cmd =
      std::string(ISTAB_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun out;
  out.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  out.output = slurp(log);
  return out;
}

const std::string kSmallGrid =
    "grid.n = 3\n"
    "grid.h = 0.125\n"
    "grid.half_width = 0.5\n";

}  // namespace

TEST_CASE("config parser: flat key-value with typed validation") {
  SUBCASE("defaults and overrides round-trip") {
    const ExperimentConfig cfg = config_from(
        kSmallGrid +
            "family = identical\n"
            "omega_grid = 2, 4, 8\n"
            "alpha = 0,1,0\n"
            "epsilon = 0.3\n"
            "theta = 0.4\n"
            "seed = 77\n"
            "output_dir = cli_test_work/out\n"
            "# a comment line\n",
        "good");
    CHECK(cfg.grid.h == 0.125);
    CHECK(cfg.family == "identical");
    CHECK(cfg.omega_grid == std::vector<double>{2.0, 4.0, 8.0});
    CHECK(cfg.alpha == Vec3(0, 1, 0));
    CHECK(cfg.epsilon == 0.3);
    CHECK(cfg.theta == 0.4);
    CHECK(cfg.seed == 77);
    CHECK(cfg.m == 10.0);  // untouched default
  }

  SUBCASE("violations throw with the offending key") {
    CHECK_THROWS_WITH_AS(
        config_from(kSmallGrid + "omega_grid = 4,2\n", "dec"),
        "config: omega_grid must be strictly increasing", InvalidArgument);
    CHECK_THROWS_WITH_AS(config_from(kSmallGrid + "mystery = 1\n", "unk"),
                         "config: unknown key mystery", InvalidArgument);
    CHECK_THROWS_AS(config_from(kSmallGrid + "epsilon = 1.5\n", "eps"),
                    InvalidArgument);
    CHECK_THROWS_AS(config_from(kSmallGrid + "epsilon = abc\n", "num"),
                    InvalidArgument);
    CHECK_THROWS_AS(
        config_from(kSmallGrid + "family = nope\n", "fam"), InvalidArgument);
    CHECK_THROWS_AS(
        config_from(kSmallGrid + "family = file\nq1_file = missing.field\n"
                                 "q2_file = missing.field\n",
                    "file"),
        InvalidArgument);
    CHECK_THROWS_AS(config_from(kSmallGrid + "theta = 0.5\ntheta = 0.6\n",
                                "dup"),
                    InvalidArgument);
    CHECK_THROWS_AS(config_from(kSmallGrid + "not a key value line\n", "kv"),
                    InvalidArgument);
    CHECK_THROWS_AS(load_config("cli_test_work/does_not_exist.cfg"),
                    InvalidArgument);
  }
}

TEST_CASE("grid-field files: write, load, and potential round trip") {
  GridSpec spec;
  spec.n = 3;
  spec.h = 0.25;
  const DomainGrid grid = build_grid(spec);
  const PotentialField q = make_potential(
      grid, gaussian_bump(Vec3(0.1, 0.0, -0.1), 0.2, 1.5), "q", 3, 10.0);

  const fs::path path = kWork / "field_roundtrip.field";
  fs::create_directories(kWork);
  write_grid_field(path.string(), spec, q.values);

  GridSpec parsed;
  const Eigen::VectorXcd raw = load_grid_field(path.string(), &parsed);
  CHECK(parsed.n == 3);
  CHECK(parsed.h == 0.25);
  REQUIRE(raw.size() == q.values.size());
  CHECK((raw.real() - q.values).norm() == 0.0);  // full-precision text
  CHECK(raw.imag().norm() == 0.0);

  const PotentialField loaded = load_potential_field(path.string(), grid);
  CHECK((loaded.values - q.values).norm() == 0.0);
  // Nearest-vertex evaluator agrees with the stored values on the lattice.
  for (int i = 0; i < grid.num_interior(); ++i)
    CHECK(loaded.eval(grid.vertex_pos(grid.interior_coords[i])) ==
          q.values[i]);
  CHECK(loaded.eval(Vec3(5, 5, 5)) == 0.0);

  // Complex variant.
  Eigen::VectorXcd cvals = Eigen::VectorXcd::Zero(4);
  cvals << Complex(1, -2), Complex(0, 3), Complex(-0.5, 0), Complex(2, 2);
  const fs::path cpath = kWork / "field_complex.field";
  write_grid_field(cpath.string(), spec, cvals);
  const Eigen::VectorXcd cback = load_grid_field(cpath.string());
  CHECK((cback - cvals).norm() == 0.0);

  // Grid mismatch is rejected.
  GridSpec other = spec;
  other.h = 0.125;
  const DomainGrid fine = build_grid(other);
  CHECK_THROWS_AS(load_potential_field(path.string(), fine), InvalidArgument);
  CHECK_THROWS_AS(load_grid_field("cli_test_work/missing.field"),
                  InvalidArgument);

  // family = file uses the loaders.
  ExperimentConfig cfg = config_from(
      "grid.n = 3\ngrid.h = 0.25\ngrid.half_width = 0.5\n"
      "family = file\n"
      "q1_file = " + path.string() + "\n"
      "q2_file = " + path.string() + "\n",
      "file_family");
  const auto pairs = build_family(cfg, grid);
  REQUIRE(pairs.size() == 1);
  CHECK((pairs[0].first.values - q.values).norm() == 0.0);
}

TEST_CASE("forward command: affine oracle, plane wave, invalid h") {
  SUBCASE("q=0, omega=0, affine data: trace equals alpha . nu per face") {
    ExperimentConfig cfg = config_from(
        kSmallGrid +
            "family = identical\nforward.q = zero\nforward.data = affine\n"
            "forward.dir = 1,0,0\noutput_dir = cli_test_work/fwd_affine\n",
        "fwd_affine");
    std::ostringstream log;
    REQUIRE(cmd_forward(cfg, log) == kExitOk);
    const DomainGrid grid = build_grid(cfg.grid);
    std::ifstream csv("cli_test_work/fwd_affine/forward_trace.csv");
    REQUIRE(csv.good());
    std::string line;
    std::getline(csv, line);
    CHECK(line == "face,cx,cy,cz,nx,ny,nz,re,im");
    int rows = 0;
    double worst = 0.0;
    while (std::getline(csv, line)) {
      std::stringstream ss(line);
      std::string cell;
      std::vector<double> cols;
      while (std::getline(ss, cell, ',')) cols.push_back(std::stod(cell));
      REQUIRE(cols.size() == 9);
      const int j = static_cast<int>(cols[0]);
      const double expect = grid.faces[j].normal.x();  // alpha = e_x
      worst = std::max(worst, std::abs(cols[7] - expect));
      worst = std::max(worst, std::abs(cols[8]));
      ++rows;
    }
    CHECK(rows == grid.num_faces());
    CHECK(worst < 1e-10);
  }

  SUBCASE("plane wave at omega=2 matches the analytic solution") {
    ExperimentConfig cfg = config_from(
        kSmallGrid +
            "family = identical\nforward.q = zero\n"
            "forward.data = plane_wave\nforward.omega = 2\n"
            "forward.dir = 0,0,1\noutput_dir = cli_test_work/fwd_wave\n",
        "fwd_wave");
    std::ostringstream log;
    REQUIRE(cmd_forward(cfg, log) == kExitOk);
    const DomainGrid grid = build_grid(cfg.grid);
    const Eigen::VectorXcd u =
        load_grid_field("cli_test_work/fwd_wave/forward_u.field");
    REQUIRE(u.size() == grid.num_interior());
    double worst = 0.0;
    for (int i = 0; i < grid.num_interior(); ++i) {
      const Vec3 x = grid.vertex_pos(grid.interior_coords[i]);
      const Complex exact = std::exp(Complex(0.0, 2.0 * x.z()));
      worst = std::max(worst, std::abs(u[i] - exact));
    }
    CHECK(worst < 0.05);  // second-order discretization error at h=1/8
  }

  SUBCASE("invalid h is a validation error with nonzero exit") {
    ExperimentConfig cfg = config_from(
        "grid.n = 3\ngrid.h = 0.3\ngrid.half_width = 0.5\n"
        "family = identical\noutput_dir = cli_test_work/fwd_bad\n",
        "fwd_bad");
    std::ostringstream log;
    CHECK(cmd_forward(cfg, log) == kExitFailure);
    CHECK(log.str().rfind("ERROR forward:", 0) == 0);
  }
}

TEST_CASE("sweep command: caching, determinism and exit codes") {
  const std::string out1 = "cli_test_work/sweep_run1";
  const std::string out2 = "cli_test_work/sweep_run2";
  const std::string out3 = "cli_test_work/sweep_run3";
  const std::string cache = "cli_test_work/sweep_cache";
  fs::remove_all(cache);
  const std::string base_cfg =
      kSmallGrid +
      "family = identical\nomega_grid = 2,4\n"
      "cache_dir = " + cache + "\n";
  write_file(kWork / "sweep1.cfg", base_cfg + "output_dir = " + out1 + "\n");
  write_file(kWork / "sweep2.cfg", base_cfg + "output_dir = " + out2 + "\n");
  write_file(kWork / "sweep3.cfg", base_cfg + "output_dir = " + out3 + "\n");

  // Cold run: one DN solve per unique (potential, omega).
  const CliRun cold =
      run_cli("sweep --config cli_test_work/sweep1.cfg", "sweep_cold");
  REQUIRE(cold.exit_code == kExitOk);
  CHECK(count_lines(cold.output, "dn-solve") == 2);
  CHECK(count_lines(cold.output, "dn-cache-hit") == 0);

  // Warm rerun: zero DN re-solves, identical physics outputs byte for byte.
  const CliRun warm =
      run_cli("sweep --config cli_test_work/sweep2.cfg", "sweep_warm");
  REQUIRE(warm.exit_code == kExitOk);
  CHECK(count_lines(warm.output, "dn-solve") == 0);
  CHECK(count_lines(warm.output, "dn-cache-hit") == 2);
  CHECK(slurp(out1 + "/sweep_records.csv") ==
        slurp(out2 + "/sweep_records.csv"));
  CHECK(slurp(out1 + "/sweep_beta.csv") == slurp(out2 + "/sweep_beta.csv"));
  CHECK(slurp(out1 + "/sweep_scatter.svg") ==
        slurp(out2 + "/sweep_scatter.svg"));

  // Seed is not part of the physics: a different seed gives identical CSVs.
  const CliRun reseeded = run_cli(
      "sweep --config cli_test_work/sweep3.cfg --seed 999", "sweep_seed");
  REQUIRE(reseeded.exit_code == kExitOk);
  CHECK(slurp(out1 + "/sweep_records.csv") ==
        slurp(out3 + "/sweep_records.csv"));

  // Identical pair family: gap and norms are exactly zero in the records.
  const std::string records = slurp(out1 + "/sweep_records.csv");
  CHECK(count_lines(records, "base|base,") == 2);
  CHECK(count_lines(records, ",0,0,0,small_gap,") == 2);

  SUBCASE("partial failure exit code is distinct from total failure") {
    write_file(kWork / "sweep_partial.cfg",
               kSmallGrid +
                   "family = identical\nomega_grid = 0.5,2\n"
                   "output_dir = cli_test_work/sweep_partial\n");
    const CliRun partial = run_cli(
        "sweep --config cli_test_work/sweep_partial.cfg", "sweep_partial");
    CHECK(partial.exit_code == kExitPartial);

    const CliRun total = run_cli(
        "sweep --config cli_test_work/missing.cfg", "sweep_total");
    CHECK(total.exit_code == kExitFailure);
    CHECK(total.output.rfind("ERROR", 0) == 0);
  }

  SUBCASE("report summarizes the sweep outputs") {
    const CliRun rep =
        run_cli("report --config cli_test_work/sweep1.cfg", "report_ok");
    CHECK(rep.exit_code == kExitOk);
    const std::string md = slurp(out1 + "/report.md");
    CHECK(md.find("Regression exponents") != std::string::npos);
    CHECK(md.find("2 records, 0 failures") != std::string::npos);

    write_file(kWork / "report_missing.cfg",
               kSmallGrid +
                   "family = identical\n"
                   "output_dir = cli_test_work/no_such_run\n");
    const CliRun missing = run_cli(
        "report --config cli_test_work/report_missing.cfg", "report_missing");
    CHECK(missing.exit_code == kExitFailure);
  }
}

TEST_CASE("dnmap, cgo-check and carleman-check commands") {
  const std::string cfg_body =
      kSmallGrid +
      "family = identical\nomega_grid = 2,5\n"
      "carleman.fields = 20\ncarleman.lambda = 2\n"
      "cgo.lambdas = 2,4\n"
      "output_dir = cli_test_work/checks\n"
      "cache_dir = cli_test_work/checks_cache\n";
  write_file(kWork / "checks.cfg", cfg_body);
  fs::remove_all("cli_test_work/checks_cache");

  const CliRun dn = run_cli("dnmap --config cli_test_work/checks.cfg", "dnmap");
  CHECK(dn.exit_code == kExitOk);
  CHECK(fs::exists("cli_test_work/checks/dn_omega_2.csv"));
  CHECK(fs::exists("cli_test_work/checks/dn_omega_5.csv"));
  CHECK(count_lines(dn.output, "dn-solve") == 2);

  const CliRun cgo =
      run_cli("cgo-check --config cli_test_work/checks.cfg", "cgo");
  CHECK(cgo.exit_code == kExitOk);
  const std::string cgo_csv = slurp("cli_test_work/checks/cgo_check.csv");
  CHECK(cgo_csv.rfind("lambda,zeta_mag,iterations,residual,r_hs_norm\n", 0) ==
        0);
  CHECK(count_lines(cgo_csv, "\n") == 3);  // header + 2 lambdas

  const CliRun car = run_cli(
      "carleman-check --config cli_test_work/checks.cfg", "carleman");
  CHECK(car.exit_code == kExitOk);
  CHECK(car.output.find("nonneg fraction=1") != std::string::npos);
  CHECK(fs::exists("cli_test_work/checks/carleman_check.csv"));
}

TEST_CASE("fourier-recon command emits modes and a reconstruction field") {
  write_file(kWork / "recon.cfg",
             kSmallGrid +
                 "family = holdout4\nomega_grid = 2,4\n"
                 "recon.omega = 4\nrecon.lambda = 6\nrecon.rho = 3.5\n"
                 "output_dir = cli_test_work/recon\n");
  const CliRun rec =
      run_cli("fourier-recon --config cli_test_work/recon.cfg", "recon");
  REQUIRE(rec.exit_code == kExitOk);

  // Mode lattice: side-2 box spacing pi, restricted to |xi| <= 3.5 and the
  // plane orthogonal to alpha = e_x. Diagonal modes have |xi| = pi*sqrt(2) >
  // 3.5, leaving the origin plus the four axis modes (0,+-pi,0), (0,0,+-pi).
  const std::string modes = slurp("cli_test_work/recon/recon_modes.csv");
  CHECK(count_lines(modes, "\n") == 6);  // header + 5 modes

  GridSpec spec;
  const Eigen::VectorXcd recon =
      load_grid_field("cli_test_work/recon/recon_field.field", &spec);
  const DomainGrid grid = build_grid(spec);
  REQUIRE(recon.size() == grid.num_interior());
  double max_abs = 0.0;
  for (Eigen::Index i = 0; i < recon.size(); ++i)
    max_abs = std::max(max_abs, std::abs(recon[i]));
  CHECK(max_abs > 0.0);
  CHECK(max_abs < 10.0);  // bounded band-limited field

  // lambda < rho is rejected at validation time.
  CHECK_THROWS_AS(config_from(kSmallGrid + "recon.lambda = 2\n"
                                           "recon.rho = 3\n",
                              "recon_bad"),
                  InvalidArgument);
}

TEST_CASE("verify command: property suite report with margins") {
  fs::remove_all("cli_test_work/verify_cache");
  write_file(kWork / "verify.cfg",
             kSmallGrid +
                 "family = frozen8\nomega_grid = 2,5\n"
                 "carleman.fields = 20\ncarleman.lambda = 2\n"
                 "output_dir = cli_test_work/verify\n"
                 "cache_dir = cli_test_work/verify_cache\n");
  const CliRun ver =
      run_cli("verify --config cli_test_work/verify.cfg", "verify");
  REQUIRE(ver.exit_code == kExitOk);
  const std::string report = slurp("cli_test_work/verify/verify_report.txt");
  for (const char* name :
       {"zeta-algebra", "carleman-slack", "green-identity-level",
        "green-identity-refine", "schedule-chain", "cache-integrity"}) {
    CHECK(report.find(std::string("PASS ") + name) != std::string::npos);
  }
  CHECK(report.find("FAIL") == std::string::npos);
  CHECK(count_lines(report, "margin=") == 6);
  // The corrupted cache entry was detected and recomputed inside the suite.
  CHECK(count_lines(ver.output, "dn-cache-corrupt") == 1);
}
