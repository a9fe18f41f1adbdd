#pragma once

// Experiment configuration, orchestration and file formats.
//
// Config grammar (one statement per line, '#' starts a comment):
//   [section]
//   key = value
//   section.key = value        (dotted keys are accepted anywhere)
// Values are numbers, "strings", true/false, or [lists] of numbers or strings.
// Field presets are strings such as "zero", "pure_bend(1.0)", "linear(1, 0)"
// or "csv:path/to/file.csv".

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vk/energy2d.hpp"
#include "vk/gradient_flow.hpp"
#include "vk/plate_field.hpp"
#include "vk/slope2d.hpp"
#include "vk/tensor_core.hpp"
#include "vk/thin3d.hpp"

namespace vk {

/// "name(a, b, ...)" or "csv:path".
struct FieldSpec {
  std::string name = "zero";
  std::vector<double> params;
  std::string path;  // set for csv fields

  static FieldSpec parse(const std::string& text);
  std::string to_string() const;
  bool is_csv() const { return name == "csv"; }
  bool operator==(const FieldSpec&) const = default;
};

struct GridConfig {
  double l1 = 1.0;
  double l2 = 1.0;
  int n1 = 33;
  int n2 = 33;
  bool operator==(const GridConfig&) const = default;
};

struct BoundaryConfig {
  FieldSpec u_hat;
  FieldSpec v_hat;
  FieldSpec grad_v_hat{"auto", {}, {}};
  bool operator==(const BoundaryConfig&) const = default;
};

struct InitConfig {
  FieldSpec u;
  FieldSpec v;
  bool operator==(const InitConfig&) const = default;
};

struct RunConfig {
  double tau = 1e-2;
  double t_end = 1.0;
  double eps_inner = 1e-10;
  int max_iters = 5000;
  bool record_slopes = false;
  std::uint64_t seed = 1;
  bool operator==(const RunConfig&) const = default;
};

struct GammaConfig {
  std::vector<double> h_list{0.2, 0.1, 0.05, 0.025};
  std::string generator = "pure_bend(1)";
  std::string partner = "zero";  // empty disables the dissipation ladder
  double taper_width = 0.0;
  int reference_nodes = 129;
  bool calibrate = true;
  bool operator==(const GammaConfig&) const = default;
};

struct QuadConfig {
  int cells = 16;
  int points_inplane = 2;
  int points_x3 = 3;
  bool operator==(const QuadConfig&) const = default;
};

struct SlopeConfig {
  std::string state;  // snapshot CSV
  double cg_tol = 1e-10;
  std::string preconditioner = "jacobi";
  int directions = 20;
  bool operator==(const SlopeConfig&) const = default;
};

struct ToyConfig {
  double x0 = 1.0;
  double tau = 1e-3;
  double t_end = 1.0;
  bool operator==(const ToyConfig&) const = default;
};

struct OutputConfig {
  std::string dir = "out";
  bool write_states = false;
  bool operator==(const OutputConfig&) const = default;
};

struct ExperimentConfig {
  std::string kind = "evolve";  // evolve | gamma | slope | toy
  MaterialSpec material;
  GridConfig grid;
  BoundaryConfig bc;
  InitConfig init;
  FieldSpec load;
  RunConfig run;
  GammaConfig gamma;
  QuadConfig quad;
  SlopeConfig slope;
  ToyConfig toy;
  OutputConfig output;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses config text. Throws ConfigError naming the line for syntax errors and the key path
/// for semantic errors. Relative csv paths are resolved against `base_dir`.
ExperimentConfig parse_config(const std::string& text,
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
/// Normalized echo with every key; parse_config(echo_config(c)) == c.
std::string echo_config(const ExperimentConfig& config);

/// Grid, boundary data, initial state and load described by a config.
GridSpec make_grid(const ExperimentConfig& config);
std::shared_ptr<const BoundaryData> make_boundary(const ExperimentConfig& config,
                                                  const GridSpec& grid);
PlateState make_initial_state(const ExperimentConfig& config);
LoadField make_load(const ExperimentConfig& config, const GridSpec& grid);

/// Nodal field file: rows "x1,x2,value..." ordered j outer, i inner; '#' lines and a
/// non-numeric header line are skipped. Coordinates are checked against the grid.
Eigen::MatrixXd read_field_csv(const std::filesystem::path& path, const GridSpec& grid,
                               int columns);
/// Cell field file with rows "x1,x2,value" at cell centers.
Eigen::VectorXd read_cell_csv(const std::filesystem::path& path, const GridSpec& grid);

/// State snapshot: "# field=state n1=.. n2=.. l1=.. l2=.." then x1,x2,u1,u2,v,g1,g2 per node,
/// where g1, g2 are the clamped gradient data.
void write_state_csv(const std::filesystem::path& path, const PlateState& state);
PlateState read_state_csv(const std::filesystem::path& path);

struct RunReport {
  bool ok = false;
  std::string kind;
  std::filesystem::path out_dir;
  std::vector<std::filesystem::path> files;
  std::string summary_json;
  std::string message;
};

/// Runs the pipeline named by config.kind and writes its outputs into `out_dir`.
RunReport run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// %.17g formatting used for every number written to disk.
std::string format_number(double x);

}  // namespace vk
