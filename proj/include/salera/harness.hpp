#ifndef SALERA_HARNESS_HPP
#define SALERA_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "salera/data.hpp"
#include "salera/network.hpp"
#include "salera/optimizers.hpp"

namespace salera {

enum class DatasetKind { Mnist, Parabola, Blobs };
enum class ModelKind { M0, M2, Parabola1D };

/// Everything one training run depends on. Filled from a key=value file
/// (see apply_setting for the keys), then from command-line overrides.
struct RunConfig {
  DatasetKind dataset = DatasetKind::Blobs;
  ModelKind model = ModelKind::M0;
  OptimizerConfig optimizer;
  std::uint64_t epochs = 20;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir;  // empty: keep metrics in memory only

  // mnist: either a directory holding the four standard IDX files
  // (optionally .gz) or explicit paths, which take precedence.
  std::filesystem::path mnist_dir;
  std::filesystem::path train_images, train_labels, test_images, test_labels;

  // M2 hidden widths.
  Index hidden1 = 500;
  Index hidden2 = 300;

  // parabola: one step per epoch.
  double curvature = 1.0;
  double theta0 = 1.0;

  // blobs: generated from data_seed, so every run seed sees the same data.
  Index blobs_train = 2000;
  Index blobs_test = 500;
  Index blobs_features = 20;
  int blobs_classes = 10;
  double blobs_spread = 3.0;
  double blobs_noise = 1.0;
  std::uint64_t data_seed = 0;

  bool eval_train = true;   // full training-set pass every epoch
  bool log_batches = true;  // keep per-batch rows

  void validate() const;
};

/// Sets one key. Throws ParameterError on an unknown key or bad value.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Parses `key = value` lines; '#' starts a comment. Order is preserved.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in);
std::vector<std::pair<std::string, std::string>> read_key_values(const std::filesystem::path& path);

RunConfig load_run_config(const std::filesystem::path& path);

std::string to_string(DatasetKind k);
std::string to_string(ModelKind k);

// ---------------------------------------------------------------------------

struct BatchRow {
  std::uint64_t global_batch = 0;
  std::uint64_t epoch = 0;
  double smoothed_loss = 0.0;
  double raw_loss = 0.0;
  std::vector<double> rates;  // after the step
  double ph_gap = 0.0;
  bool trigger = false;
};

struct EpochRow {
  std::uint64_t epoch = 0;
  double train_error = 0.0;
  double train_loss = 0.0;
  double test_error = 0.0;
  double test_loss = 0.0;
};

struct TriggerRow {
  std::uint64_t global_batch = 0;
  double ph_gap = 0.0;
  double delta = 0.0;
  std::vector<double> rates_before;
  std::vector<double> rates_after;
};

struct RunSummary {
  std::string optimizer;
  std::string model;
  std::string dataset;
  double eta0 = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t epochs = 0;
  std::uint64_t steps = 0;
  std::uint64_t triggers = 0;
  std::uint64_t nonfinite_losses = 0;
  double test_error_5 = 0.0;   // NaN when fewer than 5 epochs ran
  double test_error_20 = 0.0;  // NaN when fewer than 20 epochs ran
  double final_test_error = 0.0;
  double final_test_loss = 0.0;
  bool failed = false;  // final_test_error > 0.8
  std::string status = "ok";
};

struct MetricsRecord {
  std::vector<BatchRow> batches;
  std::vector<EpochRow> epochs;
  std::vector<TriggerRow> triggers;
  RunSummary summary;
  FlatVector final_theta;
};

/// Train/test pair after standardization (mnist, blobs) or empty (parabola).
struct LoadedData {
  Dataset train;
  Dataset test;
};

std::shared_ptr<const LoadedData> load_data(const RunConfig& cfg);

/// Runs the epoch budget. When cfg.out_dir is set, writes batches.csv,
/// epochs.csv, triggers.csv and summary.txt there. `data` may be shared
/// between runs; it is loaded from cfg when null.
MetricsRecord run_training(const RunConfig& cfg, std::shared_ptr<const LoadedData> data = nullptr);

// Fixed column orders:
//   batches.csv   global_batch,epoch,smoothed_loss,raw_loss,eta,ph_gap,trigger
//   epochs.csv    epoch,train_error,train_loss,test_error,test_loss
//   triggers.csv  global_batch,ph_gap,delta,eta_before,eta_after
// Per-layer rates are joined with ';' inside one column.
void write_batches_csv(std::ostream& out, const MetricsRecord& m);
void write_epochs_csv(std::ostream& out, const MetricsRecord& m);
void write_triggers_csv(std::ostream& out, const MetricsRecord& m);
/// One line of space-separated key=value fields, newline-terminated.
std::string summary_line(const RunSummary& s);

// ---------------------------------------------------------------------------

/// Base settings plus swept keys; cells are the cartesian product of the
/// sweeps in file order. Spec file syntax: `key = value` sets the base,
/// `sweep.key = v1, v2, ...` adds an axis. Without a sweep over eta0 the
/// decades 1e-5 ... 1 are used.
struct GridSpec {
  std::vector<std::pair<std::string, std::string>> base;
  std::vector<std::pair<std::string, std::vector<std::string>>> sweeps;
};

GridSpec parse_grid_spec(std::istream& in);
GridSpec load_grid_spec(const std::filesystem::path& path);
std::vector<std::string> default_eta_grid();

struct CellResult {
  std::vector<std::pair<std::string, std::string>> settings;  // swept values only
  std::string optimizer;
  std::string model;
  std::vector<RunSummary> runs;
  std::size_t completed = 0;  // runs without an exception
  std::size_t failed = 0;     // failed flag or exception
  double mean_error_5 = 0.0, std_error_5 = 0.0;
  double mean_error_20 = 0.0, std_error_20 = 0.0;
  double mean_final = 0.0, std_final = 0.0;
};

struct BestCell {
  std::string model;
  std::string optimizer;
  int epoch_mark = 0;
  std::size_t cell = 0;
  double mean = 0.0;
  double std = 0.0;
};

struct FailureRate {
  std::string optimizer;
  std::size_t runs = 0;
  std::size_t failed = 0;
  double rate() const { return runs ? static_cast<double>(failed) / static_cast<double>(runs) : 0.0; }
};

struct GridResult {
  std::vector<CellResult> cells;
  std::vector<BestCell> best;  // per (model, optimizer, epoch mark 5 / 20)
  std::vector<FailureRate> failure_rates;
};

/// Runs every cell for seeds first_seed .. first_seed + seeds - 1 on `jobs`
/// worker threads. A run that throws is recorded as failed with its message
/// and never stops the grid. Writes grid_runs.txt, grid_cells.csv and
/// grid_best.csv into out_dir when set; per-run files go to cell<i>_seed<s>.
GridResult run_grid(const GridSpec& spec, std::size_t seeds, unsigned jobs,
                    const std::filesystem::path& out_dir = {});

void write_grid_cells_csv(std::ostream& out, const GridResult& g);

// ---------------------------------------------------------------------------

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;  // space-separated key=value fields
};

/// Prints one `PASS|FAIL name detail` line per check. Returns true if all pass.
bool print_checks(std::ostream& out, const std::vector<Check>& checks);

/// Monte Carlo agreement for alpha x d x t = {.01,.1,.25} x {10,100,1000} x
/// {2,10,100} against mean_t and var_t, plus the bit-exact t = 1 identities.
std::vector<Check> verify_moments(std::uint64_t n_reps = 10000, std::uint64_t seed = 2024, unsigned threads = 0);
std::vector<Check> verify_zeta();
std::vector<Check> verify_gradcheck(std::uint64_t seed = 7);

}  // namespace salera

#endif  // SALERA_HARNESS_HPP
