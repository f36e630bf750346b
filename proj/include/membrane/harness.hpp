// ============================================================================
// Reproducible experiment orchestration: named experiment kinds over the
// lattice/field/levelset/gmc modules, counter-based RNG stream derivation,
// replica-parallel execution with fixed-order reduction, summary statistics,
// and CSV/JSON persistence.
//
// Contracts:
//   * run(config) is deterministic given (config, master_seed) and
//     independent of the worker count: replicas write private slots that are
//     merged in replica order, never accumulated atomically.
//   * A ResultSet's summaries are a pure function of (config, records);
//     reduce_records recomputes them exactly, so anything loaded from disk
//     can be re-reduced and compared bitwise.
//   * All numbers are persisted with 17 significant digits and parse back to
//     the identical double.
// ============================================================================
#pragma once

#include "membrane/green.hpp"
#include "membrane/rng.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace membrane {

// Central table of statistical gate widths. Every Monte Carlo brand of check
// in the harness, CLI, and acceptance suite reads these two numbers, so
// retuning a band is a one-line change.
struct ThresholdTable {
  double mc_se_multiplier = 3.0;   // sample estimate vs target, in stderr units
  double fit_se_multiplier = 2.0;  // regression slope vs target, in stderr units
};
const ThresholdTable& thresholds();

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------
struct ExperimentConfig {
  enum class Kind {
    GammaFit,     // Green-diagonal growth: G(center) against ln N
    GmVerify,     // domain-split sampling: component variances + extension residual
    Census,       // level-set counts across sizes + log-log slope
    Tail,         // level-set overshoot rate and shifted-count ratios
    GmcYm,        // multiscale measure total-mass replicas
    GmcSpectral,  // spectral partial-sum measure total-mass replicas
    Compare,      // multiscale vs reweighted complete-basis spectral masses
  };

  Kind kind = Kind::GammaFit;
  int dim = 4;                 // lattice dimension (the lab is four-dimensional)
  double lambda = 0.5;         // strength parameter where the kind uses one
  std::vector<int> sizes;      // lattice sides; one entry unless the kind fits across sizes
  int replicas = 1;
  double truncation_bound = 1.0;  // band half-width multiplier for the census path probe
  int depth = 1;               // multiscale subdivision depth (gmc-ym, compare)
  int modes = 0;               // spectral partial-sum length; 0 = complete basis
  double margin = 0.1;         // census interior margin
  std::uint64_t master_seed = 0;
  double tol = 1e-8;           // iterative solver tolerance
  int workers = 0;             // 0 = worker_count()
  std::string out_path;        // optional; echoed into persistence only
  std::string format = "json";  // "json" or "csv"
};

// Kind <-> canonical name ("gamma-fit", "gm-verify", "census", "tail",
// "gmc-ym", "gmc-spectral", "compare"). kind_from_name throws
// std::invalid_argument on an unknown name.
std::string kind_name(ExperimentConfig::Kind kind);
ExperimentConfig::Kind kind_from_name(std::string_view name);

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------
// One observation row. Deterministic target rows (exact quadratures, solver
// residuals) are stored under replica 0 with their own metric names so that
// summaries stay recomputable from records alone.
struct ResultRecord {
  int replica = 0;
  int size = 0;        // lattice side the row refers to (0 if size-free)
  std::string metric;  // e.g. "mass", "level_count", "split_fine"
  double value = 0.0;
};

struct Summary {
  double mean = 0.0;
  double se = 0.0;     // standard error of the mean (0 for exact rows)
  double ci_lo = 0.0;  // mean - 1.96 se
  double ci_hi = 0.0;  // mean + 1.96 se
};

inline constexpr std::string_view kResultSchemaVersion = "membrane-lab/1";

struct ResultSet {
  ExperimentConfig config;
  std::vector<ResultRecord> records;
  std::map<std::string, Summary> summaries;
  std::string version{kResultSchemaVersion};
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------
// Counter-based stream derivation keyed by (master, experiment, replica,
// purpose); distinct tags give collision-free independent streams and the
// tag tuple alone fixes the draw sequence.
RngStream split_stream(std::uint64_t master_seed, std::string_view experiment,
                       std::uint32_t replica, std::uint32_t purpose = 0);

// Ordinary least squares of ln y (LogLog) or y (LogLinear) against ln x.
// Throws std::invalid_argument on fewer than three points, a non-positive x,
// or (LogLog) a non-positive y.
enum class FitMode { LogLog, LogLinear };
FitResult fit_loglog(const std::vector<double>& xs, const std::vector<double>& ys,
                     FitMode mode = FitMode::LogLog);

// Mean, standard error, and 95% interval mean +- 1.96 se. Throws
// std::invalid_argument on empty input. A single value has se = 0.
Summary summarize(const std::vector<double>& values);

// Runs the configured experiment: validates the configuration up front
// (std::invalid_argument), executes replicas under work-stealing with
// per-replica streams, and reduces records in fixed order. Solver failures
// propagate as std::runtime_error.
ResultSet run(const ExperimentConfig& config);

// The pure reduction run() uses: recomputes every summary from the records
// and the configuration alone (no sampling, no solves). load() applies it to
// verify coherence of persisted data.
std::map<std::string, Summary> reduce_records(const ExperimentConfig& config,
                                              const std::vector<ResultRecord>& records);

// Writes JSON ({"version","config","records","summaries"}) or CSV (comment
// header carrying version + config, then replica,size,metric,value rows).
// format is "json" or "csv". Throws std::invalid_argument on an unknown
// format and std::runtime_error on I/O failure.
void persist(const ResultSet& results, const std::string& path, std::string_view format);

// Reads either format back (sniffed from the first byte). Throws
// std::runtime_error on I/O failure, a malformed file, or a schema version
// other than kResultSchemaVersion (the message names both versions).
ResultSet load(const std::string& path);

// Formats a double with 17 significant digits (shortest form that parses
// back bit-identically is not attempted; %.17g is round-trip safe).
std::string format_double17(double value);

// JSON object text with 17-digit numbers: {"name":{"mean":..,...},...} for a
// summary map, and the persisted {"version","config","records","summaries"}
// document for a full result set.
std::string summaries_json(const std::map<std::string, Summary>& summaries);
std::string results_json(const ResultSet& results);
std::string config_json(const ExperimentConfig& config);

}  // namespace membrane
