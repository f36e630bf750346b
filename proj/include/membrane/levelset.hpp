#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "membrane/field.hpp"
#include "membrane/green.hpp"
#include "membrane/lattice.hpp"
#include "membrane/rng.hpp"

namespace membrane {

// ---------------------------------------------------------------------------
// Scaling sequences
// ---------------------------------------------------------------------------

// Parameters of the intermediate-height regime on box(4, N).  The exceedance
// threshold grows like (8 lambda / pi) ln N and the atom normalization
// compensates the expected number of exceedances:
//   normalization = N^4 / sqrt(ln N) * exp(-level^2 / (2 gamma ln N)),
// which for the canonical level reduces to N^{4 - 4 lambda^2} / sqrt(ln N).
struct ScalingParams {
  double lambda = 0.0;         // height strength, in (0,1)
  int side = 0;                // lattice side N
  double gamma = kGamma;       // log-variance growth rate of the field
  double level = 0.0;          // exceedance threshold
  double normalization = 0.0;  // common atom weight is 1/normalization
  int truncation_base = 0;     // first scale checked by the truncation event
  double margin = 0.1;         // optional interior margin used by censuses
};

// level_override replaces the canonical threshold; the normalization always
// follows the general formula evaluated at the actual level, so overriding
// with the canonical value reproduces the closed form exactly.
ScalingParams scaling_params(double lambda, int side,
                             std::optional<double> level_override = std::nullopt);

// ---------------------------------------------------------------------------
// Level sets and point measures
// ---------------------------------------------------------------------------

struct LevelSet {
  double shift = 0.0;         // points satisfy h(x) >= level + shift
  std::vector<Point> points;  // grid order
};

// Exact thresholding of a field sample on dom.
LevelSet extract_level_set(const Domain& dom, const std::vector<double>& h,
                           const ScalingParams& params, double shift);

// Number of nested concentric boxes around x inside dom.  Same rule as
// hierarchy(), but returns 0 (instead of throwing) when not even the smallest
// box fits; still throws invalid_argument when x lies outside the domain.
int hierarchy_order(const Domain& dom, const Point& x);

struct TruncationRecord {
  Point x{};
  double bound = 0.0;        // allowed deviation scale M
  bool pass = false;
  std::vector<double> path;  // coarse values S_k for k = first_scale..order
  int first_scale = 0;       // = params.truncation_base
  int order = 0;             // hierarchy_order(dom, x)
};

// Checks |S_k - level * (order - k) / order| <= bound * (order - k)^{3/4} for
// every scale k in [params.truncation_base, order].  The k = order term is
// always satisfied (S_order = 0 with zero allowance); an empty range is a
// vacuous pass with an empty path.  `coarse`, when supplied, must be an
// evaluator anchored at x; it is only consulted for intermediate scales
// 0 < k < order, and one is built on the fly when needed but not supplied.
TruncationRecord truncation_event(const Domain& dom, const std::vector<double>& h,
                                  const Point& x, const ScalingParams& params,
                                  double bound,
                                  const CoarseFieldEvaluator* coarse = nullptr);

// Atom-per-site measure: position x/N, height h(x) - level, common weight
// 1/normalization.  With `truncation` set, only sites whose truncation event
// passes contribute, so the truncated measure is dominated by the full one.
struct PointMeasure {
  struct Atom {
    std::array<double, 4> position{};  // x / N, inside [0,1]^4
    double height = 0.0;               // h(x) - level
  };
  double weight = 0.0;               // common atom weight
  std::vector<Atom> atoms;           // grid order
  std::optional<double> truncation;  // bound M when truncated
};

PointMeasure build_eta(const Domain& dom, const std::vector<double>& h,
                       const ScalingParams& params,
                       std::optional<double> truncation = std::nullopt);

// Product test function: closed box window in position, closed interval in
// height (infinities allowed).
struct ProductWindow {
  std::array<double, 4> lo{0.0, 0.0, 0.0, 0.0};
  std::array<double, 4> hi{1.0, 1.0, 1.0, 1.0};
  double height_lo = -std::numeric_limits<double>::infinity();
  double height_hi = std::numeric_limits<double>::infinity();
};

double integrate(const PointMeasure& measure, const ProductWindow& window);
double integrate(const PointMeasure& measure,
                 const std::function<double(const std::array<double, 4>&, double)>& f);

// ---------------------------------------------------------------------------
// Moment prediction
// ---------------------------------------------------------------------------

// First-moment prediction for the atom count in the window A x [shift, inf),
// A = [lo, hi] componentwise strictly inside the open unit cube:
//   exp(-pi lambda shift) / (4 lambda sqrt(pi))
//     * (1/N^4) sum_{x : x/N in A} exp((4 lambda^2 / gamma) s(x))
//     * normalization,
// with s(x) = diagonal[x] - gamma ln N and `diagonal` the Green diagonal of
// dom in grid order.  Throws invalid_argument when A touches the boundary.
double predicted_moment(const std::array<double, 4>& lo,
                        const std::array<double, 4>& hi, double shift,
                        const ScalingParams& params, const Domain& dom,
                        const std::vector<double>& diagonal);

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct CensusConfig {
  double lambda = 0.5;
  std::vector<int> sizes;  // at least three lattice sides
  int replicas = 500;
  std::uint64_t master_seed = 0;
  double margin = 0.1;  // interior margin (x/N in [margin, 1-margin]); 0 = full box
  double tol = 1e-8;
  MembraneSampler::Method method = MembraneSampler::Method::Auto;
  int workers = 0;  // 0 = worker_count()
};

struct CensusReport {
  double lambda = 0.0;
  double margin = 0.0;
  int replicas = 0;
  std::vector<int> sizes;
  std::vector<std::vector<std::int64_t>> counts;  // [size][replica]
  std::vector<double> mean_counts;
  std::vector<double> stderr_counts;
  FitResult fit;                 // log mean count vs log N
  double predicted_slope = 0.0;  // 4 (1 - lambda^2)
};

// Counts threshold exceedances inside the margin-restricted box for every
// (size, replica), then fits log mean count against log N.
CensusReport census_experiment(const CensusConfig& config);

// Regression backend of the census, exposed for direct validation: fits
// log(mean_counts) against log(sizes).
FitResult census_fit(const std::vector<int>& sizes,
                     const std::vector<double>& mean_counts);

struct TailConfig {
  double lambda = 0.3;
  int side = 16;
  std::vector<double> shifts{0.5};  // ratios are taken against shift 0
  int replicas = 500;
  std::uint64_t master_seed = 0;
  double tol = 1e-8;
  MembraneSampler::Method method = MembraneSampler::Method::Auto;
  int workers = 0;
  std::optional<double> level_override;  // replaces the canonical threshold
};

struct TailReport {
  double rate = 0.0;         // exponential MLE rate of pooled overshoots
  double rate_stderr = 0.0;  // rate / sqrt(#overshoots)
  std::size_t overshoot_count = 0;
  double mean_count_base = 0.0;  // mean #{x : h(x) >= level}
  std::vector<double> shifts;
  std::vector<double> mean_counts;  // mean #{x : h(x) >= level + shift}
  std::vector<double> ratios;       // mean_counts / mean_count_base
  std::vector<double> predicted;    // exp(-pi lambda shift)
};

// Pools the overshoots {h(x) - level : h(x) >= level} over all replicas, fits
// an exponential rate by maximum likelihood, and tabulates mean level-set
// sizes at the requested shifts.  Requires >= 100 replicas; throws
// runtime_error when the level set is empty in every replica.
TailReport tail_checks(const TailConfig& config);

// MLE of the rate of an exponential sample: n / sum.  Throws on empty input.
double exponential_rate_mle(const std::vector<double>& samples);

// Evaluates the truncation event on at most max_probes points of the shift-0
// level set (a uniform subset without replacement, chosen via the stream,
// when the set is larger) and reports the passing fraction.
struct TruncationCensus {
  int probed = 0;
  int passed = 0;
  std::vector<TruncationRecord> records;
};

TruncationCensus truncation_census(const Domain& dom, const std::vector<double>& h,
                                   const ScalingParams& params, double bound,
                                   int max_probes, RngStream& stream);

}  // namespace membrane
