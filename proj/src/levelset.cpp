#include "membrane/levelset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>

#include "membrane/parallel.hpp"

namespace membrane {

namespace {

constexpr uint32_t kPurposeField = 0;

double checked_lambda(double lambda) {
  if (!(lambda > 0.0) || !(lambda < 1.0))
    throw std::invalid_argument("scaling_params: lambda must lie in (0,1)");
  return lambda;
}

}  // namespace

// ---------------------------------------------------------------------------
// Scaling sequences
// ---------------------------------------------------------------------------

ScalingParams scaling_params(double lambda, int side,
                             std::optional<double> level_override) {
  checked_lambda(lambda);
  if (side < 3) throw std::invalid_argument("scaling_params: side must be >= 3");
  ScalingParams p;
  p.lambda = lambda;
  p.side = side;
  p.gamma = kGamma;
  const double logN = std::log(static_cast<double>(side));
  p.level = level_override ? *level_override : (8.0 * lambda / kPi) * logN;
  p.normalization = std::pow(static_cast<double>(side), 4.0) / std::sqrt(logN) *
                    std::exp(-p.level * p.level / (2.0 * p.gamma * logN));
  p.truncation_base =
      std::max(0, static_cast<int>(std::floor(std::log(p.normalization) / 8.0)));
  return p;
}

// ---------------------------------------------------------------------------
// Level sets and point measures
// ---------------------------------------------------------------------------

LevelSet extract_level_set(const Domain& dom, const std::vector<double>& h,
                           const ScalingParams& params, double shift) {
  if (h.size() != dom.size())
    throw std::invalid_argument("extract_level_set: field size mismatch");
  LevelSet out;
  out.shift = shift;
  const double threshold = params.level + shift;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (h[i] >= threshold) out.points.push_back(dom.point(i));
  return out;
}

int hierarchy_order(const Domain& dom, const Point& x) {
  if (!dom.contains(x))
    throw std::invalid_argument("hierarchy_order: x outside domain");
  if (dom.kind() != Domain::Kind::Box || !dom.is_solid_box())
    throw std::invalid_argument("hierarchy_order: domain must be a box");
  int clearance = 1 << 30;
  for (int a = 0; a < dom.dim(); ++a)
    clearance = std::min({clearance, x[a] - dom.lo()[a], dom.hi()[a] - x[a]});
  if (clearance < BoxHierarchy::radius(1)) return 0;
  int n = 0;
  while (BoxHierarchy::radius(n + 2) <= clearance) ++n;
  return n;
}

TruncationRecord truncation_event(const Domain& dom, const std::vector<double>& h,
                                  const Point& x, const ScalingParams& params,
                                  double bound,
                                  const CoarseFieldEvaluator* coarse) {
  if (h.size() != dom.size())
    throw std::invalid_argument("truncation_event: field size mismatch");
  TruncationRecord rec;
  rec.x = x;
  rec.bound = bound;
  rec.first_scale = params.truncation_base;
  rec.order = hierarchy_order(dom, x);
  if (rec.first_scale > rec.order) {  // empty conjunction
    rec.pass = true;
    return rec;
  }

  // Fetch intermediate scales 1..order-1 in one pass when any are required.
  std::vector<double> inner;
  const int inner_lo = std::max(rec.first_scale, 1);
  const int inner_hi = rec.order - 1;
  if (inner_lo <= inner_hi) {
    std::unique_ptr<CoarseFieldEvaluator> local;
    if (coarse == nullptr) {
      local = std::make_unique<CoarseFieldEvaluator>(dom, x);
      coarse = local.get();
    }
    if (!(coarse->hierarchy().x == x))
      throw std::invalid_argument("truncation_event: evaluator anchored elsewhere");
    inner = coarse->evaluate(h, inner_lo, inner_hi);
  }

  rec.pass = true;
  const std::size_t xi = dom.index_of(x);
  for (int k = rec.first_scale; k <= rec.order; ++k) {
    double s;
    if (k == rec.order) {
      s = 0.0;  // the conditional value at the outermost scale vanishes
    } else if (k == 0) {
      s = h[xi];
    } else {
      s = inner[static_cast<std::size_t>(k - inner_lo)];
    }
    rec.path.push_back(s);
    const double steps = static_cast<double>(rec.order - k);
    const double target =
        (k == rec.order) ? 0.0 : params.level * steps / static_cast<double>(rec.order);
    if (std::abs(s - target) > bound * std::pow(steps, 0.75)) rec.pass = false;
  }
  return rec;
}

PointMeasure build_eta(const Domain& dom, const std::vector<double>& h,
                       const ScalingParams& params,
                       std::optional<double> truncation) {
  if (h.size() != dom.size())
    throw std::invalid_argument("build_eta: field size mismatch");
  PointMeasure pm;
  pm.weight = 1.0 / params.normalization;
  pm.truncation = truncation;
  const double inv_side = 1.0 / static_cast<double>(params.side);
  pm.atoms.reserve(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const Point x = dom.point(i);
    if (truncation && !truncation_event(dom, h, x, params, *truncation).pass)
      continue;
    PointMeasure::Atom atom;
    for (int a = 0; a < dom.dim(); ++a)
      atom.position[static_cast<std::size_t>(a)] = x[a] * inv_side;
    atom.height = h[i] - params.level;
    pm.atoms.push_back(atom);
  }
  return pm;
}

double integrate(const PointMeasure& measure, const ProductWindow& window) {
  double total = 0.0;
  for (const auto& atom : measure.atoms) {
    bool in = atom.height >= window.height_lo && atom.height <= window.height_hi;
    for (int a = 0; a < 4 && in; ++a)
      in = atom.position[static_cast<std::size_t>(a)] >= window.lo[static_cast<std::size_t>(a)] &&
           atom.position[static_cast<std::size_t>(a)] <= window.hi[static_cast<std::size_t>(a)];
    if (in) total += measure.weight;
  }
  return total;
}

double integrate(const PointMeasure& measure,
                 const std::function<double(const std::array<double, 4>&, double)>& f) {
  double total = 0.0;
  for (const auto& atom : measure.atoms)
    total += measure.weight * f(atom.position, atom.height);
  return total;
}

// ---------------------------------------------------------------------------
// Moment prediction
// ---------------------------------------------------------------------------

double predicted_moment(const std::array<double, 4>& lo,
                        const std::array<double, 4>& hi, double shift,
                        const ScalingParams& params, const Domain& dom,
                        const std::vector<double>& diagonal) {
  if (diagonal.size() != dom.size())
    throw std::invalid_argument("predicted_moment: diagonal size mismatch");
  for (int a = 0; a < dom.dim(); ++a) {
    const auto ai = static_cast<std::size_t>(a);
    if (!(lo[ai] > 0.0) || !(hi[ai] < 1.0))
      throw std::invalid_argument(
          "predicted_moment: window must stay strictly inside the unit cube");
  }
  const double n = static_cast<double>(params.side);
  const double logN = std::log(n);
  const double beta = 4.0 * params.lambda * params.lambda / params.gamma;
  double sum = 0.0;
  for (std::size_t i = 0; i < diagonal.size(); ++i) {
    const Point x = dom.point(i);
    bool in = true;
    for (int a = 0; a < dom.dim() && in; ++a) {
      const double u = x[a] / n;
      const auto ai = static_cast<std::size_t>(a);
      in = u >= lo[ai] && u <= hi[ai];
    }
    if (in) sum += std::exp(beta * (diagonal[i] - params.gamma * logN));
  }
  const double integral = sum / std::pow(n, 4.0);
  return std::exp(-kPi * params.lambda * shift) /
         (4.0 * params.lambda * std::sqrt(kPi)) * integral * params.normalization;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

namespace {

bool inside_margin(const Point& x, int dim, int side, double margin) {
  if (margin <= 0.0) return true;
  for (int a = 0; a < dim; ++a) {
    const double u = x[a] / static_cast<double>(side);
    if (u < margin || u > 1.0 - margin) return false;
  }
  return true;
}

}  // namespace

FitResult census_fit(const std::vector<int>& sizes,
                     const std::vector<double>& mean_counts) {
  if (sizes.size() != mean_counts.size())
    throw std::invalid_argument("census_fit: size/count length mismatch");
  if (sizes.size() < 3)
    throw std::invalid_argument("census_fit: need at least three sizes");
  std::vector<double> xs, ys;
  xs.reserve(sizes.size());
  ys.reserve(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (!(mean_counts[i] > 0.0))
      throw std::runtime_error(
          "census_fit: insufficient data, mean count not positive at N=" +
          std::to_string(sizes[i]));
    xs.push_back(std::log(static_cast<double>(sizes[i])));
    ys.push_back(std::log(mean_counts[i]));
  }
  return fit_line(xs, ys);
}

CensusReport census_experiment(const CensusConfig& config) {
  checked_lambda(config.lambda);
  if (config.sizes.size() < 3)
    throw std::invalid_argument("census_experiment: need at least three sizes");
  if (config.replicas < 1)
    throw std::invalid_argument("census_experiment: replicas must be >= 1");

  CensusReport report;
  report.lambda = config.lambda;
  report.margin = config.margin;
  report.replicas = config.replicas;
  report.sizes = config.sizes;
  report.predicted_slope = 4.0 * (1.0 - config.lambda * config.lambda);
  report.counts.assign(config.sizes.size(),
                       std::vector<std::int64_t>(
                           static_cast<std::size_t>(config.replicas), 0));

  for (std::size_t si = 0; si < config.sizes.size(); ++si) {
    const int N = config.sizes[si];
    const Domain dom = Domain::box(4, N);
    const MembraneSampler sampler(dom, config.method, config.tol);
    const ScalingParams sp = scaling_params(config.lambda, N);
    const std::string tag = "census/N=" + std::to_string(N);
    auto& row = report.counts[si];
    parallel_replicas(config.replicas, config.workers, [&](int r) {
      RngStream stream = RngStream::make(config.master_seed, tag,
                                         static_cast<uint32_t>(r), kPurposeField);
      const std::vector<double> h = sampler.sample(stream);
      std::int64_t count = 0;
      for (std::size_t i = 0; i < h.size(); ++i)
        if (h[i] >= sp.level &&
            inside_margin(dom.point(i), dom.dim(), N, config.margin))
          ++count;
      row[static_cast<std::size_t>(r)] = count;
    });
  }

  for (std::size_t si = 0; si < config.sizes.size(); ++si) {
    const auto& row = report.counts[si];
    double mean = 0.0;
    for (std::int64_t c : row) mean += static_cast<double>(c);
    mean /= static_cast<double>(row.size());
    double var = 0.0;
    for (std::int64_t c : row) {
      const double d = static_cast<double>(c) - mean;
      var += d * d;
    }
    var = row.size() > 1 ? var / static_cast<double>(row.size() - 1) : 0.0;
    report.mean_counts.push_back(mean);
    report.stderr_counts.push_back(
        std::sqrt(var / static_cast<double>(row.size())));
  }
  report.fit = census_fit(report.sizes, report.mean_counts);
  return report;
}

double exponential_rate_mle(const std::vector<double>& samples) {
  if (samples.empty())
    throw std::invalid_argument("exponential_rate_mle: empty sample");
  const double sum = std::accumulate(samples.begin(), samples.end(), 0.0);
  if (!(sum > 0.0))
    throw std::invalid_argument("exponential_rate_mle: nonpositive sample sum");
  return static_cast<double>(samples.size()) / sum;
}

TailReport tail_checks(const TailConfig& config) {
  checked_lambda(config.lambda);
  if (config.replicas < 100)
    throw std::invalid_argument("tail_checks: need at least 100 replicas");

  const Domain dom = Domain::box(4, config.side);
  const MembraneSampler sampler(dom, config.method, config.tol);
  const ScalingParams sp =
      scaling_params(config.lambda, config.side, config.level_override);

  const std::size_t nshift = config.shifts.size();
  const auto nrep = static_cast<std::size_t>(config.replicas);
  std::vector<double> overshoot_sum(nrep, 0.0);
  std::vector<std::int64_t> overshoot_n(nrep, 0);
  std::vector<std::vector<std::int64_t>> shift_counts(
      nshift, std::vector<std::int64_t>(nrep, 0));

  parallel_replicas(config.replicas, config.workers, [&](int r) {
    RngStream stream = RngStream::make(config.master_seed, "tail",
                                       static_cast<uint32_t>(r), kPurposeField);
    const std::vector<double> h = sampler.sample(stream);
    const auto ri = static_cast<std::size_t>(r);
    for (double v : h) {
      if (v >= sp.level) {
        overshoot_sum[ri] += v - sp.level;
        ++overshoot_n[ri];
      }
      for (std::size_t bi = 0; bi < nshift; ++bi)
        if (v >= sp.level + config.shifts[bi]) ++shift_counts[bi][ri];
    }
  });

  // Fixed-order reduction by replica id keeps summaries worker-independent.
  double total_overshoot = 0.0;
  std::int64_t total_n = 0;
  for (std::size_t r = 0; r < nrep; ++r) {
    total_overshoot += overshoot_sum[r];
    total_n += overshoot_n[r];
  }
  if (total_n == 0)
    throw std::runtime_error(
        "tail_checks: insufficient data, level set empty in every replica");

  TailReport report;
  report.overshoot_count = static_cast<std::size_t>(total_n);
  report.rate = static_cast<double>(total_n) / total_overshoot;
  report.rate_stderr = report.rate / std::sqrt(static_cast<double>(total_n));
  report.mean_count_base =
      static_cast<double>(total_n) / static_cast<double>(config.replicas);
  report.shifts = config.shifts;
  for (std::size_t bi = 0; bi < nshift; ++bi) {
    std::int64_t tot = 0;
    for (std::size_t r = 0; r < nrep; ++r) tot += shift_counts[bi][r];
    const double mean = static_cast<double>(tot) / static_cast<double>(config.replicas);
    report.mean_counts.push_back(mean);
    report.ratios.push_back(mean / report.mean_count_base);
    report.predicted.push_back(std::exp(-kPi * config.lambda * config.shifts[bi]));
  }
  return report;
}

TruncationCensus truncation_census(const Domain& dom, const std::vector<double>& h,
                                   const ScalingParams& params, double bound,
                                   int max_probes, RngStream& stream) {
  if (max_probes < 1)
    throw std::invalid_argument("truncation_census: max_probes must be >= 1");
  const LevelSet gamma0 = extract_level_set(dom, h, params, 0.0);
  std::vector<std::size_t> order(gamma0.points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto probes =
      std::min<std::size_t>(order.size(), static_cast<std::size_t>(max_probes));
  // Partial Fisher-Yates: the first `probes` slots become a uniform subset.
  for (std::size_t i = 0; i < probes; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(
        stream.next_u64() % static_cast<uint64_t>(order.size() - i));
    std::swap(order[i], order[j]);
  }
  TruncationCensus census;
  census.probed = static_cast<int>(probes);
  for (std::size_t i = 0; i < probes; ++i) {
    TruncationRecord rec =
        truncation_event(dom, h, gamma0.points[order[i]], params, bound);
    if (rec.pass) ++census.passed;
    census.records.push_back(std::move(rec));
  }
  return census;
}

}  // namespace membrane
