#include "membrane/harness.hpp"

#include "membrane/field.hpp"
#include "membrane/gmc.hpp"
#include "membrane/lattice.hpp"
#include "membrane/levelset.hpp"
#include "membrane/parallel.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace membrane {

namespace {

using nlohmann::json;

constexpr double kCi95 = 1.959963984540054;  // two-sided 95% normal quantile

[[noreturn]] void bad_config(const ExperimentConfig& config, const std::string& what) {
  throw std::invalid_argument(kind_name(config.kind) + ": " + what);
}

Summary exact_summary(double value) {
  return Summary{value, 0.0, value, value};
}

Summary with_ci(double mean, double se) {
  return Summary{mean, se, mean - kCi95 * se, mean + kCi95 * se};
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Unbiased sample variance together with its Gaussian standard error
// var * sqrt(2 / (n - 1)).
Summary variance_summary(const std::vector<double>& v) {
  const std::size_t n = v.size();
  if (n < 2) throw std::invalid_argument("variance needs at least two values");
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double var = ss / static_cast<double>(n - 1);
  return with_ci(var, var * std::sqrt(2.0 / static_cast<double>(n - 1)));
}

std::vector<double> collect(const std::vector<ResultRecord>& records,
                            std::string_view metric) {
  std::vector<double> out;
  for (const ResultRecord& r : records)
    if (r.metric == metric) out.push_back(r.value);
  return out;
}

std::vector<double> collect_at(const std::vector<ResultRecord>& records,
                               std::string_view metric, int size) {
  std::vector<double> out;
  for (const ResultRecord& r : records)
    if (r.size == size && r.metric == metric) out.push_back(r.value);
  return out;
}

std::optional<double> single(const std::vector<ResultRecord>& records,
                             std::string_view metric) {
  for (const ResultRecord& r : records)
    if (r.metric == metric) return r.value;
  return std::nullopt;
}

double require_single(const std::vector<ResultRecord>& records,
                      std::string_view metric) {
  const auto v = single(records, metric);
  if (!v) throw std::runtime_error("result records are missing metric \"" +
                                   std::string(metric) + "\"");
  return *v;
}

std::string size_key(std::string_view metric, int size) {
  return std::string(metric) + "@" + std::to_string(size);
}

// |estimate - target| in standard-error units, emitted only when the
// estimate carries a usable standard error.
void add_gap(std::map<std::string, Summary>& out, const std::string& name,
             const Summary& estimate, double target) {
  if (estimate.se > 0.0)
    out[name + "_gap_se"] = exact_summary(std::abs(estimate.mean - target) / estimate.se);
}

int resolve_side(const ExperimentConfig& config) { return config.sizes.front(); }

Point center_point(int side) {
  Point c;
  for (int a = 0; a < 4; ++a) c[a] = side / 2;
  return c;
}

// ---------------------------------------------------------------------------
// Experiment bodies: each produces the record rows; summaries always come
// from reduce_records so the stored reduction is the recomputable one.
// ---------------------------------------------------------------------------

std::vector<ResultRecord> run_gamma_fit(const ExperimentConfig& config) {
  std::vector<ResultRecord> records;
  for (int side : config.sizes) {
    GreenSolver::Config gc;
    gc.method = GreenSolver::Method::Iterative;
    gc.iter_tol = config.tol;
    const Domain dom = Domain::box(4, side);
    const GreenSolver solver(dom, gc);
    records.push_back({0, side, "green_center", solver.diagonal_at(center_point(side))});
  }
  return records;
}

std::vector<ResultRecord> run_gm_verify(const ExperimentConfig& config) {
  const int side = resolve_side(config);
  const Domain V = Domain::box(4, side);
  Point lo, hi;
  for (int a = 0; a < 4; ++a) {
    lo[a] = side / 4;
    hi[a] = 3 * side / 4;
  }
  const Domain U = Domain::box_at(4, lo, hi);
  const MembraneSampler sampler_V(V, MembraneSampler::Method::Auto, config.tol);
  const MembraneSampler sampler_U(U, MembraneSampler::Method::Auto, config.tol);

  GreenSolver::Config gc;
  gc.method = GreenSolver::Method::Iterative;
  gc.iter_tol = config.tol;
  const GreenSolver green_V(V, gc);
  const GreenSolver green_U(U, gc);
  const Point c = center_point(side);
  const double var_V = green_V.diagonal_at(c);
  const double var_U = green_U.diagonal_at(c);

  // Deterministic residual of the biharmonic extension: replace the field on
  // U by its conditional mean and apply the precision operator; rows indexed
  // by U must vanish.
  RngStream ext_stream =
      split_stream(config.master_seed, "gm-verify-extension", 0, 0);
  const std::vector<double> h_V = sampler_V.sample(ext_stream);
  const std::vector<double> phi = conditional_mean(V, h_V, green_U);
  std::vector<double> blended = h_V;
  for (std::size_t i = 0; i < U.size(); ++i) {
    const auto idx = V.index_of(U.point(i));
    blended[static_cast<std::size_t>(idx)] = phi[i];
  }
  const Precision precision(V);
  const std::vector<double> residual_field = precision.apply(blended);
  double residual = 0.0;
  for (std::size_t i = 0; i < U.size(); ++i) {
    const auto idx = V.index_of(U.point(i));
    residual = std::max(residual, std::abs(residual_field[static_cast<std::size_t>(idx)]));
  }

  const int replicas = config.replicas;
  const std::size_t c_idx = static_cast<std::size_t>(U.index_of(c));
  std::vector<double> fine(replicas), coarse(replicas), sum(replicas), cross(replicas);
  parallel_replicas(replicas, config.workers, [&](int r) {
    RngStream stream = split_stream(config.master_seed, "gm-verify",
                                    static_cast<std::uint32_t>(r), 0);
    const GibbsMarkov gm = gibbs_markov_split(sampler_V, sampler_U, stream);
    fine[r] = gm.h_U[c_idx];
    coarse[r] = gm.phi[c_idx];
    sum[r] = gm.h_U[c_idx] + gm.phi[c_idx];
    cross[r] = gm.h_U[c_idx] * gm.phi[c_idx];
  });

  std::vector<ResultRecord> records;
  records.reserve(static_cast<std::size_t>(replicas) * 4 + 4);
  for (int r = 0; r < replicas; ++r) {
    records.push_back({r, side, "split_fine", fine[r]});
    records.push_back({r, side, "split_coarse", coarse[r]});
    records.push_back({r, side, "split_sum", sum[r]});
    records.push_back({r, side, "split_cross", cross[r]});
  }
  records.push_back({0, side, "fine_var_target", var_U});
  records.push_back({0, side, "coarse_var_target", var_V - var_U});
  records.push_back({0, side, "sum_var_target", var_V});
  records.push_back({0, side, "extension_residual", residual});
  return records;
}

std::vector<ResultRecord> run_census(const ExperimentConfig& config) {
  CensusConfig cc;
  cc.lambda = config.lambda;
  cc.sizes = config.sizes;
  cc.replicas = config.replicas;
  cc.master_seed = config.master_seed;
  cc.margin = config.margin;
  cc.tol = config.tol;
  cc.method = MembraneSampler::Method::Iterative;
  cc.workers = config.workers;
  const CensusReport report = census_experiment(cc);

  std::vector<ResultRecord> records;
  records.reserve(config.sizes.size() * static_cast<std::size_t>(config.replicas) + 2);
  for (std::size_t i = 0; i < report.sizes.size(); ++i)
    for (int r = 0; r < report.replicas; ++r)
      records.push_back({r, report.sizes[i], "level_count",
                         static_cast<double>(report.counts[i][static_cast<std::size_t>(r)])});

  // One path-confinement probe on the largest size: fraction of level-set
  // points whose coarse-field path stays in the allowed band.
  const int side = config.sizes.back();
  const Domain dom = Domain::box(4, side);
  const MembraneSampler sampler(dom, MembraneSampler::Method::Iterative, config.tol);
  RngStream stream = split_stream(config.master_seed, "census-path-probe", 0, 0);
  const std::vector<double> h = sampler.sample(stream);
  ScalingParams params = scaling_params(config.lambda, side);
  params.margin = config.margin;
  const TruncationCensus probe =
      truncation_census(dom, h, params, config.truncation_bound, 8, stream);
  records.push_back({0, side, "path_probe_passed", static_cast<double>(probe.passed)});
  records.push_back({0, side, "path_probe_total", static_cast<double>(probe.probed)});
  return records;
}

std::vector<ResultRecord> run_tail(const ExperimentConfig& config) {
  TailConfig tc;
  tc.lambda = config.lambda;
  tc.side = resolve_side(config);
  tc.replicas = config.replicas;
  tc.master_seed = config.master_seed;
  tc.tol = config.tol;
  tc.method = MembraneSampler::Method::Iterative;
  tc.workers = config.workers;
  const TailReport report = tail_checks(tc);

  std::vector<ResultRecord> records;
  records.push_back({0, tc.side, "tail_rate", report.rate});
  records.push_back({0, tc.side, "tail_overshoot_count",
                     static_cast<double>(report.overshoot_count)});
  records.push_back({0, tc.side, "tail_count_base", report.mean_count_base});
  for (std::size_t i = 0; i < report.shifts.size(); ++i)
    records.push_back({0, tc.side,
                       "tail_count@shift=" + format_double17(report.shifts[i]),
                       report.mean_counts[i]});
  return records;
}

std::vector<ResultRecord> run_gmc_ym(const ExperimentConfig& config) {
  const int side = resolve_side(config);
  const DyadicTree tree = dyadic_tree(0, config.depth);
  const YmSampler sampler(tree, side, config.lambda, config.tol,
                          MembraneSampler::Method::Iterative);
  const std::vector<double> s_grid = cell_sD_values(tree, side, config.tol);
  const double target =
      zlambda_mean(config.lambda, s_grid, tree.cell_volume(side));

  std::vector<double> masses(static_cast<std::size_t>(config.replicas));
  parallel_replicas(config.replicas, config.workers, [&](int r) {
    RngStream stream = split_stream(config.master_seed, "gmc-ym",
                                    static_cast<std::uint32_t>(r), 0);
    masses[static_cast<std::size_t>(r)] = sampler.sample(stream).total_mass();
  });

  std::vector<ResultRecord> records;
  records.reserve(masses.size() + 1);
  for (int r = 0; r < config.replicas; ++r)
    records.push_back({r, side, "mass", masses[static_cast<std::size_t>(r)]});
  records.push_back({0, side, "mass_target", target});
  return records;
}

std::vector<ResultRecord> run_gmc_spectral(const ExperimentConfig& config) {
  const int side = resolve_side(config);
  const Domain dom = Domain::box(4, side);
  const double beta = kPi * config.lambda;

  std::vector<double> masses(static_cast<std::size_t>(config.replicas));
  if (config.modes == 0) {
    const DirectSpectralSampler sampler(dom, beta, config.tol);
    parallel_replicas(config.replicas, config.workers, [&](int r) {
      RngStream stream = split_stream(config.master_seed, "gmc-spectral",
                                      static_cast<std::uint32_t>(r), 0);
      masses[static_cast<std::size_t>(r)] = sampler.sample(stream).total_mass();
    });
  } else {
    const SpectralBasis basis(dom);
    const std::vector<double> variance = basis.partial_variance(config.modes);
    parallel_replicas(config.replicas, config.workers, [&](int r) {
      RngStream stream = split_stream(config.master_seed, "gmc-spectral",
                                      static_cast<std::uint32_t>(r), 0);
      masses[static_cast<std::size_t>(r)] =
          spectral_gmc(basis, beta, config.modes, stream, &variance).total_mass();
    });
  }

  std::vector<ResultRecord> records;
  records.reserve(masses.size() + 1);
  for (int r = 0; r < config.replicas; ++r)
    records.push_back({r, side, "mass", masses[static_cast<std::size_t>(r)]});
  records.push_back({0, side, "mass_target", 1.0});
  return records;
}

std::vector<ResultRecord> run_compare(const ExperimentConfig& config) {
  const int side = resolve_side(config);
  const DyadicTree tree_m = dyadic_tree(0, config.depth);
  const DyadicTree tree_0 = dyadic_tree(0, 0);
  const YmSampler multiscale(tree_m, side, config.lambda, config.tol,
                             MembraneSampler::Method::Iterative);
  const std::vector<double> s_depth = cell_sD_values(tree_m, side, config.tol);
  const std::vector<double> s_base = cell_sD_values(tree_0, side, config.tol);
  const double target_multiscale =
      zlambda_mean(config.lambda, s_depth, tree_m.cell_volume(side));
  const double target_spectral =
      zlambda_mean(config.lambda, s_base, tree_0.cell_volume(side));
  const Domain dom = Domain::box(4, side);
  const DirectSpectralSampler spectral(dom, kPi * config.lambda, config.tol);

  const std::size_t n = static_cast<std::size_t>(config.replicas);
  std::vector<double> mass_a(n), mass_b(n);
  parallel_replicas(config.replicas, config.workers, [&](int r) {
    RngStream stream_a = split_stream(config.master_seed, "compare-multiscale",
                                      static_cast<std::uint32_t>(r), 0);
    mass_a[static_cast<std::size_t>(r)] = multiscale.sample(stream_a).total_mass();
    RngStream stream_b = split_stream(config.master_seed, "compare-spectral",
                                      static_cast<std::uint32_t>(r), 0);
    const GmcMeasure raw = spectral.sample(stream_b);
    mass_b[static_cast<std::size_t>(r)] =
        reweight_spectral(raw, config.lambda, s_base).total_mass();
  });

  std::vector<ResultRecord> records;
  records.reserve(2 * n + 2);
  for (int r = 0; r < config.replicas; ++r)
    records.push_back({r, side, "mass_multiscale", mass_a[static_cast<std::size_t>(r)]});
  for (int r = 0; r < config.replicas; ++r)
    records.push_back({r, side, "mass_spectral", mass_b[static_cast<std::size_t>(r)]});
  records.push_back({0, side, "mass_multiscale_target", target_multiscale});
  records.push_back({0, side, "mass_spectral_target", target_spectral});
  return records;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

void validate(const ExperimentConfig& c) {
  if (c.replicas < 1) bad_config(c, "replicas must be at least 1");
  if (c.dim != 4) bad_config(c, "dim must be 4 (the laboratory is four-dimensional)");
  if (!(c.tol > 0.0) || !std::isfinite(c.tol)) bad_config(c, "tol must be positive");
  if (c.workers < 0) bad_config(c, "workers must be nonnegative");
  if (c.format != "json" && c.format != "csv")
    bad_config(c, "format must be \"json\" or \"csv\"");
  if (c.sizes.empty()) bad_config(c, "sizes must not be empty");
  for (int n : c.sizes)
    if (n < 4) bad_config(c, "every size must be at least 4");
  if (!std::isfinite(c.lambda)) bad_config(c, "lambda must be finite");

  const auto one_size = [&] {
    if (c.sizes.size() != 1) bad_config(c, "takes exactly one size");
  };
  const auto increasing_sizes = [&] {
    for (std::size_t i = 1; i < c.sizes.size(); ++i)
      if (c.sizes[i] <= c.sizes[i - 1])
        bad_config(c, "sizes must be strictly increasing");
  };
  const auto subcritical_lambda = [&] {
    if (!(c.lambda > 0.0 && c.lambda < 1.0))
      bad_config(c, "lambda must lie in (0,1)");
  };
  const auto measure_lambda = [&] {
    if (!(c.lambda >= 0.0 && c.lambda < 1.0))
      bad_config(c, "lambda must lie in [0,1)");
  };
  const auto aligned_side = [&] {
    if (c.depth < 0) bad_config(c, "depth must be nonnegative");
    if (c.depth > 7) bad_config(c, "depth must be at most 7");
    const int block = 1 << c.depth;
    const int side = c.sizes.front();
    if (side % block != 0 || side < 4 * block)
      bad_config(c, "size must be a multiple of 2^depth and at least 4*2^depth");
  };

  switch (c.kind) {
    case ExperimentConfig::Kind::GammaFit:
      if (c.sizes.size() < 3) bad_config(c, "needs at least three sizes");
      increasing_sizes();
      break;
    case ExperimentConfig::Kind::GmVerify: {
      one_size();
      const int side = c.sizes.front();
      if (side < 8 || side % 4 != 0)
        bad_config(c, "size must be a multiple of 4, at least 8");
      if (c.replicas < 2) bad_config(c, "needs at least two replicas");
      break;
    }
    case ExperimentConfig::Kind::Census:
      if (c.sizes.size() < 3) bad_config(c, "needs at least three sizes");
      increasing_sizes();
      subcritical_lambda();
      if (!(c.margin >= 0.0 && c.margin < 0.5))
        bad_config(c, "margin must lie in [0, 0.5)");
      if (!(c.truncation_bound > 0.0))
        bad_config(c, "truncation_bound must be positive");
      break;
    case ExperimentConfig::Kind::Tail:
      one_size();
      subcritical_lambda();
      if (c.replicas < 100) bad_config(c, "needs at least 100 replicas");
      break;
    case ExperimentConfig::Kind::GmcYm:
      one_size();
      measure_lambda();
      aligned_side();
      break;
    case ExperimentConfig::Kind::GmcSpectral: {
      one_size();
      measure_lambda();
      if (c.modes < 0) bad_config(c, "modes must be nonnegative");
      const int side = c.sizes.front();
      const long points = static_cast<long>(side - 1) * (side - 1) * (side - 1) * (side - 1);
      if (c.modes > 0 && points > static_cast<long>(SpectralBasis::kMaxPoints))
        bad_config(c, "partial sums need (size-1)^4 <= " +
                          std::to_string(SpectralBasis::kMaxPoints) +
                          " (use modes=0 for the complete basis)");
      if (c.modes > points) bad_config(c, "modes exceeds the basis size");
      break;
    }
    case ExperimentConfig::Kind::Compare:
      one_size();
      measure_lambda();
      aligned_side();
      break;
  }
}

// ---------------------------------------------------------------------------
// Persistence helpers
// ---------------------------------------------------------------------------

std::string escape_json(std::string_view s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(ch) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", ch);
          out += buf;
        } else {
          out += ch;
        }
    }
  }
  return out;
}

double checked_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw std::invalid_argument(std::string("cannot persist non-finite ") + what);
  return v;
}

std::string config_to_json(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "{\"kind\":\"" << kind_name(c.kind) << "\""
     << ",\"dim\":" << c.dim
     << ",\"lambda\":" << format_double17(checked_finite(c.lambda, "lambda"))
     << ",\"sizes\":[";
  for (std::size_t i = 0; i < c.sizes.size(); ++i)
    os << (i ? "," : "") << c.sizes[i];
  os << "],\"replicas\":" << c.replicas
     << ",\"truncation_bound\":"
     << format_double17(checked_finite(c.truncation_bound, "truncation_bound"))
     << ",\"depth\":" << c.depth
     << ",\"modes\":" << c.modes
     << ",\"margin\":" << format_double17(checked_finite(c.margin, "margin"))
     << ",\"master_seed\":" << c.master_seed
     << ",\"tol\":" << format_double17(checked_finite(c.tol, "tol"))
     << ",\"workers\":" << c.workers
     << ",\"out_path\":\"" << escape_json(c.out_path) << "\""
     << ",\"format\":\"" << escape_json(c.format) << "\"}";
  return os.str();
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  c.kind = kind_from_name(j.at("kind").get<std::string>());
  c.dim = j.at("dim").get<int>();
  c.lambda = j.at("lambda").get<double>();
  c.sizes = j.at("sizes").get<std::vector<int>>();
  c.replicas = j.at("replicas").get<int>();
  c.truncation_bound = j.at("truncation_bound").get<double>();
  c.depth = j.at("depth").get<int>();
  c.modes = j.at("modes").get<int>();
  c.margin = j.at("margin").get<double>();
  c.master_seed = j.at("master_seed").get<std::uint64_t>();
  c.tol = j.at("tol").get<double>();
  c.workers = j.at("workers").get<int>();
  c.out_path = j.at("out_path").get<std::string>();
  c.format = j.at("format").get<std::string>();
  return c;
}

void check_metric_name(const std::string& metric) {
  if (metric.empty()) throw std::invalid_argument("metric names must not be empty");
  for (char ch : metric)
    if (ch == ',' || ch == '"' || ch == '\n' || ch == '\r')
      throw std::invalid_argument("metric name \"" + metric +
                                  "\" contains a delimiter character");
}

std::string results_to_json(const ResultSet& rs) {
  std::ostringstream os;
  os << "{\n\"version\":\"" << escape_json(rs.version) << "\",\n"
     << "\"config\":" << config_to_json(rs.config) << ",\n"
     << "\"records\":[";
  for (std::size_t i = 0; i < rs.records.size(); ++i) {
    const ResultRecord& r = rs.records[i];
    check_metric_name(r.metric);
    os << (i ? ",\n" : "\n")
       << "{\"replica\":" << r.replica << ",\"size\":" << r.size
       << ",\"metric\":\"" << escape_json(r.metric) << "\",\"value\":"
       << format_double17(checked_finite(r.value, "record value")) << "}";
  }
  os << "\n],\n\"summaries\":" << summaries_json(rs.summaries) << "\n}\n";
  return os.str();
}

std::string results_to_csv(const ResultSet& rs) {
  std::ostringstream os;
  os << "# membrane-lab-results version=" << rs.version << "\n"
     << "# config " << config_to_json(rs.config) << "\n"
     << "replica,size,metric,value\n";
  for (const ResultRecord& r : rs.records) {
    check_metric_name(r.metric);
    os << r.replica << "," << r.size << "," << r.metric << ","
       << format_double17(checked_finite(r.value, "record value")) << "\n";
  }
  return os.str();
}

void check_version(const std::string& version) {
  if (version != kResultSchemaVersion)
    throw std::runtime_error("result schema version mismatch: file has \"" + version +
                             "\", this build reads \"" +
                             std::string(kResultSchemaVersion) + "\"");
}

ResultSet load_json(const std::string& text, const std::string& path) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed result file " + path + ": " + e.what());
  }
  try {
    ResultSet rs;
    rs.version = j.at("version").get<std::string>();
    check_version(rs.version);
    rs.config = config_from_json(j.at("config"));
    for (const json& row : j.at("records")) {
      ResultRecord r;
      r.replica = row.at("replica").get<int>();
      r.size = row.at("size").get<int>();
      r.metric = row.at("metric").get<std::string>();
      r.value = row.at("value").get<double>();
      rs.records.push_back(std::move(r));
    }
    for (const auto& [name, s] : j.at("summaries").items()) {
      Summary sum;
      sum.mean = s.at("mean").get<double>();
      sum.se = s.at("se").get<double>();
      sum.ci_lo = s.at("ci_lo").get<double>();
      sum.ci_hi = s.at("ci_hi").get<double>();
      rs.summaries.emplace(name, sum);
    }
    return rs;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed result file " + path + ": " + e.what());
  }
}

ResultSet load_csv(const std::string& text, const std::string& path) {
  std::istringstream is(text);
  std::string line;
  const std::string head = "# membrane-lab-results version=";
  if (!std::getline(is, line) || line.rfind(head, 0) != 0)
    throw std::runtime_error("malformed result file " + path +
                             ": missing results header line");
  check_version(line.substr(head.size()));

  const std::string conf_head = "# config ";
  if (!std::getline(is, line) || line.rfind(conf_head, 0) != 0)
    throw std::runtime_error("malformed result file " + path +
                             ": missing config line");
  ResultSet rs;
  try {
    rs.config = config_from_json(json::parse(line.substr(conf_head.size())));
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed result file " + path + ": " + e.what());
  }

  if (!std::getline(is, line) || line != "replica,size,metric,value")
    throw std::runtime_error("malformed result file " + path +
                             ": missing column header");
  std::size_t lineno = 3;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    ResultRecord r;
    try {
      if (!std::getline(row, field, ',')) throw std::invalid_argument("replica");
      r.replica = std::stoi(field);
      if (!std::getline(row, field, ',')) throw std::invalid_argument("size");
      r.size = std::stoi(field);
      if (!std::getline(row, r.metric, ',')) throw std::invalid_argument("metric");
      if (!std::getline(row, field)) throw std::invalid_argument("value");
      r.value = std::stod(field);
    } catch (const std::exception&) {
      throw std::runtime_error("malformed result file " + path + ": bad row at line " +
                               std::to_string(lineno));
    }
    rs.records.push_back(std::move(r));
  }
  rs.summaries = reduce_records(rs.config, rs.records);
  return rs;
}

// ---------------------------------------------------------------------------
// Reductions per kind
// ---------------------------------------------------------------------------

void reduce_gamma_fit(const ExperimentConfig& config,
                      const std::vector<ResultRecord>& records,
                      std::map<std::string, Summary>& out) {
  std::vector<double> xs, ys;
  for (int side : config.sizes) {
    const auto vals = collect_at(records, "green_center", side);
    if (vals.empty())
      throw std::runtime_error("result records are missing green_center for size " +
                               std::to_string(side));
    out[size_key("green_center", side)] = exact_summary(vals.front());
    xs.push_back(static_cast<double>(side));
    ys.push_back(vals.front());
  }
  const FitResult fit = fit_loglog(xs, ys, FitMode::LogLinear);
  const Summary slope = with_ci(fit.slope, fit.stderr_slope);
  out["log_slope"] = slope;
  out["log_slope_target"] = exact_summary(kGamma);
  add_gap(out, "log_slope", slope, kGamma);
}

void reduce_census(const ExperimentConfig& config,
                   const std::vector<ResultRecord>& records,
                   std::map<std::string, Summary>& out) {
  std::vector<double> means;
  for (int side : config.sizes) {
    const auto counts = collect_at(records, "level_count", side);
    if (counts.empty())
      throw std::runtime_error("result records are missing level_count for size " +
                               std::to_string(side));
    const Summary s = summarize(counts);
    out[size_key("level_count", side)] = s;
    means.push_back(s.mean);
  }
  const FitResult fit = census_fit(config.sizes, means);
  const Summary slope = with_ci(fit.slope, fit.stderr_slope);
  const double target = 4.0 * (1.0 - config.lambda * config.lambda);
  out["count_slope"] = slope;
  out["count_slope_target"] = exact_summary(target);
  add_gap(out, "count_slope", slope, target);

  const auto passed = single(records, "path_probe_passed");
  const auto total = single(records, "path_probe_total");
  if (passed && total && *total > 0.0)
    out["path_probe_pass_fraction"] = exact_summary(*passed / *total);
}

void reduce_tail(const ExperimentConfig& config,
                 const std::vector<ResultRecord>& records,
                 std::map<std::string, Summary>& out) {
  const double rate = require_single(records, "tail_rate");
  const double overshoots = require_single(records, "tail_overshoot_count");
  const double base = require_single(records, "tail_count_base");
  const double se = overshoots > 0.0 ? rate / std::sqrt(overshoots) : 0.0;
  const Summary rate_summary = with_ci(rate, se);
  const double target = kPi * config.lambda;
  out["overshoot_rate"] = rate_summary;
  out["overshoot_rate_target"] = exact_summary(target);
  add_gap(out, "overshoot_rate", rate_summary, target);
  out["tail_count_base"] = exact_summary(base);

  const std::string prefix = "tail_count@shift=";
  for (const ResultRecord& r : records) {
    if (r.metric.rfind(prefix, 0) != 0) continue;
    const std::string shift_text = r.metric.substr(prefix.size());
    const double shift = std::strtod(shift_text.c_str(), nullptr);
    out[r.metric] = exact_summary(r.value);
    if (base > 0.0)
      out["count_ratio@shift=" + shift_text] = exact_summary(r.value / base);
    out["count_ratio_target@shift=" + shift_text] =
        exact_summary(std::exp(-kPi * config.lambda * shift));
  }
}

void reduce_gm_verify(const ExperimentConfig&,
                      const std::vector<ResultRecord>& records,
                      std::map<std::string, Summary>& out) {
  const struct {
    const char* metric;
    const char* var_name;
    const char* target_name;
  } parts[] = {
      {"split_fine", "fine_var", "fine_var_target"},
      {"split_coarse", "coarse_var", "coarse_var_target"},
      {"split_sum", "sum_var", "sum_var_target"},
  };
  for (const auto& part : parts) {
    const auto values = collect(records, part.metric);
    if (values.size() < 2)
      throw std::runtime_error(std::string("result records are missing ") + part.metric);
    const Summary est = variance_summary(values);
    const double target = require_single(records, part.target_name);
    out[part.var_name] = est;
    out[part.target_name] = exact_summary(target);
    add_gap(out, part.var_name, est, target);
  }
  const auto cross = collect(records, "split_cross");
  if (cross.empty()) throw std::runtime_error("result records are missing split_cross");
  const Summary cross_mean = summarize(cross);
  out["cross_mean"] = cross_mean;
  add_gap(out, "cross_mean", cross_mean, 0.0);
  out["extension_residual"] = exact_summary(require_single(records, "extension_residual"));
}

void reduce_mass_kind(const std::vector<ResultRecord>& records,
                      std::map<std::string, Summary>& out) {
  const auto masses = collect(records, "mass");
  if (masses.empty()) throw std::runtime_error("result records are missing mass");
  const Summary mass = summarize(masses);
  const double target = require_single(records, "mass_target");
  out["mass"] = mass;
  out["mass_target"] = exact_summary(target);
  add_gap(out, "mass", mass, target);
}

void reduce_compare(const ExperimentConfig&,
                    const std::vector<ResultRecord>& records,
                    std::map<std::string, Summary>& out) {
  const auto mass_a = collect(records, "mass_multiscale");
  const auto mass_b = collect(records, "mass_spectral");
  if (mass_a.empty() || mass_b.empty())
    throw std::runtime_error("result records are missing comparison masses");
  const Summary a = summarize(mass_a);
  const Summary b = summarize(mass_b);
  const double target_a = require_single(records, "mass_multiscale_target");
  const double target_b = require_single(records, "mass_spectral_target");
  out["mass_multiscale"] = a;
  out["mass_spectral"] = b;
  out["mass_multiscale_target"] = exact_summary(target_a);
  out["mass_spectral_target"] = exact_summary(target_b);
  add_gap(out, "mass_multiscale", a, target_a);
  add_gap(out, "mass_spectral", b, target_b);

  const ComparisonStats stats = compare_constructions(mass_a, mass_b);
  const double ratio = stats.mean_ratio;
  const double rel_a = a.mean != 0.0 ? a.se / a.mean : 0.0;
  const double rel_b = b.mean != 0.0 ? b.se / b.mean : 0.0;
  const double ratio_se = std::abs(ratio) * std::sqrt(rel_a * rel_a + rel_b * rel_b);
  const Summary ratio_summary = with_ci(ratio, ratio_se);
  const double ratio_target = target_b != 0.0 ? target_a / target_b : 0.0;
  out["mass_ratio"] = ratio_summary;
  out["mass_ratio_target"] = exact_summary(ratio_target);
  add_gap(out, "mass_ratio", ratio_summary, ratio_target);
  out["ks_statistic"] = exact_summary(stats.ks_statistic);
}

}  // namespace

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

const ThresholdTable& thresholds() {
  static const ThresholdTable table;
  return table;
}

std::string kind_name(ExperimentConfig::Kind kind) {
  switch (kind) {
    case ExperimentConfig::Kind::GammaFit: return "gamma-fit";
    case ExperimentConfig::Kind::GmVerify: return "gm-verify";
    case ExperimentConfig::Kind::Census: return "census";
    case ExperimentConfig::Kind::Tail: return "tail";
    case ExperimentConfig::Kind::GmcYm: return "gmc-ym";
    case ExperimentConfig::Kind::GmcSpectral: return "gmc-spectral";
    case ExperimentConfig::Kind::Compare: return "compare";
  }
  throw std::invalid_argument("unknown experiment kind");
}

ExperimentConfig::Kind kind_from_name(std::string_view name) {
  using Kind = ExperimentConfig::Kind;
  if (name == "gamma-fit") return Kind::GammaFit;
  if (name == "gm-verify") return Kind::GmVerify;
  if (name == "census") return Kind::Census;
  if (name == "tail") return Kind::Tail;
  if (name == "gmc-ym") return Kind::GmcYm;
  if (name == "gmc-spectral") return Kind::GmcSpectral;
  if (name == "compare") return Kind::Compare;
  throw std::invalid_argument("unknown experiment kind \"" + std::string(name) + "\"");
}

RngStream split_stream(std::uint64_t master_seed, std::string_view experiment,
                       std::uint32_t replica, std::uint32_t purpose) {
  return RngStream::make(master_seed, experiment, replica, purpose);
}

FitResult fit_loglog(const std::vector<double>& xs, const std::vector<double>& ys,
                     FitMode mode) {
  if (xs.size() != ys.size())
    throw std::invalid_argument("fit_loglog: mismatched input lengths");
  if (xs.size() < 3)
    throw std::invalid_argument("fit_loglog: needs at least three points");
  std::vector<double> lx(xs.size()), ty(ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0))
      throw std::invalid_argument("fit_loglog: x values must be positive");
    lx[i] = std::log(xs[i]);
    if (mode == FitMode::LogLog) {
      if (!(ys[i] > 0.0))
        throw std::invalid_argument("fit_loglog: y values must be positive in log-log mode");
      ty[i] = std::log(ys[i]);
    } else {
      ty[i] = ys[i];
    }
  }
  return fit_line(lx, ty);
}

Summary summarize(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("summarize: empty input");
  const double m = mean_of(values);
  if (values.size() == 1) return Summary{m, 0.0, m, m};
  double ss = 0.0;
  for (double x : values) ss += (x - m) * (x - m);
  const double n = static_cast<double>(values.size());
  const double se = std::sqrt(ss / (n - 1.0) / n);
  return with_ci(m, se);
}

std::map<std::string, Summary> reduce_records(const ExperimentConfig& config,
                                              const std::vector<ResultRecord>& records) {
  std::map<std::string, Summary> out;
  switch (config.kind) {
    case ExperimentConfig::Kind::GammaFit: reduce_gamma_fit(config, records, out); break;
    case ExperimentConfig::Kind::GmVerify: reduce_gm_verify(config, records, out); break;
    case ExperimentConfig::Kind::Census: reduce_census(config, records, out); break;
    case ExperimentConfig::Kind::Tail: reduce_tail(config, records, out); break;
    case ExperimentConfig::Kind::GmcYm:
    case ExperimentConfig::Kind::GmcSpectral: reduce_mass_kind(records, out); break;
    case ExperimentConfig::Kind::Compare: reduce_compare(config, records, out); break;
  }
  return out;
}

ResultSet run(const ExperimentConfig& config) {
  validate(config);
  ResultSet rs;
  rs.config = config;
  switch (config.kind) {
    case ExperimentConfig::Kind::GammaFit: rs.records = run_gamma_fit(config); break;
    case ExperimentConfig::Kind::GmVerify: rs.records = run_gm_verify(config); break;
    case ExperimentConfig::Kind::Census: rs.records = run_census(config); break;
    case ExperimentConfig::Kind::Tail: rs.records = run_tail(config); break;
    case ExperimentConfig::Kind::GmcYm: rs.records = run_gmc_ym(config); break;
    case ExperimentConfig::Kind::GmcSpectral: rs.records = run_gmc_spectral(config); break;
    case ExperimentConfig::Kind::Compare: rs.records = run_compare(config); break;
  }
  rs.summaries = reduce_records(config, rs.records);
  return rs;
}

void persist(const ResultSet& results, const std::string& path, std::string_view format) {
  std::string text;
  if (format == "json") {
    text = results_to_json(results);
  } else if (format == "csv") {
    text = results_to_csv(results);
  } else {
    throw std::invalid_argument("persist: format must be \"json\" or \"csv\"");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("persist: cannot open " + path + " for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("persist: write to " + path + " failed");
}

ResultSet load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load: cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos)
    throw std::runtime_error("malformed result file " + path + ": empty file");
  if (text[first] == '{') return load_json(text, path);
  if (text[first] == '#') return load_csv(text, path);
  throw std::runtime_error("malformed result file " + path +
                           ": expected JSON object or CSV header");
}

std::string format_double17(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return std::string(buf);
}

std::string summaries_json(const std::map<std::string, Summary>& summaries) {
  std::ostringstream os;
  os << "{";
  bool first = true;
  for (const auto& [name, s] : summaries) {
    check_metric_name(name);
    os << (first ? "\n" : ",\n") << "\"" << escape_json(name) << "\":{"
       << "\"mean\":" << format_double17(checked_finite(s.mean, "summary mean"))
       << ",\"se\":" << format_double17(checked_finite(s.se, "summary se"))
       << ",\"ci_lo\":" << format_double17(checked_finite(s.ci_lo, "summary ci_lo"))
       << ",\"ci_hi\":" << format_double17(checked_finite(s.ci_hi, "summary ci_hi"))
       << "}";
    first = false;
  }
  os << "\n}";
  return os.str();
}

std::string results_json(const ResultSet& results) { return results_to_json(results); }

std::string config_json(const ExperimentConfig& config) { return config_to_json(config); }

}  // namespace membrane
