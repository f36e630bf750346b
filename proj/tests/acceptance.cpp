// Acceptance gate: eighteen numbered criteria, one per ctest entry
// (`acceptance --only N`), each printing a single PASS/FAIL line with the
// measured values and the bound it was held to.  Exact criteria run at
// machine precision; statistical criteria run Monte Carlo at pinned seeds.
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "membrane/field.hpp"
#include "membrane/gmc.hpp"
#include "membrane/green.hpp"
#include "membrane/harness.hpp"
#include "membrane/lattice.hpp"
#include "membrane/levelset.hpp"
#include "membrane/rng.hpp"

using namespace membrane;

namespace {

struct Outcome {
  bool pass = false;
  std::string text;
};

std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

Point center_of(int side) {
  Point p{};
  for (int a = 0; a < 4; ++a) p[a] = side / 2;
  return p;
}

GreenSolver::Config dense_config() {
  GreenSolver::Config c;
  c.method = GreenSolver::Method::Dense;
  return c;
}

GreenSolver::Config iterative_config(double tol = 1e-8) {
  GreenSolver::Config c;
  c.method = GreenSolver::Method::Iterative;
  c.iter_tol = tol;
  return c;
}

// Full Green matrix of a small domain: A factored once, solved against the
// identity (column-major, n x n).
std::vector<double> full_green_matrix(const Domain& dom) {
  const int n = static_cast<int>(dom.size());
  const Precision A(dom);
  std::vector<double> a(static_cast<size_t>(n) * n);
  A.dense(a.data());
  std::vector<double> g(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) g[static_cast<size_t>(i) * n + i] = 1.0;
  const int info = LAPACKE_dposv(LAPACK_COL_MAJOR, 'L', n, n, a.data(), n, g.data(), n);
  if (info != 0) throw std::runtime_error("dense solve failed in acceptance setup");
  return g;
}

// ---------------------------------------------------------------------------
// Exact criteria
// ---------------------------------------------------------------------------

Outcome criterion_1(std::uint64_t) {
  const Stencil st = bilaplacian_stencil(4);
  double dev = 0.0;
  bool structure = st.entries.size() == 41;
  int counts[4] = {0, 0, 0, 0};
  for (const auto& e : st.entries) {
    int ones = 0, twos = 0, absum = 0;
    for (int a = 0; a < 4; ++a) {
      const int v = std::abs(e.offset[a]);
      absum += v;
      if (v == 1) ++ones;
      if (v == 2) ++twos;
    }
    double want;
    if (absum == 0) {
      want = 9.0 / 8.0;
      ++counts[0];
    } else if (absum == 1 && ones == 1) {
      want = -0.25;
      ++counts[1];
    } else if (absum == 2 && ones == 2) {
      want = 1.0 / 32.0;
      ++counts[2];
    } else if (absum == 2 && twos == 1) {
      want = 1.0 / 64.0;
      ++counts[3];
    } else {
      structure = false;
      continue;
    }
    dev = std::max(dev, std::abs(e.coeff - want));
    dev = std::max(dev,
                   std::abs(static_cast<double>(e.num) / static_cast<double>(e.den) - want));
  }
  structure = structure && counts[0] == 1 && counts[1] == 8 && counts[2] == 24 &&
              counts[3] == 8;
  const auto [num, den] = st.exact_sum();
  structure = structure && num == 0 && den == 1;
  const bool pass = structure && dev <= 1e-12;
  return {pass, fmt("squared-Laplacian stencil vs closed forms 9/8, -1/4, 1/32, 1/64: "
                    "max deviation %.3g (tol 1e-12), %zu entries, exact sum %lld/%lld",
                    dev, st.entries.size(), static_cast<long long>(num),
                    static_cast<long long>(den))};
}

Outcome criterion_2(std::uint64_t) {
  const Point p{5, 5, 5, 5};
  const Domain dom = Domain::box_at(4, p, p);
  GreenSolver gs(dom);
  const double dev = std::abs(gs.diagonal_at(p) - 8.0 / 9.0);
  return {dev <= 1e-10,
          fmt("single-point Green value vs 8/9: deviation %.3g (tol 1e-10)", dev)};
}

Outcome criterion_3(std::uint64_t seed) {
  const Domain V = Domain::box(4, 10);
  GreenSolver gs(V, dense_config());
  RngStream stream = split_stream(seed, "acceptance-c3", 0, 0);
  double resid = 0.0;
  for (int k = 0; k < 5; ++k) {
    Point y{};
    for (int a = 0; a < 4; ++a) y[a] = 1 + static_cast<int>(stream.next_uniform() * 9.0);
    const std::vector<double> col = gs.column(y);
    std::vector<double> r = gs.precision().apply(col);
    r[static_cast<size_t>(V.index_of(y))] -= 1.0;
    for (double v : r) resid = std::max(resid, std::abs(v));
  }
  const double sym = max_symmetry_gap(gs, 5);
  const bool pass = resid <= 1e-8 && sym <= 1e-7;
  return {pass, fmt("Green columns on the side-10 box: max residual %.3g (tol 1e-8), "
                    "symmetry gap %.3g (tol 1e-7), 5 random columns",
                    resid, sym)};
}

Outcome criterion_4(std::uint64_t) {
  const Domain V = Domain::box(4, 10);
  const Domain U = Domain::box_at(4, Point{3, 3, 3, 3}, Point{7, 7, 7, 7});
  GreenSolver gsV(V, dense_config());
  GreenSolver gsU(U, dense_config());
  const std::vector<Point> ys = {Point{5, 5, 5, 5}, Point{4, 3, 5, 6}, Point{3, 7, 4, 5}};
  double worst = 0.0;
  for (const Point& y : ys) {
    const std::vector<double> colV = gsV.column(y);
    const std::vector<double> colU = gsU.column(y);
    const std::vector<double> cov = conditional_mean(V, colV, gsU);
    for (size_t i = 0; i < U.size(); ++i) {
      const Point& x = U.point(i);
      const double gV = colV[static_cast<size_t>(V.index_of(x))];
      worst = std::max(worst, std::abs(gV - colU[i] - cov[i]));
    }
  }
  return {worst <= 1e-8,
          fmt("domain-split covariance identity on side-10 vs centered side-6 box: "
              "max |G_whole - G_sub - Cov(extension)| = %.3g (tol 1e-8), 3 columns "
              "over the whole sub-domain",
              worst)};
}

Outcome criterion_5(std::uint64_t seed) {
  const Domain V = Domain::box(4, 10);
  const Point x{5, 5, 5, 5};
  const Precision A(V);
  const Stencil st = bilaplacian_stencil(4);
  double coeff_dev = 0.0;
  double wsum = 0.0;
  std::vector<double> h(V.size(), 0.0);
  for (const auto& e : st.entries) {
    int absum = 0, ones = 0, twos = 0;
    for (int a = 0; a < 4; ++a) {
      const int v = std::abs(e.offset[a]);
      absum += v;
      if (v == 1) ++ones;
      if (v == 2) ++twos;
    }
    if (absum == 0) continue;
    Point y = x;
    for (int a = 0; a < 4; ++a) y[a] += e.offset[a];
    // precision-row oracle: weight = -A(x,y)/A(x,x)
    const double oracle = -A.entry(x, y) / A.entry(x, x);
    double want = 0.0;
    if (absum == 1 && ones == 1) want = 2.0 / 9.0;
    if (absum == 2 && ones == 2) want = -1.0 / 36.0;
    if (absum == 2 && twos == 1) want = -1.0 / 72.0;
    coeff_dev = std::max(coeff_dev, std::abs(oracle - want));
    h.assign(V.size(), 0.0);
    h[static_cast<size_t>(V.index_of(y))] = 1.0;
    const double w = conditional_mean_single(V, h, x);
    coeff_dev = std::max(coeff_dev, std::abs(w - want));
    wsum += w;
  }
  const double sum_dev = std::abs(wsum - 1.0);

  // biharmonicity of the extension: interior precision rows vanish
  const Domain U = Domain::box_at(4, Point{3, 3, 3, 3}, Point{7, 7, 7, 7});
  GreenSolver gsU(U, dense_config());
  RngStream stream = split_stream(seed, "acceptance-c5", 0, 0);
  stream.fill_normals(h);
  const std::vector<double> phi = conditional_mean(V, h, gsU);
  std::vector<double> blended = h;
  for (size_t i = 0; i < U.size(); ++i)
    blended[static_cast<size_t>(V.index_of(U.point(i)))] = phi[i];
  const std::vector<double> rows = A.apply(blended);
  double row_max = 0.0;
  for (size_t i = 0; i < U.size(); ++i)
    row_max = std::max(row_max, std::abs(rows[static_cast<size_t>(V.index_of(U.point(i)))]));

  const bool pass = coeff_dev <= 1e-12 && sum_dev <= 1e-12 && row_max <= 1e-8;
  return {pass, fmt("single-site conditional-mean weights vs 2/9, -1/36, -1/72: max "
                    "deviation %.3g, weight sum deviation %.3g (tol 1e-12); interior "
                    "rows of the blended field %.3g (tol 1e-8)",
                    coeff_dev, sum_dev, row_max)};
}

Outcome criterion_6(std::uint64_t) {
  const Point c{5, 5, 5, 5};
  const Domain b1 = Domain::box_at(4, Point{4, 4, 4, 4}, Point{6, 6, 6, 6});
  const Domain b2 = Domain::box_at(4, Point{3, 3, 3, 3}, Point{7, 7, 7, 7});
  const Domain b3 = Domain::box_at(4, Point{2, 2, 2, 2}, Point{8, 8, 8, 8});
  const Domain b4 = Domain::box(4, 10);
  GreenSolver g1(b1, dense_config());
  GreenSolver g2(b2, dense_config());
  GreenSolver g3(b3, dense_config());
  GreenSolver g4(b4, dense_config());
  const double d1 = g1.diagonal_at(c), d2 = g2.diagonal_at(c), d3 = g3.diagonal_at(c),
               d4 = g4.diagonal_at(c);
  const double worst = std::min({d2 - d1, d3 - d2, d4 - d3});
  return {worst >= -1e-8,
          fmt("diagonal monotonicity over 3 nested box pairs: increments %.4f, %.4f, "
              "%.4f (each must be >= -1e-8)",
              d2 - d1, d3 - d2, d4 - d3)};
}

Outcome criterion_7(std::uint64_t) {
  const Domain dom = Domain::box(4, 6);  // 625 points
  const BasisSampler basis(dom);
  const std::vector<double> g = full_green_matrix(dom);
  const size_t n = dom.size();
  double worst = 0.0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i; j < n; ++j)
      worst = std::max(worst, std::abs(basis.green_sum(i, j) - g[j * n + i]));
  return {worst <= 1e-6,
          fmt("basis reconstruction of the Green function on a 625-point box: max "
              "deviation %.3g over all %zu pairs (tol 1e-6)",
              worst, n * (n + 1) / 2)};
}

Outcome criterion_8(std::uint64_t) {
  double worst = 0.0;
  const std::vector<std::pair<double, int>> pts = {{0.5, 16}, {0.3, 12}};
  for (const auto& [lambda, side] : pts) {
    const ScalingParams p = scaling_params(lambda, side);
    const double logn = std::log(static_cast<double>(side));
    worst = std::max(worst, std::abs(p.level * kPi / (8.0 * logn) / lambda - 1.0));
    const double norm_want =
        std::pow(static_cast<double>(side), 4.0 - 4.0 * lambda * lambda) / std::sqrt(logn);
    worst = std::max(worst, std::abs(p.normalization / norm_want - 1.0));
  }
  return {worst <= 1e-9,
          fmt("threshold and normalization closed forms at two parameter points: max "
              "relative deviation %.3g (tol 1e-9)",
              worst)};
}

// ---------------------------------------------------------------------------
// Statistical criteria (pinned seeds)
// ---------------------------------------------------------------------------

Outcome criterion_9(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.kind = ExperimentConfig::Kind::GammaFit;
  cfg.sizes = {8, 12, 16, 24, 32};
  cfg.master_seed = seed;
  const ResultSet rs = run(cfg);
  const double slope = rs.summaries.at("log_slope").mean;
  const bool pass = slope >= 0.71 && slope <= 0.91;
  return {pass, fmt("log-diagonal growth slope over sides {8,12,16,24,32}: %.4f "
                    "(band [0.71, 0.91], limit constant %.4f)",
                    slope, kGamma)};
}

Outcome criterion_10(std::uint64_t seed) {
  // empirical covariance vs the exact Green matrix, studentized entrywise
  auto covariance_check = [&](const Domain& dom, bool use_basis, const char* tag,
                              int replicas) {
    const size_t n = dom.size();
    const std::vector<double> g = full_green_matrix(dom);
    std::vector<double> acc(n * n, 0.0);
    const MembraneSampler sampler(dom, MembraneSampler::Method::Dense, 1e-8);
    std::optional<BasisSampler> basis;
    if (use_basis) basis.emplace(dom);
    for (int r = 0; r < replicas; ++r) {
      RngStream stream = split_stream(seed, tag, static_cast<uint32_t>(r), 0);
      const std::vector<double> h =
          use_basis ? basis->sample(stream) : sampler.sample(stream);
      for (size_t i = 0; i < n; ++i) {
        const double hi = h[i];
        double* row = acc.data() + i * n;
        for (size_t j = i; j < n; ++j) row[j] += hi * h[j];
      }
    }
    double max_se = 0.0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i; j < n; ++j) {
        const double est = acc[i * n + j] / replicas;
        const double gij = g[j * n + i];
        const double se =
            std::sqrt((g[i * n + i] * g[j * n + j] + gij * gij) / replicas);
        max_se = std::max(max_se, std::abs(est - gij) / se);
      }
    return max_se;
  };
  const Domain box8 = Domain::box(4, 8);
  const Domain box6 = Domain::box(4, 6);  // 5^4 points
  const double dev_field = covariance_check(box8, false, "acceptance-c10", 2000);
  const double dev_basis = covariance_check(box6, true, "acceptance-c10-basis", 2000);
  const bool pass = dev_field <= 5.0 && dev_basis <= 5.0;
  return {pass, fmt("sampler covariance vs exact Green matrix, 2000 replicas: max "
                    "studentized deviation %.3f over the 2.9e6 entries of the "
                    "2401-point box, %.3f for the basis sampler on the 625-point box "
                    "(bound 5 standard errors; the median of a max over this many "
                    "entries is ~5.1 even for an exact sampler, so the first bound "
                    "is tighter than the statistic it gates)",
                    dev_field, dev_basis)};
}

Outcome criterion_11(std::uint64_t seed) {
  // Coarse-field increment variance at the only interior point of the side-16
  // box whose concentric-box hierarchy has an increment (the exact center,
  // with one level: S_0 = field value, S_1 = 0).
  const Domain dom = Domain::box(4, 16);
  const Point x = center_of(16);
  const CoarseFieldEvaluator coarse(dom, x, 1e-8);
  const int levels = coarse.levels();
  const MembraneSampler sampler(dom, MembraneSampler::Method::Iterative, 1e-8);
  const int replicas = 10000;
  double sum = 0.0, ss = 0.0;
  for (int r = 0; r < replicas; ++r) {
    RngStream stream = split_stream(seed, "acceptance-c11", static_cast<uint32_t>(r), 0);
    const std::vector<double> h = sampler.sample(stream);
    const std::vector<double> s = coarse.evaluate(h, 0, levels);
    const double inc = s.front() - s.back();  // S_0 - S_{n(x)}
    sum += inc;
    ss += inc * inc;
  }
  const double mean = sum / replicas;
  const double var = (ss - sum * mean) / (replicas - 1);
  const double se = var * std::sqrt(2.0 / (replicas - 1));
  const double target = levels * kGamma;  // (m - k) * gamma with k=0, m=levels
  const double band = 3.0 * se + 0.3;
  const double dev = std::abs(var - target);
  return {dev <= band,
          fmt("coarse-field increment variance at the side-16 center (hierarchy "
              "order %d): measured %.4f vs %.4f +- %.3f (3 SE + 0.3); the hierarchy "
              "is too shallow at this size for the increment law",
              levels, var, target, band)};
}

Outcome criterion_12(std::uint64_t seed) {
  CensusConfig cfg;
  cfg.lambda = 0.5;
  cfg.sizes = {8, 12, 16};
  cfg.replicas = 500;
  cfg.master_seed = seed;
  cfg.method = MembraneSampler::Method::Iterative;
  const CensusReport rep = census_experiment(cfg);
  const double dev = std::abs(rep.fit.slope - 3.0);
  return {dev <= 0.7,
          fmt("level-set count slope at strength 0.5 over sides {8,12,16}, 500 "
              "replicas: %.4f vs %.1f +- 0.7",
              rep.fit.slope, rep.predicted_slope)};
}

Outcome criterion_13(std::uint64_t seed) {
  const int side = 16;
  const double lambda = 0.5;
  const Domain dom = Domain::box(4, side);
  GreenSolver gs(dom, iterative_config());
  const std::vector<double> diagonal = gs.box_diagonal();
  const ScalingParams sp = scaling_params(lambda, side);
  const std::array<double, 4> lo{0.25, 0.25, 0.25, 0.25};
  const std::array<double, 4> hi{0.75, 0.75, 0.75, 0.75};
  const double predicted = predicted_moment(lo, hi, 0.0, sp, dom, diagonal);

  const MembraneSampler sampler(dom, MembraneSampler::Method::Iterative, 1e-8);
  const int replicas = 500;
  ProductWindow window;
  window.lo = lo;
  window.hi = hi;
  window.height_lo = 0.0;
  double total = 0.0;
  for (int r = 0; r < replicas; ++r) {
    RngStream stream = split_stream(seed, "acceptance-c13", static_cast<uint32_t>(r), 0);
    const std::vector<double> h = sampler.sample(stream);
    const PointMeasure eta = build_eta(dom, h, sp);
    total += integrate(eta, window) / eta.weight;  // atom count in the window
  }
  const double mc = total / replicas;
  const double dev = std::abs(mc / predicted - 1.0);
  return {dev <= 0.25,
          fmt("first-moment count in the centered half-cube at strength 0.5, side 16: "
              "Monte Carlo %.2f vs predicted %.2f, relative deviation %.1f%% (band 25%%)",
              mc, predicted, dev * 100.0)};
}

Outcome criterion_14(std::uint64_t seed) {
  TailConfig cfg;
  cfg.lambda = 0.3;
  cfg.side = 16;
  cfg.shifts = {0.5};
  cfg.replicas = 500;
  cfg.master_seed = seed;
  cfg.method = MembraneSampler::Method::Iterative;
  const TailReport rep = tail_checks(cfg);
  const double rate_target = kPi * cfg.lambda;
  const double rate_dev = std::abs(rep.rate / rate_target - 1.0);
  const double ratio_target = std::exp(-kPi * cfg.lambda * 0.5);
  const double ratio_dev = std::abs(rep.ratios[0] / ratio_target - 1.0);
  const bool pass = rate_dev <= 0.20 && ratio_dev <= 0.15;
  return {pass,
          fmt("overshoot exponential rate %.4f vs asymptotic constant %.4f "
              "(deviation %.1f%%, band 20%%); shifted-count ratio %.4f vs %.4f "
              "(deviation %.1f%%, band 15%%) — at this size the exact Gaussian "
              "values are 1.5337 and 0.4919, approached only logarithmically",
              rep.rate, rate_target, rate_dev * 100.0, rep.ratios[0], ratio_target,
              ratio_dev * 100.0)};
}

Outcome criterion_15(std::uint64_t seed) {
  const int side = 16;
  const double lambda = 0.3;
  const int replicas = 500;
  double mean[3] = {0, 0, 0};
  double se[3] = {0, 0, 0};
  double quad[3] = {0, 0, 0};
  for (int depth = 1; depth <= 2; ++depth) {
    const DyadicTree tree = dyadic_tree(0, depth);
    quad[depth] = zlambda_mean(lambda, cell_sD_values(tree, side), tree.cell_volume(side));
    const YmSampler sampler(tree, side, lambda, 1e-8, MembraneSampler::Method::Iterative);
    double sum = 0.0, ss = 0.0;
    for (int r = 0; r < replicas; ++r) {
      RngStream stream = split_stream(seed, depth == 1 ? "acceptance-c15-m1" : "acceptance-c15-m2",
                                      static_cast<uint32_t>(r), 0);
      const double mass = sampler.sample(stream).total_mass();
      sum += mass;
      ss += mass * mass;
    }
    mean[depth] = sum / replicas;
    const double var = (ss - sum * mean[depth]) / (replicas - 1);
    se[depth] = std::sqrt(var / replicas);
  }
  const DyadicTree base = dyadic_tree(0, 0);
  quad[0] = zlambda_mean(lambda, cell_sD_values(base, side), base.cell_volume(side));
  const double ratio = mean[1] / mean[2];
  const double gap1 = std::abs(mean[1] - quad[1]) / se[1];
  const double gap2 = std::abs(mean[2] - quad[2]) / se[2];
  const bool pass = std::abs(ratio - 1.0) <= 0.10 && gap1 <= 3.0 && gap2 <= 3.0;
  return {pass,
          fmt("multiscale masses at side 16, strength 0.3, 500 replicas: depth-1 mean "
              "%.4f (quadrature %.4f, %.2f SE), depth-2 mean %.4f (quadrature %.4f, "
              "%.2f SE), ratio %.4f (band 1 +- 0.10); depth-0 quadrature %.4f",
              mean[1], quad[1], gap1, mean[2], quad[2], gap2, ratio, quad[0])};
}

Outcome criterion_16(std::uint64_t seed) {
  const Domain dom = Domain::box(4, 10);  // 9^4 interior points
  const double beta = kPi * 0.3;
  const SpectralBasis basis(dom);
  const int full = static_cast<int>(basis.size());
  const int mode_counts[3] = {0, 10, full};
  const int replicas = 1000;
  double gaps[3] = {0, 0, 0};
  double means[3] = {0, 0, 0};
  bool pass = true;
  for (int mi = 0; mi < 3; ++mi) {
    const int modes = mode_counts[mi];
    const std::vector<double> cache = basis.partial_variance(modes);
    double sum = 0.0, ss = 0.0;
    for (int r = 0; r < replicas; ++r) {
      RngStream stream =
          split_stream(seed, "acceptance-c16", static_cast<uint32_t>(r),
                       static_cast<uint32_t>(mi));
      const double mass = spectral_gmc(basis, beta, modes, stream, &cache).total_mass();
      sum += mass;
      ss += mass * mass;
    }
    means[mi] = sum / replicas;
    const double var = std::max(0.0, (ss - sum * means[mi]) / (replicas - 1));
    const double se = std::sqrt(var / replicas);
    if (se == 0.0) {
      gaps[mi] = 0.0;
      pass = pass && std::abs(means[mi] - 1.0) <= 1e-12;
    } else {
      gaps[mi] = std::abs(means[mi] - 1.0) / se;
      pass = pass && gaps[mi] <= 3.0;
    }
  }
  // complete-basis pointwise identity: summed squared modes = Green diagonal
  GreenSolver gs(dom, dense_config());
  const std::vector<double> diag = gs.box_diagonal();
  const std::vector<double> var_full = basis.partial_variance(full);
  double identity = 0.0;
  for (size_t i = 0; i < diag.size(); ++i)
    identity = std::max(identity, std::abs(var_full[i] - diag[i]));
  pass = pass && identity <= 1e-10;
  return {pass,
          fmt("spectral measure normalization on the 9^4-point cube, 1000 replicas: "
              "means %.6f / %.4f / %.4f for 0 / 10 / %d modes (gaps %.2f / %.2f / "
              "%.2f SE, bound 3); complete-basis diagonal identity %.3g (tol 1e-10)",
              means[0], means[1], means[2], full, gaps[0], gaps[1], gaps[2], identity)};
}

Outcome criterion_17(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.kind = ExperimentConfig::Kind::Compare;
  cfg.lambda = 0.3;
  cfg.sizes = {12};
  cfg.depth = 1;
  cfg.replicas = 500;
  cfg.master_seed = seed;
  const ResultSet rs = run(cfg);
  const double ratio = rs.summaries.at("mass_ratio").mean;
  const double dev = std::abs(ratio - 1.0);
  return {dev <= 0.15,
          fmt("mean-mass ratio of the depth-1 multiscale measure vs the reweighted "
              "complete-basis spectral measure at side 12, 500 replicas each: %.4f "
              "(band 1 +- 0.15; exact finite-size ratio 0.9845)",
              ratio)};
}

Outcome criterion_18(std::uint64_t) {
  double worst = 0.0;
  std::string parts;
  for (const int n : {12, 24}) {
    GreenSolver::Config cfg = iterative_config();
    const Domain small = Domain::box(4, n);
    const Domain big = Domain::box(4, 2 * n);
    GreenSolver gs_small(small, cfg);
    GreenSolver gs_big(big, cfg);
    const double g_small = gs_small.diagonal_at(center_of(n));
    const double g_big = gs_big.diagonal_at(center_of(2 * n));
    const double dev = std::abs((g_big - g_small) - kGamma * std::log(2.0));
    worst = std::max(worst, dev);
    parts += fmt("%sresolution %d: |%.4f - %.4f| = %.4f", parts.empty() ? "" : "; ", n,
                 g_big - g_small, kGamma * std::log(2.0), dev);
  }
  return {worst <= 0.1,
          fmt("doubling identity for the diagonal correction at the center (%s; "
              "bound 0.1)",
              parts.c_str())};
}

using CriterionFn = Outcome (*)(std::uint64_t);

struct Entry {
  int id;
  CriterionFn fn;
};

constexpr Entry kCriteria[] = {
    {1, criterion_1},   {2, criterion_2},   {3, criterion_3},   {4, criterion_4},
    {5, criterion_5},   {6, criterion_6},   {7, criterion_7},   {8, criterion_8},
    {9, criterion_9},   {10, criterion_10}, {11, criterion_11}, {12, criterion_12},
    {13, criterion_13}, {14, criterion_14}, {15, criterion_15}, {16, criterion_16},
    {17, criterion_17}, {18, criterion_18},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  std::uint64_t seed = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
      if (only < 1 || only > 18) {
        std::fprintf(stderr, "--only expects a criterion number in [1, 18]\n");
        return 2;
      }
    } else if (arg == "--seed" && i + 1 < argc) {
      seed = std::strtoull(argv[++i], nullptr, 10);
    } else {
      std::fprintf(stderr, "usage: acceptance [--only N] [--seed S]\n");
      return 2;
    }
  }

  int passed = 0, failed = 0;
  for (const Entry& e : kCriteria) {
    if (only != 0 && e.id != only) continue;
    Outcome o;
    try {
      o = e.fn(seed);
    } catch (const std::exception& ex) {
      o = {false, fmt("threw: %s", ex.what())};
    }
    (o.pass ? passed : failed)++;
    std::printf("CRITERION %2d: %s — %s\n", e.id, o.pass ? "PASS" : "FAIL",
                o.text.c_str());
    std::fflush(stdout);
  }
  if (only == 0)
    std::printf("ACCEPTANCE: %d/%d criteria passed\n", passed, passed + failed);
  return failed == 0 ? 0 : 1;
}
