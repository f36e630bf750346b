#include "membrane/gmc.hpp"

#include <cblas.h>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

namespace membrane {

namespace {

void check_alignment(const DyadicTree& tree, int side) {
  const int blocks = 1 << tree.depth;
  if (side <= 0 || side % blocks != 0)
    throw std::invalid_argument("resolution " + std::to_string(side) +
                                " does not align with " + std::to_string(blocks) +
                                " subcube blocks per axis");
  if (side < 4 * blocks)
    throw std::invalid_argument("resolution " + std::to_string(side) +
                                " gives subcubes fewer than four cells per side");
}

double checked_strength(double lambda) {
  if (!(lambda >= 0.0 && lambda < 1.0))
    throw std::invalid_argument("lambda must be in [0, 1)");
  return lambda;
}

double checked_beta(double beta) {
  if (!(beta >= 0.0) || !std::isfinite(beta))
    throw std::invalid_argument("beta must be a finite nonnegative number");
  return beta;
}

// The measures live on the cells of a scaled cube carried by box(4, N).
const Domain& checked_cell_box(const Domain& dom) {
  if (dom.dim() != 4 || dom.kind() != Domain::Kind::Box || dom.resolution() <= 0 ||
      !dom.is_solid_box())
    throw std::invalid_argument("cell grid needs the solid box of a scaled cube");
  return dom;
}

std::vector<DyadicCube> level_cubes(int level) {
  const int b = 1 << level;
  std::vector<DyadicCube> cubes;
  cubes.reserve(static_cast<std::size_t>(b) * b * b * b);
  for (int c0 = 0; c0 < b; ++c0)
    for (int c1 = 0; c1 < b; ++c1)
      for (int c2 = 0; c2 < b; ++c2)
        for (int c3 = 0; c3 < b; ++c3) cubes.push_back(DyadicCube{level, {c0, c1, c2, c3}});
  return cubes;
}

std::unique_ptr<Domain> level_domain_ptr(int level, int side) {
  if (level == 0) return std::make_unique<Domain>(Domain::box(4, side));
  return std::make_unique<Domain>(Domain::dyadic_union(4, level_cubes(level), side));
}

std::size_t cells_of(int side) {
  const auto s = static_cast<std::size_t>(side);
  return s * s * s * s;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

GreenSolver::Config solver_config(MembraneSampler::Method method, double tol) {
  GreenSolver::Config cfg;
  switch (method) {
    case MembraneSampler::Method::Dense: cfg.method = GreenSolver::Method::Dense; break;
    case MembraneSampler::Method::Iterative: cfg.method = GreenSolver::Method::Iterative; break;
    default: cfg.method = GreenSolver::Method::Auto; break;
  }
  cfg.iter_tol = tol;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// DyadicTree
// ---------------------------------------------------------------------------
double DyadicTree::cube_side() const { return std::ldexp(1.0, -base_level); }

double DyadicTree::subcube_side() const { return std::ldexp(1.0, -base_level - depth); }

double DyadicTree::scale_factor(int side) const {
  return std::ldexp(static_cast<double>(side), base_level);
}

double DyadicTree::cell_volume(int side) const {
  const double h = cube_side() / side;
  return h * h * h * h;
}

std::array<int, 4> DyadicTree::subcube_corner(int j) const {
  if (j < 0 || j >= subcube_count()) throw std::out_of_range("subcube index out of range");
  const int b = 1 << depth;
  std::array<int, 4> c{};
  for (int a = 3; a >= 0; --a) {
    c[a] = j % b;
    j /= b;
  }
  return c;
}

int DyadicTree::subcube_of_cell(const std::array<int, 4>& cell, int side) const {
  check_alignment(*this, side);
  const int block = side >> depth;
  const int b = 1 << depth;
  int j = 0;
  for (int a = 0; a < 4; ++a) {
    if (cell[a] < 0 || cell[a] >= side) throw std::out_of_range("cell index out of range");
    j = j * b + cell[a] / block;
  }
  return j;
}

DyadicTree dyadic_tree(int base_level, int depth) {
  if (base_level < 0) throw std::invalid_argument("base level must be >= 0");
  if (depth < 0 || depth > 7) throw std::invalid_argument("depth must be in [0, 7]");
  return DyadicTree{base_level, depth};
}

// ---------------------------------------------------------------------------
// Representative grids
// ---------------------------------------------------------------------------
int cell_representative(int cell, int block) {
  if (block < 2) throw std::invalid_argument("block must span at least two cells");
  if (cell < 0) throw std::invalid_argument("cell index must be nonnegative");
  const int q = cell / block;
  const int t = cell % block;
  return q * block + (2 * t + 1 < block ? t + 1 : t);
}

std::vector<std::size_t> cell_site_indices(int side, int depth) {
  if (depth < 0 || depth > 7) throw std::invalid_argument("depth must be in [0, 7]");
  const int blocks = 1 << depth;
  if (side <= 0 || side % blocks != 0 || side / blocks < 2)
    throw std::invalid_argument("side must be a multiple of 2^depth with at least two cells per block");
  const int block = side / blocks;
  const std::size_t n = static_cast<std::size_t>(side - 1);
  std::vector<std::size_t> rep(static_cast<std::size_t>(side));
  for (int i = 0; i < side; ++i)
    rep[static_cast<std::size_t>(i)] = static_cast<std::size_t>(cell_representative(i, block) - 1);
  std::vector<std::size_t> out(cells_of(side));
  std::size_t c = 0;
  for (int c0 = 0; c0 < side; ++c0)
    for (int c1 = 0; c1 < side; ++c1)
      for (int c2 = 0; c2 < side; ++c2)
        for (int c3 = 0; c3 < side; ++c3)
          out[c++] = ((rep[c0] * n + rep[c1]) * n + rep[c2]) * n + rep[c3];
  return out;
}

// ---------------------------------------------------------------------------
// LayerSampler
// ---------------------------------------------------------------------------
LayerSampler::LayerSampler(const DyadicTree& tree, int side, double tol,
                           MembraneSampler::Method method)
    : tree_(tree), side_(side) {
  check_alignment(tree, side);
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  domains_.resize(static_cast<std::size_t>(tree.depth) + 1);
  samplers_.resize(static_cast<std::size_t>(tree.depth));
  solvers_.resize(static_cast<std::size_t>(tree.depth) + 1);
  scatter_.resize(static_cast<std::size_t>(tree.depth) + 1);
  for (int j = 0; j <= tree.depth; ++j) {
    domains_[j] = level_domain_ptr(j, side);
    // per axis the union keeps side-1 interior coordinates minus 2^j - 1 seams
    const auto per_axis = static_cast<std::size_t>(side - (1 << j));
    const std::size_t expected = per_axis * per_axis * per_axis * per_axis;
    if (domains_[j]->size() != expected)
      throw std::logic_error("subcube union has unexpected point count");
  }
  for (int j = 0; j < tree.depth; ++j)
    samplers_[j] = std::make_unique<MembraneSampler>(*domains_[j], method, tol);
  for (int j = 1; j <= tree.depth; ++j)
    solvers_[j] = std::make_unique<GreenSolver>(*domains_[j], solver_config(method, tol));
  for (int j = 0; j <= tree.depth; ++j) {
    auto& sc = scatter_[j];
    sc.resize(domains_[j]->size());
    for (std::size_t i = 0; i < sc.size(); ++i) {
      const int64_t gi = domains_[0]->index_of(domains_[j]->point(i));
      if (gi < 0) throw std::logic_error("union point missing from the base grid");
      sc[i] = static_cast<std::size_t>(gi);
    }
  }
}

const Domain& LayerSampler::level_domain(int j) const {
  if (j < 0 || j > tree_.depth) throw std::out_of_range("level out of range");
  return *domains_[static_cast<std::size_t>(j)];
}

CoarseGaussianLayer LayerSampler::sample_layer(int j, RngStream& stream) const {
  if (j < 1 || j > tree_.depth) throw std::out_of_range("layer level out of range");
  const auto h = samplers_[j - 1]->sample(stream);
  const auto phi = conditional_mean(*domains_[j - 1], h, *solvers_[j]);
  CoarseGaussianLayer layer;
  layer.level = j;
  layer.values.assign(domains_[0]->size(), 0.0);
  const auto& sc = scatter_[j];
  for (std::size_t i = 0; i < phi.size(); ++i) layer.values[sc[i]] = phi[i];
  layer.provenance = "conditional mean of an independent sample, level " +
                     std::to_string(j - 1) + " union onto level " + std::to_string(j) +
                     " union, resolution " + std::to_string(side_);
  return layer;
}

std::vector<CoarseGaussianLayer> LayerSampler::sample(RngStream& stream) const {
  std::vector<CoarseGaussianLayer> layers;
  layers.reserve(static_cast<std::size_t>(tree_.depth));
  for (int j = 1; j <= tree_.depth; ++j) layers.push_back(sample_layer(j, stream));
  return layers;
}

std::vector<CoarseGaussianLayer> sample_phi_layers(const DyadicTree& tree, int side,
                                                   RngStream& stream) {
  return LayerSampler(tree, side).sample(stream);
}

// ---------------------------------------------------------------------------
// Green-diagonal grids
// ---------------------------------------------------------------------------
std::vector<double> symmetric_diagonal(const GreenSolver& solver) {
  const Domain& dom = solver.domain();
  const int N = dom.resolution();
  if (N <= 0)
    throw std::invalid_argument("symmetric diagonal needs a domain built from a scaled cube");
  const int dim = dom.dim();
  for (std::size_t i = 0; i < dom.size(); ++i) {
    const Point& p = dom.point(i);
    for (int a = 0; a < dim; ++a) {
      Point r = p;
      r[a] = N - p[a];
      if (!dom.contains(r))
        throw std::invalid_argument("domain is not symmetric under axis reflections");
    }
    for (int a = 0; a + 1 < dim; ++a) {
      Point t = p;
      std::swap(t.c[a], t.c[a + 1]);
      if (!dom.contains(t))
        throw std::invalid_argument("domain is not symmetric under coordinate permutations");
    }
  }
  std::map<std::array<int, 4>, std::vector<std::size_t>> orbits;
  for (std::size_t i = 0; i < dom.size(); ++i) {
    const Point& p = dom.point(i);
    std::array<int, 4> key{};
    for (int a = 0; a < dim; ++a) key[a] = std::min(p[a], N - p[a]);
    std::sort(key.begin(), key.end(), std::greater<int>());
    orbits[key].push_back(i);
  }
  std::vector<double> diag(dom.size());
  for (const auto& [key, members] : orbits) {
    const double v = solver.diagonal_at(dom.point(members.front()));
    for (const std::size_t i : members) diag[i] = v;
  }
  return diag;
}

namespace {

std::vector<double> rep_grid_s(const DyadicTree& tree, int side, double tol, bool subcube_domain) {
  check_alignment(tree, side);
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  const auto dom = level_domain_ptr(subcube_domain ? tree.depth : 0, side);
  GreenSolver::Config cfg;
  cfg.method = GreenSolver::Method::Iterative;
  cfg.iter_tol = tol;
  const GreenSolver gs(*dom, cfg);
  const std::vector<double> diag = symmetric_diagonal(gs);
  const double shift = kGamma * std::log(tree.scale_factor(side));
  const int block = side >> tree.depth;
  std::vector<int> rep(static_cast<std::size_t>(side));
  for (int i = 0; i < side; ++i) rep[static_cast<std::size_t>(i)] = cell_representative(i, block);
  std::vector<double> out(cells_of(side));
  std::size_t c = 0;
  for (int c0 = 0; c0 < side; ++c0)
    for (int c1 = 0; c1 < side; ++c1)
      for (int c2 = 0; c2 < side; ++c2)
        for (int c3 = 0; c3 < side; ++c3) {
          const Point p{rep[c0], rep[c1], rep[c2], rep[c3]};
          const int64_t idx = dom->index_of(p);
          if (idx < 0) throw std::logic_error("cell representative missing from the domain");
          out[c++] = diag[static_cast<std::size_t>(idx)] - shift;
        }
  return out;
}

}  // namespace

std::vector<double> cell_s_values(const DyadicTree& tree, int side, double tol) {
  return rep_grid_s(tree, side, tol, /*subcube_domain=*/true);
}

std::vector<double> cell_sD_values(const DyadicTree& tree, int side, double tol) {
  return rep_grid_s(tree, side, tol, /*subcube_domain=*/false);
}

// ---------------------------------------------------------------------------
// GmcMeasure
// ---------------------------------------------------------------------------
double GmcMeasure::total_mass() const {
  double sum = 0.0;
  for (const double w : weights) sum += w;
  return sum;
}

std::string GmcMeasure::meta_json() const {
  std::ostringstream os;
  os << "{\"kind\":\"" << (kind == Kind::Multiscale ? "multiscale" : "spectral") << "\"";
  os << ",\"side\":" << side;
  if (kind == Kind::Multiscale)
    os << ",\"depth\":" << depth << ",\"lambda\":" << fmt17(strength);
  else
    os << ",\"mode_count\":" << mode_count << ",\"beta\":" << fmt17(strength);
  os << ",\"cell_volume\":" << fmt17(cell_volume) << ",\"cells\":" << weights.size() << "}";
  return os.str();
}

// ---------------------------------------------------------------------------
// Multiscale measure
// ---------------------------------------------------------------------------
GmcMeasure build_Ym(const DyadicTree& tree, int side,
                    const std::vector<CoarseGaussianLayer>& layers,
                    const std::vector<double>& cell_s, double lambda) {
  check_alignment(tree, side);
  checked_strength(lambda);
  if (static_cast<int>(layers.size()) != tree.depth)
    throw std::invalid_argument("layer count " + std::to_string(layers.size()) +
                                " does not match tree depth " + std::to_string(tree.depth));
  const std::size_t n = static_cast<std::size_t>(side - 1);
  const std::size_t grid = n * n * n * n;
  for (int j = 0; j < tree.depth; ++j) {
    if (layers[j].level != j + 1)
      throw std::invalid_argument("layers must be ordered by level 1..depth");
    if (layers[j].values.size() != grid)
      throw std::invalid_argument("layer grid does not match the resolution");
  }
  const std::size_t cells = cells_of(side);
  if (cell_s.size() != cells)
    throw std::invalid_argument("per-cell s grid has " + std::to_string(cell_s.size()) +
                                " entries, expected " + std::to_string(cells));
  for (std::size_t c = 0; c < cells; ++c)
    if (!std::isfinite(cell_s[c]))
      throw std::invalid_argument("missing s estimate for cell " + std::to_string(c));

  const auto sites = cell_site_indices(side, tree.depth);
  GmcMeasure mu;
  mu.kind = GmcMeasure::Kind::Multiscale;
  mu.side = side;
  mu.depth = tree.depth;
  mu.mode_count = 0;
  mu.strength = lambda;
  mu.cell_volume = tree.cell_volume(side);
  mu.weights.resize(cells);
  const double s_coeff = 4.0 * lambda * lambda / kGamma;
  const double field_coeff = kPi * lambda;
  const double prefactor = mu.cell_volume * std::sqrt(kPi) / 4.0;
  for (std::size_t c = 0; c < cells; ++c) {
    double phi = 0.0;
    for (const auto& layer : layers) phi += layer.values[sites[c]];
    mu.weights[c] = prefactor * std::exp(field_coeff * phi + s_coeff * cell_s[c]);
  }
  return mu;
}

double zlambda_mean(double lambda, const std::vector<double>& cell_s, double cell_volume) {
  checked_strength(lambda);
  if (cell_s.empty())
    throw std::invalid_argument("insufficient grid coverage: empty s grid");
  if (!(cell_volume > 0.0) || !std::isfinite(cell_volume))
    throw std::invalid_argument("cell volume must be positive");
  const double s_coeff = 4.0 * lambda * lambda / kGamma;
  double sum = 0.0;
  for (std::size_t c = 0; c < cell_s.size(); ++c) {
    if (!std::isfinite(cell_s[c]))
      throw std::invalid_argument("insufficient grid coverage: missing s estimate for cell " +
                                  std::to_string(c));
    sum += std::exp(s_coeff * cell_s[c]);
  }
  return std::sqrt(kPi) / 4.0 * cell_volume * sum;
}

YmSampler::YmSampler(const DyadicTree& tree, int side, double lambda, double tol,
                     MembraneSampler::Method method)
    : lambda_(checked_strength(lambda)),
      layers_(tree, side, tol, method),
      cell_s_(cell_s_values(tree, side, tol)) {}

GmcMeasure YmSampler::sample(RngStream& stream) const {
  return build_Ym(layers_.tree(), layers_.side(), layers_.sample(stream), cell_s_, lambda_);
}

// ---------------------------------------------------------------------------
// Spectral construction
// ---------------------------------------------------------------------------
SpectralBasis::SpectralBasis(const Domain& dom) : dom_(&dom), n_(dom.size()) {
  if (n_ > kMaxPoints)
    throw std::invalid_argument("domain has " + std::to_string(n_) +
                                " points; the dense eigendecomposition is capped at " +
                                std::to_string(kMaxPoints));
  const Precision A(dom);
  modes_.resize(n_ * n_);
  A.dense(modes_.data());
  evals_.resize(n_);
  const lapack_int n = static_cast<lapack_int>(n_);
  const lapack_int info =
      LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n, modes_.data(), n, evals_.data());
  if (info != 0)
    throw std::runtime_error("eigendecomposition failed: dsyevd info " + std::to_string(info));
  if (!(evals_.front() > 0.0))
    throw std::runtime_error("precision operator is not positive definite");
  for (std::size_t k = 0; k < n_; ++k)
    cblas_dscal(static_cast<int>(n_), 1.0 / std::sqrt(evals_[k]), modes_.data() + k * n_, 1);
}

std::vector<double> SpectralBasis::partial_field(const std::vector<double>& z,
                                                 int mode_count) const {
  if (mode_count < 0 || static_cast<std::size_t>(mode_count) > n_)
    throw std::invalid_argument("mode count exceeds basis size");
  if (z.size() < static_cast<std::size_t>(mode_count))
    throw std::invalid_argument("coefficient vector shorter than the mode count");
  std::vector<double> out(n_, 0.0);
  if (mode_count > 0)
    cblas_dgemv(CblasColMajor, CblasNoTrans, static_cast<int>(n_), mode_count, 1.0, modes_.data(),
                static_cast<int>(n_), z.data(), 1, 0.0, out.data(), 1);
  return out;
}

std::vector<double> SpectralBasis::partial_variance(int mode_count) const {
  if (mode_count < 0 || static_cast<std::size_t>(mode_count) > n_)
    throw std::invalid_argument("mode count exceeds basis size");
  std::vector<double> var(n_, 0.0);
  for (std::size_t k = 0; k < static_cast<std::size_t>(mode_count); ++k) {
    const double* col = modes_.data() + k * n_;
    for (std::size_t i = 0; i < n_; ++i) var[i] += col[i] * col[i];
  }
  return var;
}

GmcMeasure spectral_gmc(const SpectralBasis& basis, double beta, int mode_count,
                        RngStream& stream, const std::vector<double>* variance_cache) {
  const Domain& dom = checked_cell_box(basis.domain());
  checked_beta(beta);
  if (mode_count < 0 || static_cast<std::size_t>(mode_count) > basis.size())
    throw std::invalid_argument("mode count exceeds basis size");
  std::vector<double> z(static_cast<std::size_t>(mode_count));
  stream.fill_normals(z);
  const std::vector<double> phi = basis.partial_field(z, mode_count);
  std::vector<double> var_local;
  const std::vector<double>* var = variance_cache;
  if (var == nullptr) {
    var_local = basis.partial_variance(mode_count);
    var = &var_local;
  } else if (var->size() != basis.size()) {
    throw std::invalid_argument("variance cache does not match the basis size");
  }
  const int side = dom.resolution();
  const auto sites = cell_site_indices(side, 0);
  GmcMeasure mu;
  mu.kind = GmcMeasure::Kind::Spectral;
  mu.side = side;
  mu.depth = 0;
  mu.mode_count = mode_count;
  mu.strength = beta;
  const double h = 1.0 / side;
  mu.cell_volume = h * h * h * h;
  mu.weights.resize(cells_of(side));
  for (std::size_t c = 0; c < mu.weights.size(); ++c) {
    const std::size_t i = sites[c];
    mu.weights[c] = mu.cell_volume * std::exp(beta * phi[i] - 0.5 * beta * beta * (*var)[i]);
  }
  return mu;
}

GmcMeasure spectral_gmc(const Domain& dom, double beta, int mode_count, RngStream& stream) {
  const SpectralBasis basis(checked_cell_box(dom));
  return spectral_gmc(basis, beta, mode_count, stream);
}

DirectSpectralSampler::DirectSpectralSampler(const Domain& dom, double beta, double tol)
    : beta_(checked_beta(beta)),
      sampler_(checked_cell_box(dom), MembraneSampler::Method::Iterative, tol),
      site_var_(sampler_.solver().box_diagonal()),
      sites_(cell_site_indices(dom.resolution(), 0)) {}

GmcMeasure DirectSpectralSampler::sample(RngStream& stream) const {
  const std::vector<double> h = sampler_.sample(stream);
  const int side = domain().resolution();
  GmcMeasure mu;
  mu.kind = GmcMeasure::Kind::Spectral;
  mu.side = side;
  mu.depth = 0;
  mu.mode_count = static_cast<int>(domain().size());
  mu.strength = beta_;
  const double step = 1.0 / side;
  mu.cell_volume = step * step * step * step;
  mu.weights.resize(cells_of(side));
  for (std::size_t c = 0; c < mu.weights.size(); ++c) {
    const std::size_t i = sites_[c];
    mu.weights[c] = mu.cell_volume * std::exp(beta_ * h[i] - 0.5 * beta_ * beta_ * site_var_[i]);
  }
  return mu;
}

// ---------------------------------------------------------------------------
// Cross-construction comparison
// ---------------------------------------------------------------------------
GmcMeasure reweight_spectral(const GmcMeasure& spectral, double lambda,
                             const std::vector<double>& cell_s) {
  if (spectral.kind != GmcMeasure::Kind::Spectral)
    throw std::invalid_argument("reweighting applies to spectral measures");
  checked_strength(lambda);
  if (cell_s.size() != spectral.weights.size())
    throw std::invalid_argument("mismatched resolution: s grid has " +
                                std::to_string(cell_s.size()) + " cells, the measure has " +
                                std::to_string(spectral.weights.size()));
  GmcMeasure out = spectral;
  const double s_coeff = 4.0 * lambda * lambda / kGamma;
  const double prefactor = std::sqrt(kPi) / 4.0;
  for (std::size_t c = 0; c < out.weights.size(); ++c) {
    if (!std::isfinite(cell_s[c]))
      throw std::invalid_argument("missing s estimate for cell " + std::to_string(c));
    out.weights[c] *= prefactor * std::exp(s_coeff * cell_s[c]);
  }
  return out;
}

namespace {

void mean_stderr(const std::vector<double>& xs, double& mean, double& se) {
  mean = 0.0;
  for (const double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  se = 0.0;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (const double x : xs) ss += (x - mean) * (x - mean);
    se = std::sqrt(ss / (static_cast<double>(xs.size()) - 1.0) / static_cast<double>(xs.size()));
  }
}

}  // namespace

ComparisonStats compare_constructions(const std::vector<double>& masses_a,
                                      const std::vector<double>& masses_b) {
  if (masses_a.empty() || masses_b.empty())
    throw std::invalid_argument("comparison needs at least one mass sample per family");
  ComparisonStats st;
  st.count_a = masses_a.size();
  st.count_b = masses_b.size();
  mean_stderr(masses_a, st.mean_a, st.stderr_a);
  mean_stderr(masses_b, st.mean_b, st.stderr_b);
  st.mean_ratio = st.mean_a / st.mean_b;
  std::vector<double> a = masses_a;
  std::vector<double> b = masses_b;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  st.ks_statistic = d;
  return st;
}

}  // namespace membrane
