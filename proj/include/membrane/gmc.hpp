// ============================================================================
// Multiscale and spectral approximations of the multiplicative-chaos measure
// attached to the membrane field.
//
//   * DyadicTree — recursive 16-fold subdivision of a dyadic base cube into
//     subcubes of side 2^{-base_level-depth}.
//   * LayerSampler / sample_phi_layers — telescoping coarse-field layers:
//     layer j is the biharmonic extension (conditional mean) of an
//     independent membrane sample on the level-(j-1) subcube union onto the
//     level-j union; layers are mutually independent by construction and
//     their sum has the covariance of the coarse field between the base box
//     and the level-depth union.
//   * symmetric_diagonal / cell_s_values / cell_sD_values — log-corrected
//     Green diagonals s = G(p,p) - gamma*log(scale) on per-cell
//     representative grids, one linear solve per symmetry orbit.
//   * build_Ym — the multiscale measure: cell weight = cellvol * sqrt(pi)/4
//     * exp(pi*lambda*Phi(rep) + (4*lambda^2/gamma)*s_subcube(rep)).
//     With s_subcube taken from the union-domain diagonal (cell_s_values),
//     the mean cell weight equals cellvol * sqrt(pi)/4 *
//     exp((4*lambda^2/gamma)*s_base(rep)) exactly at every depth — the
//     martingale-mean identity holds on the lattice, not just in the limit.
//   * zlambda_mean — sqrt(pi)/4 * quadrature of exp((4*lambda^2/gamma)*s);
//     applied to cell_sD_values it gives the exact mean total mass of the
//     matching multiscale measure.
//   * SpectralBasis / spectral_gmc — partial sums over precision-operator
//     eigenmodes (unit operator norm, smoothest first); cell density
//     exp(beta*phi_n - beta^2*Var[phi_n]/2).
//   * DirectSpectralSampler — the complete-basis measure via its closed form
//     exp(beta*h - beta^2*G(x,x)/2): with every mode included the partial
//     sum is the field itself, so no eigendecomposition is needed; usable on
//     grids too large for a dense solve.
//   * reweight_spectral / compare_constructions — cross-construction
//     comparison of total-mass samples (mean ratio, two-sample
//     Kolmogorov-Smirnov statistic).
//
// Grid conventions. A measure at resolution N lives on the N^4 cells of the
// base cube, indexed lexicographically by (c0,c1,c2,c3) with axis 0 slowest.
// Cell c is evaluated at its lattice representative: per axis, within a
// block of B = N/2^depth cells, cell i maps to the interior point
//   rep(i) = (i/B)*B + (t+1 if 2t+1 < B else t),  t = i mod B,
// the grid point nearest the cell center, ties resolved toward the block
// center. Representatives never touch block seams or the domain boundary,
// and the two cells adjacent to a block midline share one representative.
// ============================================================================
#pragma once

#include "membrane/field.hpp"
#include "membrane/green.hpp"
#include "membrane/lattice.hpp"
#include "membrane/rng.hpp"

#include <array>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace membrane {

// ---------------------------------------------------------------------------
// Dyadic subdivision geometry
// ---------------------------------------------------------------------------
struct DyadicTree {
  int base_level = 0;  // base cube (0, 2^-base_level)^4
  int depth = 0;       // subdivision depth; 16^depth subcubes

  int subcube_count() const { return 1 << (4 * depth); }
  double cube_side() const;     // 2^-base_level
  double subcube_side() const;  // 2^-(base_level+depth)
  // lattice sites per unit length when the base cube carries side cells/axis
  double scale_factor(int side) const;
  double cell_volume(int side) const;  // (cube_side/side)^4
  // corner of subcube j in units of the subcube side, components in
  // [0, 2^depth); j is lexicographic with axis 0 slowest
  std::array<int, 4> subcube_corner(int j) const;
  // subcube containing a cell of the resolution-side grid
  int subcube_of_cell(const std::array<int, 4>& cell, int side) const;
};

// Throws std::invalid_argument unless base_level >= 0 and 0 <= depth <= 7.
DyadicTree dyadic_tree(int base_level, int depth);

// Per-axis lattice representative of cell i (0-based) within blocks of
// `block` cells; see the header comment for the convention.
int cell_representative(int cell, int block);

// Flat index into the box(4, side) point order of each cell's
// representative, blocks of side/2^depth cells per axis; size side^4.
std::vector<std::size_t> cell_site_indices(int side, int depth);

// ---------------------------------------------------------------------------
// Coarse-field layers
// ---------------------------------------------------------------------------
struct CoarseGaussianLayer {
  int level = 0;               // j in 1..depth
  std::vector<double> values;  // per interior grid point of box(4, side), in
                               // domain point order; zero at points the
                               // level-j union excludes (seams)
  std::string provenance;
};

// Shares the per-level domains, samplers and solvers across replicas. The
// level-j domain is the union of the 16^j open subcube interiors realized on
// the lattice (the full box at level 0); layer j is the conditional mean of
// an independent membrane sample on level j-1 given its values off level j.
class LayerSampler {
 public:
  // Throws std::invalid_argument unless side is divisible by 2^depth and
  // side >= 4*2^depth (at least four cells per subcube side).
  LayerSampler(const DyadicTree& tree, int side, double tol = 1e-8,
               MembraneSampler::Method method = MembraneSampler::Method::Auto);

  const DyadicTree& tree() const { return tree_; }
  int side() const { return side_; }
  // j in [0, depth]
  const Domain& level_domain(int j) const;
  // One independent layer j (j in [1, depth]); consumes one membrane sample.
  CoarseGaussianLayer sample_layer(int j, RngStream& stream) const;
  // All depth layers in level order from one stream.
  std::vector<CoarseGaussianLayer> sample(RngStream& stream) const;

 private:
  DyadicTree tree_;
  int side_ = 0;
  std::vector<std::unique_ptr<Domain>> domains_;           // levels 0..depth
  std::vector<std::unique_ptr<MembraneSampler>> samplers_; // on level j-1 for layer j
  std::vector<std::unique_ptr<GreenSolver>> solvers_;      // on level j for layer j
  std::vector<std::vector<std::size_t>> scatter_;          // level-j point -> grid index
};

// One-shot convenience wrapper around LayerSampler.
std::vector<CoarseGaussianLayer> sample_phi_layers(const DyadicTree& tree, int side,
                                                   RngStream& stream);

// ---------------------------------------------------------------------------
// Green-diagonal grids
// ---------------------------------------------------------------------------
// Full diagonal of the solver's domain, one solve per orbit of the symmetry
// group generated by axis reflections x_a -> N - x_a and coordinate
// permutations. Throws std::invalid_argument if the domain is not invariant
// under those generators.
std::vector<double> symmetric_diagonal(const GreenSolver& solver);

// Per-cell subcube s values: s(cell) = G_U(rep,rep) - gamma*log(scale) with
// U the level-depth subcube union (the base box at depth 0) and scale =
// side*2^base_level. This is the s grid build_Ym expects.
std::vector<double> cell_s_values(const DyadicTree& tree, int side, double tol = 1e-8);

// Per-cell base-domain s values on the same depth-matched representative
// grid: s(cell) = G_box(rep,rep) - gamma*log(scale). Feeding these to
// zlambda_mean gives the exact mean total mass of the depth-matched
// multiscale measure.
std::vector<double> cell_sD_values(const DyadicTree& tree, int side, double tol = 1e-8);

// ---------------------------------------------------------------------------
// Measures
// ---------------------------------------------------------------------------
struct GmcMeasure {
  enum class Kind { Multiscale, Spectral };

  Kind kind = Kind::Multiscale;
  int side = 0;        // cells per axis
  int depth = 0;       // multiscale: subdivision depth
  int mode_count = 0;  // spectral: number of modes in the partial sum
  double strength = 0.0;     // multiscale: lambda; spectral: beta
  double cell_volume = 0.0;  // volume of one grid cell
  std::vector<double> weights;  // side^4 cell weights, axis 0 slowest

  double total_mass() const;
  std::string meta_json() const;  // {"kind":...,...} with 17-digit numbers
};

// Multiscale measure from sampled layers and a per-cell subcube s grid.
// Throws std::invalid_argument if the layer list does not match the tree
// depth or the grid size, if an s estimate is missing (non-finite), or if
// lambda is outside [0, 1).
GmcMeasure build_Ym(const DyadicTree& tree, int side,
                    const std::vector<CoarseGaussianLayer>& layers,
                    const std::vector<double>& cell_s, double lambda);

// sqrt(pi)/4 * cell_volume * sum over cells of exp((4*lambda^2/gamma)*s).
// Throws std::invalid_argument on an empty or non-finite grid ("insufficient
// grid coverage") or lambda outside [0, 1).
double zlambda_mean(double lambda, const std::vector<double>& cell_s, double cell_volume);

// Bundles the layer sampler and the subcube s grid for replicated draws.
class YmSampler {
 public:
  YmSampler(const DyadicTree& tree, int side, double lambda, double tol = 1e-8,
            MembraneSampler::Method method = MembraneSampler::Method::Auto);

  const DyadicTree& tree() const { return layers_.tree(); }
  const LayerSampler& layers() const { return layers_; }
  const std::vector<double>& cell_s() const { return cell_s_; }
  double lambda() const { return lambda_; }
  GmcMeasure sample(RngStream& stream) const;

 private:
  double lambda_ = 0.0;
  LayerSampler layers_;
  std::vector<double> cell_s_;
};

// ---------------------------------------------------------------------------
// Spectral construction
// ---------------------------------------------------------------------------
// Dense eigendecomposition of the precision operator. Mode k is the k-th
// eigenvector scaled to unit operator norm, f_k = v_k / sqrt(w_k), so that
// the field sum_k Z_k f_k (Z_k standard normal) has covariance G; modes are
// ordered by increasing eigenvalue (smoothest first).
class SpectralBasis {
 public:
  static constexpr std::size_t kMaxPoints = 15000;

  // Throws std::invalid_argument if the domain exceeds kMaxPoints points.
  explicit SpectralBasis(const Domain& dom);
  SpectralBasis(Domain&&) = delete;

  const Domain& domain() const { return *dom_; }
  std::size_t size() const { return n_; }
  const std::vector<double>& eigenvalues() const { return evals_; }  // ascending
  // f_k at domain point i; modes stored column-major
  double mode_value(int k, std::size_t i) const { return modes_[static_cast<std::size_t>(k) * n_ + i]; }
  const std::vector<double>& modes() const { return modes_; }
  // phi_n = sum_{k < mode_count} z[k] f_k over the domain points
  std::vector<double> partial_field(const std::vector<double>& z, int mode_count) const;
  // Var[phi_n] = sum_{k < mode_count} f_k(x)^2 per domain point
  std::vector<double> partial_variance(int mode_count) const;

 private:
  const Domain* dom_;
  std::size_t n_ = 0;
  std::vector<double> evals_;
  std::vector<double> modes_;
};

// Spectral partial-sum measure on the unit cube carried by box(4, side):
// cell weight = cellvol * exp(beta*phi_n(rep) - beta^2*Var[phi_n(rep)]/2)
// with phi_n the mode_count-term partial sum (computed by summing modes,
// also when mode_count equals the basis size). Throws std::invalid_argument
// if mode_count is negative or exceeds the basis size, or if the basis
// domain is not a solid box. variance_cache, when given, must be the
// matching partial_variance(mode_count) (replica loops avoid recomputing it).
GmcMeasure spectral_gmc(const SpectralBasis& basis, double beta, int mode_count,
                        RngStream& stream,
                        const std::vector<double>* variance_cache = nullptr);
// One-shot wrapper: eigendecomposes dom on every call.
GmcMeasure spectral_gmc(const Domain& dom, double beta, int mode_count, RngStream& stream);

// Complete-basis spectral measure through its closed-form density
// exp(beta*h(rep) - beta^2*G(rep,rep)/2), h a membrane sample. Iterative
// sampling path; the diagonal comes from orbit-reduced solves.
class DirectSpectralSampler {
 public:
  DirectSpectralSampler(const Domain& dom, double beta, double tol = 1e-8);
  DirectSpectralSampler(Domain&&, double, double = 1e-8) = delete;

  const Domain& domain() const { return sampler_.domain(); }
  double beta() const { return beta_; }
  // G(p,p) per domain point
  const std::vector<double>& site_variance() const { return site_var_; }
  GmcMeasure sample(RngStream& stream) const;

 private:
  double beta_ = 0.0;
  MembraneSampler sampler_;
  std::vector<double> site_var_;
  std::vector<std::size_t> sites_;
};

// ---------------------------------------------------------------------------
// Cross-construction comparison
// ---------------------------------------------------------------------------
// Multiplies spectral cell weights by the closed-form prefactor
// sqrt(pi)/4 * exp((4*lambda^2/gamma)*s(cell)). Throws std::invalid_argument
// for a non-spectral input or a grid size mismatch ("mismatched resolution").
GmcMeasure reweight_spectral(const GmcMeasure& spectral, double lambda,
                             const std::vector<double>& cell_s);

struct ComparisonStats {
  std::size_t count_a = 0, count_b = 0;
  double mean_a = 0.0, mean_b = 0.0;
  double stderr_a = 0.0, stderr_b = 0.0;
  double mean_ratio = 0.0;     // mean_a / mean_b
  double ks_statistic = 0.0;   // two-sample sup |F_a - F_b|
};

// Compares two families of total-mass samples. Throws std::invalid_argument
// if either family is empty.
ComparisonStats compare_constructions(const std::vector<double>& masses_a,
                                      const std::vector<double>& masses_b);

}  // namespace membrane
