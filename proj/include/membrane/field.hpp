// ============================================================================
// Sampling the membrane model and its conditional structure.
//
//   * MembraneSampler — exact Gaussian sampling with covariance G = A^{-1}:
//     dense path h = U^{-1} z (Cholesky), iterative path h = A^{-1} B^T xi
//     where B holds the free-Laplacian rows at every site touching the
//     domain, so that B^T B = A exactly and Cov(h) = A^{-1} B^T B A^{-1} = G.
//   * BasisSampler — Gram–Schmidt orthonormalization of coordinate
//     indicators under <f,g> = sum_z (Lap f)(z) (Lap g)(z); the resulting
//     basis reproduces the Green function as sum_n phi_n(x) phi_n(y).
//   * conditional_mean — biharmonic extension: given field values outside a
//     subdomain (and zero outside the ambient domain), the conditional
//     expectation inside solves A_UU phi = -A_{U,rest} h_rest.
//   * gibbs_markov_split — h^V decomposed as independent h^U + phi.
//   * CoarseFieldEvaluator — S_k(x): the conditional mean at x given the
//     field outside the k-th concentric box, for the full box hierarchy.
// ============================================================================
#pragma once

#include "membrane/green.hpp"
#include "membrane/lattice.hpp"
#include "membrane/rng.hpp"

#include <memory>
#include <vector>

namespace membrane {

class MembraneSampler {
 public:
  enum class Method { Auto, Dense, Iterative };

  MembraneSampler(const Domain& dom, Method method, double tol);
  explicit MembraneSampler(const Domain& dom) : MembraneSampler(dom, Method::Auto, 1e-8) {}
  MembraneSampler(Domain&&, Method, double) = delete;
  explicit MembraneSampler(Domain&&) = delete;

  const Domain& domain() const { return *dom_; }
  bool dense_path() const { return dense_; }
  // shared solver on the same domain (dense factor or preconditioner reused)
  const GreenSolver& solver() const { return gs_; }

  // One centered Gaussian field with covariance G, deterministic given the
  // stream state; values in domain index order.
  std::vector<double> sample(RngStream& stream) const;

 private:
  const Domain* dom_;
  bool dense_ = false;
  GreenSolver gs_;
  // iterative path: sites within nearest-neighbor distance 1 of the domain
  // (where the free Laplacian of a domain-supported field lives)
  std::vector<int64_t> site_flat_;   // flat indices into the padded grid
  Point plo_, phi_;
  std::array<int64_t, kMaxDim> pstride_{};
  int64_t psize_ = 0;
  std::vector<int64_t> dom_flat_;
};

class BasisSampler {
 public:
  static constexpr size_t kMaxPoints = 2000;

  explicit BasisSampler(const Domain& dom);  // throws std::invalid_argument if too large
  explicit BasisSampler(Domain&&) = delete;

  const Domain& domain() const { return *dom_; }
  size_t size() const { return n_; }
  // column-major n x n; column k is the k-th orthonormal basis function
  const std::vector<double>& basis() const { return phi_; }
  // <phi_i, phi_j> under the squared-Laplacian inner product
  double gram_entry(size_t i, size_t j) const;
  // sum_n phi_n(x) phi_n(y), which reproduces the Green function
  double green_sum(size_t xi, size_t yi) const;
  std::vector<double> sample(RngStream& stream) const;

 private:
  const Domain* dom_;
  size_t n_ = 0;
  std::vector<double> phi_;    // basis columns
  std::vector<double> aphi_;   // A * basis columns (for Gram checks)
};

// Biharmonic extension into U = solver_U.domain() of the data h_V given on
// the ambient domain V (entries of h_V on U itself are ignored; the field is
// zero outside V). Returns values over U in U's index order.
std::vector<double> conditional_mean(const Domain& V, const std::vector<double>& h_V,
                                     const GreenSolver& solver_U);

// Convenience for the single-site case: the stencil-ratio weights
// -A(x,y)/A(x,x) applied to the given neighbor data.
double conditional_mean_single(const Domain& V, const std::vector<double>& h_V,
                               const Point& x);

struct GibbsMarkov {
  std::vector<double> h_U;  // independent field on U
  std::vector<double> phi;  // biharmonic extension of an ambient field, on U
};

// Draws h^V and an independent h^U from one stream and returns (h_U, phi)
// with phi the conditional mean of h^V given its values off U. The sum
// h_U + phi has the law of h^V restricted to U.
GibbsMarkov gibbs_markov_split(const MembraneSampler& sampler_V,
                               const MembraneSampler& sampler_U, RngStream& stream);

// S_k(x) for the concentric box hierarchy around x: S_0(x) = h(x),
// S_k(x) = conditional mean of h given the field outside the k-th box,
// S_{n(x)}(x) = 0.
class CoarseFieldEvaluator {
 public:
  CoarseFieldEvaluator(const Domain& D, const Point& x, double tol = 1e-8);
  CoarseFieldEvaluator(Domain&&, const Point&, double = 1e-8) = delete;

  int levels() const { return hier_.n_x; }
  const BoxHierarchy& hierarchy() const { return hier_; }
  // S_k for k in [k_min, k_max] (inclusive), given a field over D
  std::vector<double> evaluate(const std::vector<double>& h, int k_min, int k_max) const;

 private:
  const Domain* D_;
  Point x_;
  BoxHierarchy hier_;
  // one prepared subdomain + solver per intermediate level 1..n_x-1
  std::vector<std::unique_ptr<Domain>> deltas_;
  std::vector<std::unique_ptr<GreenSolver>> solvers_;
  std::vector<size_t> x_index_;  // index of x within each delta
};

}  // namespace membrane
