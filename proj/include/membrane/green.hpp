// ============================================================================
// Green functions of the membrane precision operator.
//
// Solves A g = e_y (fourth-order difference equation with zero-outside
// boundary) by dense Cholesky on small domains and by preconditioned
// conjugate gradients above, the preconditioner being the exact inverse of
// the odd-reflection bilaplacian on the bounding box (fast sine transforms).
// On top of the solver: log-growth fit of the central diagonal, boundary-free
// constant estimates s_D, coarse covariances between nested domains, the
// uniform off-diagonal bound monitor, and the symmetry-orbit-reduced full
// diagonal of a box.
// ============================================================================
#pragma once

#include "membrane/lattice.hpp"

#include <array>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

namespace membrane {

struct SolveStats {
  double residual = 0.0;  // max-norm of A g - rhs
  int iterations = 0;     // 0 on the dense path
  bool dense = false;
};

class GreenSolver {
 public:
  enum class Method { Auto, Dense, Iterative };

  struct Config {
    Method method = Method::Auto;
    size_t dense_cutoff = 15000;  // Auto picks dense at or below this size
    double dense_tol = 1e-10;
    double iter_tol = 1e-8;
    int max_iterations = 500;
  };

  explicit GreenSolver(const Domain& dom) : GreenSolver(dom, Config{}) {}
  GreenSolver(const Domain& dom, Config cfg);
  // the solver keeps a reference to the domain; temporaries would dangle
  explicit GreenSolver(Domain&&) = delete;
  GreenSolver(Domain&&, Config) = delete;
  ~GreenSolver();
  GreenSolver(const GreenSolver&) = delete;
  GreenSolver& operator=(const GreenSolver&) = delete;

  const Domain& domain() const { return *dom_; }
  const Precision& precision() const { return A_; }
  bool dense_path() const { return dense_; }
  // residual contract of the active path
  double tol() const { return dense_ ? cfg_.dense_tol : cfg_.iter_tol; }

  // General solve A x = rhs; throws std::runtime_error (with residual and
  // iteration count) if the residual contract cannot be met.
  std::vector<double> solve(const std::vector<double>& rhs, SolveStats* stats = nullptr) const;

  // Green column G(., y) = A^{-1} e_y.
  std::vector<double> column(const Point& y, SolveStats* stats = nullptr) const;
  double value(const Point& x, const Point& y, SolveStats* stats = nullptr) const;
  double diagonal_at(const Point& x, SolveStats* stats = nullptr) const;
  std::vector<double> diagonal(const std::vector<Point>& pts) const;

  // Full diagonal of a box domain, one solve per symmetry orbit (reflections
  // x_a -> N - x_a and coordinate permutations).
  std::vector<double> box_diagonal() const;

  // Dense path only: y = U^{-1} z with A = U^T U (used by exact samplers);
  // throws std::logic_error on the iterative path.
  std::vector<double> dense_upper_solve(const std::vector<double>& z) const;

 private:
  struct Impl;
  const Domain* dom_;
  Config cfg_;
  bool dense_ = false;
  Precision A_;
  std::unique_ptr<Impl> impl_;
  void ensure_factor() const;
};

// Largest pairwise symmetry violation |G(x,y) - G(y,x)| over columns solved
// at up to max_columns well-spread points.
double max_symmetry_gap(const GreenSolver& gs, int max_columns = 20);

struct FitResult {
  double slope = 0.0;
  double stderr_slope = 0.0;
  double intercept = 0.0;
};

// Ordinary least squares y = slope*x + intercept with the usual slope
// standard error.
FitResult fit_line(const std::vector<double>& xs, const std::vector<double>& ys);

// Central Green diagonal of box(4, N) for each N, regressed against log N.
// The slope estimates the log-growth constant (8/pi^2 in the limit).
FitResult fit_gamma(const std::vector<int>& sizes, double tol = 1e-8);

// Component-wise floor of N*x clamped into the domain's bounding box.
Point clamp_floor(const Domain& dom, int N, const std::array<double, 4>& x);

// Boundary-free constant of the continuum domain underlying dom_N at
// continuum point x: G(p, p) - gamma*log N at p = clamp_floor(dom, N, x).
// Requires the lattice clearance of p to be at least (log N)^theta; throws
// std::invalid_argument otherwise (boundary layer pollutes the estimate).
double estimate_sD(const Domain& dom_N, int N, const std::array<double, 4>& x,
                   double tol = 1e-8, double theta = 2.0);
// Same on the unit box realized as box(4, N).
double estimate_sD_box(int N, const std::array<double, 4>& x, double tol = 1e-8,
                       double theta = 2.0);

// Covariance of the coarse (between-scales) field: G^D(x,y) - G^Dt(x,y) for
// nested domains D ⊃ Dt, both points in Dt.
double coarse_cov(const GreenSolver& big, const GreenSolver& small, const Point& x,
                  const Point& y);

// Max over the given pairs of |G(x,y) - gamma*log(2 + N*max(d(x/N), d(y/N)) /
// (1 + |x-y|))| with d the continuum distance to the complement of the unit
// box. Reported, not asserted: the bounded constant is not quantified.
double uniform_bound_residual(const GreenSolver& gs,
                              const std::vector<std::pair<Point, Point>>& pairs);

}  // namespace membrane
