#include "membrane/green.hpp"

#include <cblas.h>
#include <fftw3.h>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

namespace membrane {

namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex mu;
  return mu;
}

// Exact inverse of the odd-reflection bilaplacian on a solid box, applied via
// fast sine transforms; used as the conjugate-gradient preconditioner.
class BoxInverse {
 public:
  BoxInverse(int dim, const Point& lo, const Point& hi) : dim_(dim), lo_(lo), hi_(hi) {
    size_ = 1;
    for (int a = kMaxDim - 1; a >= 0; --a) {
      ext_[a] = (a < dim) ? (hi[a] - lo[a] + 1) : 1;
      stride_[a] = size_;
      size_ *= ext_[a];
    }
    inv_eig_.resize(size_);
    double norm = 1.0;
    for (int a = 0; a < dim; ++a) norm *= 2.0 * (ext_[a] + 1);
    Point k;
    for (int64_t f = 0; f < size_; ++f) {
      int64_t rem = f;
      double lam = 0.0;
      for (int a = 0; a < dim; ++a) {
        const int idx = static_cast<int>(rem / stride_[a]);
        rem %= stride_[a];
        const double s = std::sin(kPi * (idx + 1) / (2.0 * (ext_[a] + 1)));
        lam += s * s;
      }
      lam *= 2.0 / dim;  // |eigenvalue| of the normalized Laplacian
      inv_eig_[f] = 1.0 / (lam * lam * norm);
      (void)k;
    }
    buf_ = fftw_alloc_real(static_cast<size_t>(size_));
    int n[kMaxDim];
    fftw_r2r_kind kinds[kMaxDim];
    for (int a = 0; a < dim; ++a) {
      n[a] = ext_[a];
      kinds[a] = FFTW_RODFT00;
    }
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan_ = fftw_plan_r2r(dim, n, buf_, buf_, kinds, FFTW_ESTIMATE);
    if (!plan_) throw std::runtime_error("fast sine transform plan creation failed");
  }
  ~BoxInverse() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    if (plan_) fftw_destroy_plan(plan_);
    fftw_free(buf_);
  }
  BoxInverse(const BoxInverse&) = delete;
  BoxInverse& operator=(const BoxInverse&) = delete;

  int64_t grid_size() const { return size_; }
  const std::array<int64_t, kMaxDim>& stride() const { return stride_; }

  // rhs and out are dense over the box grid in row-major order (may alias)
  void solve(const double* rhs, double* out) const {
    std::lock_guard<std::mutex> lock(mu_);
    std::memcpy(buf_, rhs, sizeof(double) * size_);
    fftw_execute(plan_);
    for (int64_t f = 0; f < size_; ++f) buf_[f] *= inv_eig_[f];
    fftw_execute(plan_);
    std::memcpy(out, buf_, sizeof(double) * size_);
  }

 private:
  int dim_;
  Point lo_, hi_;
  std::array<int, kMaxDim> ext_{};
  std::array<int64_t, kMaxDim> stride_{};
  int64_t size_ = 0;
  std::vector<double> inv_eig_;
  double* buf_ = nullptr;
  fftw_plan plan_ = nullptr;
  mutable std::mutex mu_;
};

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

struct GreenSolver::Impl {
  std::mutex mu;
  bool ready = false;
  // dense path: lower Cholesky factor of A, column-major, factored in place
  std::vector<double> chol;
  lapack_int n = 0;
  // iterative path
  std::unique_ptr<BoxInverse> prec;
  std::vector<int64_t> dom_to_box;  // domain index -> box grid flat index
  bool identity_map = false;        // solid box: domain order == grid order
};

GreenSolver::GreenSolver(const Domain& dom, Config cfg)
    : dom_(&dom), cfg_(cfg), A_(dom), impl_(new Impl) {
  switch (cfg_.method) {
    case Method::Dense: dense_ = true; break;
    case Method::Iterative: dense_ = false; break;
    case Method::Auto: dense_ = dom.size() <= cfg_.dense_cutoff; break;
  }
}

GreenSolver::~GreenSolver() = default;

void GreenSolver::ensure_factor() const {
  std::lock_guard<std::mutex> lock(impl_->mu);
  if (impl_->ready) return;
  if (dense_) {
    const size_t n = dom_->size();
    impl_->n = static_cast<lapack_int>(n);
    impl_->chol.resize(n * n);
    A_.dense(impl_->chol.data());
    const lapack_int info =
        LAPACKE_dpotrf(LAPACK_COL_MAJOR, 'L', impl_->n, impl_->chol.data(), impl_->n);
    if (info != 0)
      throw std::runtime_error("dense factorization failed (operator not positive definite?)");
  } else {
    impl_->prec.reset(new BoxInverse(dom_->dim(), dom_->lo(), dom_->hi()));
    impl_->identity_map = dom_->is_solid_box();
    if (!impl_->identity_map) {
      const auto& bs = impl_->prec->stride();
      impl_->dom_to_box.resize(dom_->size());
      for (size_t i = 0; i < dom_->size(); ++i) {
        int64_t f = 0;
        for (int a = 0; a < dom_->dim(); ++a)
          f += (dom_->point(i)[a] - dom_->lo()[a]) * bs[a];
        impl_->dom_to_box[i] = f;
      }
    }
  }
  impl_->ready = true;
}

std::vector<double> GreenSolver::solve(const std::vector<double>& rhs, SolveStats* stats) const {
  const size_t n = dom_->size();
  if (rhs.size() != n) throw std::invalid_argument("solve: rhs size mismatch");
  ensure_factor();
  const double scale = std::max(1.0, max_abs(rhs));

  if (dense_) {
    const auto chol_solve = [&](std::vector<double>& v) {
      LAPACKE_dpotrs(LAPACK_COL_MAJOR, 'L', impl_->n, 1, impl_->chol.data(), impl_->n,
                     v.data(), impl_->n);
    };
    std::vector<double> out = rhs;
    chol_solve(out);
    std::vector<double> Ax = A_.apply(out);
    double res = 0.0;
    for (size_t i = 0; i < n; ++i) res = std::max(res, std::abs(Ax[i] - rhs[i]));
    if (res > cfg_.dense_tol * scale) {
      // one step of iterative refinement
      std::vector<double> r(n);
      for (size_t i = 0; i < n; ++i) r[i] = rhs[i] - Ax[i];
      chol_solve(r);
      for (size_t i = 0; i < n; ++i) out[i] += r[i];
      Ax = A_.apply(out);
      res = 0.0;
      for (size_t i = 0; i < n; ++i) res = std::max(res, std::abs(Ax[i] - rhs[i]));
      if (res > cfg_.dense_tol * scale) {
        std::ostringstream os;
        os << "dense solve residual " << res << " exceeds tolerance " << cfg_.dense_tol * scale;
        throw std::runtime_error(os.str());
      }
    }
    if (stats) { stats->residual = res; stats->iterations = 0; stats->dense = true; }
    return out;
  }

  // preconditioned conjugate gradients
  const double tol = cfg_.iter_tol * scale;
  std::vector<double> x(n, 0.0), r = rhs, z(n), p(n), q(n);
  std::vector<double> gbuf(impl_->identity_map ? 0 : impl_->prec->grid_size());
  Precision::Workspace ws = A_.make_workspace();
  const auto precond = [&](const std::vector<double>& in, std::vector<double>& out_) {
    if (impl_->identity_map) {
      impl_->prec->solve(in.data(), out_.data());
    } else {
      std::fill(gbuf.begin(), gbuf.end(), 0.0);
      for (size_t i = 0; i < n; ++i) gbuf[impl_->dom_to_box[i]] = in[i];
      impl_->prec->solve(gbuf.data(), gbuf.data());
      for (size_t i = 0; i < n; ++i) out_[i] = gbuf[impl_->dom_to_box[i]];
    }
  };

  int total_iters = 0;
  double res = max_abs(r);
  for (int restart = 0; restart < 3 && res > tol; ++restart) {
    precond(r, z);
    p = z;
    double rz = 0.0;
    for (size_t i = 0; i < n; ++i) rz += r[i] * z[i];
    while (total_iters < cfg_.max_iterations) {
      ++total_iters;
      A_.apply(p.data(), q.data(), ws);
      double pq = 0.0;
      for (size_t i = 0; i < n; ++i) pq += p[i] * q[i];
      const double alpha = rz / pq;
      for (size_t i = 0; i < n; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * q[i];
      }
      if (max_abs(r) <= 0.5 * tol) break;
      precond(r, z);
      double rz_new = 0.0;
      for (size_t i = 0; i < n; ++i) rz_new += r[i] * z[i];
      const double beta = rz_new / rz;
      rz = rz_new;
      for (size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    // true residual, not the recurrence
    A_.apply(x.data(), q.data(), ws);
    for (size_t i = 0; i < n; ++i) r[i] = rhs[i] - q[i];
    res = max_abs(r);
  }
  if (res > tol) {
    std::ostringstream os;
    os << "conjugate gradient did not converge: residual " << res << " after " << total_iters
       << " iterations (tolerance " << tol << ")";
    throw std::runtime_error(os.str());
  }
  if (stats) { stats->residual = res; stats->iterations = total_iters; stats->dense = false; }
  return x;
}

std::vector<double> GreenSolver::column(const Point& y, SolveStats* stats) const {
  const int64_t idx = dom_->index_of(y);
  if (idx < 0) throw std::invalid_argument("column: source point outside domain");
  std::vector<double> e(dom_->size(), 0.0);
  e[static_cast<size_t>(idx)] = 1.0;
  return solve(e, stats);
}

double GreenSolver::value(const Point& x, const Point& y, SolveStats* stats) const {
  const int64_t ix = dom_->index_of(x);
  if (ix < 0) throw std::invalid_argument("value: point outside domain");
  return column(y, stats)[static_cast<size_t>(ix)];
}

double GreenSolver::diagonal_at(const Point& x, SolveStats* stats) const {
  return value(x, x, stats);
}

std::vector<double> GreenSolver::diagonal(const std::vector<Point>& pts) const {
  std::vector<double> out;
  out.reserve(pts.size());
  for (const Point& p : pts) out.push_back(diagonal_at(p));
  return out;
}

std::vector<double> GreenSolver::box_diagonal() const {
  if (dom_->kind() != Domain::Kind::Box || !dom_->is_solid_box() || dom_->resolution() <= 0)
    throw std::invalid_argument("box_diagonal: requires a box domain with a resolution");
  const int N = dom_->resolution();
  const int dim = dom_->dim();
  const auto orbit_key = [&](const Point& p) {
    std::array<int, kMaxDim> folded{};
    for (int a = 0; a < dim; ++a) folded[a] = std::min(p[a], N - p[a]);
    std::sort(folded.begin(), folded.begin() + dim, std::greater<int>());
    uint64_t k = 0;
    for (int a = 0; a < dim; ++a) k = (k << 16) | static_cast<uint64_t>(folded[a]);
    return k;
  };
  std::map<uint64_t, std::vector<size_t>> orbits;
  for (size_t i = 0; i < dom_->size(); ++i) orbits[orbit_key(dom_->point(i))].push_back(i);
  std::vector<double> diag(dom_->size());
  for (const auto& [key, members] : orbits) {
    const Point rep = dom_->point(members.front());
    const std::vector<double> col = column(rep);
    const double v = col[members.front()];
    for (size_t i : members) diag[i] = v;
  }
  return diag;
}

std::vector<double> GreenSolver::dense_upper_solve(const std::vector<double>& z) const {
  if (!dense_) throw std::logic_error("dense_upper_solve: solver is on the iterative path");
  if (z.size() != dom_->size()) throw std::invalid_argument("dense_upper_solve: size mismatch");
  ensure_factor();
  // solve L^T y = z so that Cov(y) = (L L^T)^{-1} = A^{-1} for standard normal z
  std::vector<double> y = z;
  cblas_dtrsv(CblasColMajor, CblasLower, CblasTrans, CblasNonUnit, impl_->n,
              impl_->chol.data(), impl_->n, y.data(), 1);
  return y;
}

double max_symmetry_gap(const GreenSolver& gs, int max_columns) {
  const Domain& dom = gs.domain();
  const size_t n = dom.size();
  const int k = static_cast<int>(std::min<size_t>(max_columns, n));
  std::vector<size_t> picks;
  for (int i = 0; i < k; ++i)
    picks.push_back(k == 1 ? 0 : (n - 1) * static_cast<size_t>(i) / (k - 1));
  picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
  std::vector<std::vector<double>> cols;
  for (size_t idx : picks) cols.push_back(gs.column(dom.point(idx)));
  double gap = 0.0;
  for (size_t a = 0; a < picks.size(); ++a)
    for (size_t b = a + 1; b < picks.size(); ++b)
      gap = std::max(gap, std::abs(cols[a][picks[b]] - cols[b][picks[a]]));
  return gap;
}

FitResult fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("fit_line: need at least two points");
  const size_t n = xs.size();
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) { mx += xs[i]; my += ys[i]; }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_line: degenerate abscissae");
  FitResult f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r = ys[i] - (f.slope * xs[i] + f.intercept);
    ss += r * r;
  }
  f.stderr_slope = n > 2 ? std::sqrt(ss / (n - 2) / sxx) : 0.0;
  return f;
}

FitResult fit_gamma(const std::vector<int>& sizes, double tol) {
  if (sizes.size() < 3) throw std::invalid_argument("fit_gamma: need at least three sizes");
  std::vector<double> xs, ys;
  for (int N : sizes) {
    GreenSolver::Config cfg;
    cfg.method = GreenSolver::Method::Iterative;
    cfg.iter_tol = tol;
    const Domain dom = Domain::box(4, N);
    GreenSolver solver(dom, cfg);
    Point c;
    for (int a = 0; a < 4; ++a) c[a] = N / 2;
    xs.push_back(std::log(static_cast<double>(N)));
    ys.push_back(solver.diagonal_at(c));
  }
  return fit_line(xs, ys);
}

Point clamp_floor(const Domain& dom, int N, const std::array<double, 4>& x) {
  Point p;
  for (int a = 0; a < dom.dim(); ++a) {
    int v = static_cast<int>(std::floor(N * x[a]));
    v = std::max(dom.lo()[a], std::min(dom.hi()[a], v));
    p[a] = v;
  }
  if (!dom.contains(p))
    throw std::invalid_argument("clamp_floor: clamped lattice point is outside the domain");
  return p;
}

double estimate_sD(const Domain& dom_N, int N, const std::array<double, 4>& x, double tol,
                   double theta) {
  if (N < 2) throw std::invalid_argument("estimate_sD: resolution too small");
  const Point p = clamp_floor(dom_N, N, x);
  int clearance = 1 << 30;
  for (int a = 0; a < dom_N.dim(); ++a)
    clearance = std::min({clearance, p[a] - (dom_N.lo()[a] - 1), (dom_N.hi()[a] + 1) - p[a]});
  const double margin = std::pow(std::log(static_cast<double>(N)), theta);
  if (static_cast<double>(clearance) < margin) {
    std::ostringstream os;
    os << "estimate_sD: point too close to the boundary (clearance " << clearance
       << " < required margin " << margin << ")";
    throw std::invalid_argument(os.str());
  }
  GreenSolver::Config cfg;
  cfg.method = GreenSolver::Method::Iterative;
  cfg.iter_tol = tol;
  GreenSolver gs(dom_N, cfg);
  return gs.diagonal_at(p) - kGamma * std::log(static_cast<double>(N));
}

double estimate_sD_box(int N, const std::array<double, 4>& x, double tol, double theta) {
  const Domain dom = Domain::box(4, N);
  return estimate_sD(dom, N, x, tol, theta);
}

double coarse_cov(const GreenSolver& big, const GreenSolver& small, const Point& x,
                  const Point& y) {
  return big.value(x, y) - small.value(x, y);
}

double uniform_bound_residual(const GreenSolver& gs,
                              const std::vector<std::pair<Point, Point>>& pairs) {
  const Domain& dom = gs.domain();
  if (dom.kind() != Domain::Kind::Box || dom.resolution() <= 0)
    throw std::invalid_argument("uniform_bound_residual: requires a box domain");
  const int N = dom.resolution();
  const int dim = dom.dim();
  const auto bdist = [&](const Point& p) {
    double m = 1e300;
    for (int a = 0; a < dim; ++a) {
      const double u = static_cast<double>(p[a]) / N;
      m = std::min({m, u, 1.0 - u});
    }
    return m;
  };
  double worst = 0.0;
  for (const auto& [x, y] : pairs) {
    const double g = gs.value(x, y);
    double dist2 = 0.0;
    for (int a = 0; a < dim; ++a)
      dist2 += static_cast<double>(x[a] - y[a]) * (x[a] - y[a]);
    const double bound =
        kGamma * std::log(2.0 + N * std::max(bdist(x), bdist(y)) / (1.0 + std::sqrt(dist2)));
    worst = std::max(worst, std::abs(g - bound));
  }
  return worst;
}

}  // namespace membrane
