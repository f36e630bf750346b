#include "membrane/field.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace membrane {

namespace {

GreenSolver::Config solver_config(bool dense, double tol) {
  GreenSolver::Config cfg;
  cfg.method = dense ? GreenSolver::Method::Dense : GreenSolver::Method::Iterative;
  cfg.dense_tol = std::min(cfg.dense_tol, tol);
  cfg.iter_tol = tol;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// MembraneSampler
// ---------------------------------------------------------------------------

MembraneSampler::MembraneSampler(const Domain& dom, Method method, double tol)
    : dom_(&dom),
      dense_(method == Method::Dense ||
             (method == Method::Auto && dom.size() <= GreenSolver::Config{}.dense_cutoff)),
      gs_(dom, solver_config(dense_, tol)) {
  if (dense_) return;

  // padded-by-one grid over the bounding box; mark every site whose free
  // Laplacian overlaps the domain: the domain itself plus nearest neighbors
  const int dim = dom.dim();
  plo_ = dom.lo();
  phi_ = dom.hi();
  for (int a = 0; a < dim; ++a) { plo_[a] -= 1; phi_[a] += 1; }
  psize_ = 1;
  for (int a = kMaxDim - 1; a >= 0; --a) {
    pstride_[a] = psize_;
    psize_ *= (a < dim) ? (phi_[a] - plo_[a] + 1) : 1;
  }
  std::vector<char> mark(psize_, 0);
  dom_flat_.resize(dom.size());
  for (size_t i = 0; i < dom.size(); ++i) {
    const Point& p = dom.point(i);
    int64_t f = 0;
    for (int a = 0; a < dim; ++a) f += (p[a] - plo_[a]) * pstride_[a];
    dom_flat_[i] = f;
    mark[f] = 1;
    for (int a = 0; a < dim; ++a) {
      mark[f + pstride_[a]] = 1;
      mark[f - pstride_[a]] = 1;
    }
  }
  for (int64_t f = 0; f < psize_; ++f)
    if (mark[f]) site_flat_.push_back(f);
}

std::vector<double> MembraneSampler::sample(RngStream& stream) const {
  const size_t n = dom_->size();
  if (dense_) {
    std::vector<double> z(n);
    stream.fill_normals(z);
    return gs_.dense_upper_solve(z);
  }
  // scatter one standard normal per site, then one Laplacian pass at domain
  // points gives rhs = B^T xi; the solve applies A^{-1}
  std::vector<double> grid(psize_, 0.0);
  for (int64_t f : site_flat_) grid[f] = stream.next_normal();
  const int dim = dom_->dim();
  const double inv2d = 1.0 / (2 * dim);
  std::vector<double> rhs(n);
  for (size_t i = 0; i < n; ++i) {
    const int64_t f = dom_flat_[i];
    double s = 0.0;
    for (int a = 0; a < dim; ++a) s += grid[f + pstride_[a]] + grid[f - pstride_[a]];
    rhs[i] = inv2d * s - grid[f];
  }
  return gs_.solve(rhs);
}

// ---------------------------------------------------------------------------
// BasisSampler
// ---------------------------------------------------------------------------

BasisSampler::BasisSampler(const Domain& dom) : dom_(&dom), n_(dom.size()) {
  if (n_ > kMaxPoints) {
    std::ostringstream os;
    os << "basis sampler limited to " << kMaxPoints << " points, domain has " << n_;
    throw std::invalid_argument(os.str());
  }
  const Precision A(dom);
  std::vector<double> dense(n_ * n_);
  A.dense(dense.data());
  phi_.assign(n_ * n_, 0.0);
  aphi_.assign(n_ * n_, 0.0);
  std::vector<double> v(n_), av(n_);
  const auto col = [&](std::vector<double>& m, size_t k) { return m.data() + k * n_; };
  for (size_t k = 0; k < n_; ++k) {
    std::fill(v.begin(), v.end(), 0.0);
    v[k] = 1.0;
    // modified Gram-Schmidt against the previous basis vectors
    for (size_t j = 0; j < k; ++j) {
      const double c = cblas_ddot(static_cast<int>(n_), col(aphi_, j), 1, v.data(), 1);
      cblas_daxpy(static_cast<int>(n_), -c, col(phi_, j), 1, v.data(), 1);
    }
    cblas_dsymv(CblasColMajor, CblasLower, static_cast<int>(n_), 1.0, dense.data(), static_cast<int>(n_), v.data(), 1, 0.0,
                av.data(), 1);
    const double nrm = std::sqrt(cblas_ddot(static_cast<int>(n_), v.data(), 1, av.data(), 1));
    for (size_t i = 0; i < n_; ++i) {
      phi_[k * n_ + i] = v[i] / nrm;
      aphi_[k * n_ + i] = av[i] / nrm;
    }
  }
}

double BasisSampler::gram_entry(size_t i, size_t j) const {
  return cblas_ddot(static_cast<int>(n_), phi_.data() + i * n_, 1, aphi_.data() + j * n_, 1);
}

double BasisSampler::green_sum(size_t xi, size_t yi) const {
  double s = 0.0;
  for (size_t k = 0; k < n_; ++k) s += phi_[k * n_ + xi] * phi_[k * n_ + yi];
  return s;
}

std::vector<double> BasisSampler::sample(RngStream& stream) const {
  std::vector<double> z(n_);
  stream.fill_normals(z);
  std::vector<double> h(n_, 0.0);
  cblas_dgemv(CblasColMajor, CblasNoTrans, static_cast<int>(n_), static_cast<int>(n_), 1.0, phi_.data(), static_cast<int>(n_), z.data(), 1, 0.0,
              h.data(), 1);
  return h;
}

// ---------------------------------------------------------------------------
// Conditional means
// ---------------------------------------------------------------------------

std::vector<double> conditional_mean(const Domain& V, const std::vector<double>& h_V,
                                     const GreenSolver& solver_U) {
  const Domain& U = solver_U.domain();
  if (h_V.size() != V.size()) throw std::invalid_argument("conditional_mean: data size mismatch");
  const Precision& A = solver_U.precision();
  const Stencil& st = A.stencil();
  const int dim = V.dim();
  std::vector<double> rhs(U.size(), 0.0);
  for (size_t i = 0; i < U.size(); ++i) {
    const Point& u = U.point(i);
    if (!V.contains(u)) throw std::invalid_argument("conditional_mean: U not inside V");
    double acc = 0.0;
    for (const auto& e : st.entries) {
      Point q = u;
      for (int a = 0; a < dim; ++a) q[a] += e.offset[a];
      if (U.contains(q)) continue;  // interior coupling handled by the solve
      const int64_t j = V.index_of(q);
      if (j >= 0) acc += e.coeff * h_V[static_cast<size_t>(j)];
      // beyond V the field is pinned to zero: no contribution
    }
    rhs[i] = -acc;
  }
  return solver_U.solve(rhs);
}

double conditional_mean_single(const Domain& V, const std::vector<double>& h_V,
                               const Point& x) {
  if (!V.contains(x)) throw std::invalid_argument("conditional_mean_single: x outside V");
  const Stencil st = bilaplacian_stencil(V.dim());
  const double center = st.coeff_at(Point{});
  double acc = 0.0;
  for (const auto& e : st.entries) {
    Point q = x;
    bool is_center = true;
    for (int a = 0; a < V.dim(); ++a) {
      q[a] += e.offset[a];
      if (e.offset[a] != 0) is_center = false;
    }
    if (is_center) continue;
    const int64_t j = V.index_of(q);
    if (j >= 0) acc += (-e.coeff / center) * h_V[static_cast<size_t>(j)];
  }
  return acc;
}

GibbsMarkov gibbs_markov_split(const MembraneSampler& sampler_V,
                               const MembraneSampler& sampler_U, RngStream& stream) {
  const Domain& V = sampler_V.domain();
  const Domain& U = sampler_U.domain();
  GibbsMarkov out;
  const std::vector<double> h_V = sampler_V.sample(stream);
  out.phi = conditional_mean(V, h_V, sampler_U.solver());
  out.h_U = sampler_U.sample(stream);
  (void)U;
  return out;
}

// ---------------------------------------------------------------------------
// Coarse field
// ---------------------------------------------------------------------------

CoarseFieldEvaluator::CoarseFieldEvaluator(const Domain& D, const Point& x, double tol)
    : D_(&D), x_(x), hier_(::membrane::hierarchy(D, x)) {
  for (int k = 1; k < hier_.n_x; ++k) {
    deltas_.emplace_back(new Domain(hier_.delta(k)));
    const Domain& dk = *deltas_.back();
    const bool dense = dk.size() <= GreenSolver::Config{}.dense_cutoff;
    solvers_.emplace_back(new GreenSolver(dk, solver_config(dense, tol)));
    x_index_.push_back(static_cast<size_t>(dk.index_of(x)));
  }
}

std::vector<double> CoarseFieldEvaluator::evaluate(const std::vector<double>& h, int k_min,
                                                   int k_max) const {
  if (h.size() != D_->size()) throw std::invalid_argument("coarse field: sample size mismatch");
  if (k_min < 0 || k_max > hier_.n_x || k_min > k_max)
    throw std::out_of_range("coarse field: level range outside [0, n(x)]");
  std::vector<double> out;
  out.reserve(k_max - k_min + 1);
  for (int k = k_min; k <= k_max; ++k) {
    if (k == 0) {
      out.push_back(h[static_cast<size_t>(D_->index_of(x_))]);
    } else if (k == hier_.n_x) {
      out.push_back(0.0);
    } else {
      const std::vector<double> phi = conditional_mean(*D_, h, *solvers_[k - 1]);
      out.push_back(phi[x_index_[k - 1]]);
    }
  }
  return out;
}

}  // namespace membrane
