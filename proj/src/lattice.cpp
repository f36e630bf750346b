#include "membrane/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace membrane {

namespace {

struct Rat {
  long long num = 0;
  long long den = 1;

  void reduce() {
    if (den < 0) { num = -num; den = -den; }
    const long long g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) { num /= g; den /= g; }
    if (num == 0) den = 1;
  }
  Rat plus(const Rat& o) const {
    Rat r{num * o.den + o.num * den, den * o.den};
    r.reduce();
    return r;
  }
  Rat times(const Rat& o) const {
    Rat r{num * o.num, den * o.den};
    r.reduce();
    return r;
  }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

int64_t pack_key(const Point& p, int dim) {
  // offsets here are tiny (|o_a| <= 4); bias into non-negative nibbles
  int64_t k = 0;
  for (int a = 0; a < dim; ++a) k = k * 16 + (p[a] + 8);
  return k;
}

}  // namespace

// ---------------------------------------------------------------------------
// Stencils
// ---------------------------------------------------------------------------

double Stencil::coeff_at(const Point& offset) const {
  for (const auto& e : entries)
    if (e.offset == offset) return e.coeff;
  return 0.0;
}

std::pair<long long, long long> Stencil::exact_sum() const {
  Rat s{0, 1};
  for (const auto& e : entries) s = s.plus(Rat{e.num, e.den});
  return {s.num, s.den};
}

Stencil laplacian_stencil(int dim) {
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("laplacian_stencil: dim");
  Stencil st;
  st.dim = dim;
  st.order = 1;
  st.entries.push_back({Point{}, -1.0, -1, 1});
  for (int a = 0; a < dim; ++a)
    for (int s : {-1, 1}) {
      Point o;
      o[a] = s;
      st.entries.push_back({o, 1.0 / (2 * dim), 1, 2ll * dim});
    }
  return st;
}

Stencil bilaplacian_stencil(int dim) {
  const Stencil lap = laplacian_stencil(dim);
  // exact rational composition: coeff(o) = sum_{o1+o2=o} lap(o1)*lap(o2)
  std::vector<std::pair<int64_t, std::pair<Point, Rat>>> acc;
  for (const auto& e1 : lap.entries)
    for (const auto& e2 : lap.entries) {
      Point o;
      for (int a = 0; a < dim; ++a) o[a] = e1.offset[a] + e2.offset[a];
      const Rat prod = Rat{e1.num, e1.den}.times(Rat{e2.num, e2.den});
      const int64_t key = pack_key(o, dim);
      bool found = false;
      for (auto& slot : acc)
        if (slot.first == key) {
          slot.second.second = slot.second.second.plus(prod);
          found = true;
          break;
        }
      if (!found) acc.push_back({key, {o, prod}});
    }
  Stencil st;
  st.dim = dim;
  st.order = 2;
  for (auto& slot : acc) {
    Rat& r = slot.second.second;
    if (r.num == 0) continue;
    st.entries.push_back({slot.second.first, r.value(), r.num, r.den});
  }
  return st;
}

// ---------------------------------------------------------------------------
// Domain
// ---------------------------------------------------------------------------

Domain make_grid_domain(int dim, const Point& lo, const Point& hi, std::vector<char> mask) {
  Domain d;
  d.dim_ = dim;
  d.lo_ = lo;
  d.hi_ = hi;
  int64_t sz = 1;
  for (int a = kMaxDim - 1; a >= 0; --a) {
    d.stride_[a] = sz;
    sz *= (a < dim) ? (hi[a] - lo[a] + 1) : 1;
  }
  d.grid_.assign(sz, -1);
  int32_t next = 0;
  Point p = lo;
  for (int64_t f = 0; f < sz; ++f) {
    if (mask[f]) {
      d.grid_[f] = next++;
      d.pts_.push_back(p);
    }
    for (int a = dim - 1; a >= 0; --a) {
      if (++p[a] <= hi[a]) break;
      p[a] = lo[a];
    }
  }
  if (d.pts_.empty()) throw std::invalid_argument("domain: empty point set");
  return d;
}

void Domain::build_from_grid() {}

Domain Domain::box(int dim, int N) {
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("box: dim must be 1..4");
  if (N < 2) throw std::invalid_argument("box: side must be >= 2 (empty domain)");
  Point lo, hi;
  for (int a = 0; a < dim; ++a) { lo[a] = 1; hi[a] = N - 1; }
  int64_t sz = 1;
  for (int a = 0; a < dim; ++a) sz *= (N - 1);
  Domain d = make_grid_domain(dim, lo, hi, std::vector<char>(sz, 1));
  d.kind_ = Kind::Box;
  d.N_ = N;
  return d;
}

Domain Domain::box_at(int dim, const Point& lo, const Point& hi) {
  int64_t sz = 1;
  for (int a = 0; a < dim; ++a) {
    if (hi[a] < lo[a]) throw std::invalid_argument("box_at: hi < lo");
    sz *= (hi[a] - lo[a] + 1);
  }
  Domain d = make_grid_domain(dim, lo, hi, std::vector<char>(sz, 1));
  d.kind_ = Kind::Box;
  d.N_ = 0;
  return d;
}

Domain Domain::dyadic_union(int dim, const std::vector<DyadicCube>& cubes, int N) {
  if (cubes.empty()) throw std::invalid_argument("dyadic_union: no cubes");
  // pairwise disjointness of the open cubes, checked per axis at a common scale
  for (size_t i = 0; i < cubes.size(); ++i)
    for (size_t j = i + 1; j < cubes.size(); ++j) {
      bool overlap = true;
      for (int a = 0; a < dim; ++a) {
        const long long s1 = 1ll << cubes[j].level, s2 = 1ll << cubes[i].level;
        const long long lo1 = static_cast<long long>(cubes[i].corner[a]) * s1;
        const long long hi1 = lo1 + s1;
        const long long lo2 = static_cast<long long>(cubes[j].corner[a]) * s2;
        const long long hi2 = lo2 + s2;
        if (!(lo1 < hi2 && lo2 < hi1)) { overlap = false; break; }
      }
      if (overlap) throw std::invalid_argument("dyadic_union: cubes overlap");
    }
  // per-cube lattice ranges: z in (corner*N/2^l, (corner+1)*N/2^l) with
  // clearance >= 1, i.e. z >= corner*N/2^l + 1 and z <= (corner+1)*N/2^l - 1
  struct Range { Point lo, hi; };
  std::vector<Range> ranges;
  Point glo, ghi;
  bool first = true;
  for (const auto& cu : cubes) {
    Range r;
    const long long scale = 1ll << cu.level;
    for (int a = 0; a < dim; ++a) {
      const long long num_lo = static_cast<long long>(cu.corner[a]) * N;
      const long long num_hi = (static_cast<long long>(cu.corner[a]) + 1) * N;
      const long long q = num_lo / scale;  // corners are >= 0 in the unit cube
      r.lo[a] = static_cast<int>(num_lo % scale == 0 ? q + 1 : q + 2);
      r.hi[a] = static_cast<int>(num_hi / scale - 1);
      if (r.hi[a] < r.lo[a])
        throw std::invalid_argument("dyadic_union: resolution too coarse for a cube");
    }
    if (first) { glo = r.lo; ghi = r.hi; first = false; }
    for (int a = 0; a < dim; ++a) {
      glo[a] = std::min(glo[a], r.lo[a]);
      ghi[a] = std::max(ghi[a], r.hi[a]);
    }
    ranges.push_back(r);
  }
  std::array<int64_t, kMaxDim> stride{};
  int64_t sz = 1;
  for (int a = kMaxDim - 1; a >= 0; --a) {
    stride[a] = sz;
    sz *= (a < dim) ? (ghi[a] - glo[a] + 1) : 1;
  }
  std::vector<char> mask(sz, 0);
  for (const auto& r : ranges) {
    Point p = r.lo;
    while (true) {
      int64_t f = 0;
      for (int a = 0; a < dim; ++a) f += (p[a] - glo[a]) * stride[a];
      mask[f] = 1;
      int a = dim - 1;
      for (; a >= 0; --a) {
        if (++p[a] <= r.hi[a]) break;
        p[a] = r.lo[a];
      }
      if (a < 0) break;
    }
  }
  Domain d = make_grid_domain(dim, glo, ghi, std::move(mask));
  d.kind_ = Kind::DyadicUnion;
  d.N_ = N;
  d.cubes_ = cubes;
  return d;
}

int64_t Domain::index_of(const Point& p) const {
  int64_t f = 0;
  for (int a = 0; a < dim_; ++a) {
    if (p[a] < lo_[a] || p[a] > hi_[a]) return -1;
    f += (p[a] - lo_[a]) * stride_[a];
  }
  return grid_[f];
}

bool Domain::is_solid_box() const {
  int64_t sz = 1;
  for (int a = 0; a < dim_; ++a) sz *= (hi_[a] - lo_[a] + 1);
  return sz == static_cast<int64_t>(pts_.size());
}

std::string Domain::descriptor_json() const {
  std::ostringstream os;
  if (kind_ == Kind::Box) {
    os << "{\"dim\":" << dim_ << ",\"kind\":\"box\",\"side\":" << N_ << "}";
  } else {
    os << "{\"dim\":" << dim_ << ",\"kind\":\"dyadic_union\",\"resolution\":" << N_
       << ",\"cubes\":[";
    for (size_t i = 0; i < cubes_.size(); ++i) {
      if (i) os << ",";
      os << "{\"level\":" << cubes_[i].level << ",\"corner\":[";
      for (int a = 0; a < dim_; ++a) os << (a ? "," : "") << cubes_[i].corner[a];
      os << "]}";
    }
    os << "]}";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// boundary2
// ---------------------------------------------------------------------------

std::vector<Point> boundary2(const Domain& dom) {
  const int dim = dom.dim();
  // offsets with 1 <= l1-norm <= 2
  std::vector<Point> offs;
  Point o;
  const auto gen = [&](auto&& self, int axis) -> void {
    if (axis == dim) {
      int n1 = 0;
      for (int a = 0; a < dim; ++a) n1 += std::abs(o[a]);
      if (n1 >= 1 && n1 <= 2) offs.push_back(o);
      return;
    }
    for (int v = -2; v <= 2; ++v) {
      o[axis] = v;
      self(self, axis + 1);
    }
    o[axis] = 0;
  };
  gen(gen, 0);

  const Point lo = dom.lo(), hi = dom.hi();
  Point plo = lo, phi = hi;
  for (int a = 0; a < dim; ++a) { plo[a] -= 2; phi[a] += 2; }
  std::array<int64_t, kMaxDim> stride{};
  int64_t sz = 1;
  for (int a = kMaxDim - 1; a >= 0; --a) {
    stride[a] = sz;
    sz *= (a < dim) ? (phi[a] - plo[a] + 1) : 1;
  }
  std::vector<char> mark(sz, 0);
  for (size_t i = 0; i < dom.size(); ++i) {
    const Point& p = dom.point(i);
    for (const Point& off : offs) {
      Point q = p;
      for (int a = 0; a < dim; ++a) q[a] += off[a];
      if (dom.contains(q)) continue;
      int64_t f = 0;
      for (int a = 0; a < dim; ++a) f += (q[a] - plo[a]) * stride[a];
      mark[f] = 1;
    }
  }
  std::vector<Point> out;
  Point p = plo;
  for (int64_t f = 0; f < sz; ++f) {
    if (mark[f]) out.push_back(p);
    for (int a = dim - 1; a >= 0; --a) {
      if (++p[a] <= phi[a]) break;
      p[a] = plo[a];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Box hierarchy
// ---------------------------------------------------------------------------

int BoxHierarchy::radius(int k) {
  return static_cast<int>(std::floor(std::exp(static_cast<double>(k))));
}

Domain BoxHierarchy::delta(int k) const {
  if (k < 1 || k > n_x) throw std::out_of_range("BoxHierarchy::delta: k outside 1..n(x)");
  if (k == n_x) return *domain;
  const int r = radius(k);
  Point lo = x, hi = x;
  for (int a = 0; a < domain->dim(); ++a) { lo[a] -= r; hi[a] += r; }
  return Domain::box_at(domain->dim(), lo, hi);
}

BoxHierarchy hierarchy(const Domain& dom, const Point& x) {
  if (!dom.contains(x)) throw std::invalid_argument("hierarchy: x outside domain");
  if (dom.kind() != Domain::Kind::Box || !dom.is_solid_box())
    throw std::invalid_argument("hierarchy: domain must be a box");
  int clearance = 1 << 30;
  for (int a = 0; a < dom.dim(); ++a)
    clearance = std::min({clearance, x[a] - dom.lo()[a], dom.hi()[a] - x[a]});
  if (clearance < BoxHierarchy::radius(1))
    throw std::domain_error("hierarchy: point too close to the boundary (clearance < 2)");
  int n = 0;
  while (BoxHierarchy::radius(n + 2) <= clearance) ++n;
  BoxHierarchy h;
  h.x = x;
  h.n_x = n;
  h.domain = &dom;
  return h;
}

// ---------------------------------------------------------------------------
// Precision operator
// ---------------------------------------------------------------------------

Precision::Precision(const Domain& dom)
    : dom_(&dom), st_(bilaplacian_stencil(dom.dim())), lap_(laplacian_stencil(dom.dim())) {
  const int dim = dom.dim();
  plo_ = dom.lo();
  phi_ = dom.hi();
  for (int a = 0; a < dim; ++a) { plo_[a] -= 2; phi_[a] += 2; }
  psize_ = 1;
  for (int a = kMaxDim - 1; a >= 0; --a) {
    pstride_[a] = psize_;
    psize_ *= (a < dim) ? (phi_[a] - plo_[a] + 1) : 1;
  }
  dom_flat_.resize(dom.size());
  for (size_t i = 0; i < dom.size(); ++i) {
    int64_t f = 0;
    for (int a = 0; a < dim; ++a) f += (dom.point(i)[a] - plo_[a]) * pstride_[a];
    dom_flat_[i] = f;
  }
}

double Precision::entry(const Point& x, const Point& y) const {
  if (!dom_->contains(x) || !dom_->contains(y)) return 0.0;
  Point off;
  for (int a = 0; a < dom_->dim(); ++a) off[a] = y[a] - x[a];
  return st_.coeff_at(off);
}

Precision::Workspace Precision::make_workspace() const {
  Workspace ws;
  ws.a.resize(psize_);
  ws.b.resize(psize_);
  return ws;
}

void Precision::apply(const double* x, double* y, Workspace& ws) const {
  const int dim = dom_->dim();
  const double inv2d = 1.0 / (2 * dim);
  std::memset(ws.a.data(), 0, sizeof(double) * psize_);
  for (size_t i = 0; i < dom_flat_.size(); ++i) ws.a[dom_flat_[i]] = x[i];

  // first Laplacian pass: fill b on the grid padded by one around the domain box
  const Point lo = dom_->lo(), hi = dom_->hi();
  int ext[kMaxDim], base[kMaxDim];
  for (int a = 0; a < kMaxDim; ++a) {
    ext[a] = (a < dim) ? (hi[a] - lo[a] + 3) : 1;  // [lo-1, hi+1]
    base[a] = (a < dim) ? 1 : 0;                   // offset inside padded-by-2 grid
  }
  const double* A = ws.a.data();
  double* B = ws.b.data();
  for (int i0 = 0; i0 < ext[0]; ++i0)
    for (int i1 = 0; i1 < ext[1]; ++i1)
      for (int i2 = 0; i2 < ext[2]; ++i2) {
        int64_t rowf = (base[0] + i0) * pstride_[0] + (base[1] + i1) * pstride_[1] +
                       (base[2] + i2) * pstride_[2] + base[3];
        for (int i3 = 0; i3 < ext[3]; ++i3, ++rowf) {
          double s = 0.0;
          for (int a = 0; a < dim; ++a) s += A[rowf + pstride_[a]] + A[rowf - pstride_[a]];
          B[rowf] = inv2d * s - A[rowf];
        }
      }

  // second pass only at domain points
  for (size_t i = 0; i < dom_flat_.size(); ++i) {
    const int64_t f = dom_flat_[i];
    double s = 0.0;
    for (int a = 0; a < dim; ++a) s += B[f + pstride_[a]] + B[f - pstride_[a]];
    y[i] = inv2d * s - B[f];
  }
}

std::vector<double> Precision::apply(const std::vector<double>& x) const {
  Workspace ws = make_workspace();
  std::vector<double> y(x.size());
  apply(x.data(), y.data(), ws);
  return y;
}

void Precision::dense(double* out) const {
  const size_t n = dom_->size();
  std::memset(out, 0, sizeof(double) * n * n);
  for (size_t i = 0; i < n; ++i) {
    const Point& p = dom_->point(i);
    for (const auto& e : st_.entries) {
      Point q = p;
      for (int a = 0; a < dom_->dim(); ++a) q[a] += e.offset[a];
      const int64_t j = dom_->index_of(q);
      if (j >= 0) out[i + n * static_cast<size_t>(j)] = e.coeff;
    }
  }
}

std::vector<std::array<double, 3>> Precision::triplets() const {
  std::vector<std::array<double, 3>> t;
  const size_t n = dom_->size();
  t.reserve(n * st_.entries.size());
  for (size_t i = 0; i < n; ++i) {
    const Point& p = dom_->point(i);
    for (const auto& e : st_.entries) {
      Point q = p;
      for (int a = 0; a < dom_->dim(); ++a) q[a] += e.offset[a];
      const int64_t j = dom_->index_of(q);
      if (j >= 0) t.push_back({static_cast<double>(i), static_cast<double>(j), e.coeff});
    }
  }
  return t;
}

}  // namespace membrane
