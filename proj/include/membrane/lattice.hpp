// ============================================================================
// Lattice domains, discrete Laplacian/bilaplacian stencils, the precision
// operator of the membrane model, double boundaries, and the concentric box
// hierarchy used by coarse-field decompositions.
//
// Conventions:
//   * Delta f(x) = (1/2d) * sum_{y~x} (f(y) - f(x))   (normalized Laplacian)
//   * the model's precision operator is Delta^2 with the field pinned to zero
//     outside the domain; its entries are the bilaplacian stencil coefficients
//   * box(d, N) is the open box (0,N)^d intersected with Z^d, i.e. coordinates
//     1..N-1 per axis
//   * dyadic-union domains keep lattice points whose distance to the scaled
//     complement is at least one lattice unit (boundary-touching points drop)
// ============================================================================
#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace membrane {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
// Log-growth constant of the 4D bilaplacian Green diagonal: 8/pi^2.
inline constexpr double kGamma = 8.0 / (kPi * kPi);

constexpr int kMaxDim = 4;

struct Point {
  std::array<int, kMaxDim> c{0, 0, 0, 0};

  Point() = default;
  Point(std::initializer_list<int> v) {
    int i = 0;
    for (int x : v) c[i++] = x;
  }
  int& operator[](int i) { return c[i]; }
  int operator[](int i) const { return c[i]; }
  bool operator==(const Point& o) const { return c == o.c; }
};

// ---------------------------------------------------------------------------
// Stencils with exact rational coefficients (int64 fractions) plus doubles.
// ---------------------------------------------------------------------------
struct Stencil {
  struct Entry {
    Point offset;
    double coeff;
    long long num;
    long long den;
  };
  int dim = 0;
  int order = 1;  // 1 = Laplacian, 2 = bilaplacian
  std::vector<Entry> entries;

  double coeff_at(const Point& offset) const;
  // Exact rational sum of all coefficients, reduced.
  std::pair<long long, long long> exact_sum() const;
};

Stencil laplacian_stencil(int dim);
// Composition of the normalized Laplacian with itself, carried out in exact
// rational arithmetic. Closed forms (dimension d): center 1+1/(2d), nearest
// neighbor -1/d, diagonal (+-e_i +- e_j, i<j) 1/(2d^2), axial +-2e_i 1/(4d^2).
Stencil bilaplacian_stencil(int dim);

// ---------------------------------------------------------------------------
// Domains
// ---------------------------------------------------------------------------
struct DyadicCube {
  int level = 0;                          // side 2^-level
  std::array<int, kMaxDim> corner{};      // cube = prod (corner_a, corner_a+1) * 2^-level
};

class Domain {
 public:
  enum class Kind { Box, DyadicUnion };

  // The open box (0,N)^d: points with coordinates 1..N-1.
  static Domain box(int dim, int N);
  // Axis-aligned lattice box [lo,hi] (inclusive); used for hierarchy boxes and
  // dyadic subcube interiors.
  static Domain box_at(int dim, const Point& lo, const Point& hi);
  // Lattice approximation of a finite union of disjoint open dyadic cubes of
  // the unit cube, scaled by resolution N: keep z with z/N inside the union at
  // l-infinity distance >= 1/N from the complement.
  static Domain dyadic_union(int dim, const std::vector<DyadicCube>& cubes, int N);

  int dim() const { return dim_; }
  size_t size() const { return pts_.size(); }
  Kind kind() const { return kind_; }
  int resolution() const { return N_; }  // box side or union resolution
  const std::vector<DyadicCube>& cubes() const { return cubes_; }

  const Point& point(size_t i) const { return pts_[i]; }
  const std::vector<Point>& points() const { return pts_; }
  bool contains(const Point& p) const { return index_of(p) >= 0; }
  int64_t index_of(const Point& p) const;

  const Point& lo() const { return lo_; }
  const Point& hi() const { return hi_; }

  // True if the domain is exactly the full box [lo,hi].
  bool is_solid_box() const;

  std::string descriptor_json() const;

 private:
  void build_from_grid();

  int dim_ = 0;
  Kind kind_ = Kind::Box;
  int N_ = 0;
  std::vector<DyadicCube> cubes_;
  Point lo_, hi_;
  std::array<int64_t, kMaxDim> stride_{};
  std::vector<int32_t> grid_;  // dense over [lo,hi], -1 = absent
  std::vector<Point> pts_;

  friend Domain make_grid_domain(int dim, const Point& lo, const Point& hi,
                                 std::vector<char> mask);
};

// Points outside the domain at nearest-neighbor graph distance 1 or 2 — the
// Dirichlet layer a fourth-order stencil can reach.
std::vector<Point> boundary2(const Domain& dom);

// ---------------------------------------------------------------------------
// Concentric box hierarchy around a point of a box domain.
//
//   n(x) = max{ n >= 0 : the box of radius floor(e^{n+1}) around x fits },
//   delta(0) = empty, delta(k) = box of radius floor(e^k) for 1 <= k < n(x),
//   delta(n(x)) = the whole domain.
// ---------------------------------------------------------------------------
struct BoxHierarchy {
  Point x;
  int n_x = 0;
  const Domain* domain = nullptr;

  static int radius(int k);  // floor(e^k)
  // Lattice box delta(k) for 1 <= k <= n_x (k = n_x returns the full domain).
  Domain delta(int k) const;
};

// Throws std::invalid_argument if x is not in the domain and
// std::domain_error if even the innermost box (radius floor(e), i.e. 2) does
// not fit around x — the hierarchy needs clearance >= 2.
BoxHierarchy hierarchy(const Domain& dom, const Point& x);

// ---------------------------------------------------------------------------
// Precision operator: matrix-free bilaplacian with zero-outside boundary.
// ---------------------------------------------------------------------------
class Precision {
 public:
  explicit Precision(const Domain& dom);
  // the operator keeps a reference to the domain; temporaries would dangle
  explicit Precision(Domain&&) = delete;

  const Domain& domain() const { return *dom_; }
  int dim() const { return dom_->dim(); }
  size_t size() const { return dom_->size(); }
  const Stencil& stencil() const { return st_; }

  // A(x,y): bilaplacian stencil coefficient at offset y-x when both points lie
  // in the domain, else 0 (queries outside the domain are the caller's error).
  double entry(const Point& x, const Point& y) const;

  struct Workspace {
    std::vector<double> a, b;
  };
  Workspace make_workspace() const;

  // y = A x, two Laplacian passes over a zero-padded grid. Pure given its own
  // workspace; concurrent calls need distinct workspaces.
  void apply(const double* x, double* y, Workspace& ws) const;
  std::vector<double> apply(const std::vector<double>& x) const;

  // Explicit exports for dense/sparse factorization paths.
  void dense(double* out_colmajor) const;  // size n*n
  // Triplet export: (row, col, value) with row-major point indexing.
  std::vector<std::array<double, 3>> triplets() const;

 private:
  const Domain* dom_;
  Stencil st_;
  Stencil lap_;
  Point plo_, phi_;                      // padded bounding box (pad 2)
  std::array<int64_t, kMaxDim> pstride_{};
  int64_t psize_ = 0;
  std::vector<int64_t> dom_flat_;        // flat padded index of each domain point
};

}  // namespace membrane
