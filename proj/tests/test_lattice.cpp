#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "membrane/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

using namespace membrane;

namespace {
std::set<std::array<int, 4>> point_set(const std::vector<Point>& pts) {
  std::set<std::array<int, 4>> s;
  for (const auto& p : pts) s.insert(p.c);
  return s;
}
}  // namespace

TEST_CASE("laplacian stencil closed form") {
  for (int d = 1; d <= 4; ++d) {
    const Stencil st = laplacian_stencil(d);
    CHECK(st.entries.size() == static_cast<size_t>(1 + 2 * d));
    CHECK(st.coeff_at(Point{}) == -1.0);
    Point e1;
    e1[0] = 1;
    CHECK(st.coeff_at(e1) == 1.0 / (2 * d));
    const auto [num, den] = st.exact_sum();
    CHECK(num == 0);
    CHECK(den == 1);
  }
}

TEST_CASE("bilaplacian stencil, one dimension") {
  const Stencil st = bilaplacian_stencil(1);
  CHECK(st.entries.size() == 5);
  CHECK(st.coeff_at(Point{0}) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(st.coeff_at(Point{1}) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(st.coeff_at(Point{-1}) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(st.coeff_at(Point{2}) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(st.coeff_at(Point{-2}) == doctest::Approx(0.25).epsilon(1e-15));
  const auto [num, den] = st.exact_sum();
  CHECK(num == 0);
  CHECK(den == 1);
}

TEST_CASE("bilaplacian stencil, four dimensions") {
  const Stencil st = bilaplacian_stencil(4);
  // support: center + 8 nearest + 24 diagonal + 8 axial-distance-2
  CHECK(st.entries.size() == 41);
  CHECK(st.coeff_at(Point{0, 0, 0, 0}) == doctest::Approx(9.0 / 8.0).epsilon(1e-15));
  CHECK(st.coeff_at(Point{1, 0, 0, 0}) == doctest::Approx(-0.25).epsilon(1e-15));
  CHECK(st.coeff_at(Point{0, 0, 0, -1}) == doctest::Approx(-0.25).epsilon(1e-15));
  CHECK(st.coeff_at(Point{1, -1, 0, 0}) == doctest::Approx(1.0 / 32.0).epsilon(1e-15));
  CHECK(st.coeff_at(Point{0, 1, 0, 1}) == doctest::Approx(1.0 / 32.0).epsilon(1e-15));
  CHECK(st.coeff_at(Point{2, 0, 0, 0}) == doctest::Approx(1.0 / 64.0).epsilon(1e-15));
  CHECK(st.coeff_at(Point{0, 0, -2, 0}) == doctest::Approx(1.0 / 64.0).epsilon(1e-15));
  CHECK(st.coeff_at(Point{3, 0, 0, 0}) == 0.0);
  CHECK(st.coeff_at(Point{1, 1, 1, 0}) == 0.0);

  int n_center = 0, n_nn = 0, n_diag = 0, n_ax2 = 0;
  for (const auto& e : st.entries) {
    int n1 = 0, ninf = 0;
    for (int a = 0; a < 4; ++a) {
      n1 += std::abs(e.offset[a]);
      ninf = std::max(ninf, std::abs(e.offset[a]));
    }
    if (n1 == 0) ++n_center;
    else if (n1 == 1) ++n_nn;
    else if (n1 == 2 && ninf == 1) ++n_diag;
    else if (n1 == 2 && ninf == 2) ++n_ax2;
  }
  CHECK(n_center == 1);
  CHECK(n_nn == 8);
  CHECK(n_diag == 24);
  CHECK(n_ax2 == 8);

  const auto [num, den] = st.exact_sum();
  CHECK(num == 0);
  CHECK(den == 1);
}

TEST_CASE("box domains") {
  const Domain d1 = Domain::box(1, 8);
  CHECK(d1.size() == 7);
  CHECK(d1.contains(Point{1}));
  CHECK(d1.contains(Point{7}));
  CHECK_FALSE(d1.contains(Point{0}));
  CHECK_FALSE(d1.contains(Point{8}));

  const Domain d4 = Domain::box(4, 16);
  CHECK(d4.size() == 50625);  // 15^4
  CHECK(d4.kind() == Domain::Kind::Box);
  CHECK(d4.resolution() == 16);
  CHECK(d4.is_solid_box());
  CHECK(d4.contains(Point{8, 8, 8, 8}));
  CHECK_FALSE(d4.contains(Point{0, 8, 8, 8}));
  CHECK_FALSE(d4.contains(Point{8, 16, 8, 8}));

  // index round trip
  for (size_t i : {size_t(0), size_t(31), d4.size() - 1}) {
    CHECK(d4.index_of(d4.point(i)) == static_cast<int64_t>(i));
  }

  const Domain db = Domain::box_at(2, Point{-3, 5}, Point{1, 6});
  CHECK(db.size() == 10);
  CHECK(db.contains(Point{-3, 5}));
  CHECK(db.contains(Point{1, 6}));
  CHECK_FALSE(db.contains(Point{2, 6}));

  CHECK_THROWS_AS(Domain::box(5, 8), std::invalid_argument);
  CHECK_THROWS_AS(Domain::box(1, 1), std::invalid_argument);
}

TEST_CASE("double boundary, single point") {
  // boundary of {0} in one dimension: +-1 and +-2
  const Domain d = Domain::box_at(1, Point{0}, Point{0});
  const auto b = boundary2(d);
  CHECK(point_set(b) == point_set({Point{-2}, Point{-1}, Point{1}, Point{2}}));

  // in two dimensions a single site has 4 + 4 + 4 = 12 boundary points
  const Domain d2 = Domain::box_at(2, Point{0, 0}, Point{0, 0});
  CHECK(boundary2(d2).size() == 12);
}

TEST_CASE("double boundary, interval and box") {
  const Domain d = Domain::box(1, 6);  // {1..5}
  const auto b = boundary2(d);
  CHECK(point_set(b) == point_set({Point{-1}, Point{0}, Point{6}, Point{7}}));

  // 2d box {1,2}^2: boundary has no duplicates and excludes domain points
  const Domain d2 = Domain::box(2, 3);
  const auto b2 = boundary2(d2);
  const auto bs = point_set(b2);
  CHECK(bs.size() == b2.size());
  for (const auto& p : b2) CHECK_FALSE(d2.contains(p));
  // every boundary point is within graph distance 2 of some domain point
  for (const auto& p : b2) {
    int best = 99;
    for (const auto& q : d2.points()) {
      int n1 = 0;
      for (int a = 0; a < 2; ++a) n1 += std::abs(p[a] - q[a]);
      best = std::min(best, n1);
    }
    CHECK(best <= 2);
    CHECK(best >= 1);
  }
  // count for the 2x2 block: ring of l1-distance 1 (8) plus distance 2 (12)
  CHECK(b2.size() == 20);
}

TEST_CASE("dyadic union domains") {
  // the half cube (0,1/2)^4 at resolution 16 has the same points as box 8
  const DyadicCube half{1, {0, 0, 0, 0}};
  const Domain u = Domain::dyadic_union(4, {half}, 16);
  const Domain b8 = Domain::box(4, 8);
  CHECK(u.size() == b8.size());
  CHECK(point_set(u.points()) == point_set(b8.points()));
  CHECK(u.kind() == Domain::Kind::DyadicUnion);

  // the full cube as a level-0 cube reproduces the open box
  const Domain full = Domain::dyadic_union(4, {DyadicCube{0, {0, 0, 0, 0}}}, 8);
  CHECK(point_set(full.points()) == point_set(Domain::box(4, 8).points()));

  // two disjoint half-intervals in one dimension at resolution 8:
  // (0,1/2) -> {1,2,3}, (1/2,1) -> {5,6,7}; the shared face point 4 drops
  const Domain pair =
      Domain::dyadic_union(1, {DyadicCube{1, {0}}, DyadicCube{1, {1}}}, 8);
  CHECK(point_set(pair.points()) ==
        point_set({Point{1}, Point{2}, Point{3}, Point{5}, Point{6}, Point{7}}));
  CHECK_FALSE(pair.contains(Point{4}));

  // non-aligned cut: (0,1/2) at resolution 9 -> z in (0, 4.5) with clearance,
  // i.e. {1,2,3}; 4 is closer than one unit to the cut at 4.5
  const Domain odd = Domain::dyadic_union(1, {DyadicCube{1, {0}}}, 9);
  CHECK(point_set(odd.points()) == point_set({Point{1}, Point{2}, Point{3}}));

  // mixed levels: (0,1/2) and (1/2,3/4) in one dimension
  const Domain mixed =
      Domain::dyadic_union(1, {DyadicCube{1, {0}}, DyadicCube{2, {2}}}, 16);
  CHECK(point_set(mixed.points()) ==
        point_set({Point{1}, Point{2}, Point{3}, Point{4}, Point{5}, Point{6},
                   Point{7}, Point{9}, Point{10}, Point{11}}));

  // overlap rejection, including across levels
  CHECK_THROWS_AS(
      Domain::dyadic_union(1, {DyadicCube{1, {0}}, DyadicCube{2, {1}}}, 16),
      std::invalid_argument);
  // too coarse a resolution leaves a cube empty
  CHECK_THROWS_AS(Domain::dyadic_union(4, {DyadicCube{3, {1, 1, 1, 1}}}, 8),
                  std::invalid_argument);
}

TEST_CASE("concentric box hierarchy") {
  const Domain d16 = Domain::box(4, 16);
  const Point c{8, 8, 8, 8};
  const BoxHierarchy h = hierarchy(d16, c);
  CHECK(h.n_x == 1);             // clearance 7, floor(e^2) = 7 fits, floor(e^3) = 20 does not
  CHECK(BoxHierarchy::radius(1) == 2);
  CHECK(BoxHierarchy::radius(2) == 7);
  CHECK(BoxHierarchy::radius(3) == 20);
  // the outermost level is the whole domain
  const Domain top = h.delta(1);
  CHECK(top.size() == d16.size());
  CHECK_THROWS_AS(h.delta(0), std::out_of_range);
  CHECK_THROWS_AS(h.delta(2), std::out_of_range);

  // a larger box exposes an intermediate level: clearance 11 at the center of box 24
  const Domain d24 = Domain::box(4, 24);
  const BoxHierarchy h24 = hierarchy(d24, Point{12, 12, 12, 12});
  CHECK(h24.n_x == 1);
  // clearance 20 gives two levels
  const Domain d42 = Domain::box(4, 42);
  const BoxHierarchy h42 = hierarchy(d42, Point{21, 21, 21, 21});
  CHECK(h42.n_x == 2);
  const Domain mid = h42.delta(1);
  CHECK(mid.is_solid_box());
  CHECK(mid.lo() == Point{19, 19, 19, 19});
  CHECK(mid.hi() == Point{23, 23, 23, 23});
  CHECK(h42.delta(2).size() == d42.size());

  // small box: the center of box 8 has clearance 3, only the trivial level
  const BoxHierarchy h8 = hierarchy(Domain::box(4, 8), Point{4, 4, 4, 4});
  CHECK(h8.n_x == 0);

  CHECK_THROWS_AS(hierarchy(d16, Point{0, 8, 8, 8}), std::invalid_argument);
  CHECK_THROWS_AS(hierarchy(d16, Point{1, 8, 8, 8}), std::domain_error);  // clearance 0
  CHECK_THROWS_AS(hierarchy(d16, Point{2, 8, 8, 8}), std::domain_error);  // clearance 1
  CHECK(hierarchy(d16, Point{3, 8, 8, 8}).n_x == 0);                      // clearance 2
}

TEST_CASE("precision operator entries") {
  const Domain d = Domain::box(4, 6);
  const Precision A(d);
  const Point c{3, 3, 3, 3};
  CHECK(A.entry(c, c) == doctest::Approx(9.0 / 8.0).epsilon(1e-15));
  CHECK(A.entry(c, Point{4, 3, 3, 3}) == doctest::Approx(-0.25).epsilon(1e-15));
  CHECK(A.entry(c, Point{4, 4, 3, 3}) == doctest::Approx(1.0 / 32.0).epsilon(1e-15));
  CHECK(A.entry(c, Point{5, 3, 3, 3}) == doctest::Approx(1.0 / 64.0).epsilon(1e-15));
  CHECK(A.entry(c, Point{3, 3, 3, 3}) == A.entry(Point{1, 1, 1, 1}, Point{1, 1, 1, 1}));
  // zero-outside convention: entries never reach outside the domain
  CHECK(A.entry(c, Point{0, 3, 3, 3}) == 0.0);
}

TEST_CASE("matrix-free apply equals the dense operator") {
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> gauss;
  for (int dim : {1, 2, 4}) {
    const Domain d = Domain::box(dim, dim == 4 ? 5 : 9);
    const size_t n = d.size();
    const Precision A(d);
    std::vector<double> dense(n * n);
    A.dense(dense.data());
    // symmetry
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < i; ++j)
        CHECK(dense[i + n * j] == doctest::Approx(dense[j + n * i]).epsilon(1e-15));
    std::vector<double> x(n), y_dense(n, 0.0);
    for (auto& v : x) v = gauss(rng);
    for (size_t j = 0; j < n; ++j)
      for (size_t i = 0; i < n; ++i) y_dense[i] += dense[i + n * j] * x[j];
    const std::vector<double> y = A.apply(x);
    for (size_t i = 0; i < n; ++i)
      CHECK(y[i] == doctest::Approx(y_dense[i]).epsilon(1e-12));
  }
}

TEST_CASE("apply on a non-box domain masks exterior sites") {
  // union of two half intervals: the coupling across the dropped midpoint
  // comes only from the axial-distance-2 stencil entry
  const Domain pair =
      Domain::dyadic_union(1, {DyadicCube{1, {0}}, DyadicCube{1, {1}}}, 8);
  const Precision A(pair);
  const size_t n = pair.size();
  std::vector<double> dense(n * n);
  A.dense(dense.data());
  const auto i3 = pair.index_of(Point{3});
  const auto i5 = pair.index_of(Point{5});
  CHECK(dense[i3 + n * i5] == doctest::Approx(0.25).epsilon(1e-15));
  std::vector<double> x(n, 1.0);
  const auto y = A.apply(x);
  std::vector<double> yd(n, 0.0);
  for (size_t j = 0; j < n; ++j)
    for (size_t i = 0; i < n; ++i) yd[i] += dense[i + n * j] * x[j];
  for (size_t i = 0; i < n; ++i) CHECK(y[i] == doctest::Approx(yd[i]).epsilon(1e-12));
}

TEST_CASE("triplet export matches dense") {
  const Domain d = Domain::box(2, 5);
  const Precision A(d);
  const size_t n = d.size();
  std::vector<double> dense(n * n);
  A.dense(dense.data());
  std::vector<double> from_trip(n * n, 0.0);
  for (const auto& t : A.triplets())
    from_trip[static_cast<size_t>(t[0]) + n * static_cast<size_t>(t[1])] = t[2];
  for (size_t k = 0; k < n * n; ++k)
    CHECK(from_trip[k] == doctest::Approx(dense[k]).epsilon(1e-15));
}

TEST_CASE("domain descriptors") {
  CHECK(Domain::box(4, 16).descriptor_json() ==
        "{\"dim\":4,\"kind\":\"box\",\"side\":16}");
  const Domain u = Domain::dyadic_union(4, {DyadicCube{1, {0, 0, 0, 1}}}, 16);
  CHECK(u.descriptor_json() ==
        "{\"dim\":4,\"kind\":\"dyadic_union\",\"resolution\":16,"
        "\"cubes\":[{\"level\":1,\"corner\":[0,0,0,1]}]}");
}
