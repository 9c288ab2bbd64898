#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "enacull/fov.hpp"
#include "oracles/fov_oracle.hpp"

using namespace enacull;
using namespace enacull::fov;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Vec3 rotate_about(const Vec3& axis, const Vec3& v, double deg) {
  const double c = std::cos(deg * kDeg), s = std::sin(deg * kDeg);
  return c * v + s * cross(axis, v) + (dot(axis, v) * (1.0 - c)) * axis;
}

/// Direction at spin azimuth `az` (from bin 0) and latitude `lat` above the spin plane.
Vec3 direction(const Vec3& axis, double az, double lat) {
  const Vec3 u = bin_center(axis, 0);
  const Vec3 in_plane = rotate_about(axis, u, az);
  return std::cos(lat * kDeg) * in_plane + std::sin(lat * kDeg) * axis;
}

Vec3 random_unit(std::mt19937_64& gen) {
  std::normal_distribution<double> n(0.0, 1.0);
  return normalized(Vec3{n(gen), n(gen), n(gen)});
}

bool contiguous_mod60(const BinSet& bins) {
  if (bins.none() || bins.all()) return true;
  int starts = 0;
  for (int k = 0; k < kAngleBins; ++k) {
    if (bins.test(k) && !bins.test((k + kAngleBins - 1) % kAngleBins)) ++starts;
  }
  return starts == 1;
}

BodyEphemeris fixed_body(Body body, const Vec3& pos_km) {
  return BodyEphemeris{body, {{0.0, pos_km}, {1.0e6, pos_km}}};
}

}  // namespace

TEST_SUITE("fov") {
  TEST_CASE("angular separation examples") {
    const Vec3 x{1, 0, 0};
    CHECK(angular_separation(x, x) == doctest::Approx(0.0));
    CHECK(angular_separation(x, Vec3{0, 1, 0}) == doctest::Approx(90.0));
    const double r = 1.0 / std::sqrt(2.0);
    CHECK(std::fabs(angular_separation(x, Vec3{r, r, 0}) - 45.0) < 1e-9);
    CHECK_THROWS_AS(angular_separation(x, Vec3{2, 0, 0}), Error);
  }

  TEST_CASE("bin 0 faces the ecliptic-north projection") {
    const Vec3 axis = normalized(Vec3{1, 0.3, 0.2});
    const Vec3 c0 = bin_center(axis, 0);
    CHECK(std::fabs(dot(c0, axis)) < 1e-12);
    for (int k = 1; k < kAngleBins; ++k) CHECK(bin_center(axis, k).z < c0.z);
    // Axis parallel to ecliptic north falls back to +x.
    const Vec3 polar = bin_center(Vec3{0, 0, 1}, 0);
    CHECK(polar.x == doctest::Approx(1.0));
  }

  TEST_CASE("nearest spin bin examples") {
    const Vec3 axis = normalized(Vec3{0.2, -1, 0.1});
    CHECK(nearest_spin_bin(bin_center(axis, 0), axis).index() == 0);
    CHECK(nearest_spin_bin(direction(axis, 93.0, 0.0), axis).index() == 15);
    CHECK(nearest_spin_bin(direction(axis, 92.0, 20.0), axis).index() == 15);
    CHECK(nearest_spin_bin(direction(axis, 94.0, -20.0), axis).index() == 16);
    CHECK(nearest_spin_bin(direction(axis, 356.0, 0.0), axis).index() == 59);
    CHECK(nearest_spin_bin(direction(axis, 358.0, 0.0), axis).index() == 0);
    // Exact half-bin tie across the wrap goes to the lower index.
    CHECK(nearest_spin_bin(direction(axis, 357.0, 0.0), axis).index() == 0);
    for (int k = 0; k < kAngleBins; ++k) {
      const Vec3 d = direction(axis, 6.0 * k + 1.0, 5.0);
      CHECK(nearest_spin_bin(rotate_about(axis, d, 6.0), axis).index() == (k + 1) % kAngleBins);
    }
    CHECK_THROWS_AS(nearest_spin_bin(axis, axis), Error);
    CHECK_THROWS_AS(nearest_spin_bin(-1.0 * axis, axis), Error);
  }

  TEST_CASE("nearest bin agrees with brute force away from ties") {
    std::mt19937_64 gen(17);
    for (int i = 0; i < 500; ++i) {
      const Vec3 axis = random_unit(gen);
      const Vec3 dir = random_unit(gen);
      if (std::fabs(dot(axis, dir)) > 0.999) continue;
      CHECK(nearest_spin_bin(dir, axis).index() == oracle::nearest(dir, axis));
    }
  }

  TEST_CASE("point body on a bin center marks that bin and its neighbors") {
    const Vec3 axis = normalized(Vec3{0, 1, 0.3});
    const auto bad = bad_bins_for_direction(bin_center(axis, 20), axis, 7.0);
    CHECK(bad.count() == 3);
    CHECK(bad.test(19));
    CHECK(bad.test(20));
    CHECK(bad.test(21));
    const auto wrap = bad_bins_for_direction(bin_center(axis, 0), axis, 7.0);
    CHECK(wrap.test(59));
    CHECK(wrap.test(0));
    CHECK(wrap.test(1));
  }

  TEST_CASE("far body marks nothing") {
    const Vec3 axis{0, 0, 1};
    PointingLog log({{0.0, axis}});
    const FovConfig config;
    CHECK(mark_bad_bins(10.0, Body::kMoon, log, fixed_body(Body::kMoon, {0, 0, 384000}), config)
              .none());
    CHECK(mark_bad_bins(10.0, Body::kSun, log, fixed_body(Body::kSun, {1, 0, 12}), config).none());
  }

  TEST_CASE("magnetosphere widens the earth exclusion") {
    const FovConfig config;
    // Distance at which 12 Earth radii subtend 10 degrees.
    const double d = 12.0 * config.earth_radius_km / std::sin(10.0 * kDeg);
    CHECK(exclusion_half_width(Body::kEarth, d, config) == doctest::Approx(17.0));
    CHECK(exclusion_half_width(Body::kMoon, d, config) == doctest::Approx(7.0));
    CHECK(exclusion_half_width(Body::kEarth, 1.0, config) == doctest::Approx(97.0));

    const Vec3 axis{1, 0, 0};
    PointingLog log({{0.0, axis}});
    const Vec3 dir = direction(axis, 123.0, 2.0);
    const auto earth = mark_bad_bins(5.0, Body::kEarth, log, fixed_body(Body::kEarth, d * dir), config);
    const auto point = mark_bad_bins(5.0, Body::kMoon, log, fixed_body(Body::kMoon, d * dir), config);
    CHECK((earth & point) == point);
    CHECK(earth.count() > point.count());
    CHECK(earth == oracle::bad_bins(dir, axis, 17.0));
  }

  TEST_CASE("bad sets are contiguous and match brute force") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> lat(-25.0, 25.0), az(0.0, 360.0), half(3.0, 40.0);
    for (int i = 0; i < 300; ++i) {
      const Vec3 axis = random_unit(gen);
      const Vec3 dir = direction(axis, az(gen), lat(gen));
      const double h = half(gen);
      const auto bins = bad_bins_for_direction(dir, axis, h);
      CHECK(bins == oracle::bad_bins(dir, axis, h));
      CHECK(contiguous_mod60(bins));
    }
  }

  TEST_CASE("pointing log validation") {
    const Vec3 a{0, 0, 1}, b{0, 1, 0};
    CHECK_THROWS_AS(PointingLog({}), Error);
    CHECK_THROWS_AS(PointingLog({{0.0, a}, {0.0, b}}), Error);
    const PointingLog log({{10.0, b}, {0.0, a}, {0.0, a}});
    CHECK(log.records().size() == 2);
    CHECK(log.at(5.0).spin_axis.z == 1.0);
    CHECK(log.at(10.0).spin_axis.y == 1.0);
    try {
      log.at(-1.0);
      FAIL("expected coverage error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kCoverage);
    }
    CHECK_THROWS_AS(PointingLog({{0.0, Vec3{0, 0, 2}}}), Error);
  }

  TEST_CASE("ephemeris interpolation and coverage") {
    const BodyEphemeris eph{Body::kMoon, {{0.0, {0, 0, 100}}, {10.0, {0, 10, 100}}}};
    CHECK(eph.position_at(5.0).y == doctest::Approx(5.0));
    try {
      eph.position_at(11.0);
      FAIL("expected coverage error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kCoverage);
    }
  }

  TEST_CASE("masks sample on the spin cadence and respect wrap") {
    FovConfig config;
    config.spins_per_sample = 2;
    config.spin_period_s = 15.0;
    const Vec3 axis{0, 1, 0};
    const Vec3 dir = bin_center(axis, 59);
    const double d = 2.0e5;
    std::vector<BodyEphemeris> ephem{fixed_body(Body::kEarth, d * dir)};
    const auto mask = build_masks({{0.0, axis}}, ephem, config, 0.0, 100.0);
    REQUIRE(mask.samples.size() == 4);
    CHECK(mask.samples[3].epoch_s == 90.0);
    const auto bad = mask.samples[0].bad[static_cast<int>(Body::kEarth)];
    CHECK(bad.test(59));
    CHECK(bad.test(0));
    const auto good = mask.samples[0].good_bins();
    CHECK(good.size() == 60 - bad.count());
    for (int k : good) CHECK_FALSE(bad.test(k));
    CHECK(contiguous_mod60(~bad));

    const auto dup = build_masks({{0.0, axis}, {0.0, axis}}, ephem, config, 0.0, 100.0);
    std::ostringstream a, b;
    write_mask(a, mask);
    write_mask(b, dup);
    CHECK(a.str() == b.str());
    std::istringstream in(a.str());
    const auto back = read_mask(in);
    REQUIRE(back.samples.size() == mask.samples.size());
    for (std::size_t i = 0; i < back.samples.size(); ++i) {
      CHECK(back.samples[i].bad == mask.samples[i].bad);
    }

    const auto quiet =
        build_masks({{0.0, axis}}, {fixed_body(Body::kSun, {0, 1.5e8, 0})}, config, 0.0, 60.0);
    for (const auto& s : quiet.samples) CHECK(s.good_bins().size() == 60);
  }

  TEST_CASE("cell mask spreads samples over intervals") {
    ExclusionMask mask;
    MaskSample s0{0.0, {}}, s1{100.0, {}};
    s0.bad[static_cast<int>(Body::kMoon)].set(4);
    s1.bad[static_cast<int>(Body::kMoon)].set(5);
    mask.samples = {s0, s1};
    const std::vector<TimeInterval> times{{0, 0.0, 60.0}, {1, 60.0, 60.0}, {2, 120.0, 60.0}};
    const auto flags = cell_mask(mask, times);
    auto at = [&](int a, int t) {
      return flags[(static_cast<std::size_t>(Body::kMoon) * kAngleBins + a) * 3 + t];
    };
    CHECK(at(4, 0) == 1);
    CHECK(at(4, 1) == 1);  // latest sample at or before the start
    CHECK(at(5, 1) == 1);  // sample inside the interval
    CHECK(at(4, 2) == 0);
    CHECK(at(5, 2) == 1);
    CHECK(at(5, 0) == 0);
  }
}
