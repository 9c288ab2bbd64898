#include <doctest.h>

#include <sstream>

#include "enacull/core.hpp"
#include "support.hpp"

using namespace enacull;

namespace {
ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an enacull::Error");
  return ErrorCode::kContract;
}
}  // namespace

TEST_SUITE("core") {
  TEST_CASE("strong index types validate their ranges") {
    CHECK(EsaStep(2).value() == 2);
    CHECK(EsaStep(6).value() == 6);
    CHECK(code_of([] { EsaStep(1); }) == ErrorCode::kValidation);
    CHECK(code_of([] { EsaStep(7); }) == ErrorCode::kValidation);
    CHECK(code_of([] { AngleBin(60); }) == ErrorCode::kValidation);
    CHECK(code_of([] { AngleBin(-1); }) == ErrorCode::kValidation);
    CHECK(AngleBin(59).shifted(1).index() == 0);
    CHECK(AngleBin(0).shifted(-1).index() == 59);
    CHECK(AngleBin(10).shifted(125).index() == 15);
  }

  TEST_CASE("orbit arc ids parse and order") {
    const auto id = parse_orbit_arc("471b");
    CHECK(id.orbit == 471);
    CHECK(id.arc == 'b');
    CHECK(id.str() == "471b");
    CHECK(OrbitArcId{471, 'a'} < OrbitArcId{471, 'b'});
    CHECK(OrbitArcId{470, 'b'} < OrbitArcId{471, 'a'});
    CHECK_THROWS_AS(parse_orbit_arc("abc"), Error);
    CHECK_THROWS_AS(parse_orbit_arc("471"), Error);
  }

  TEST_CASE("labels parse from text") {
    CHECK(parse_label("good") == Label::kGood);
    CHECK(parse_label("bad") == Label::kBad);
    CHECK_FALSE(parse_label("").has_value());
    CHECK_THROWS_AS(parse_label("maybe"), Error);
    CHECK(std::string(label_name(Label::kGood)) == "good");
    CHECK(std::string(label_name(std::nullopt)).empty());
  }

  TEST_CASE("grid indexing is esa-major then angle then time") {
    ArcGrid g({1, 'a'}, {EsaStep(2), EsaStep(4)}, testing::times(7));
    CHECK(g.n_cells() == 2 * 60 * 7);
    CHECK(g.index(0, 0, 0) == 0);
    CHECK(g.index(0, 0, 1) == 1);
    CHECK(g.index(0, 1, 0) == 7);
    CHECK(g.index(1, 0, 0) == 420);
    CHECK(g.esa_index(EsaStep(4)) == 1);
    CHECK_THROWS_AS(g.esa_index(EsaStep(3)), Error);
    CHECK(g.n_present() == 0);
  }

  TEST_CASE("build_grid masks absent cells and rejects duplicates") {
    std::vector<Observation> rows = {testing::obs(2, 0, 0, 5), testing::obs(3, 10, 2, 7)};
    const ArcGrid g = build_grid(rows, {1, 'a'});
    CHECK(g.n_esa() == 5);
    CHECK(g.n_time() == 3);
    CHECK(g.n_present() == 2);
    CHECK(g.count(0, 0, 0) == 5);
    CHECK(g.count(1, 10, 2) == 7);
    CHECK_FALSE(g.present(0, 1, 0));

    rows.push_back(testing::obs(2, 0, 0, 9));
    CHECK(code_of([&] { build_grid(rows, {1, 'a'}); }) == ErrorCode::kConflict);
  }

  TEST_CASE("build_grid rejects inconsistent interval metadata") {
    auto a = testing::obs(2, 0, 1, 5);
    auto b = testing::obs(2, 1, 1, 5);
    b.time.duration_s = 30.0;
    CHECK_THROWS_AS(build_grid({a, b}, {1, 'a'}), Error);
  }

  TEST_CASE("build_grids splits by arc in arc order") {
    std::vector<Observation> rows = {testing::obs(2, 0, 0, 1, {2, 'a'}), testing::obs(2, 0, 0, 1, {1, 'b'}),
                                     testing::obs(2, 0, 0, 1, {1, 'a'})};
    const auto grids = build_grids(rows);
    REQUIRE(grids.size() == 3);
    CHECK(grids[0].arc() == OrbitArcId{1, 'a'});
    CHECK(grids[1].arc() == OrbitArcId{1, 'b'});
    CHECK(grids[2].arc() == OrbitArcId{2, 'a'});
  }

  TEST_CASE("observation table round trip") {
    auto a = testing::obs(2, 3, 0, 11);
    a.bg_low = 2;
    a.bg_high = 1;
    a.earth_not_visible = false;
    a.sme_label = Label::kBad;
    auto b = testing::obs(6, 59, 4, 0);
    b.truth_label = Label::kGood;
    std::stringstream s;
    write_observations(s, {a, b});
    const auto back = parse_observations(s);
    REQUIRE(back.size() == 2);
    CHECK(back[0] == a);
    CHECK(back[1] == b);
    CHECK(ArcGrid(build_grid(back, {1, 'a'})).flatten() == std::vector<Observation>{a, b});
  }

  TEST_CASE("observation parsing reports schema and row errors") {
    std::stringstream missing("orbit,arc,esa\n1,a,2\n");
    CHECK(code_of([&] { parse_observations(missing); }) == ErrorCode::kSchema);

    std::stringstream negative(std::string(kObservationHeader) + "\n1,a,2,0,0,0,60,-3,0,0,1,1,1,,\n");
    try {
      parse_observations(negative);
      FAIL("expected a validation error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kValidation);
      CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }

    std::stringstream bad_esa(std::string(kObservationHeader) + "\n1,a,9,0,0,0,60,3,0,0,1,1,1,,\n");
    CHECK(code_of([&] { parse_observations(bad_esa); }) == ErrorCode::kValidation);
  }

  TEST_CASE("missing observation file is an input-missing error") {
    CHECK(code_of([] { ingest_observations("/nonexistent/observations.csv"); }) == ErrorCode::kInputMissing);
  }
}
