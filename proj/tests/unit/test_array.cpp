#include <cmath>
#include <set>

#include "coldisturb/array.hpp"
#include "coldisturb/random.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace coldisturb;
using coldisturb::testing::quiet_array;

TEST_CASE("build is deterministic per seed") {
  DramGeometry g;
  g.subarrays_per_bank = 3;
  g.rows_per_subarray = 1024;
  g.columns_per_row = 8;
  ProfileDistribution d;
  auto a = DramArray::build(g, d, 7);
  auto b = DramArray::build(g, d, 7);
  CHECK(a == b);
  auto c = DramArray::build(g, d, 8);
  CHECK_FALSE(a == c);
}

TEST_CASE("profile sampling is keyed by coordinate") {
  ProfileDistribution d;
  auto p = d.sample(3, 0, 1, 700, 5);
  CHECK(p == d.sample(3, 0, 1, 700, 5));
  CHECK_FALSE(p == d.sample(3, 0, 1, 701, 5));
  CHECK(p.t_flip_gnd <= p.t_flip_half);
  CHECK(p.t_flip_half <= p.t_flip_vdd);
}

TEST_CASE("invalid geometry is rejected") {
  DramGeometry g;
  g.rows_per_subarray = 0;
  CHECK_THROWS_AS(DramArray::build(g, {}, 1), ConfigError);
  g.rows_per_subarray = 3;
  CHECK_THROWS_AS(DramArray::build(g, {}, 1), ConfigError);
  g = {};
  g.columns_per_row = 7;
  CHECK_THROWS_AS(DramArray::build(g, {}, 1), ConfigError);
  g = {};
  g.banks = 0;
  CHECK_THROWS_AS(DramArray::build(g, {}, 1), ConfigError);
  g = {};
  g.subarray_rows = {512, 1024};
  CHECK_THROWS_AS(DramArray::build(g, {}, 1), ConfigError);
}

TEST_CASE("constant distribution gives constant anchors") {
  DramGeometry g;
  g.rows_per_subarray = 16;
  g.columns_per_row = 8;
  ProfileDistribution d;
  d.t_flip_gnd = AnchorDistribution::constant(100e6);
  d.t_flip_half = AnchorDistribution::constant(1e9);
  auto a = DramArray::build(g, d, 1);
  for (std::uint32_t r = 0; r < a.rows_per_bank(); ++r)
    for (std::uint32_t c = 0; c < a.columns(); ++c) CHECK(a.profile(0, r, c).t_flip_gnd == milliseconds(100));
}

TEST_CASE("anti-cell fraction") {
  DramGeometry g;
  g.rows_per_subarray = 64;
  g.columns_per_row = 64;
  ProfileDistribution d;
  d.anti_cell_fraction = 0.25;
  auto a = DramArray::build(g, d, 11);
  std::size_t anti = 0, total = 0;
  for (std::uint32_t r = 0; r < a.rows_per_bank(); ++r)
    for (std::uint32_t c = 0; c < a.columns(); ++c, ++total)
      anti += a.profile(0, r, c).polarity == Polarity::anti_cell;
  const double f = static_cast<double>(anti) / static_cast<double>(total);
  CHECK(f == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("column sharing is an involution with edge termination") {
  DramGeometry g;
  g.subarrays_per_bank = 4;
  g.columns_per_row = 16;
  for (std::uint32_t s = 0; s < 4; ++s) {
    std::size_t up = 0, down = 0, none = 0;
    for (std::uint32_t c = 0; c < 16; ++c) {
      ColumnRef ref{s, c};
      auto p = shared_partner(g, ref);
      if (!p) {
        ++none;
        continue;
      }
      CHECK(bitline_of(*p) == bitline_of(ref));
      auto back = shared_partner(g, *p);
      REQUIRE(back);
      CHECK(*back == ref);
      (p->subarray < s ? up : down)++;
    }
    CHECK(up + down + none == 16);
    CHECK(up == (s == 0 ? 0u : 8u));
    CHECK(down == (s == 3 ? 0u : 8u));
  }
}

TEST_CASE("perturbed columns span three subarrays") {
  auto a = quiet_array(3, 16, 8);
  auto count_in = [](const std::vector<ColumnRef>& v, std::uint32_t s) {
    std::size_t n = 0;
    for (auto& c : v) n += c.subarray == s;
    return n;
  };
  auto mid = perturbed_columns(a, 20);
  CHECK(count_in(mid, 1) == 8);
  CHECK(count_in(mid, 0) == 4);
  CHECK(count_in(mid, 2) == 4);
  for (auto& c : mid) {
    if (c.subarray == 0) CHECK(c.local_column % 2 == 1);
    if (c.subarray == 2) CHECK(c.local_column % 2 == 0);
  }
  auto first = perturbed_columns(a, 3);
  CHECK(count_in(first, 0) == 8);
  CHECK(count_in(first, 1) == 4);
  CHECK(count_in(first, 2) == 0);
  CHECK(perturbed_columns(a, 16) == perturbed_columns(a, 31));
  CHECK_THROWS_AS(perturbed_columns(a, 48), InputError);

  auto wide = quiet_array(5, 4, 8);
  for (auto& c : perturbed_columns(wide, 0)) CHECK(c.subarray <= 1);
  for (auto& c : perturbed_columns(wide, 8)) CHECK((c.subarray >= 1 && c.subarray <= 3));
}

TEST_CASE("data patterns expand MSB first") {
  auto a = quiet_array(1, 4, 16);
  a.init_region({0, 1}, DataPattern(0xFF));
  for (std::uint32_t c = 0; c < 16; ++c) CHECK(a.state(0, 0, c).stored_bit == 1);
  a.init_region({1, 2}, DataPattern(0xAA));
  for (std::uint32_t c = 0; c < 16; ++c) CHECK(a.state(0, 1, c).stored_bit == (c % 2 == 0 ? 1 : 0));
  a.init_region({2, 3}, DataPattern(0x11));
  for (std::uint32_t c = 0; c < 16; ++c) CHECK(a.state(0, 2, c).stored_bit == (c % 4 == 3 ? 1 : 0));
  CHECK(DataPattern::parse("0x77") == DataPattern(0x77));
  CHECK(DataPattern::parse("0XaA") == DataPattern(0xAA));
  CHECK(DataPattern::parse("51") == DataPattern(0x33));
  CHECK(DataPattern(0x33).name() == "0x33");
  CHECK(DataPattern(0x00).negated() == DataPattern(0xFF));
  CHECK_THROWS_AS(DataPattern::parse("0x100"), InputError);
  CHECK_THROWS_AS(DataPattern::parse("ab"), InputError);
}

TEST_CASE("re-initializing clears flip state") {
  auto a = quiet_array(1, 4, 8);
  auto& s = a.state(0, 1, 2);
  s.flipped = true;
  s.damage = 0.7;
  s.flipped_at = milliseconds(3);
  a.init_region({1, 2}, DataPattern(0xFF));
  CHECK(a.state(0, 1, 2).damage == 0.0);
  CHECK_FALSE(a.state(0, 1, 2).flipped_at.has_value());
  CHECK_FALSE(a.state(0, 1, 2).flipped);
  CHECK_THROWS_AS(a.init_region({0, 5}, DataPattern(0)), InputError);
}

TEST_CASE("flip time interpolation") {
  CellProfile p;
  p.t_flip_gnd = Duration{100};
  p.t_flip_half = Duration{300};
  p.t_flip_vdd = Duration{500};
  CHECK(p.flip_time_at(0.0, 1.0).count() == 100);
  CHECK(p.flip_time_at(0.25, 1.0).count() == doctest::Approx(200));
  CHECK(p.flip_time_at(0.5, 1.0).count() == 300);
  CHECK(p.flip_time_at(1.0, 1.0).count() == 500);
  p.t_flip_vdd = infinite_duration();
  CHECK(std::isinf(p.flip_time_at(0.75, 1.0).count()));
  CHECK(p.flip_time_at(0.5, 1.0).count() == 300);
  CHECK(p.min_flip_time().count() == 100);
  for (double v = 0.0; v < 1.0; v += 0.05) CHECK(p.flip_time_at(v, 1.0) <= p.flip_time_at(v + 0.05, 1.0));
}

TEST_CASE("seed splitting is stable and name dependent") {
  CHECK(split_seed(1, "characterize") == split_seed(1, "characterize"));
  CHECK(split_seed(1, "characterize") != split_seed(1, "mitigate"));
  CHECK(split_seed(1, "characterize") != split_seed(2, "characterize"));
  SplitMix r(5);
  double sum = 0, sq = 0;
  for (int i = 0; i < 20000; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / 20000) < 0.05);
  CHECK(sq / 20000 == doctest::Approx(1.0).epsilon(0.05));
}
