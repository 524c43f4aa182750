#include <catch2/catch_amalgamated.hpp>

#include "pdan/rng.hpp"
#include "pdan/schedule.hpp"

using namespace pdan;

TEST_CASE("default growth table matches the published layout", "[schedule]") {
  GrowthSchedule g;  // (16, 32, 16, 4)
  auto table = g.table();
  REQUIRE(table.size() == 4);
  const int want_in[] = {16, 48, 96, 160};
  const int want_out[] = {32, 48, 64, 80};
  const int want_groups[] = {2, 3, 4, 5};
  for (int i = 0; i < 4; ++i) {
    CHECK(table[i].in_channels == want_in[i]);
    CHECK(table[i].out_channels == want_out[i]);
    CHECK(table[i].groups == want_groups[i]);
  }
  CHECK(g.concat_width() == 240);

  // c0=16 makes the layer widths (j+1)*c0 exactly
  for (int j = 1; j <= 4; ++j) CHECK(g.output_channels(j) == (j + 1) * 16);
}

TEST_CASE("fixed-growth variant arithmetic", "[schedule]") {
  // C_i = c0 + (i-1)*g0 at c0=16, g0=32, i=3
  CHECK(GrowthSchedule::fixed_input_channels(16, 32, 3) == 80);
  CHECK(GrowthSchedule::fixed_output_channels(32) == 32);
}

TEST_CASE("closed form equals brute-force summation", "[schedule]") {
  // i=4 with (16,32,16): 16 + 3*32 + 16*3 = 160
  GrowthSchedule g;
  CHECK(g.input_channels(4) == 160);

  long long checked = 0;
  Rng rng(321);
  for (int trial = 0; trial < 1000; ++trial) {
    GrowthSchedule s;
    s.c0 = 1 + static_cast<int>(rng.uniform_below(64));
    s.g0 = 1 + static_cast<int>(rng.uniform_below(64));
    s.g = static_cast<int>(rng.uniform_below(32));
    const int i = 1 + static_cast<int>(rng.uniform_below(12));
    long long sum = s.c0;
    for (int j = 1; j <= i - 1; ++j) sum += s.output_channels(j);
    REQUIRE(s.input_channels(i) == sum);
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("divisibility failure names the offending layer", "[schedule]") {
  GrowthSchedule bad{/*c0=*/16, /*g0=*/32, /*g=*/17, /*layers=*/4};
  // layer 2 width 49 is not divisible by 3
  try {
    bad.table();
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
  }
}
