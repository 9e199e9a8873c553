#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "fetalus/quantile.hpp"

using namespace fetalus;

// Horner oracle, written independently of QuantileModel::hc_at.
static double horner(const std::array<double, 5>& b, double t) {
  return ((((b[4] * t + b[3]) * t + b[2]) * t + b[1]) * t + b[0]);
}

TEST_CASE("constant and linear coefficient sanity") {
  QuantileSet set;
  set.provenance = "test";
  set.by_percentile[2.5] = {2.5, {100, 0, 0, 0, 0}};
  set.by_percentile[97.5] = {97.5, {200, 0, 0, 0, 0}};
  // constant polynomials are not strictly increasing, so skip validate()
  auto [lo, hi] = hc_percentile_bounds(140, set);
  CHECK(lo == doctest::Approx(100.0));
  CHECK(hi == doctest::Approx(200.0));
  auto [lo2, hi2] = hc_percentile_bounds(98, set);
  CHECK(lo2 == doctest::Approx(100.0));
  CHECK(hi2 == doctest::Approx(200.0));

  QuantileModel linear{50.0, {0, 1, 0, 0, 0}};
  CHECK(linear.hc_at(173) == doctest::Approx(173.0));
}

TEST_CASE("bounds match the Horner oracle to 1e-9 across the full domain") {
  auto set = synthetic_quantile_set();
  for (int t = kGaMinDays; t <= kGaMaxDays; ++t) {
    auto [lo, hi] = hc_percentile_bounds(t, set);
    CHECK(std::abs(lo - horner(set.at(2.5).coeffs, t)) < 1e-9);
    CHECK(std::abs(hi - horner(set.at(97.5).coeffs, t)) < 1e-9);
  }
}

TEST_CASE("domain errors") {
  auto set = synthetic_quantile_set();
  CHECK_THROWS_AS(hc_percentile_bounds(97, set), DomainError);
  CHECK_THROWS_AS(hc_percentile_bounds(281, set), DomainError);
  QuantileSet missing;
  missing.provenance = "x";
  missing.by_percentile[50.0] = {50.0, {0, 1, 0, 0, 0}};
  CHECK_THROWS_AS(hc_percentile_bounds(140, missing), DomainError);
}

TEST_CASE("synthetic reference curves satisfy the growth invariants") {
  auto set = synthetic_quantile_set();
  set.validate();  // strictly increasing + ordered percentiles
  // median anchored near 100 mm at 14w and 342 mm at 40w
  CHECK(set.at(50.0).hc_at(98) == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(set.at(50.0).hc_at(280) == doctest::Approx(342.0).epsilon(1e-9));
}

TEST_CASE("quantile file round-trip and provenance requirement") {
  auto dir = std::filesystem::temp_directory_path();
  auto path = dir / "fetalus_test_quantiles.txt";
  auto set = synthetic_quantile_set();
  save_quantile_file(path, set);
  auto loaded = load_quantile_file(path);
  CHECK(loaded.provenance == set.provenance);
  for (double p : {2.5, 50.0, 97.5})
    for (int i = 0; i < 5; ++i)
      CHECK(loaded.at(p).coeffs[static_cast<std::size_t>(i)] ==
            doctest::Approx(set.at(p).coeffs[static_cast<std::size_t>(i)]));

  // A file without provenance metadata is rejected.
  auto bad = dir / "fetalus_test_quantiles_bad.txt";
  {
    std::ofstream out(bad);
    out << "2.5 1 1 0 0 0\n50 2 1 0 0 0\n97.5 3 1 0 0 0\n";
  }
  CHECK_THROWS_AS(load_quantile_file(bad), DomainError);
  std::filesystem::remove(path);
  std::filesystem::remove(bad);
}
