#pragma once
// Head-circumference growth curves: degree-4 polynomials in gestational age
// (days), one per population percentile. Loaded from a reference file that
// must carry provenance metadata.

#include <array>
#include <filesystem>
#include <map>
#include <string>

#include "fetalus/common.hpp"

namespace fetalus {

constexpr int kGaMinDays = 98;   // 14 weeks
constexpr int kGaMaxDays = 280;  // 40 weeks

struct QuantileModel {
  double percentile = 0.0;             // 2.5, 50, or 97.5
  std::array<double, 5> coeffs{};      // b0..b4

  // HC in mm at gestational age t days.
  double hc_at(double t_days) const {
    double v = 0.0;
    for (int i = 4; i >= 0; --i) v = v * t_days + coeffs[static_cast<std::size_t>(i)];
    return v;
  }
};

struct QuantileSet {
  std::string provenance;
  std::map<double, QuantileModel> by_percentile;

  const QuantileModel& at(double percentile) const;
  bool has(double percentile) const { return by_percentile.count(percentile) > 0; }

  // Checks the growth-curve invariants: each curve strictly increasing on
  // [98, 280] days and the 2.5 < 50 < 97.5 curves pointwise ordered.
  void validate() const;
};

// File format: '# provenance: <text>' header line (required), then one line
// per percentile: '<percentile> <b0> <b1> <b2> <b3> <b4>'.
QuantileSet load_quantile_file(const std::filesystem::path& path);
void save_quantile_file(const std::filesystem::path& path, const QuantileSet& set);

// Synthetic reference curves used by the phantom closed loop: the median
// runs from 100 mm at 14 weeks to 342 mm at 40 weeks with decelerating
// growth, and the outer percentiles sit at +/-7% of the median.
QuantileSet synthetic_quantile_set();

// (hc_lo, hc_hi) in mm at ga_days: the 2.5th and 97.5th percentile curves
// evaluated at the given age. Throws DomainError outside [98, 280].
std::pair<double, double> hc_percentile_bounds(int ga_days, const QuantileSet& set);

}  // namespace fetalus
