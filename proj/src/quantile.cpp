#include "fetalus/quantile.hpp"

#include <fstream>
#include <sstream>

namespace fetalus {

const QuantileModel& QuantileSet::at(double percentile) const {
  auto it = by_percentile.find(percentile);
  if (it == by_percentile.end())
    throw DomainError("quantile set missing percentile " + format_number(percentile));
  return it->second;
}

void QuantileSet::validate() const {
  for (const auto& [p, model] : by_percentile) {
    for (int t = kGaMinDays; t < kGaMaxDays; ++t) {
      if (model.hc_at(t + 1) <= model.hc_at(t))
        throw DomainError("quantile curve p" + format_number(p) +
                          " not strictly increasing at t=" + std::to_string(t));
    }
  }
  if (has(2.5) && has(50.0) && has(97.5)) {
    const auto& lo = at(2.5);
    const auto& mid = at(50.0);
    const auto& hi = at(97.5);
    for (int t = kGaMinDays; t <= kGaMaxDays; ++t) {
      if (!(lo.hc_at(t) < mid.hc_at(t) && mid.hc_at(t) < hi.hc_at(t)))
        throw DomainError("quantile curves not ordered at t=" + std::to_string(t));
    }
  }
}

QuantileSet load_quantile_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open quantile file: " + path.string());
  QuantileSet set;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string key = "# provenance:";
      if (line.rfind(key, 0) == 0) {
        std::string v = line.substr(key.size());
        while (!v.empty() && v.front() == ' ') v.erase(v.begin());
        set.provenance = v;
      }
      continue;
    }
    std::istringstream ls(line);
    QuantileModel m;
    ls >> m.percentile;
    for (auto& b : m.coeffs) ls >> b;
    if (!ls) throw DomainError("malformed quantile line: " + line);
    set.by_percentile[m.percentile] = m;
  }
  if (set.provenance.empty())
    throw DomainError("quantile file missing '# provenance:' metadata: " + path.string());
  if (set.by_percentile.empty())
    throw DomainError("quantile file has no percentile rows: " + path.string());
  set.validate();
  return set;
}

void save_quantile_file(const std::filesystem::path& path, const QuantileSet& set) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write quantile file: " + path.string());
  out << "# provenance: " << set.provenance << "\n";
  out << "# columns: percentile b0 b1 b2 b3 b4\n";
  out.precision(17);
  for (const auto& [p, m] : set.by_percentile) {
    out << p;
    for (double b : m.coeffs) out << " " << b;
    out << "\n";
  }
}

QuantileSet synthetic_quantile_set() {
  // Median: quadratic through (98 d, 100 mm) and (280 d, 342 mm) with the
  // growth rate tapering to 0.9 mm/day at term.
  const double b2 = -78.2 / 33124.0;
  const double b1 = 0.9 - 560.0 * b2;
  const double b0 = 100.0 - b1 * 98.0 - b2 * 98.0 * 98.0;

  QuantileSet set;
  set.provenance = "synthetic reference v1 (generated growth curves for phantom data)";
  for (double p : {2.5, 50.0, 97.5}) {
    double scale = p == 2.5 ? 0.93 : (p == 97.5 ? 1.07 : 1.0);
    QuantileModel m;
    m.percentile = p;
    m.coeffs = {b0 * scale, b1 * scale, b2 * scale, 0.0, 0.0};
    set.by_percentile[p] = m;
  }
  set.validate();
  return set;
}

std::pair<double, double> hc_percentile_bounds(int ga_days, const QuantileSet& set) {
  if (ga_days < kGaMinDays || ga_days > kGaMaxDays)
    throw DomainError("ga_days out of [98, 280]: " + std::to_string(ga_days));
  if (!set.has(2.5) || !set.has(97.5))
    throw DomainError("quantile set must contain percentiles 2.5 and 97.5");
  return {set.at(2.5).hc_at(ga_days), set.at(97.5).hc_at(ga_days)};
}

}  // namespace fetalus
