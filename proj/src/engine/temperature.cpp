#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "coldisturb/engine.hpp"

namespace coldisturb {

TemperatureProfile TemperatureProfile::exponential(double speedup_45_to_95) {
  if (!(speedup_45_to_95 >= 1.0) || !std::isfinite(speedup_45_to_95))
    throw ConfigError("temperature speedup must be >= 1");
  TemperatureProfile p;
  p.name_ = fmt::format("exponential({})", speedup_45_to_95);
  p.alpha_ = std::log(speedup_45_to_95) / 50.0;
  return p;
}

TemperatureProfile TemperatureProfile::table(std::vector<std::pair<double, double>> points) {
  if (points.size() < 2) throw ConfigError("temperature table needs at least two points");
  std::sort(points.begin(), points.end());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].second > 0.0)) throw ConfigError("temperature scale factors must be positive");
    if (i > 0 && !(points[i].first > points[i - 1].first && points[i].second < points[i - 1].second))
      throw ConfigError("temperature table must be strictly decreasing in scale");
  }
  TemperatureProfile p;
  p.name_ = "table";
  for (auto& [c, s] : points) p.points_.emplace_back(c, std::log(s));
  const double at85 = std::log(p.scale(85.0));
  for (auto& pt : p.points_) pt.second -= at85;
  return p;
}

TemperatureProfile TemperatureProfile::preset(const std::string& name) {
  // Speedups of the time to first bitflip from 45 C to 95 C.
  if (name == "sk-hynix") return exponential(9.05);
  if (name == "micron") return exponential(5.15);
  if (name == "samsung") return exponential(1.96);
  if (name == "flat") {
    TemperatureProfile p;
    p.name_ = "flat";
    return p;
  }
  throw ConfigError(fmt::format("unknown temperature preset '{}'", name));
}

double TemperatureProfile::scale(double celsius) const {
  if (points_.empty()) return std::exp(-alpha_ * (celsius - 85.0));
  auto hi = std::upper_bound(points_.begin(), points_.end(), celsius,
                             [](double c, const auto& pt) { return c < pt.first; });
  if (hi == points_.begin()) hi = points_.begin() + 1;
  if (hi == points_.end()) hi = points_.end() - 1;
  const auto lo = hi - 1;
  const double x = (celsius - lo->first) / (hi->first - lo->first);
  return std::exp(lo->second + x * (hi->second - lo->second));
}

}  // namespace coldisturb
