#pragma once

// Brute-force labels by explicit slicing, and a random calendar generator
// with holidays, weekend calls and frequent ties.

#include <chrono>
#include <optional>
#include <vector>

#include "flag/labeling.hpp"
#include "flag/random.hpp"

namespace flag_test {

inline std::optional<int> oracle_label(const flag::PriceSeries& s, flag::Date d, flag::Horizon h) {
  std::vector<double> before, after;
  for (const auto& o : s.observations) {
    if (o.date < d) before.push_back(o.close);
    if (o.date > d) after.push_back(o.close);
  }
  const std::size_t k = h == flag::Horizon::Daily ? 1 : 5;
  if (before.size() < k || after.size() < k) return std::nullopt;
  const std::vector<double> prev(before.end() - static_cast<std::ptrdiff_t>(k), before.end());
  const std::vector<double> next(after.begin(), after.begin() + static_cast<std::ptrdiff_t>(k));
  double a = 0, b = 0;
  for (double v : prev) a += v;
  for (double v : next) b += v;
  return b / static_cast<double>(k) > a / static_cast<double>(k) ? 1 : 0;
}

struct LabelCase {
  flag::PriceSeries series;
  flag::CallEvent event;
};

/// Weekday calendar with random holidays, closes on a coarse grid so ties
/// are common, and a call date anywhere from before the first to after the
/// last observation (weekends included).
inline LabelCase random_label_case(flag::Rng& rng) {
  using namespace std::chrono;
  LabelCase c;
  c.series.ticker = "T";
  const flag::Date start = sys_days(year{2015} / 1 / 1) + days(static_cast<int>(rng.below(1500)));
  const int span = 5 + static_cast<int>(rng.below(40));
  const double holiday = rng.uniform(0.0, 0.3);
  const int levels = 1 + static_cast<int>(rng.below(4));
  for (int i = 0; i < span; ++i) {
    const flag::Date d = start + days(i);
    const auto wd = weekday(d);
    if (wd == Saturday || wd == Sunday || rng.bernoulli(holiday)) continue;
    c.series.observations.push_back({d, 10.0 + 0.25 * static_cast<double>(rng.below(levels))});
  }
  c.event.doc_id = "e";
  c.event.ticker = "T";
  c.event.call_date = start + days(static_cast<int>(rng.below(span + 4)) - 2);
  return c;
}

}  // namespace flag_test
