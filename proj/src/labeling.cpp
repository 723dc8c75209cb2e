#include "flag/labeling.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

#include "binary_io.hpp"
#include "flag/error.hpp"

FLAG_NAMESPACE_BEGIN
namespace {

bool parse_int(std::string_view s, int& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Index of the first observation dated on or after d, and the first after d.
std::pair<std::size_t, std::size_t> bracket(const PriceSeries& series, Date d) {
  const auto& obs = series.observations;
  auto before_end = std::lower_bound(obs.begin(), obs.end(), d,
                                     [](const PriceObservation& o, Date x) { return o.date < x; });
  auto after_begin = std::upper_bound(obs.begin(), obs.end(), d,
                                      [](Date x, const PriceObservation& o) { return x < o.date; });
  return {static_cast<std::size_t>(before_end - obs.begin()), static_cast<std::size_t>(after_begin - obs.begin())};
}

}  // namespace

Date parse_date(std::string_view iso) {
  int y = 0, m = 0, d = 0;
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-' || !parse_int(iso.substr(0, 4), y) ||
      !parse_int(iso.substr(5, 2), m) || !parse_int(iso.substr(8, 2), d)) {
    throw InvalidArgument("malformed date '" + std::string(iso) + "' (expected YYYY-MM-DD)");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw InvalidArgument("invalid calendar date '" + std::string(iso) + "'");
  return Date{ymd};
}

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

int year_of(Date d) { return static_cast<int>(std::chrono::year_month_day{d}.year()); }

std::string to_string(Horizon h) { return h == Horizon::Daily ? "daily" : "weekly"; }

Horizon parse_horizon(std::string_view s) {
  if (s == "daily") return Horizon::Daily;
  if (s == "weekly") return Horizon::Weekly;
  throw InvalidArgument("unknown horizon '" + std::string(s) + "' (expected daily or weekly)");
}

std::optional<Label> daily_label(const PriceSeries& series, const CallEvent& event) {
  const auto [before_end, after_begin] = bracket(series, event.call_date);
  if (before_end == 0 || after_begin >= series.observations.size()) return std::nullopt;
  const double prev = series.observations[before_end - 1].close;
  const double next = series.observations[after_begin].close;
  return Label{next > prev ? 1 : 0, Horizon::Daily};
}

std::optional<Label> weekly_label(const PriceSeries& series, const CallEvent& event) {
  const auto [before_end, after_begin] = bracket(series, event.call_date);
  const auto& obs = series.observations;
  if (before_end < kWeekLength || obs.size() - after_begin < kWeekLength) return std::nullopt;
  double before = 0, after = 0;
  for (std::size_t i = 0; i < kWeekLength; ++i) {
    before += obs[before_end - kWeekLength + i].close;
    after += obs[after_begin + i].close;
  }
  before /= static_cast<double>(kWeekLength);
  after /= static_cast<double>(kWeekLength);
  return Label{after > before ? 1 : 0, Horizon::Weekly};
}

std::optional<Label> make_label(const PriceSeries& series, const CallEvent& event, Horizon horizon) {
  return horizon == Horizon::Daily ? daily_label(series, event) : weekly_label(series, event);
}

PriceStore parse_prices(std::string_view csv) {
  PriceStore store;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  std::set<std::pair<std::string, Date>> seen;
  while (pos < csv.size()) {
    std::size_t eol = csv.find('\n', pos);
    if (eol == std::string_view::npos) eol = csv.size();
    const std::string_view line = trim(csv.substr(pos, eol - pos));
    pos = eol + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "ticker,date,close") throw ParseError(line_no, "expected header 'ticker,date,close'");
      header_seen = true;
      continue;
    }
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos || line.find(',', c2 + 1) != std::string_view::npos) {
      throw ParseError(line_no, "expected 3 comma-separated fields");
    }
    const std::string_view ticker = trim(line.substr(0, c1));
    const std::string_view date = trim(line.substr(c1 + 1, c2 - c1 - 1));
    const std::string_view close_text = trim(line.substr(c2 + 1));
    if (ticker.empty()) throw ParseError(line_no, "empty ticker");

    Date d;
    try {
      d = parse_date(date);
    } catch (const InvalidArgument& e) {
      throw ParseError(line_no, e.what());
    }
    double close = 0;
    auto [p, ec] = std::from_chars(close_text.data(), close_text.data() + close_text.size(), close);
    if (ec != std::errc() || p != close_text.data() + close_text.size() || !std::isfinite(close)) {
      throw ParseError(line_no, "malformed close price '" + std::string(close_text) + "'");
    }
    if (close <= 0) throw ParseError(line_no, "non-positive close price");

    if (!seen.emplace(std::string(ticker), d).second) {
      throw ParseError(line_no, "duplicate price for " + std::string(ticker) + " on " + std::string(date));
    }
    auto& series = store[std::string(ticker)];
    series.ticker = std::string(ticker);
    series.observations.push_back({d, close});
  }
  if (!header_seen) throw ParseError(1, "empty price file");

  for (auto& [ticker, series] : store) {
    std::sort(series.observations.begin(), series.observations.end(),
              [](const auto& a, const auto& b) { return a.date < b.date; });
  }
  return store;
}

PriceStore load_prices(const std::string& path) { return parse_prices(io::read_text_file(path)); }

FLAG_NAMESPACE_END
