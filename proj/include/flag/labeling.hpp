#pragma once

#include "flag/config.hpp"

// Value-based trend labels around an earnings-call date.
//
// The price series is the trading calendar: "previous business day" means
// the last date in the series strictly before the call, "following" the
// first date strictly after it.

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

FLAG_NAMESPACE_BEGIN

using Date = std::chrono::sys_days;

/// Parses "YYYY-MM-DD"; throws InvalidArgument on malformed or impossible dates.
Date parse_date(std::string_view iso);
std::string format_date(Date d);
int year_of(Date d);

struct PriceObservation {
  Date date;
  double close = 0;
};

struct PriceSeries {
  std::string ticker;
  std::vector<PriceObservation> observations;  // strictly ascending dates, positive closes
};

using PriceStore = std::map<std::string, PriceSeries, std::less<>>;

struct CallEvent {
  std::string doc_id;
  std::string ticker;
  Date call_date;
};

enum class Horizon { Daily, Weekly };

std::string to_string(Horizon h);
Horizon parse_horizon(std::string_view s);

struct Label {
  int value = 0;  // 0 or 1
  Horizon horizon = Horizon::Daily;

  friend bool operator==(const Label&, const Label&) = default;
};

/// Trading days averaged on each side by the weekly label.
inline constexpr std::size_t kWeekLength = 5;

/// 1 iff the close on the first trading date after the call strictly exceeds
/// the close on the last trading date before it. nullopt when either side is
/// missing (the event is unlabelable).
std::optional<Label> daily_label(const PriceSeries& series, const CallEvent& event);

/// 1 iff the mean close of the 5 trading dates after the call strictly
/// exceeds the mean of the 5 before. nullopt with fewer than 5 on either side.
std::optional<Label> weekly_label(const PriceSeries& series, const CallEvent& event);

std::optional<Label> make_label(const PriceSeries& series, const CallEvent& event, Horizon horizon);

/// Parses CSV text with header "ticker,date,close". Rows may come in any
/// order; each series is sorted. Errors carry the 1-based line number.
PriceStore parse_prices(std::string_view csv);
PriceStore load_prices(const std::string& path);

FLAG_NAMESPACE_END
