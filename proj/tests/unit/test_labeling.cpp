#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "flag/error.hpp"
#include "flag/labeling.hpp"
#include "label_oracle.hpp"
#include "support.hpp"

using namespace flag;

namespace {

PriceSeries series(std::initializer_list<std::pair<const char*, double>> obs) {
  PriceSeries s{"ACME", {}};
  for (auto [d, c] : obs) s.observations.push_back({parse_date(d), c});
  return s;
}

CallEvent call(const char* date) { return {"doc", "ACME", parse_date(date)}; }

std::size_t error_line(std::string_view csv) {
  try {
    parse_prices(csv);
  } catch (const ParseError& e) {
    return e.line();
  }
  FAIL("expected a parse error");
  return 0;
}

// Week of closes at 10 (Mon 2019-03-04 .. Fri 03-08), a call on Mon 03-11,
// then a week at `after` (Tue 03-12 .. Mon 03-18).
PriceSeries two_weeks(double after) {
  PriceSeries s{"ACME", {}};
  for (const char* d : {"2019-03-04", "2019-03-05", "2019-03-06", "2019-03-07", "2019-03-08"}) {
    s.observations.push_back({parse_date(d), 10.0});
  }
  for (const char* d : {"2019-03-12", "2019-03-13", "2019-03-14", "2019-03-15", "2019-03-18"}) {
    s.observations.push_back({parse_date(d), after});
  }
  return s;
}

}  // namespace

TEST_CASE("dates") {
  const Date d = parse_date("2019-02-28");
  CHECK(format_date(d) == "2019-02-28");
  CHECK(year_of(d) == 2019);
  CHECK(format_date(parse_date("2020-02-29")) == "2020-02-29");
  CHECK_THROWS_AS(parse_date("2019-02-29"), InvalidArgument);
  CHECK_THROWS_AS(parse_date("2019-2-28"), InvalidArgument);
  CHECK_THROWS_AS(parse_date("yesterday"), InvalidArgument);
  CHECK(parse_horizon(to_string(Horizon::Weekly)) == Horizon::Weekly);
  CHECK(parse_horizon("daily") == Horizon::Daily);
  CHECK_THROWS_AS(parse_horizon("monthly"), InvalidArgument);
}

TEST_CASE("daily label: rise, tie and fall") {
  CHECK(daily_label(series({{"2019-01-02", 10.0}, {"2019-01-04", 11.0}}), call("2019-01-03")) ==
        Label{1, Horizon::Daily});
  CHECK(daily_label(series({{"2019-01-02", 10.0}, {"2019-01-04", 10.0}}), call("2019-01-03"))->value == 0);
  CHECK(daily_label(series({{"2019-01-02", 10.0}, {"2019-01-04", 9.5}}), call("2019-01-03"))->value == 0);
}

TEST_CASE("daily label skips the call date and non-trading days") {
  // Call on a Saturday: Friday's and Monday's closes are compared.
  const auto s = series({{"2019-01-03", 50.0}, {"2019-01-04", 10.0}, {"2019-01-07", 12.0}, {"2019-01-08", 1.0}});
  CHECK(daily_label(s, call("2019-01-05"))->value == 1);
  // Call on a trading date: that date's own close is ignored.
  const auto t = series({{"2019-01-03", 10.0}, {"2019-01-04", 99.0}, {"2019-01-07", 9.0}});
  CHECK(daily_label(t, call("2019-01-04"))->value == 0);
}

TEST_CASE("unlabelable events") {
  const auto s = series({{"2019-01-03", 10.0}, {"2019-01-04", 11.0}});
  CHECK_FALSE(daily_label(s, call("2019-01-03")).has_value());
  CHECK_FALSE(daily_label(s, call("2019-01-04")).has_value());
  CHECK_FALSE(daily_label(s, call("2018-12-01")).has_value());
  CHECK_FALSE(daily_label(PriceSeries{}, call("2019-01-01")).has_value());
  CHECK_FALSE(weekly_label(s, call("2019-01-03")).has_value());
  auto short_week = two_weeks(11.0);
  short_week.observations.erase(short_week.observations.begin());
  CHECK_FALSE(weekly_label(short_week, call("2019-03-11")).has_value());
  CHECK(daily_label(short_week, call("2019-03-11")).has_value());
}

TEST_CASE("weekly label") {
  CHECK(weekly_label(two_weeks(11.0), call("2019-03-11")) == Label{1, Horizon::Weekly});
  CHECK(weekly_label(two_weeks(10.0), call("2019-03-11"))->value == 0);
  CHECK(weekly_label(two_weeks(9.0), call("2019-03-11"))->value == 0);
  CHECK(make_label(two_weeks(11.0), call("2019-03-11"), Horizon::Weekly)->horizon == Horizon::Weekly);
  CHECK(make_label(two_weeks(11.0), call("2019-03-11"), Horizon::Daily)->horizon == Horizon::Daily);
}

TEST_CASE("weekly label averages exactly the five nearest trading days") {
  auto s = two_weeks(10.0);
  s.observations.insert(s.observations.begin(), {parse_date("2019-03-01"), 1000.0});
  s.observations.push_back({parse_date("2019-03-19"), 0.01});
  CHECK(weekly_label(s, call("2019-03-11"))->value == 0);
  s.observations[5].close = 10.25;  // last day before the call
  CHECK(weekly_label(s, call("2019-03-11"))->value == 0);
  s.observations[6].close = 10.5;  // first day after the call
  CHECK(weekly_label(s, call("2019-03-11"))->value == 1);
}

TEST_CASE("constant series labels 0 at both horizons") {
  auto s = two_weeks(10.0);
  CHECK(daily_label(s, call("2019-03-11"))->value == 0);
  CHECK(weekly_label(s, call("2019-03-11"))->value == 0);
}

TEST_CASE("labels agree with the slicing oracle and are scale invariant") {
  Rng rng(2024);
  std::size_t labeled = 0, ties = 0;
  for (int i = 0; i < 1000; ++i) {
    auto c = flag_test::random_label_case(rng);
    for (auto h : {Horizon::Daily, Horizon::Weekly}) {
      const auto got = make_label(c.series, c.event, h);
      const auto want = flag_test::oracle_label(c.series, c.event.call_date, h);
      REQUIRE(got.has_value() == want.has_value());
      if (!got) continue;
      ++labeled;
      CHECK(got->value == *want);
      auto scaled = c.series;
      for (auto& o : scaled.observations) o.close *= 3.0;
      CHECK(make_label(scaled, c.event, h)->value == got->value);
      ties += got->value == 0;
    }
  }
  CHECK(labeled > 800);
  CHECK(ties > 100);
}

TEST_CASE("price CSV: interleaved tickers become sorted series") {
  const auto store = parse_prices(
      "ticker,date,close\n"
      "BOLT,2019-01-03,5.5\n"
      "ACME,2019-01-04,11\n"
      "ACME,2019-01-02,10\n"
      "BOLT,2019-01-02,5.25\n"
      "\n"
      "ACME,2019-01-03,10.5\n");
  REQUIRE(store.size() == 2);
  const auto& acme = store.at("ACME");
  CHECK(acme.ticker == "ACME");
  REQUIRE(acme.observations.size() == 3);
  CHECK(format_date(acme.observations[0].date) == "2019-01-02");
  CHECK(acme.observations[2].close == 11.0);
  CHECK(store.at("BOLT").observations[0].close == 5.25);
}

TEST_CASE("price CSV errors carry line numbers") {
  CHECK(error_line("date,ticker,close\n") == 1);
  CHECK(error_line("ticker,date,close\nACME,2019-01-02,10\nACME,2019-01-02,11\n") == 3);
  CHECK(error_line("ticker,date,close\nACME,2019-01-02,0\n") == 2);
  CHECK(error_line("ticker,date,close\nACME,2019-01-02,-3\n") == 2);
  CHECK(error_line("ticker,date,close\nACME,2019-01-02\n") == 2);
  CHECK(error_line("ticker,date,close\nACME,2019-01-02,1,2\n") == 2);
  CHECK(error_line("ticker,date,close\n\nACME,2019-13-02,1\n") == 3);
  CHECK(error_line("ticker,date,close\nACME,2019-01-02,abc\n") == 2);
  CHECK(error_line("ticker,date,close\n,2019-01-02,1\n") == 2);
}

TEST_CASE("price CSV fuzz: either loads or reports the first bad line") {
  Rng rng(77);
  const char* tickers[] = {"ACME", "BOLT", "CRUX"};
  for (int trial = 0; trial < 20; ++trial) {
    std::ostringstream csv;
    csv << "ticker,date,close\n";
    const std::size_t bad_at = trial % 2 == 0 ? 2 + rng.below(500) : 0;
    const Date base = parse_date("2010-01-01");
    for (std::size_t i = 0; i < 500; ++i) {
      const std::size_t line = i + 2;
      const char* t = tickers[i % 3];
      const Date d = base + std::chrono::days(static_cast<int>(i / 3));
      if (line == bad_at) {
        csv << t << "," << format_date(d) << ",-1\n";
      } else {
        csv << t << "," << format_date(d) << "," << 1 + rng.below(100) << ".5\n";
      }
    }
    if (bad_at == 0) {
      const auto store = parse_prices(csv.str());
      CHECK(store.size() == 3);
    } else {
      CHECK(error_line(csv.str()) == bad_at);
    }
  }
}

TEST_CASE("load_prices reads files") {
  flag_test::TempDir dir("prices");
  {
    std::ofstream out(dir.file("p.csv"));
    out << "ticker,date,close\nACME,2019-01-02,10\n";
  }
  CHECK(load_prices(dir.file("p.csv")).at("ACME").observations.size() == 1);
  CHECK_THROWS(load_prices(dir.file("missing.csv")));
}
