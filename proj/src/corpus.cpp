#include "flag/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "flag/embeddings.hpp"
#include "flag/error.hpp"
#include "flag/random.hpp"

FLAG_NAMESPACE_BEGIN
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string ticker_name(std::size_t i) {
  static const char* const names[] = {"ACME", "BOLT", "CRUX", "DYNA", "EMBR", "FLUX", "GRID", "HALO"};
  if (i < std::size(names)) return names[i];
  return "T" + std::to_string(i);
}

// Quarter `q` counted from the first quarter of year 0 (q may be negative).
Date call_date_in_quarter(int base_year, long q, Rng& rng) {
  const long year_offset = q >= 0 ? q / 4 : -((-q + 3) / 4);
  const long quarter = q - 4 * year_offset;
  const int year = base_year + static_cast<int>(year_offset);
  const unsigned month = static_cast<unsigned>(3 * quarter + 2);
  const unsigned day = static_cast<unsigned>(rng.range(1, 20));
  return Date{std::chrono::year{year} / std::chrono::month{month} / std::chrono::day{day}};
}

bool is_weekday(Date d) {
  const std::chrono::weekday wd{d};
  return wd != std::chrono::Saturday && wd != std::chrono::Sunday;
}

double quarter_tick(double v) { return std::round(v * 4.0) / 4.0; }

PriceSeries make_series(const std::string& ticker, const std::vector<const CorpusDocument*>& calls, Rng& rng) {
  PriceSeries series;
  series.ticker = ticker;
  Date first = calls.front()->call_date, last = calls.front()->call_date;
  for (const auto* c : calls) {
    first = std::min(first, c->call_date);
    last = std::max(last, c->call_date);
  }
  double v = 100.0;
  for (Date d = first - std::chrono::days{30}; d <= last + std::chrono::days{30}; d += std::chrono::days{1}) {
    if (!is_weekday(d)) continue;
    v = std::max(10.0, v + 0.25 * static_cast<double>(rng.range(-4, 4)));
    series.observations.push_back({d, v});
  }

  auto& obs = series.observations;
  for (const auto* c : calls) {
    auto before = std::lower_bound(obs.begin(), obs.end(), c->call_date,
                                   [](const PriceObservation& o, Date x) { return o.date < x; });
    auto after = std::upper_bound(obs.begin(), obs.end(), c->call_date,
                                  [](Date x, const PriceObservation& o) { return x < o.date; });
    const double base = quarter_tick(std::max(10.0, (before - kWeekLength)->close));
    const double moved = base + (c->label ? 2.0 : -2.0);
    for (auto it = before - kWeekLength; it != before; ++it) it->close = base;
    for (auto it = after; it != after + kWeekLength; ++it) it->close = moved;
  }
  return series;
}

}  // namespace

std::string sentence_text(const SentenceAmr& sentence) {
  std::string out;
  for (const auto& t : sentence.tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  const std::string text = io::read_text_file(path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ManifestEntry e;
    try {
      const json j = json::parse(line);
      e.doc_id = j.at("doc_id").get<std::string>();
      e.amr_path = j.at("amr_path").get<std::string>();
      e.ticker = j.at("ticker").get<std::string>();
      e.call_date = parse_date(j.at("call_date").get<std::string>());
    } catch (const json::exception& ex) {
      throw ParseError(line_no, std::string("manifest entry: ") + ex.what());
    } catch (const InvalidArgument& ex) {
      throw ParseError(line_no, ex.what());
    }
    if (e.doc_id.empty()) throw ParseError(line_no, "manifest entry has an empty doc_id");
    if (fs::path(e.amr_path).is_relative()) e.amr_path = (base / e.amr_path).string();
    seen.push_back(e.doc_id);
    out.push_back(std::move(e));
  }
  std::sort(seen.begin(), seen.end());
  if (auto dup = std::adjacent_find(seen.begin(), seen.end()); dup != seen.end()) {
    throw InvalidArgument("manifest lists document " + *dup + " twice");
  }
  return out;
}

SyntheticCorpus generate_corpus(const CorpusConfig& config) {
  if (config.n_tickers == 0) throw InvalidArgument("corpus needs at least one ticker");
  if (config.min_sentences == 0 || config.min_sentences > config.max_sentences) {
    throw InvalidArgument("invalid sentence count range");
  }
  if (config.min_concepts == 0 || config.min_concepts > config.max_concepts) {
    throw InvalidArgument("invalid concept count range");
  }
  if (config.marker.empty()) throw InvalidArgument("marker token must be non-empty");

  SyntheticCorpus corpus;
  corpus.config = config;
  Rng rng(mix_seed(config.seed, fnv1a("corpus")));

  auto balanced_labels = [&](std::size_t n) {
    std::vector<int> labels(n, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n / 2), 1);
    rng.shuffle(labels.begin(), labels.end());
    return labels;
  };
  const auto train_labels = balanced_labels(config.n_train_docs);
  const auto test_labels = balanced_labels(config.n_test_docs);

  // Test documents fill quarters forward from the test year; the others fill
  // quarters backward from the year before.
  auto schedule = [&](std::size_t k, bool test) {
    const long slot = static_cast<long>(k / config.n_tickers);
    const long q = test ? slot : -1 - slot;
    return std::pair{ticker_name(k % config.n_tickers), call_date_in_quarter(config.test_year, q, rng)};
  };

  const std::size_t total = config.n_train_docs + config.n_test_docs;
  for (std::size_t k = 0; k < total; ++k) {
    const bool test = k >= config.n_train_docs;
    const std::size_t local = test ? k - config.n_train_docs : k;
    CorpusDocument doc;
    std::tie(doc.ticker, doc.call_date) = schedule(local, test);
    const auto ymd = std::chrono::year_month_day{doc.call_date};
    doc.doc_id = doc.ticker + "-" + std::to_string(static_cast<int>(ymd.year())) + "Q" +
                 std::to_string((static_cast<unsigned>(ymd.month()) - 1) / 3 + 1);
    doc.label = test ? test_labels[local] : train_labels[local];

    const auto m = static_cast<std::size_t>(
        rng.range(static_cast<std::int64_t>(config.min_sentences), static_cast<std::int64_t>(config.max_sentences)));
    if (doc.label == 1) doc.marker_sentence = rng.below(m);
    for (std::size_t j = 0; j < m; ++j) {
      const auto n = static_cast<std::size_t>(
          rng.range(static_cast<std::int64_t>(config.min_concepts), static_cast<std::int64_t>(config.max_concepts)));
      SentenceAmr s = generate_random_amr(rng.next_u64(), n, 0.2);
      s.sentence_index = j;
      if (doc.marker_sentence == j) {
        const std::size_t r = rng.below(n);
        s.nodes[r].concept_label = config.marker;
        s.tokens[r] = config.marker;
      }
      doc.sentences.push_back(std::move(s));
    }
    corpus.documents.push_back(std::move(doc));
  }

  std::map<std::string, std::vector<const CorpusDocument*>> by_ticker;
  for (const auto& doc : corpus.documents) by_ticker[doc.ticker].push_back(&doc);
  for (auto& [ticker, calls] : by_ticker) {
    std::sort(calls.begin(), calls.end(), [](const auto* a, const auto* b) { return a->call_date < b->call_date; });
    corpus.prices[ticker] = make_series(ticker, calls, rng);
  }
  return corpus;
}

void write_corpus(const SyntheticCorpus& corpus, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root / "amr");

  std::string manifest, planted;
  PseudoEmbeddingProvider provider(corpus.config.embedding_dim, corpus.config.seed);
  TokenEmbeddingArchive archive(corpus.config.embedding_dim);
  for (const auto& doc : corpus.documents) {
    const std::string rel = "amr/" + doc.doc_id + ".amr";
    const std::string amr = serialize_penman_document(doc.sentences);
    io::write_file((root / rel).string(), {amr.begin(), amr.end()});

    manifest += json{{"doc_id", doc.doc_id}, {"amr_path", rel}, {"ticker", doc.ticker},
                     {"call_date", format_date(doc.call_date)}}
                    .dump() +
                "\n";
    json p{{"doc_id", doc.doc_id}, {"label", doc.label}, {"marker_sentence", nullptr}};
    if (doc.marker_sentence) p["marker_sentence"] = *doc.marker_sentence;
    planted += p.dump() + "\n";

    for (const auto& s : doc.sentences) {
      std::vector<float> data;
      for (const auto& t : s.tokens) {
        const auto v = provider.token_vector(t);
        data.insert(data.end(), v.begin(), v.end());
      }
      archive.add(doc.doc_id, static_cast<std::uint32_t>(s.sentence_index), static_cast<std::uint32_t>(s.tokens.size()),
                  std::move(data));
    }
  }

  std::ostringstream prices;
  prices << "ticker,date,close\n";
  for (const auto& [ticker, series] : corpus.prices) {
    for (const auto& o : series.observations) {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof buf, o.close);
      prices << ticker << ',' << format_date(o.date) << ',' << std::string_view(buf, res.ptr - buf) << '\n';
    }
  }
  const std::string price_text = prices.str();

  io::write_file((root / "manifest.jsonl").string(), {manifest.begin(), manifest.end()});
  io::write_file((root / "planted.jsonl").string(), {planted.begin(), planted.end()});
  io::write_file((root / "prices.csv").string(), {price_text.begin(), price_text.end()});
  archive.save((root / "embeddings.flage").string());
}

FLAG_NAMESPACE_END
