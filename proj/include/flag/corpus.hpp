#pragma once

#include "flag/config.hpp"

// On-disk corpus layout and a generator for synthetic corpora with a planted
// signal: a document is labelled 1 iff one of its sentences contains the
// marker concept, and the price series around each call agrees with that
// label on both horizons.
//
// Layout of a corpus directory:
//   amr/<doc_id>.amr    PENMAN document with token and alignment metadata
//   manifest.jsonl      {doc_id, amr_path, ticker, call_date} per line
//   prices.csv          ticker,date,close
//   embeddings.flage    token embedding archive
//   planted.jsonl       {doc_id, label, marker_sentence} per line

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flag/labeling.hpp"
#include "flag/penman.hpp"

FLAG_NAMESPACE_BEGIN

struct ManifestEntry {
  std::string doc_id;
  std::string amr_path;  // resolved against the manifest's directory when read
  std::string ticker;
  Date call_date;
};

/// Reads a JSON Lines manifest. Throws ParseError with the line number on
/// malformed entries and InvalidArgument on duplicate doc ids.
std::vector<ManifestEntry> read_manifest(const std::string& path);

struct CorpusConfig {
  std::size_t n_tickers = 8;
  std::size_t n_train_docs = 80;  // dated before test_year
  std::size_t n_test_docs = 32;   // dated in test_year
  int test_year = 2019;
  std::size_t min_sentences = 6;
  std::size_t max_sentences = 8;
  std::size_t min_concepts = 2;
  std::size_t max_concepts = 5;
  std::string marker = "windfall";
  std::size_t embedding_dim = 32;
  std::uint64_t seed = 0;
};

struct CorpusDocument {
  std::string doc_id;
  std::string ticker;
  Date call_date;
  int label = 0;
  std::optional<std::size_t> marker_sentence;
  std::vector<SentenceAmr> sentences;
};

struct SyntheticCorpus {
  CorpusConfig config;
  std::vector<CorpusDocument> documents;
  PriceStore prices;
};

SyntheticCorpus generate_corpus(const CorpusConfig& config);

/// Writes the corpus layout above into `dir`, creating it if needed.
void write_corpus(const SyntheticCorpus& corpus, const std::string& dir);

/// Space-joined tokens of a sentence.
std::string sentence_text(const SentenceAmr& sentence);

FLAG_NAMESPACE_END
