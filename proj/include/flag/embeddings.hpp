#pragma once

#include "flag/config.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "flag/penman.hpp"

FLAG_NAMESPACE_BEGIN

/// Default token embedding width (FinBERT hidden size).
inline constexpr std::size_t kDefaultEmbeddingDim = 768;

/// Source of per-token vectors for concept-node features.
///
/// Implementations are read-only after construction and safe to share
/// across threads.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::size_t dim() const = 0;

  /// Mean of the token vectors in `span` of the given sentence. `tokens` is
  /// the sentence's surface token list.
  virtual std::vector<float> lookup(std::string_view doc_id, std::size_t sentence_index,
                                    std::span<const std::string> tokens, TokenSpan span) const = 0;
};

/// Per-(document, sentence) token matrices produced offline by a language
/// model. Binary layout:
///
///   "FLAGE1" | u32 D | u32 n_records
///   n_records x { str doc_id | u32 sentence_index | u32 T | u64 byte offset }
///   row-major float32 matrices (T x D) at the recorded offsets
///
/// All integers and floats little-endian; str is u32 length + bytes.
class TokenEmbeddingArchive {
 public:
  using Key = std::pair<std::string, std::uint32_t>;

  struct Matrix {
    std::uint32_t rows = 0;
    std::vector<float> data;  // rows x dim

    friend bool operator==(const Matrix&, const Matrix&) = default;
  };

  explicit TokenEmbeddingArchive(std::size_t dim = kDefaultEmbeddingDim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }

  void add(const std::string& doc_id, std::uint32_t sentence_index, std::uint32_t n_tokens, std::vector<float> data);

  const Matrix* find(std::string_view doc_id, std::uint32_t sentence_index) const;

  std::vector<std::uint8_t> serialize() const;
  static TokenEmbeddingArchive deserialize(std::span<const std::uint8_t> bytes);

  void save(const std::string& path) const;
  static TokenEmbeddingArchive load(const std::string& path);

  friend bool operator==(const TokenEmbeddingArchive&, const TokenEmbeddingArchive&) = default;

 private:
  std::size_t dim_;
  std::map<Key, Matrix, std::less<>> entries_;
};

/// Looks vectors up in an archive.
class FileEmbeddingProvider final : public EmbeddingProvider {
 public:
  /// Throws InvalidArgument if the archive width differs from `expected_dim`.
  FileEmbeddingProvider(TokenEmbeddingArchive archive, std::size_t expected_dim);

  std::size_t dim() const override { return archive_.dim(); }

  std::vector<float> lookup(std::string_view doc_id, std::size_t sentence_index,
                            std::span<const std::string> tokens, TokenSpan span) const override;

 private:
  TokenEmbeddingArchive archive_;
};

/// Deterministic stand-in for a language model: each token string seeds its
/// own stream of D uniform(-0.5, 0.5) draws, so equal tokens get equal vectors
/// regardless of where they occur.
class PseudoEmbeddingProvider final : public EmbeddingProvider {
 public:
  PseudoEmbeddingProvider(std::size_t dim, std::uint64_t seed);

  std::size_t dim() const override { return dim_; }

  std::vector<float> token_vector(std::string_view token) const;

  std::vector<float> lookup(std::string_view doc_id, std::size_t sentence_index,
                            std::span<const std::string> tokens, TokenSpan span) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

FLAG_NAMESPACE_END
