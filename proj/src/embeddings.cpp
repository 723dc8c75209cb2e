#include "flag/embeddings.hpp"

#include "binary_io.hpp"
#include "flag/error.hpp"
#include "flag/random.hpp"

FLAG_NAMESPACE_BEGIN
namespace {

constexpr std::string_view kArchiveMagic = "FLAGE1";

void check_span(TokenSpan span, std::size_t n_tokens, std::string_view doc_id, std::size_t sentence_index) {
  if (span.start >= span.end || span.end > n_tokens) {
    throw InvalidArgument("token range [" + std::to_string(span.start) + ", " + std::to_string(span.end) +
                          ") out of bounds for " + std::string(doc_id) + " sentence " +
                          std::to_string(sentence_index) + " with " + std::to_string(n_tokens) + " tokens");
  }
}

}  // namespace

void TokenEmbeddingArchive::add(const std::string& doc_id, std::uint32_t sentence_index, std::uint32_t n_tokens,
                                std::vector<float> data) {
  if (data.size() != static_cast<std::size_t>(n_tokens) * dim_) {
    throw InvalidArgument("archive entry for " + doc_id + " has " + std::to_string(data.size()) +
                          " floats, expected " + std::to_string(n_tokens) + " x " + std::to_string(dim_));
  }
  entries_[{doc_id, sentence_index}] = Matrix{n_tokens, std::move(data)};
}

const TokenEmbeddingArchive::Matrix* TokenEmbeddingArchive::find(std::string_view doc_id,
                                                                 std::uint32_t sentence_index) const {
  auto it = entries_.find(Key{std::string(doc_id), sentence_index});
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::uint8_t> TokenEmbeddingArchive::serialize() const {
  io::ByteWriter w;
  w.magic(kArchiveMagic);
  w.u32(static_cast<std::uint32_t>(dim_));
  w.u32(static_cast<std::uint32_t>(entries_.size()));

  std::size_t header = w.size();
  for (const auto& [key, m] : entries_) header += 4 + key.first.size() + 4 + 4 + 8;

  std::uint64_t offset = header;
  for (const auto& [key, m] : entries_) {
    w.str(key.first);
    w.u32(key.second);
    w.u32(m.rows);
    w.u64(offset);
    offset += m.data.size() * 4;
  }
  for (const auto& [key, m] : entries_) {
    for (float v : m.data) w.f32(v);
  }
  return w.take();
}

TokenEmbeddingArchive TokenEmbeddingArchive::deserialize(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes.data(), bytes.size(), "embedding archive");
  r.expect_magic(kArchiveMagic);
  const std::uint32_t dim = r.u32();
  if (dim == 0) throw FormatError("embedding archive: zero dimension");
  const std::uint32_t n = r.u32();

  struct Record {
    std::string doc_id;
    std::uint32_t sentence_index, rows;
    std::uint64_t offset;
  };
  std::vector<Record> records;
  records.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Record rec;
    rec.doc_id = r.str();
    rec.sentence_index = r.u32();
    rec.rows = r.u32();
    rec.offset = r.u64();
    records.push_back(std::move(rec));
  }

  TokenEmbeddingArchive archive(dim);
  std::size_t end = r.pos();
  for (const auto& rec : records) {
    r.seek(rec.offset);
    std::vector<float> data(static_cast<std::size_t>(rec.rows) * dim);
    for (float& v : data) v = r.f32();
    end = std::max(end, r.pos());
    if (archive.find(rec.doc_id, rec.sentence_index)) {
      throw FormatError("embedding archive: duplicate record for " + rec.doc_id);
    }
    archive.add(rec.doc_id, rec.sentence_index, rec.rows, std::move(data));
  }
  r.seek(end);
  r.expect_end();
  return archive;
}

void TokenEmbeddingArchive::save(const std::string& path) const { io::write_file(path, serialize()); }

TokenEmbeddingArchive TokenEmbeddingArchive::load(const std::string& path) {
  const auto bytes = io::read_file(path);
  return deserialize(bytes);
}

FileEmbeddingProvider::FileEmbeddingProvider(TokenEmbeddingArchive archive, std::size_t expected_dim)
    : archive_(std::move(archive)) {
  if (archive_.dim() != expected_dim) {
    throw InvalidArgument("embedding archive has dimension " + std::to_string(archive_.dim()) +
                          " but the configuration expects " + std::to_string(expected_dim));
  }
}

std::vector<float> FileEmbeddingProvider::lookup(std::string_view doc_id, std::size_t sentence_index,
                                                 std::span<const std::string> tokens, TokenSpan span) const {
  const auto* m = archive_.find(doc_id, static_cast<std::uint32_t>(sentence_index));
  if (!m) {
    throw InvalidArgument("embedding archive has no entry for " + std::string(doc_id) + " sentence " +
                          std::to_string(sentence_index));
  }
  if (!tokens.empty() && tokens.size() != m->rows) {
    throw InvalidArgument("embedding archive stores " + std::to_string(m->rows) + " tokens for " +
                          std::string(doc_id) + " sentence " + std::to_string(sentence_index) + ", corpus has " +
                          std::to_string(tokens.size()));
  }
  check_span(span, m->rows, doc_id, sentence_index);

  const std::size_t d = dim();
  std::vector<double> acc(d, 0.0);
  for (std::uint32_t t = span.start; t < span.end; ++t) {
    const float* row = m->data.data() + static_cast<std::size_t>(t) * d;
    for (std::size_t k = 0; k < d; ++k) acc[k] += row[k];
  }
  std::vector<float> out(d);
  for (std::size_t k = 0; k < d; ++k) out[k] = static_cast<float>(acc[k] / span.size());
  return out;
}

PseudoEmbeddingProvider::PseudoEmbeddingProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw InvalidArgument("embedding dimension must be positive");
}

std::vector<float> PseudoEmbeddingProvider::token_vector(std::string_view token) const {
  Rng rng(mix_seed(seed_, fnv1a(token)));
  std::vector<float> v(dim_);
  for (float& x : v) x = static_cast<float>(rng.uniform(-0.5, 0.5));
  return v;
}

std::vector<float> PseudoEmbeddingProvider::lookup(std::string_view doc_id, std::size_t sentence_index,
                                                   std::span<const std::string> tokens, TokenSpan span) const {
  check_span(span, tokens.size(), doc_id, sentence_index);
  std::vector<double> acc(dim_, 0.0);
  for (std::uint32_t t = span.start; t < span.end; ++t) {
    const auto v = token_vector(tokens[t]);
    for (std::size_t k = 0; k < dim_; ++k) acc[k] += v[k];
  }
  std::vector<float> out(dim_);
  for (std::size_t k = 0; k < dim_; ++k) out[k] = static_cast<float>(acc[k] / span.size());
  return out;
}

FLAG_NAMESPACE_END
