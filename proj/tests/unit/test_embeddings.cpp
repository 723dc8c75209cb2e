#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "flag/embeddings.hpp"
#include "flag/error.hpp"
#include "support.hpp"

using namespace flag;

namespace {

// Three tokens in a D = 4 archive with rows r_t[c] = 10 t + c.
TokenEmbeddingArchive fixture_archive() {
  TokenEmbeddingArchive archive(4);
  std::vector<float> rows;
  for (int t = 0; t < 3; ++t) {
    for (int c = 0; c < 4; ++c) rows.push_back(static_cast<float>(10 * t + c));
  }
  archive.add("doc", 0, 3, rows);
  archive.add("doc", 1, 1, {1.0f, -1.0f, 0.5f, 0.25f});
  return archive;
}

const std::vector<std::string> kTokens{"a", "b", "c"};

}  // namespace

TEST_CASE("a length-one span returns the row verbatim") {
  const FileEmbeddingProvider provider(fixture_archive(), 4);
  CHECK(provider.dim() == 4);
  CHECK(provider.lookup("doc", 0, kTokens, {1, 2}) == std::vector<float>{10, 11, 12, 13});
  const std::vector<std::string> one{"x"};
  CHECK(provider.lookup("doc", 1, one, {0, 1}) == std::vector<float>{1.0f, -1.0f, 0.5f, 0.25f});
}

TEST_CASE("a wider span returns the mean of its rows") {
  const FileEmbeddingProvider provider(fixture_archive(), 4);
  CHECK(provider.lookup("doc", 0, kTokens, {0, 2}) == std::vector<float>{5, 6, 7, 8});
  CHECK(provider.lookup("doc", 0, kTokens, {0, 3}) == std::vector<float>{10, 11, 12, 13});
}

TEST_CASE("span mean equals the mean of its singleton lookups") {
  Rng rng(17);
  TokenEmbeddingArchive archive(6);
  std::vector<float> rows(7 * 6);
  for (float& v : rows) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  archive.add("d", 3, 7, rows);
  const FileEmbeddingProvider provider(archive, 6);
  const std::vector<std::string> tokens(7, "t");
  for (std::uint32_t s = 0; s < 7; ++s) {
    for (std::uint32_t e = s + 1; e <= 7; ++e) {
      const auto whole = provider.lookup("d", 3, tokens, {s, e});
      std::vector<double> mean(6, 0.0);
      for (std::uint32_t t = s; t < e; ++t) {
        const auto v = provider.lookup("d", 3, tokens, {t, t + 1});
        for (std::size_t c = 0; c < 6; ++c) mean[c] += v[c];
      }
      for (std::size_t c = 0; c < 6; ++c) CHECK(whole[c] == doctest::Approx(mean[c] / (e - s)).epsilon(1e-6));
    }
  }
}

TEST_CASE("file provider errors") {
  CHECK_THROWS_AS(FileEmbeddingProvider(fixture_archive(), 768), InvalidArgument);
  const FileEmbeddingProvider provider(fixture_archive(), 4);
  CHECK_THROWS_AS(provider.lookup("other", 0, kTokens, {0, 1}), InvalidArgument);
  CHECK_THROWS_AS(provider.lookup("doc", 7, kTokens, {0, 1}), InvalidArgument);
  CHECK_THROWS_AS(provider.lookup("doc", 0, kTokens, {2, 4}), InvalidArgument);
  CHECK_THROWS_AS(provider.lookup("doc", 0, kTokens, {1, 1}), InvalidArgument);
  TokenEmbeddingArchive bad(4);
  CHECK_THROWS_AS(bad.add("doc", 0, 2, std::vector<float>(7)), InvalidArgument);
}

TEST_CASE("archive round-trips through bytes and files") {
  const auto archive = fixture_archive();
  CHECK(TokenEmbeddingArchive::deserialize(archive.serialize()) == archive);
  flag_test::TempDir dir("emb");
  archive.save(dir.file("a.flage"));
  CHECK(TokenEmbeddingArchive::load(dir.file("a.flage")) == archive);
}

TEST_CASE("corrupted archives are rejected") {
  auto bytes = fixture_archive().serialize();
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(TokenEmbeddingArchive::deserialize(bad_magic), FormatError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    CHECK_THROWS_AS(TokenEmbeddingArchive::deserialize(truncated), FormatError);
  }
}

TEST_CASE("pseudo provider is deterministic and bounded") {
  const PseudoEmbeddingProvider p(16, 42);
  const auto a = p.token_vector("revenue");
  CHECK(a.size() == 16);
  CHECK(a == p.token_vector("revenue"));
  CHECK(a == PseudoEmbeddingProvider(16, 42).token_vector("revenue"));
  CHECK(a != p.token_vector("margin"));
  CHECK(a != PseudoEmbeddingProvider(16, 43).token_vector("revenue"));
  for (const char* tok : {"revenue", "margin", "", "windfall", "x"}) {
    for (float v : p.token_vector(tok)) {
      CHECK(v >= -0.5f);
      CHECK(v <= 0.5f);
    }
  }
}

TEST_CASE("pseudo provider looks tokens up by string, not position") {
  const PseudoEmbeddingProvider p(8, 3);
  const std::vector<std::string> s1{"we", "grew", "revenue"};
  const std::vector<std::string> s2{"revenue", "fell"};
  CHECK(p.lookup("a", 0, s1, {2, 3}) == p.lookup("b", 5, s2, {0, 1}));
  const auto mean = p.lookup("a", 0, s1, {0, 2});
  const auto we = p.token_vector("we");
  const auto grew = p.token_vector("grew");
  for (std::size_t c = 0; c < 8; ++c) CHECK(mean[c] == doctest::Approx((we[c] + grew[c]) / 2.0f));
  CHECK_THROWS_AS(PseudoEmbeddingProvider(0, 1), InvalidArgument);
}

TEST_CASE("default dimension") { CHECK(kDefaultEmbeddingDim == 768); }
