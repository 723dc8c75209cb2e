#include "flag/text.hpp"

#include <algorithm>
#include <cctype>

FLAG_NAMESPACE_BEGIN
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    if (i + 1 < text.size() && !is_space(text[i + 1])) continue;
    const auto s = trim(text.substr(start, i + 1 - start));
    if (!s.empty()) out.emplace_back(s);
    start = i + 1;
  }
  const auto tail = trim(text.substr(std::min(start, text.size())));
  if (!tail.empty()) out.emplace_back(tail);
  return out;
}

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < sentence.size()) {
    while (i < sentence.size() && is_space(sentence[i])) ++i;
    const std::size_t begin = i;
    while (i < sentence.size() && !is_space(sentence[i])) ++i;
    if (i > begin) out.emplace_back(sentence.substr(begin, i - begin));
  }
  return out;
}

FLAG_NAMESPACE_END
