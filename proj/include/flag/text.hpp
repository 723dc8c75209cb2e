#pragma once

#include "flag/config.hpp"

// Fallback sentence splitting and tokenization for raw transcript text.
// Input is normally pre-sentencized; these helpers cover plain text.

#include <string>
#include <string_view>
#include <vector>

FLAG_NAMESPACE_BEGIN

/// Splits after '.', '!' or '?' when followed by whitespace or the end of the
/// text. Sentences are trimmed; empty ones are dropped.
std::vector<std::string> split_sentences(std::string_view text);

/// Whitespace tokenization.
std::vector<std::string> tokenize(std::string_view sentence);

FLAG_NAMESPACE_END
