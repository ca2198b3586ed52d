#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace priorart {

/// Splits text on every maximal run of non-alphanumeric characters and folds
/// ASCII letters to lowercase. Non-ASCII UTF-8 bytes are treated as letter
/// characters and kept verbatim. Order is preserved, duplicates are kept.
std::vector<std::string> tokenize(std::string_view text);

/// Tokenizes and returns the distinct terms, sorted ascending.
std::vector<std::string> unique_terms(std::string_view text);

/// Merges two sorted unique term lists into one sorted unique list.
std::vector<std::string> merge_terms(const std::vector<std::string>& a,
                                     const std::vector<std::string>& b);

}  // namespace priorart
