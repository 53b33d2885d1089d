#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace clarity::text {

std::string trim(std::string_view s);

/// Trims and collapses internal whitespace runs to a single space.
std::string normalize_space(std::string_view s);

std::string to_lower(std::string_view s);

std::vector<std::string> split(std::string_view s, char delim);

std::vector<std::string> split_whitespace(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Lowercased word and punctuation tokens, used by the hashing tokenizer
/// and the TF-IDF analyzer.
std::vector<std::string> word_tokens(std::string_view s);

/// Alphanumeric words only (apostrophes kept inside words), lowercased.
std::vector<std::string> alpha_words(std::string_view s);

/// Escapes tab, newline, carriage return and backslash for columnar files.
std::string escape_field(std::string_view s);
std::string unescape_field(std::string_view s);

bool starts_with_ci(std::string_view s, std::string_view prefix);

/// Formats with "%.17g" so values round-trip exactly.
std::string format_exact(double v);

/// Fixed-point formatting with the given number of decimals.
std::string format_fixed(double v, int decimals);

}  // namespace clarity::text
