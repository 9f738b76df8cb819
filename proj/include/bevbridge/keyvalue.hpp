#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace bevbridge {

// Flat "key = value" text with optional "[section]" headers. '#' starts a
// comment. Sections may repeat (e.g. one [entity] block per entity); keys
// before the first header belong to an unnamed section.
struct KeyValueSection {
  std::string name;
  std::vector<std::pair<std::string, std::string>> entries;
  int line = 0;  // header line, for error messages

  bool has(std::string_view key) const;
  std::optional<std::string> find(std::string_view key) const;
  // Throw std::runtime_error naming the key when missing or malformed.
  std::string get(std::string_view key) const;
  double get_number(std::string_view key) const;
  double get_number(std::string_view key, double fallback) const;
  long long get_integer(std::string_view key) const;
  long long get_integer(std::string_view key, long long fallback) const;
  std::string get_string(std::string_view key, std::string_view fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
};

struct KeyValueFile {
  std::vector<KeyValueSection> sections;

  const KeyValueSection* first(std::string_view name) const;
  std::vector<const KeyValueSection*> all(std::string_view name) const;
};

// Throws std::runtime_error with a line number on malformed input.
KeyValueFile parse_key_value(std::istream& is);
KeyValueFile parse_key_value_text(std::string_view text);
KeyValueFile load_key_value_file(const std::string& path);

std::vector<double> parse_number_list(std::string_view text);

}  // namespace bevbridge
