#include "bevbridge/keyvalue.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>

namespace bevbridge {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_number(const std::string& text, std::string_view key) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw std::runtime_error("key '" + std::string(key) + "': not a number: '" + text + "'");
  return v;
}

}  // namespace

bool KeyValueSection::has(std::string_view key) const { return find(key).has_value(); }

std::optional<std::string> KeyValueSection::find(std::string_view key) const {
  std::optional<std::string> out;
  for (const auto& [k, v] : entries)
    if (k == key) out = v;  // last assignment wins
  return out;
}

std::string KeyValueSection::get(std::string_view key) const {
  auto v = find(key);
  if (!v)
    throw std::runtime_error("missing key '" + std::string(key) + "'" +
                             (name.empty() ? std::string() : " in [" + name + "]"));
  return *v;
}

double KeyValueSection::get_number(std::string_view key) const { return to_number(get(key), key); }

double KeyValueSection::get_number(std::string_view key, double fallback) const {
  auto v = find(key);
  return v ? to_number(*v, key) : fallback;
}

long long KeyValueSection::get_integer(std::string_view key) const {
  const std::string text = get(key);
  long long v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw std::runtime_error("key '" + std::string(key) + "': not an integer: '" + text + "'");
  return v;
}

long long KeyValueSection::get_integer(std::string_view key, long long fallback) const {
  return has(key) ? get_integer(key) : fallback;
}

std::string KeyValueSection::get_string(std::string_view key, std::string_view fallback) const {
  auto v = find(key);
  return v ? *v : std::string(fallback);
}

bool KeyValueSection::get_bool(std::string_view key, bool fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw std::runtime_error("key '" + std::string(key) + "': not a boolean: '" + *v + "'");
}

const KeyValueSection* KeyValueFile::first(std::string_view name) const {
  for (const auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

std::vector<const KeyValueSection*> KeyValueFile::all(std::string_view name) const {
  std::vector<const KeyValueSection*> out;
  for (const auto& s : sections)
    if (s.name == name) out.push_back(&s);
  return out;
}

KeyValueFile parse_key_value(std::istream& is) {
  KeyValueFile f;
  f.sections.push_back({});
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw std::runtime_error("line " + std::to_string(line_no) + ": malformed section header");
      KeyValueSection s;
      s.name = trim(std::string_view(line).substr(1, line.size() - 2));
      s.line = line_no;
      f.sections.push_back(std::move(s));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw std::runtime_error("line " + std::to_string(line_no) + ": empty key");
    f.sections.back().entries.emplace_back(std::move(key),
                                           trim(std::string_view(line).substr(eq + 1)));
  }
  return f;
}

KeyValueFile parse_key_value_text(std::string_view text) {
  std::istringstream ss{std::string(text)};
  return parse_key_value(ss);
}

KeyValueFile load_key_value_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return parse_key_value(in);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::vector<double> parse_number_list(std::string_view text) {
  std::vector<double> out;
  std::string cur;
  auto flush = [&] {
    const std::string t = trim(cur);
    if (!t.empty()) out.push_back(to_number(t, "list"));
    cur.clear();
  };
  for (char ch : text) {
    if (ch == ',' || ch == ';' || ch == ' ' || ch == '\t') {
      flush();
    } else {
      cur.push_back(ch);
    }
  }
  flush();
  return out;
}

}  // namespace bevbridge
