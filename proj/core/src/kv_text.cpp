#include "ecn/kv_text.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>

#include "ecn/errors.hpp"

namespace ecn {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

void KvSection::add(KvEntry entry) {
  if (has(entry.key)) throw ParseError(entry.line, "duplicate key '" + entry.key + "'");
  entries_.push_back(std::move(entry));
}

const KvEntry* KvSection::find(std::string_view key) const {
  for (const KvEntry& e : entries_) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

std::string KvSection::get_string(std::string_view key) const {
  const KvEntry* e = find(key);
  if (e == nullptr) {
    throw ParseError(line_, "[" + name_ + "] missing required key '" + std::string(key) + "'");
  }
  return e->value;
}

std::string KvSection::get_string(std::string_view key, std::string_view fallback) const {
  const KvEntry* e = find(key);
  return e == nullptr ? std::string(fallback) : e->value;
}

std::uint64_t KvSection::get_uint(std::string_view key) const {
  const std::string v = get_string(key);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ParseError(find(key)->line, "'" + std::string(key) + "' expects an unsigned integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t KvSection::get_uint(std::string_view key, std::uint64_t fallback) const {
  return has(key) ? get_uint(key) : fallback;
}

double KvSection::get_double(std::string_view key) const {
  const std::string v = get_string(key);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ParseError(find(key)->line, "'" + std::string(key) + "' expects a number, got '" + v + "'");
  }
  return out;
}

double KvSection::get_double(std::string_view key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool KvSection::get_bool(std::string_view key, bool fallback) const {
  const KvEntry* e = find(key);
  if (e == nullptr) return fallback;
  if (e->value == "on" || e->value == "true" || e->value == "1") return true;
  if (e->value == "off" || e->value == "false" || e->value == "0") return false;
  throw ParseError(e->line, "'" + e->key + "' expects on/off, got '" + e->value + "'");
}

void KvSection::reject_unknown(const std::vector<std::string_view>& allowed) const {
  for (const KvEntry& e : entries_) {
    if (std::find(allowed.begin(), allowed.end(), e.key) == allowed.end()) {
      throw ParseError(e.line, "unknown key '" + e.key + "' in [" + name_ + "]");
    }
  }
}

std::vector<KvSection> parse_kv_text(std::string_view text) {
  std::vector<KvSection> sections;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ParseError(line_no, "malformed section header");
      sections.emplace_back(std::string(trim(line.substr(1, line.size() - 2))), line_no);
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(line_no, "empty key");
    if (sections.empty()) throw ParseError(line_no, "entry outside of any [section]");
    sections.back().add({std::string(key), std::string(trim(line.substr(eq + 1))), line_no});
  }
  return sections;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace ecn
