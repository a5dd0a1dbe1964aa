#pragma once

// Line-oriented "key = value" text grouped under "[section]" headers.
// '#' starts a comment line. Sections may repeat; order is preserved.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ecn {

struct KvEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

class KvSection {
 public:
  KvSection(std::string name, std::size_t line) : name_(std::move(name)), line_(line) {}

  const std::string& name() const noexcept { return name_; }
  std::size_t line() const noexcept { return line_; }
  const std::vector<KvEntry>& entries() const noexcept { return entries_; }

  /// Throws ParseError on a repeated key.
  void add(KvEntry entry);

  const KvEntry* find(std::string_view key) const;
  bool has(std::string_view key) const { return find(key) != nullptr; }

  /// Typed getters throw ParseError naming the line of the offending entry
  /// (or of the section header when a required key is missing).
  std::string get_string(std::string_view key) const;
  std::string get_string(std::string_view key, std::string_view fallback) const;
  std::uint64_t get_uint(std::string_view key) const;
  std::uint64_t get_uint(std::string_view key, std::uint64_t fallback) const;
  double get_double(std::string_view key) const;
  double get_double(std::string_view key, double fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;

  /// Throws ParseError for the first key not in `allowed`.
  void reject_unknown(const std::vector<std::string_view>& allowed) const;

 private:
  std::string name_;
  std::size_t line_;
  std::vector<KvEntry> entries_;
};

/// Throws ParseError on a malformed line or on an entry before the first section.
std::vector<KvSection> parse_kv_text(std::string_view text);

/// Formats a double so that parsing it back yields the same value.
std::string format_double(double v);

}  // namespace ecn
