#pragma once
// Flat "key = value" text files. '#' starts a comment; blank lines are ignored.
// Readers consume keys with take_*(); finish() rejects anything left unread.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>

namespace starnet {

class KeyValueFile {
 public:
  KeyValueFile() = default;
  explicit KeyValueFile(std::map<std::string, std::string> entries, std::string source = "<memory>");

  static KeyValueFile parse(std::istream& in, const std::string& source);
  static KeyValueFile parse_text(const std::string& text, const std::string& source = "<memory>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }

  std::string take_string(const std::string& key, const std::string& fallback);
  double take_double(const std::string& key, double fallback);
  int64_t take_int(const std::string& key, int64_t fallback);
  bool take_bool(const std::string& key, bool fallback);

  // Throws ConfigError naming the first key that was never taken.
  void finish() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  const std::string& source() const { return source_; }

 private:
  std::map<std::string, std::string> entries_;
  std::set<std::string> taken_;
  std::string source_ = "<memory>";
};

// Key-sorted "key = value" lines.
std::string format_key_values(const std::map<std::string, std::string>& entries);

// 64-bit FNV-1a.
uint64_t fnv1a64(const std::string& bytes);

}  // namespace starnet
