#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace steerode {

struct KvEntry {
  std::string key;
  std::string value;
};

// Flat key/value store preserving first-seen key order; setting an
// existing key overwrites its value in place, so later sources (CLI
// flags) override earlier ones (config file) without reordering.
class KvStore {
 public:
  void set(std::string key, std::string value);
  const std::string* find(std::string_view key) const;
  const std::vector<KvEntry>& entries() const { return entries_; }

 private:
  std::vector<KvEntry> entries_;
};

// One `key = value` pair per line, `#` starts a comment, blank lines
// ignored. Keys are [A-Za-z0-9_]. Throws ConfigError naming the line
// number on malformed input.
KvStore parse_kv_text(std::string_view text);

KvStore load_kv_file(const std::filesystem::path& path);

// Typed reads with defaults. Every get_* records the key and the
// effective value (default or supplied), so the consumer can stamp the
// full effective config into output metadata; finish() then rejects any
// key that was never read, suggesting the nearest known one.
class ConfigReader {
 public:
  explicit ConfigReader(KvStore store) : store_(std::move(store)) {}

  bool supplied(std::string_view key) const;

  std::string get_string(const std::string& key, std::string def);
  double get_double(const std::string& key, double def);
  int get_int(const std::string& key, int def);
  std::uint64_t get_u64(const std::string& key, std::uint64_t def);
  bool get_bool(const std::string& key, bool def);
  std::vector<double> get_double_list(const std::string& key,
                                      std::vector<double> def);
  std::vector<int> get_int_list(const std::string& key, std::vector<int> def);
  std::vector<std::uint64_t> get_u64_list(const std::string& key,
                                          std::vector<std::uint64_t> def);

  // Keys read so far with their effective values, in read order.
  const std::vector<KvEntry>& effective() const { return effective_; }

  // Throws ConfigError on the first key present in the store but never
  // read, with a did-you-mean suggestion when one is close.
  void finish() const;

 private:
  const std::string* take(const std::string& key);
  void record(const std::string& key, std::string value);

  KvStore store_;
  std::vector<std::string> consumed_;
  std::vector<KvEntry> effective_;
};

// FNV-1a over the bytes; stable across platforms. Used to derive the
// render stamp for SVG output from the effective config.
std::uint64_t fnv1a64(std::string_view text);

}  // namespace steerode
