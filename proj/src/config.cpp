#include "steerode/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include "steerode/csv.hpp"
#include "steerode/errors.hpp"

namespace steerode {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

bool valid_key(std::string_view key) {
  if (key.empty()) return false;
  for (const char c : key) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '_';
    if (!ok) return false;
  }
  return true;
}

double parse_double(const std::string& key, std::string_view text) {
  const std::string_view t = trim(text);
  double out = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
    throw ConfigError("key '" + key + "' expects a number, got '" +
                      std::string(t) + "'");
  return out;
}

long long parse_integer(const std::string& key, std::string_view text) {
  const std::string_view t = trim(text);
  long long out = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
    throw ConfigError("key '" + key + "' expects an integer, got '" +
                      std::string(t) + "'");
  return out;
}

std::vector<std::string_view> split_list(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::size_t end = (comma == std::string_view::npos) ? text.size() : comma;
    out.push_back(trim(text.substr(start, end - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1,
                         diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

}  // namespace

void KvStore::set(std::string key, std::string value) {
  for (KvEntry& e : entries_) {
    if (e.key == key) {
      e.value = std::move(value);
      return;
    }
  }
  entries_.push_back({std::move(key), std::move(value)});
}

const std::string* KvStore::find(std::string_view key) const {
  for (const KvEntry& e : entries_)
    if (e.key == key) return &e.value;
  return nullptr;
}

KvStore parse_kv_text(std::string_view text) {
  KvStore store;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::size_t end = (nl == std::string_view::npos) ? text.size() : nl;
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) {
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError("line " + std::to_string(line_no) +
                          ": expected 'key = value', got '" +
                          std::string(line) + "'");
      const std::string_view key = trim(line.substr(0, eq));
      const std::string_view value = trim(line.substr(eq + 1));
      if (!valid_key(key))
        throw ConfigError("line " + std::to_string(line_no) +
                          ": invalid key '" + std::string(key) + "'");
      store.set(std::string(key), std::string(value));
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return store;
}

KvStore load_kv_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_kv_text(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

bool ConfigReader::supplied(std::string_view key) const {
  return store_.find(key) != nullptr;
}

const std::string* ConfigReader::take(const std::string& key) {
  consumed_.push_back(key);
  return store_.find(key);
}

void ConfigReader::record(const std::string& key, std::string value) {
  effective_.push_back({key, std::move(value)});
}

std::string ConfigReader::get_string(const std::string& key, std::string def) {
  const std::string* v = take(key);
  std::string out = v ? *v : std::move(def);
  record(key, out);
  return out;
}

double ConfigReader::get_double(const std::string& key, double def) {
  const std::string* v = take(key);
  const double out = v ? parse_double(key, *v) : def;
  record(key, format_double(out));
  return out;
}

int ConfigReader::get_int(const std::string& key, int def) {
  const std::string* v = take(key);
  const long long out = v ? parse_integer(key, *v) : def;
  if (out < std::numeric_limits<int>::min() ||
      out > std::numeric_limits<int>::max())
    throw ConfigError("key '" + key + "' is out of range");
  record(key, std::to_string(out));
  return static_cast<int>(out);
}

std::uint64_t ConfigReader::get_u64(const std::string& key, std::uint64_t def) {
  const std::string* v = take(key);
  std::uint64_t out = def;
  if (v) {
    const std::string_view t = trim(*v);
    const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
      throw ConfigError("key '" + key + "' expects a nonnegative integer, got '" +
                        std::string(t) + "'");
  }
  record(key, std::to_string(out));
  return out;
}

bool ConfigReader::get_bool(const std::string& key, bool def) {
  const std::string* v = take(key);
  bool out = def;
  if (v) {
    const std::string_view t = trim(*v);
    if (t == "true" || t == "1")
      out = true;
    else if (t == "false" || t == "0")
      out = false;
    else
      throw ConfigError("key '" + key + "' expects true/false/1/0, got '" +
                        std::string(t) + "'");
  }
  record(key, out ? "true" : "false");
  return out;
}

std::vector<double> ConfigReader::get_double_list(const std::string& key,
                                                  std::vector<double> def) {
  const std::string* v = take(key);
  std::vector<double> out;
  if (v) {
    for (const std::string_view item : split_list(*v))
      out.push_back(parse_double(key, item));
  } else {
    out = std::move(def);
  }
  std::string joined;
  for (const double x : out) {
    if (!joined.empty()) joined += ',';
    joined += format_double(x);
  }
  record(key, joined);
  return out;
}

std::vector<int> ConfigReader::get_int_list(const std::string& key,
                                            std::vector<int> def) {
  const std::string* v = take(key);
  std::vector<int> out;
  if (v) {
    for (const std::string_view item : split_list(*v))
      out.push_back(static_cast<int>(parse_integer(key, item)));
  } else {
    out = std::move(def);
  }
  std::string joined;
  for (const int x : out) {
    if (!joined.empty()) joined += ',';
    joined += std::to_string(x);
  }
  record(key, joined);
  return out;
}

std::vector<std::uint64_t> ConfigReader::get_u64_list(
    const std::string& key, std::vector<std::uint64_t> def) {
  const std::string* v = take(key);
  std::vector<std::uint64_t> out;
  if (v) {
    for (const std::string_view item : split_list(*v)) {
      const long long parsed = parse_integer(key, item);
      if (parsed < 0)
        throw ConfigError("key '" + key + "' expects nonnegative integers");
      out.push_back(static_cast<std::uint64_t>(parsed));
    }
  } else {
    out = std::move(def);
  }
  std::string joined;
  for (const std::uint64_t x : out) {
    if (!joined.empty()) joined += ',';
    joined += std::to_string(x);
  }
  record(key, joined);
  return out;
}

void ConfigReader::finish() const {
  for (const KvEntry& e : store_.entries()) {
    if (std::find(consumed_.begin(), consumed_.end(), e.key) != consumed_.end())
      continue;
    std::string msg = "unknown key '" + e.key + "'";
    std::size_t best = std::string::npos;
    const std::string* nearest = nullptr;
    for (const std::string& known : consumed_) {
      const std::size_t d = edit_distance(e.key, known);
      if (d < best) {
        best = d;
        nearest = &known;
      }
    }
    if (nearest && best <= std::max<std::size_t>(2, e.key.size() / 3))
      msg += " (did you mean '" + *nearest + "'?)";
    throw ConfigError(msg);
  }
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace steerode
