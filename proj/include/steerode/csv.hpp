#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace steerode {

// Shortest decimal form that round-trips to the same double bits, via
// std::to_chars (never more than 17 significant digits). Infinities and
// NaN print as "inf", "-inf", "nan".
std::string format_double(double x);

std::string join_csv(std::span<const std::string> cells);

// Accumulates one output file in memory: a '#' metadata block on top,
// then rows. LF line endings throughout; written in a single call so a
// half-built file never hits disk under normal control flow.
class CsvBuilder {
 public:
  CsvBuilder& comment(std::string_view line);
  CsvBuilder& meta(std::string_view key, std::string_view value);
  CsvBuilder& raw_line(std::string_view line);
  CsvBuilder& row(std::span<const std::string> cells);
  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

// Creates parent directories as needed. Throws std::runtime_error on
// filesystem failure.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace steerode
