#include "steerode/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <system_error>

namespace steerode {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string join_csv(std::span<const std::string> cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += cells[i];
  }
  return line;
}

CsvBuilder& CsvBuilder::comment(std::string_view line) {
  text_ += "# ";
  text_ += line;
  text_ += '\n';
  return *this;
}

CsvBuilder& CsvBuilder::meta(std::string_view key, std::string_view value) {
  text_ += "# ";
  text_ += key;
  text_ += " = ";
  text_ += value;
  text_ += '\n';
  return *this;
}

CsvBuilder& CsvBuilder::raw_line(std::string_view line) {
  text_ += line;
  text_ += '\n';
  return *this;
}

CsvBuilder& CsvBuilder::row(std::span<const std::string> cells) {
  return raw_line(join_csv(cells));
}

void write_text_file(const std::filesystem::path& path,
                     std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec)
      throw std::runtime_error("cannot create directory " +
                               path.parent_path().string() + ": " +
                               ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace steerode
