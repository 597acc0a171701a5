#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace steerode {

struct SvgSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y)
};

struct SvgOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;  // base-10 log axis; requires positive finite y
  int width = 860;
  int height = 520;
  // Comment block at the top of the file, one "key = value" line each.
  std::vector<std::pair<std::string, std::string>> meta;
  // Stands in for a timestamp so identical configs render identical
  // bytes; derive it from the effective config, never the clock.
  std::uint64_t config_hash = 0;
};

// Standalone line chart: 1-2-5 tick axes, one polyline per series in a
// fixed palette, legend in the top-right corner. Non-finite points split
// a polyline into segments. Throws ContractError when there are no
// series or no finite points at all, ConfigError when a log axis meets
// a nonpositive value.
std::string render_line_chart(const std::vector<SvgSeries>& series,
                              const SvgOptions& opt);

// render_line_chart + write_text_file.
void emit_svg(const std::vector<SvgSeries>& series, const SvgOptions& opt,
              const std::filesystem::path& path);

}  // namespace steerode
