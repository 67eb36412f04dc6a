#pragma once

// PNG plots derived from run logs. Plots only read the CSV files.

#include "drone_carrier/common.hpp"

#include <png.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace drone_carrier {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

inline const std::array<Rgb, 6>& palette() {
  static const std::array<Rgb, 6> p = {{{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14}, {148, 103, 189}, {90, 90, 90}}};
  return p;
}

class Image {
 public:
  Image(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w * h), Rgb{255, 255, 255}) {}
  int width() const { return w_; }
  int height() const { return h_; }

  void set(int x, int y, Rgb c) {
    if (x >= 0 && y >= 0 && x < w_ && y < h_) px_[static_cast<std::size_t>(y * w_ + x)] = c;
  }
  Rgb get(int x, int y) const { return px_[static_cast<std::size_t>(y * w_ + x)]; }

  void line(double x0, double y0, double x1, double y1, Rgb c) {
    const int n = static_cast<int>(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
    for (int i = 0; i <= n; ++i) {
      const double s = static_cast<double>(i) / n;
      set(static_cast<int>(std::lround(x0 + s * (x1 - x0))), static_cast<int>(std::lround(y0 + s * (y1 - y0))), c);
    }
  }

  /// 3x5 glyphs for numeric labels, scaled by 2.
  void text(int x, int y, const std::string& s, Rgb c = {0, 0, 0}) {
    static const std::map<char, std::array<const char*, 5>> font = {
        {'0', {"###", "#.#", "#.#", "#.#", "###"}}, {'1', {".#.", "##.", ".#.", ".#.", "###"}},
        {'2', {"###", "..#", "###", "#..", "###"}}, {'3', {"###", "..#", "###", "..#", "###"}},
        {'4', {"#.#", "#.#", "###", "..#", "..#"}}, {'5', {"###", "#..", "###", "..#", "###"}},
        {'6', {"###", "#..", "###", "#.#", "###"}}, {'7', {"###", "..#", "..#", "..#", "..#"}},
        {'8', {"###", "#.#", "###", "#.#", "###"}}, {'9', {"###", "#.#", "###", "..#", "###"}},
        {'-', {"...", "...", "###", "...", "..."}}, {'.', {"...", "...", "...", "...", ".#."}},
        {'e', {"...", "###", "##.", "#..", "###"}}, {' ', {"...", "...", "...", "...", "..."}}};
    for (char ch : s) {
      auto it = font.find(ch);
      if (it != font.end())
        for (int r = 0; r < 5; ++r)
          for (int k = 0; k < 3; ++k)
            if (it->second[r][k] == '#')
              for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) set(x + 2 * k + dx, y + 2 * r + dy, c);
      x += 8;
    }
  }

  void write_png(const std::filesystem::path& path) const {
    FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw Error("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      std::fclose(fp);
      throw Error("png encoding failed for " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w_), static_cast<png_uint_32>(h_), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(3 * w_));
    for (int y = 0; y < h_; ++y) {
      for (int x = 0; x < w_; ++x) {
        const Rgb c = get(x, y);
        row[static_cast<std::size_t>(3 * x)] = c.r;
        row[static_cast<std::size_t>(3 * x + 1)] = c.g;
        row[static_cast<std::size_t>(3 * x + 2)] = c.b;
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
  }

 private:
  int w_, h_;
  std::vector<Rgb> px_;
};

struct Series {
  std::vector<double> x, y;
  Rgb color;
};

inline std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

/// Line chart with a framed axis box and min/max labels.
inline Image line_chart(const std::vector<Series>& series, bool equal_axes = false, int w = 800, int h = 600) {
  Image img(w, h);
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]), y1 = std::max(y1, s.y[i]);
    }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-9) x0 -= 1, x1 += 1;
  if (y1 - y0 < 1e-9) y0 -= 1, y1 += 1;
  const int L = 70, R = w - 20, T = 20, B = h - 40;
  double sx = (R - L) / (x1 - x0), sy = (B - T) / (y1 - y0);
  if (equal_axes) sx = sy = std::min(sx, sy);
  const Rgb axis{0, 0, 0};
  img.line(L, T, R, T, axis), img.line(R, T, R, B, axis), img.line(R, B, L, B, axis), img.line(L, B, L, T, axis);
  img.text(L, B + 8, short_number(x0));
  img.text(R - 8 * static_cast<int>(short_number(x1).size()), B + 8, short_number(x1));
  img.text(4, B - 10, short_number(y0));
  img.text(4, T, short_number(y1));
  for (const auto& s : series)
    for (std::size_t i = 1; i < s.x.size(); ++i)
      img.line(L + (s.x[i - 1] - x0) * sx, B - (s.y[i - 1] - y0) * sy, L + (s.x[i] - x0) * sx, B - (s.y[i] - y0) * sy,
               s.color);
  return img;
}

/// Parsed CSV with a header row.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw InvalidArgument("missing column '" + name + "'");
  }
  std::vector<double> numbers(const std::string& name) const {
    const std::size_t c = col(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(std::stod(r.at(c)));
    return out;
  }
};

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

inline Table read_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError(path.string(), "log file not found");
  Table t;
  std::string line;
  if (!std::getline(is, line)) throw ParseError(path.string(), "empty log file");
  t.columns = split_csv(line);
  while (std::getline(is, line))
    if (!line.empty()) t.rows.push_back(split_csv(line));
  return t;
}

/// Writes the plots whose logs exist in `dir`; returns the image paths.
inline std::vector<std::string> emit_plots(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ParseError(dir.string(), "run output directory not found");
  std::vector<std::string> out;
  const auto& pal = palette();
  auto save = [&](const Image& img, const std::string& name) {
    img.write_png(dir / name);
    out.push_back((dir / name).string());
  };
  const bool have_carrier = fs::exists(dir / "carrier.csv");
  if (have_carrier) {
    const Table c = read_csv(dir / "carrier.csv");
    std::vector<Series> s = {{c.numbers("x_m"), c.numbers("y_m"), pal[0]}};
    if (fs::exists(dir / "dvl_path.csv")) {
      const Table d = read_csv(dir / "dvl_path.csv");
      s.push_back({d.numbers("x_m"), d.numbers("y_m"), pal[2]});
    }
    if (fs::exists(dir / "target_ekf.csv")) {
      const Table e = read_csv(dir / "target_ekf.csv");
      s.push_back({e.numbers("true_x_m"), e.numbers("true_y_m"), pal[1]});
    }
    save(line_chart(s, true), "path_overview.png");
    save(line_chart({{c.numbers("t"), c.numbers("yaw_rad"), pal[0]}, {c.numbers("t"), c.numbers("beta_rad"), pal[1]}}),
         "heading.png");
  }
  if (fs::exists(dir / "fit_dims.csv")) {
    const Table f = read_csv(dir / "fit_dims.csv");
    save(line_chart({{f.numbers("t"), f.numbers("length_m"), pal[0]}, {f.numbers("t"), f.numbers("width_m"), pal[1]}}),
         "fit_dims.png");
  }
  if (fs::exists(dir / "roll_pitch.csv")) {
    const Table r = read_csv(dir / "roll_pitch.csv");
    save(line_chart({{r.numbers("t"), r.numbers("roll_rad"), pal[0]}, {r.numbers("t"), r.numbers("pitch_rad"), pal[1]}}),
         "roll_pitch.png");
  }
  // UAV trajectories in an oblique projection of (x, y, z).
  std::vector<Series> uav;
  for (int i = 0; i < 8; ++i) {
    const auto p = dir / ("uav_" + std::to_string(i) + ".csv");
    if (!fs::exists(p)) continue;
    const Table u = read_csv(p);
    const auto x = u.numbers("x_m"), y = u.numbers("y_m"), z = u.numbers("z_m");
    Series s{{}, {}, pal[static_cast<std::size_t>(i) % pal.size()]};
    for (std::size_t k = 0; k < x.size(); ++k) {
      s.x.push_back(x[k] - 0.5 * y[k]);
      s.y.push_back(z[k] - 0.3 * y[k]);
    }
    uav.push_back(std::move(s));
  }
  if (!uav.empty()) save(line_chart(uav, true), "uav_trajectories.png");
  if (out.empty()) throw ParseError((dir / "carrier.csv").string(), "no plottable logs in run directory");
  return out;
}

}  // namespace drone_carrier
