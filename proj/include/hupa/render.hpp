#pragma once

// Binary pixmap (P6) renderings of reachability and policy direction maps.

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "hupa/binary_io.hpp"
#include "hupa/metrics.hpp"

namespace hupa {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(Rgb, Rgb) = default;
};

inline constexpr Rgb kWallColor{255, 255, 0};
inline constexpr Rgb kUnreachableColor{64, 64, 255};
inline constexpr Rgb kReachableColor{64, 200, 64};
inline constexpr Rgb kGoalColor{255, 0, 0};

struct Pixmap {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;

  Pixmap() = default;
  Pixmap(int w, int h, Rgb fill = {}) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}
  Rgb& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  Rgb at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

inline std::vector<std::uint8_t> encode_ppm(const Pixmap& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (Rgb p : img.pixels) out.insert(out.end(), {p.r, p.g, p.b});
  return out;
}

/// Reference reader for P6 files with maxval 255 (comments allowed).
inline Pixmap decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto token = [&] {
    skip_space();
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  if (token() != "P6") throw FormatError(FormatError::Kind::bad_magic, "not a P6 pixmap");
  const int w = std::stoi(token());
  const int h = std::stoi(token());
  if (token() != "255") throw FormatError(FormatError::Kind::invalid, "only maxval 255 is supported");
  ++pos;  // single whitespace before the raster
  if (w <= 0 || h <= 0 || bytes.size() - pos != static_cast<std::size_t>(w) * h * 3)
    throw FormatError(FormatError::Kind::truncated, "pixmap raster size mismatch");
  Pixmap img(w, h);
  for (auto& p : img.pixels) {
    p = {bytes[pos], bytes[pos + 1], bytes[pos + 2]};
    pos += 3;
  }
  return img;
}

/// One pixel per cell: walls yellow, reachable green, unreachable blue, goal red.
inline Pixmap render_reachability(const Map& map, const CellSet& reachable, Cell goal) {
  Pixmap img(kGridSize, kGridSize);
  for (int r = 0; r < kGridSize; ++r)
    for (int c = 0; c < kGridSize; ++c) {
      const Cell cell{r, c};
      Rgb color = kWallColor;
      if (cell == goal)
        color = kGoalColor;
      else if (map.at(cell) == Tile::Open)
        color = reachable.test(static_cast<std::size_t>(cell_index(cell))) ? kReachableColor : kUnreachableColor;
      img.at(c, r) = color;
    }
  return img;
}

/// Fully saturated colour for a hue in degrees.
inline Rgb hue_color(double degrees) {
  const double h = std::fmod(std::fmod(degrees, 360.0) + 360.0, 360.0) / 60.0;
  const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = 1, g = x; break;
    case 1: r = x, g = 1; break;
    case 2: g = 1, b = x; break;
    case 3: g = x, b = 1; break;
    case 4: r = x, b = 1; break;
    default: r = 1, b = x; break;
  }
  auto q = [](double v) { return static_cast<std::uint8_t>(std::lround(v * 255.0)); };
  return {q(r), q(g), q(b)};
}

/// Action k drawn as a line from the cell centre towards its move, coloured
/// by hue k*45 degrees, over the reachability background.
inline Pixmap render_policy_arrows(const Map& map, const StatePolicy& policy, const CellSet& reachable, Cell goal,
                                   int scale = 11) {
  const Pixmap base = render_reachability(map, reachable, goal);
  Pixmap img(kGridSize * scale, kGridSize * scale);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      Rgb p = base.at(x / scale, y / scale);
      // Dim the background so arrows stand out.
      img.at(x, y) = {static_cast<std::uint8_t>(p.r / 2), static_cast<std::uint8_t>(p.g / 2),
                      static_cast<std::uint8_t>(p.b / 2)};
    }
  for (Cell s : map.open_cells()) {
    if (s == goal) continue;
    const Action a(policy(s));
    const Rgb color = hue_color(45.0 * a.id());
    const double cx = s.col * scale + scale / 2.0, cy = s.row * scale + scale / 2.0;
    const double len = scale * 0.45;
    const double norm = std::hypot(a.d_col(), a.d_row());
    for (int t = 0; t <= 2 * scale; ++t) {
      const double f = len * t / (2.0 * scale);
      const int x = static_cast<int>(std::lround(cx + f * a.d_col() / norm));
      const int y = static_cast<int>(std::lround(cy + f * a.d_row() / norm));
      if (x >= 0 && y >= 0 && x < img.width && y < img.height) img.at(x, y) = color;
    }
  }
  return img;
}

inline void save_ppm(const std::string& path, const Pixmap& img) { write_file_bytes(path, encode_ppm(img)); }

}  // namespace hupa
