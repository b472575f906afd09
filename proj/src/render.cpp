// SPDX-License-Identifier: Apache-2.0
#include "histoniche/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "histoniche/error.hpp"

namespace histoniche {

namespace {

constexpr double kMargin = 20.0;
constexpr double kLegendWidth = 150.0;
constexpr double kLegendRow = 16.0;
constexpr const char* kUnassigned = "#c8c8c8";

// Maps µm to pixels; uniform scale so the map keeps the tissue's aspect.
struct Frame {
  double min_x = 0.0, min_y = 0.0, scale = 1.0;
  double plot_w = 0.0, plot_h = 0.0;

  Frame(const Bounds& b, int width_px) {
    min_x = b.min_x;
    min_y = b.min_y;
    const double w = std::max(b.width(), 1e-9);
    const double h = std::max(b.height(), 1e-9);
    plot_w = static_cast<double>(std::max(width_px, 16));
    scale = plot_w / w;
    plot_h = std::max(h * scale, 16.0);
  }
  double px(double x) const { return kMargin + (x - min_x) * scale; }
  double py(double y) const { return kMargin + (y - min_y) * scale; }
};

void check_labels(const CellTable& cells, std::span<const int> labels, std::size_t n_niches) {
  if (labels.size() != cells.size()) fail(ErrorCode::kShapeMismatch, "label count differs from the table");
  for (int l : labels) {
    if (l < -1 || (l >= 0 && static_cast<std::size_t>(l) >= n_niches)) {
      fail(ErrorCode::kInvalidArgument, "label " + std::to_string(l) + " outside [-1, K)");
    }
  }
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string num(double v) { return fmt("%.3f", v); }

// Marker for niche k: color cycles the palette, shape changes every 20 niches.
std::string marker(double cx, double cy, double r, int label, const char* cls) {
  const char* color = label < 0 ? kUnassigned : niche_palette()[static_cast<std::size_t>(label) % kPaletteSize];
  const int shape = label < 0 ? 0 : (label / static_cast<int>(kPaletteSize)) % 4;
  std::string s;
  switch (shape) {
    case 0:
      s = "<circle class=\"" + std::string(cls) + "\" cx=\"" + num(cx) + "\" cy=\"" + num(cy) +
          "\" r=\"" + num(r) + "\"";
      break;
    case 1:
      s = "<rect class=\"" + std::string(cls) + "\" x=\"" + num(cx - r) + "\" y=\"" + num(cy - r) +
          "\" width=\"" + num(2 * r) + "\" height=\"" + num(2 * r) + "\"";
      break;
    case 2:
      s = "<polygon class=\"" + std::string(cls) + "\" points=\"" + num(cx) + "," + num(cy - r) + " " +
          num(cx + r) + "," + num(cy + r) + " " + num(cx - r) + "," + num(cy + r) + "\"";
      break;
    default:
      s = "<polygon class=\"" + std::string(cls) + "\" points=\"" + num(cx) + "," + num(cy - r) + " " +
          num(cx + r) + "," + num(cy) + " " + num(cx) + "," + num(cy + r) + " " + num(cx - r) + "," +
          num(cy) + "\"";
      break;
  }
  return s + " fill=\"" + color + "\"/>\n";
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Boundary positions and the [lo, hi] buffer bands next to the test strip.
struct Overlay {
  std::vector<double> lines;
  std::vector<std::pair<double, double>> bands;
};

Overlay overlay_of(const SplitAssignment& split) {
  Overlay o;
  for (int b = 0; b < kStripCount - 1; ++b) {
    const double v = split.strip_boundaries_um[static_cast<std::size_t>(b)];
    o.lines.push_back(v);
    if (b == split.test_strip - 1 || b == split.test_strip) {
      o.bands.emplace_back(v - split.buffer_um, v + split.buffer_um);
    }
  }
  return o;
}

int hex_digit(char c) { return c <= '9' ? c - '0' : c - 'a' + 10; }

std::array<unsigned char, 3> rgb(const char* hex) {
  std::array<unsigned char, 3> out{};
  for (int i = 0; i < 3; ++i) {
    out[static_cast<std::size_t>(i)] =
        static_cast<unsigned char>(hex_digit(hex[1 + 2 * i]) * 16 + hex_digit(hex[2 + 2 * i]));
  }
  return out;
}

}  // namespace

const std::array<const char*, kPaletteSize>& niche_palette() {
  static const std::array<const char*, kPaletteSize> palette = {
      "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c", "#98df8a", "#d62728",
      "#ff9896", "#9467bd", "#c5b0d5", "#8c564b", "#c49c94", "#e377c2", "#f7b6d2",
      "#7f7f7f", "#c7c7c7", "#bcbd22", "#dbdb8d", "#17becf", "#9edae5"};
  return palette;
}

std::string niche_map_svg(const CellTable& cells, std::span<const int> labels,
                          std::size_t n_niches, const SplitAssignment* split,
                          const RenderOptions& options) {
  check_labels(cells, labels, n_niches);
  const Frame f(cells.bounds(), options.width_px);
  const double legend_w = options.legend ? kLegendWidth : 0.0;
  const double legend_h = options.legend ? kLegendRow * static_cast<double>(n_niches + 1) : 0.0;
  const double width = f.plot_w + 2 * kMargin + legend_w;
  const double height = std::max(f.plot_h, legend_h) + 2 * kMargin;

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
         num(height) + "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n";
  if (!options.title.empty()) svg += "<title>" + escape(options.title) + "</title>\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + num(width) + "\" height=\"" + num(height) +
         "\" fill=\"#ffffff\"/>\n";

  const bool vertical = split && split->axis == StripAxis::kX;
  if (split) {
    const Overlay o = overlay_of(*split);
    for (const auto& [lo, hi] : o.bands) {
      if (vertical) {
        svg += "<rect class=\"buffer-band\" x=\"" + num(f.px(lo)) + "\" y=\"" + num(kMargin) +
               "\" width=\"" + num((hi - lo) * f.scale) + "\" height=\"" + num(f.plot_h) +
               "\" fill=\"#000000\" fill-opacity=\"0.12\"/>\n";
      } else {
        svg += "<rect class=\"buffer-band\" x=\"" + num(kMargin) + "\" y=\"" + num(f.py(lo)) +
               "\" width=\"" + num(f.plot_w) + "\" height=\"" + num((hi - lo) * f.scale) +
               "\" fill=\"#000000\" fill-opacity=\"0.12\"/>\n";
      }
    }
  }

  svg += "<g id=\"cells\">\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    svg += marker(f.px(cells.x(i)), f.py(cells.y(i)), options.dot_radius_px, labels[i], "cell");
  }
  svg += "</g>\n";

  if (split) {
    for (double v : overlay_of(*split).lines) {
      if (vertical) {
        svg += "<line class=\"strip-boundary\" x1=\"" + num(f.px(v)) + "\" y1=\"" + num(kMargin) +
               "\" x2=\"" + num(f.px(v)) + "\" y2=\"" + num(kMargin + f.plot_h) +
               "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
      } else {
        svg += "<line class=\"strip-boundary\" x1=\"" + num(kMargin) + "\" y1=\"" + num(f.py(v)) +
               "\" x2=\"" + num(kMargin + f.plot_w) + "\" y2=\"" + num(f.py(v)) +
               "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
      }
    }
  }

  if (options.legend) {
    const double lx = f.plot_w + 2 * kMargin;
    svg += "<g id=\"legend\" font-family=\"sans-serif\" font-size=\"11\">\n";
    for (std::size_t k = 0; k < n_niches; ++k) {
      const double y = kMargin + kLegendRow * (static_cast<double>(k) + 0.5);
      svg += "<g class=\"legend-entry\">";
      std::string m = marker(lx + 6, y, 5, static_cast<int>(k), "legend-swatch");
      m.pop_back();
      svg += m;
      svg += "<text x=\"" + num(lx + 16) + "\" y=\"" + num(y + 4) + "\">niche " + std::to_string(k) +
             "</text></g>\n";
    }
    svg += "</g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string niche_map_ppm(const CellTable& cells, std::span<const int> labels,
                          std::size_t n_niches, const SplitAssignment* split,
                          const RenderOptions& options) {
  check_labels(cells, labels, n_niches);
  const Frame f(cells.bounds(), options.width_px);
  const int w = static_cast<int>(std::ceil(f.plot_w + 2 * kMargin));
  const int h = static_cast<int>(std::ceil(f.plot_h + 2 * kMargin));
  std::vector<unsigned char> px(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, 255);
  auto put = [&](int x, int y, const std::array<unsigned char, 3>& c, double alpha) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    unsigned char* p = &px[(static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)) * 3];
    for (int i = 0; i < 3; ++i) {
      p[i] = static_cast<unsigned char>(std::lround((1.0 - alpha) * p[i] + alpha * c[static_cast<std::size_t>(i)]));
    }
  };
  const bool vertical = split && split->axis == StripAxis::kX;
  if (split) {
    for (const auto& [lo, hi] : overlay_of(*split).bands) {
      const int a = static_cast<int>(std::floor(vertical ? f.px(lo) : f.py(lo)));
      const int b = static_cast<int>(std::ceil(vertical ? f.px(hi) : f.py(hi)));
      for (int s = a; s <= b; ++s) {
        for (int t = 0; t < (vertical ? h : w); ++t) {
          vertical ? put(s, t, {0, 0, 0}, 0.12) : put(t, s, {0, 0, 0}, 0.12);
        }
      }
    }
  }
  const int r = std::max(1, static_cast<int>(std::lround(options.dot_radius_px)));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto color = rgb(labels[i] < 0 ? kUnassigned
                                         : niche_palette()[static_cast<std::size_t>(labels[i]) % kPaletteSize]);
    const int cx = static_cast<int>(std::lround(f.px(cells.x(i))));
    const int cy = static_cast<int>(std::lround(f.py(cells.y(i))));
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        if (dx * dx + dy * dy <= r * r) put(cx + dx, cy + dy, color, 1.0);
      }
    }
  }
  if (split) {
    for (double v : overlay_of(*split).lines) {
      const int s = static_cast<int>(std::lround(vertical ? f.px(v) : f.py(v)));
      for (int t = 0; t < (vertical ? h : w); ++t) vertical ? put(s, t, {0, 0, 0}, 1.0) : put(t, s, {0, 0, 0}, 1.0);
    }
  }
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.append(reinterpret_cast<const char*>(px.data()), px.size());
  return out;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "write to '" + path + "' failed");
}

}  // namespace histoniche
