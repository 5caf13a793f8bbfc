// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <array>
#include <cctype>

#include <nlohmann/json.hpp>

#include "stst/error.hpp"
#include "stst/io.hpp"
#include "stst/pipeline.hpp"

namespace stst {

namespace {

constexpr std::size_t kGlyphW = 5;
constexpr std::size_t kGlyphH = 7;
constexpr std::size_t kAdvance = kGlyphW + 1;
constexpr std::size_t kTextTop = 2;

struct Glyph {
  char c;
  std::array<std::uint8_t, kGlyphH> rows;  // bit 4 = leftmost column
};

// clang-format off
constexpr Glyph kFont[] = {
  {' ', {0x00,0x00,0x00,0x00,0x00,0x00,0x00}},
  {'A', {0x0E,0x11,0x11,0x1F,0x11,0x11,0x11}}, {'B', {0x1E,0x11,0x11,0x1E,0x11,0x11,0x1E}},
  {'C', {0x0E,0x11,0x10,0x10,0x10,0x11,0x0E}}, {'D', {0x1E,0x11,0x11,0x11,0x11,0x11,0x1E}},
  {'E', {0x1F,0x10,0x10,0x1E,0x10,0x10,0x1F}}, {'F', {0x1F,0x10,0x10,0x1E,0x10,0x10,0x10}},
  {'G', {0x0E,0x11,0x10,0x17,0x11,0x11,0x0F}}, {'H', {0x11,0x11,0x11,0x1F,0x11,0x11,0x11}},
  {'I', {0x0E,0x04,0x04,0x04,0x04,0x04,0x0E}}, {'J', {0x07,0x02,0x02,0x02,0x02,0x12,0x0C}},
  {'K', {0x11,0x12,0x14,0x18,0x14,0x12,0x11}}, {'L', {0x10,0x10,0x10,0x10,0x10,0x10,0x1F}},
  {'M', {0x11,0x1B,0x15,0x15,0x11,0x11,0x11}}, {'N', {0x11,0x11,0x19,0x15,0x13,0x11,0x11}},
  {'O', {0x0E,0x11,0x11,0x11,0x11,0x11,0x0E}}, {'P', {0x1E,0x11,0x11,0x1E,0x10,0x10,0x10}},
  {'Q', {0x0E,0x11,0x11,0x11,0x15,0x12,0x0D}}, {'R', {0x1E,0x11,0x11,0x1E,0x14,0x12,0x11}},
  {'S', {0x0F,0x10,0x10,0x0E,0x01,0x01,0x1E}}, {'T', {0x1F,0x04,0x04,0x04,0x04,0x04,0x04}},
  {'U', {0x11,0x11,0x11,0x11,0x11,0x11,0x0E}}, {'V', {0x11,0x11,0x11,0x11,0x11,0x0A,0x04}},
  {'W', {0x11,0x11,0x11,0x15,0x15,0x15,0x0A}}, {'X', {0x11,0x11,0x0A,0x04,0x0A,0x11,0x11}},
  {'Y', {0x11,0x11,0x11,0x0A,0x04,0x04,0x04}}, {'Z', {0x1F,0x01,0x02,0x04,0x08,0x10,0x1F}},
  {'0', {0x0E,0x11,0x13,0x15,0x19,0x11,0x0E}}, {'1', {0x04,0x0C,0x04,0x04,0x04,0x04,0x0E}},
  {'2', {0x0E,0x11,0x01,0x02,0x04,0x08,0x1F}}, {'3', {0x1F,0x02,0x04,0x02,0x01,0x11,0x0E}},
  {'4', {0x02,0x06,0x0A,0x12,0x1F,0x02,0x02}}, {'5', {0x1F,0x10,0x1E,0x01,0x01,0x11,0x0E}},
  {'6', {0x06,0x08,0x10,0x1E,0x11,0x11,0x0E}}, {'7', {0x1F,0x01,0x02,0x04,0x08,0x08,0x08}},
  {'8', {0x0E,0x11,0x11,0x0E,0x11,0x11,0x0E}}, {'9', {0x0E,0x11,0x11,0x0F,0x01,0x02,0x0C}},
  {'-', {0x00,0x00,0x00,0x1F,0x00,0x00,0x00}}, {'_', {0x00,0x00,0x00,0x00,0x00,0x00,0x1F}},
  {'.', {0x00,0x00,0x00,0x00,0x00,0x0C,0x0C}}, {',', {0x00,0x00,0x00,0x00,0x0C,0x04,0x08}},
  {':', {0x00,0x0C,0x0C,0x00,0x0C,0x0C,0x00}}, {'(', {0x02,0x04,0x08,0x08,0x08,0x04,0x02}},
  {')', {0x08,0x04,0x02,0x02,0x02,0x04,0x08}}, {'/', {0x00,0x01,0x02,0x04,0x08,0x10,0x00}},
  {'+', {0x00,0x04,0x04,0x1F,0x04,0x04,0x00}}, {'%', {0x18,0x19,0x02,0x04,0x08,0x13,0x03}},
  {'=', {0x00,0x00,0x1F,0x00,0x1F,0x00,0x00}}, {'?', {0x0E,0x11,0x01,0x02,0x04,0x00,0x04}},
  {'#', {0x0A,0x0A,0x1F,0x0A,0x1F,0x0A,0x0A}}, {'&', {0x0C,0x12,0x14,0x08,0x15,0x12,0x0D}},
  {'*', {0x00,0x04,0x15,0x0E,0x15,0x04,0x00}}, {'\'', {0x0C,0x04,0x08,0x00,0x00,0x00,0x00}},
};
// clang-format on

const Glyph& glyph_for(char c) {
  const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& g : kFont) {
    if (g.c == u) return g;
  }
  for (const auto& g : kFont) {
    if (g.c == '?') return g;
  }
  return kFont[0];
}

void check_row(const std::vector<MontageCell>& row, std::size_t index) {
  for (const auto& cell : row) {
    if (cell.image.width() != row.front().image.width() || cell.image.height() != row.front().image.height()) {
      throw Error(ErrorKind::DimensionMismatch, "montage row " + std::to_string(index) + ": '" + cell.label + "' is " +
                                                    std::to_string(cell.image.width()) + "x" +
                                                    std::to_string(cell.image.height()) + ", expected " +
                                                    std::to_string(row.front().image.width()) + "x" +
                                                    std::to_string(row.front().image.height()));
    }
  }
}

}  // namespace

std::size_t text_width(std::string_view text) { return text.empty() ? 0 : text.size() * kAdvance - 1; }

void draw_text(RgbImage& img, std::size_t x, std::size_t y, std::string_view text, std::array<std::uint8_t, 3> color,
               std::size_t max_width) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto& g = glyph_for(text[i]);
    const std::size_t gx = x + i * kAdvance;
    for (std::size_t r = 0; r < kGlyphH; ++r) {
      for (std::size_t c = 0; c < kGlyphW; ++c) {
        if (!(g.rows[r] & (0x10 >> c))) continue;
        const std::size_t px = gx + c, py = y + r;
        if (px >= x + max_width || px >= img.width() || py >= img.height()) continue;
        for (std::size_t k = 0; k < 3; ++k) img.at(px, py, k) = color[k];
      }
    }
  }
}

RgbImage render_montage(const MontageRows& rows) {
  if (rows.empty()) throw Error(ErrorKind::DimensionMismatch, "montage needs at least one row");
  std::size_t width = 0, height = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].empty()) throw Error(ErrorKind::DimensionMismatch, "montage row " + std::to_string(r) + " is empty");
    check_row(rows[r], r);
    const auto cw = rows[r].front().image.width();
    width = std::max(width, rows[r].size() * cw + (rows[r].size() - 1) * kMontageGutter);
    height += kMontageLabelBand + rows[r].front().image.height();
  }
  RgbImage out(width, height);
  std::fill(out.data().begin(), out.data().end(), std::uint8_t{255});
  std::size_t top = 0;
  for (const auto& row : rows) {
    const auto cw = row.front().image.width(), ch = row.front().image.height();
    for (std::size_t c = 0; c < row.size(); ++c) {
      const auto left = c * (cw + kMontageGutter);
      draw_text(out, left, top + kTextTop, row[c].label, {0, 0, 0}, cw);
      for (std::size_t y = 0; y < ch; ++y) {
        for (std::size_t x = 0; x < cw; ++x) {
          for (std::size_t k = 0; k < 3; ++k) out.at(left + x, top + kMontageLabelBand + y, k) = row[c].image.at(x, y, k);
        }
      }
    }
    top += kMontageLabelBand + ch;
  }
  return out;
}

void emit_montage(const MontageRows& rows, const std::filesystem::path& path) { write_image(render_montage(rows), path); }

MontageRows load_montage_spec(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  MontageRows rows;
  try {
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    for (const auto& row : j.at("rows")) {
      std::vector<MontageCell> cells;
      for (const auto& cell : row) {
        cells.push_back({cell.value("label", std::string{}),
                         read_image(path.parent_path() / cell.at("image").get<std::string>())});
      }
      rows.push_back(std::move(cells));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, "'" + path.string() + "': " + e.what());
  }
  return rows;
}

}  // namespace stst
