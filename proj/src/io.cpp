// SPDX-License-Identifier: Apache-2.0
#include "stst/io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>

#include <openssl/evp.h>
#include <png.h>

#include "stst/error.hpp"

namespace stst {

namespace {

constexpr std::array<std::uint8_t, 8> kPngMagic{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

bool starts_with(std::span<const std::uint8_t> b, std::initializer_list<std::uint8_t> prefix) {
  return b.size() >= prefix.size() && std::equal(prefix.begin(), prefix.end(), b.begin());
}

std::string lower_extension(const std::filesystem::path& p) {
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorKind::Format, std::string("invalid PNG: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RgbImage img(image.width, image.height);
  png_color black{0, 0, 0};
  if (!png_image_finish_read(&image, &black, img.data().data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorKind::Format, "PNG decode failed: " + msg);
  }
  return img;
}

// Skips whitespace and '#' comments, then reads an unsigned decimal.
std::size_t ppm_number(std::span<const std::uint8_t> b, std::size_t& pos) {
  for (;;) {
    while (pos < b.size() && std::isspace(b[pos])) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) throw Error(ErrorKind::Format, "malformed PPM header");
  std::size_t v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + static_cast<std::size_t>(b[pos] - '0');
    if (v > (1u << 24)) throw Error(ErrorKind::Format, "PPM header value too large");
    ++pos;
  }
  return v;
}

RgbImage decode_ppm(std::span<const std::uint8_t> b) {
  std::size_t pos = 2;
  const auto w = ppm_number(b, pos);
  const auto h = ppm_number(b, pos);
  const auto maxval = ppm_number(b, pos);
  if (maxval != 255) throw Error(ErrorKind::Format, "only 8-bit PPM (maxval 255) is supported");
  if (pos >= b.size() || !std::isspace(b[pos])) throw Error(ErrorKind::Format, "malformed PPM header");
  ++pos;
  if (w == 0 || h == 0) throw Error(ErrorKind::Format, "PPM has zero size");
  const std::size_t n = w * h * 3;
  if (b.size() - pos < n) throw Error(ErrorKind::Format, "truncated PPM data");
  RgbImage img(w, h);
  std::copy_n(b.begin() + static_cast<std::ptrdiff_t>(pos), n, img.data().begin());
  return img;
}

}  // namespace

ImageFormat detect_format(std::span<const std::uint8_t> b) {
  if (b.size() >= kPngMagic.size() && std::equal(kPngMagic.begin(), kPngMagic.end(), b.begin())) return ImageFormat::Png;
  if (starts_with(b, {'P', '6'})) return ImageFormat::Ppm;
  if (starts_with(b, {0xff, 0xd8, 0xff})) throw Error(ErrorKind::Format, "JPEG input rejected: lossy formats are not accepted");
  if (starts_with(b, {'R', 'I', 'F', 'F'})) throw Error(ErrorKind::Format, "WebP input rejected: lossy formats are not accepted");
  if (starts_with(b, {'P', '3'})) throw Error(ErrorKind::Format, "ASCII PPM (P3) is not supported; use binary P6");
  throw Error(ErrorKind::Format, "unrecognised image format (PNG or binary PPM expected)");
}

ImageFormat format_for_extension(const std::filesystem::path& path) {
  const auto e = lower_extension(path);
  if (e == ".png") return ImageFormat::Png;
  if (e == ".ppm") return ImageFormat::Ppm;
  if (e == ".jpg" || e == ".jpeg" || e == ".webp") {
    throw Error(ErrorKind::Format, "'" + path.string() + "': lossy output formats are not supported");
  }
  throw Error(ErrorKind::Format, "'" + path.string() + "': unknown image extension (use .png or .ppm)");
}

bool is_image_path(const std::filesystem::path& path) {
  const auto e = lower_extension(path);
  return e == ".png" || e == ".ppm";
}

RgbImage decode_image(std::span<const std::uint8_t> bytes) {
  return detect_format(bytes) == ImageFormat::Png ? decode_png(bytes) : decode_ppm(bytes);
}

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.data().data(), 0, nullptr)) {
    throw Error(ErrorKind::Io, std::string("PNG encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.data().data(), 0, nullptr)) {
    throw Error(ErrorKind::Io, std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& img) {
  const auto header = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const auto d = img.data();
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

RgbImage read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_image(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), "'" + path.string() + "': " + e.what());
  }
}

void write_image(const RgbImage& img, const std::filesystem::path& path) {
  const auto bytes = format_for_extension(path) == ImageFormat::Png ? encode_png(img) : encode_ppm(img);
  write_file(path, bytes);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr)) {
    throw Error(ErrorKind::Io, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xf];
  }
  return out;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::Io, "'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file()) {
      const auto ext = lower_extension(e.path());
      if (is_image_path(e.path()) || ext == ".jpg" || ext == ".jpeg") out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.filename() < b.filename(); });
  return out;
}

}  // namespace stst
