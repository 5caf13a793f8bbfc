// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stst/image.hpp"

namespace stst {

enum class ImageFormat { Png, Ppm };

/// Identifies PNG or binary PPM (P6) by magic bytes; lossy formats raise FormatError.
ImageFormat detect_format(std::span<const std::uint8_t> bytes);
/// Format implied by a file extension (.png, .ppm); anything else raises FormatError.
ImageFormat format_for_extension(const std::filesystem::path& path);
bool is_image_path(const std::filesystem::path& path);

RgbImage decode_image(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const RgbImage& img);
std::vector<std::uint8_t> encode_ppm(const RgbImage& img);

RgbImage read_image(const std::filesystem::path& path);
/// Format chosen by extension.
void write_image(const RgbImage& img, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

/// Image files directly inside `dir`, sorted by file name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace stst
