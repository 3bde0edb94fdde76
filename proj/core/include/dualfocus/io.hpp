#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dualfocus/image.hpp"

namespace dualfocus::io {

using Bytes = std::vector<std::uint8_t>;

/// 8-bit PNG encode. 1-channel images become grayscale, 3-channel images RGB.
/// Values are clamped to [0,1] and rounded to the nearest code.
Bytes encode_png(const Image& img);
Image decode_png(std::span<const std::uint8_t> bytes);

/// Rounds every value to the nearest 8-bit code, exactly as a PNG round trip would.
Image quantize_8bit(const Image& img);

void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

/// Raw float grid: little-endian uint32 {H, W}, then H*W*C float32 values,
/// row-major with channels interleaved per pixel. The channel count is
/// implied by the payload size and checked against `channels`.
Bytes encode_raw(const Image& img);
Image decode_raw(std::span<const std::uint8_t> bytes, int channels);

void write_raw(const std::filesystem::path& path, const Image& img);
Image read_raw(const std::filesystem::path& path, int channels);

std::string base64_encode(std::span<const std::uint8_t> bytes);
Bytes base64_decode(std::string_view text);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::span<const std::uint8_t> bytes);

Bytes read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace dualfocus::io
