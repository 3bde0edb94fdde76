#include "dualfocus/io.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dualfocus::io {
namespace {

static_assert(std::endian::native == std::endian::little, "raw float format assumes little-endian host");

struct PngReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void png_read_from_span(png_structp png, png_bytep out, png_size_t count) {
  auto* cursor = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + count > cursor->bytes.size()) png_error(png, "truncated PNG payload");
  std::memcpy(out, cursor->bytes.data() + cursor->offset, count);
  cursor->offset += count;
}

void png_write_to_vector(png_structp png, png_bytep data, png_size_t count) {
  auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + count);
}

void png_flush_noop(png_structp) {}

[[noreturn]] void png_throw(png_structp, png_const_charp message) {
  throw std::runtime_error(std::string("png: ") + message);
}

void png_warn_silent(png_structp, png_const_charp) {}

std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

Image quantize_8bit(const Image& img) {
  Image out = img;
  for (float& v : out.data()) v = quantize(v) / 255.0f;
  return out;
}

Bytes encode_png(const Image& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw std::invalid_argument("encode_png: expected 1 or 3 channels");
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn_silent);
  png_infop info = png_create_info_struct(png);
  Bytes out;
  try {
    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    const int color = img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
                 color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width()) * img.channels());
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        for (int c = 0; c < img.channels(); ++c) row[x * img.channels() + c] = quantize(img.at(c, y, x));
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw std::runtime_error("decode_png: not a PNG payload");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn_silent);
  png_infop info = png_create_info_struct(png);
  PngReadCursor cursor{bytes, 0};
  Image img;
  try {
    png_set_read_fn(png, &cursor, png_read_from_span);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) throw std::runtime_error("decode_png: unsupported channel layout");
    img = Image(width, height, channels);
    std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
    for (int y = 0; y < height; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (int x = 0; x < width; ++x) {
        for (int c = 0; c < channels; ++c) img.at(c, y, x) = row[x * channels + c] / 255.0f;
      }
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  write_file_atomic(path, encode_png(img));
}

Image read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

Bytes encode_raw(const Image& img) {
  const std::uint32_t header[2] = {static_cast<std::uint32_t>(img.height()),
                                   static_cast<std::uint32_t>(img.width())};
  Bytes out(sizeof(header) + img.size() * sizeof(float));
  std::memcpy(out.data(), header, sizeof(header));
  auto* dst = reinterpret_cast<float*>(out.data() + sizeof(header));
  const int c_count = img.channels();
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < c_count; ++c) *dst++ = img.at(c, y, x);
    }
  }
  return out;
}

Image decode_raw(std::span<const std::uint8_t> bytes, int channels) {
  std::uint32_t header[2];
  if (bytes.size() < sizeof(header)) throw std::runtime_error("decode_raw: missing header");
  std::memcpy(header, bytes.data(), sizeof(header));
  const auto height = static_cast<int>(header[0]);
  const auto width = static_cast<int>(header[1]);
  const std::size_t expected =
      sizeof(header) + static_cast<std::size_t>(height) * width * channels * sizeof(float);
  if (bytes.size() != expected) {
    throw std::runtime_error("decode_raw: payload size does not match header");
  }
  Image img(width, height, channels);
  const std::uint8_t* src = bytes.data() + sizeof(header);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        std::memcpy(&img.at(c, y, x), src, sizeof(float));
        src += sizeof(float);
      }
    }
  }
  return img;
}

void write_raw(const std::filesystem::path& path, const Image& img) {
  write_file_atomic(path, encode_raw(img));
}

Image read_raw(const std::filesystem::path& path, int channels) {
  return decode_raw(read_file(path), channels);
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

Bytes base64_decode(std::string_view text) {
  std::string clean;
  clean.reserve(text.size());
  for (char ch : text) {
    if (ch != '\n' && ch != '\r' && ch != ' ') clean.push_back(ch);
  }
  if (clean.size() % 4 != 0) throw std::runtime_error("base64_decode: invalid length");
  Bytes out(3 * clean.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                                static_cast<int>(clean.size()));
  if (n < 0) throw std::runtime_error("base64_decode: invalid payload");
  std::size_t padding = 0;
  if (!clean.empty() && clean.back() == '=') ++padding;
  if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

}  // namespace dualfocus::io
