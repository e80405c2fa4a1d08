#pragma once

// Image file I/O: PFM (32-bit float, bottom-up rows, scale sign encodes
// byte order) and 8-bit PNG through libpng. Images are [C,H,W] tensors
// with C = 1 or 3.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>

#include <png.h>

#include "epiwarp/tensor.hpp"

namespace epiwarp {

namespace detail {

struct FileCloser {
  std::FILE* f;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

inline bool host_is_little_endian() {
  const std::uint16_t one = 1;
  std::uint8_t b;
  std::memcpy(&b, &one, 1);
  return b == 1;
}

inline float byteswap_float(float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  u = __builtin_bswap32(u);
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PFM

template <class T>
void write_pfm(const std::string& path, const Tensor<T>& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
    throw DataError("write_pfm: image must be [1|3,H,W], got " +
                    shape_str(image.shape()));
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("write_pfm: cannot open '" + path + "'");
  detail::FileCloser closer{f};
  const double scale = detail::host_is_little_endian() ? -1.0 : 1.0;
  std::fprintf(f, "%s\n%zu %zu\n%.1f\n", C == 3 ? "PF" : "Pf", W, H, scale);
  std::vector<float> row(W * C);
  // bottom-up row order, interleaved channels
  for (std::size_t y = H; y-- > 0;) {
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c)
        row[x * C + c] = float(image.data()[(c * H + y) * W + x]);
    if (std::fwrite(row.data(), 4, row.size(), f) != row.size())
      throw DataError("write_pfm: short write to '" + path + "'");
  }
}

template <class T = float>
Tensor<T> read_pfm(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("read_pfm: cannot open '" + path + "'");
  detail::FileCloser closer{f};

  auto fail = [&](const std::string& why) {
    const long off = std::ftell(f);
    throw DataError("read_pfm: " + why + " in '" + path + "' at byte offset " +
                    std::to_string(off < 0 ? 0 : off));
  };
  auto read_token = [&]() {
    // skips whitespace; PFM allows comment-free headers only
    std::string tok;
    int c;
    do {
      c = std::fgetc(f);
      if (c == EOF) fail("truncated header");
    } while (std::isspace(c));
    while (c != EOF && !std::isspace(c)) {
      tok.push_back(char(c));
      c = std::fgetc(f);
    }
    return tok;
  };

  const std::string magic = read_token();
  std::size_t channels;
  if (magic == "PF")
    channels = 3;
  else if (magic == "Pf")
    channels = 1;
  else
    fail("bad magic '" + magic + "'");

  std::size_t W = 0, H = 0;
  double scale = 0;
  try {
    W = std::stoul(read_token());
    H = std::stoul(read_token());
    scale = std::stod(read_token());
  } catch (const std::logic_error&) {
    fail("malformed dimensions or scale");
  }
  if (W == 0 || H == 0 || scale == 0) fail("invalid dimensions or zero scale");
  const bool file_little = scale < 0;
  const bool swap = file_little != detail::host_is_little_endian();

  std::vector<float> row(W * channels);
  std::vector<T> out(channels * H * W);
  for (std::size_t y = H; y-- > 0;) {
    if (std::fread(row.data(), 4, row.size(), f) != row.size())
      fail("truncated pixel data");
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        float v = row[x * channels + c];
        if (swap) v = detail::byteswap_float(v);
        out[(c * H + y) * W + x] = T(v);
      }
  }
  return Tensor<T>::from({channels, H, W}, std::move(out));
}

// ---------------------------------------------------------------------------
// PNG (8-bit gray or RGB); values clamped to [0,1] and quantized

template <class T>
void write_png(const std::string& path, const Tensor<T>& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
    throw DataError("write_png: image must be [1|3,H,W], got " +
                    shape_str(image.shape()));
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("write_png: cannot open '" + path + "'");
  detail::FileCloser closer{f};

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("write_png: libpng failure for '" + path + "'");
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, png_uint_32(W), png_uint_32(H), 8,
               C == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(W * C);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c) {
        double v = double(image.data()[(c * H + y) * W + x]);
        v = std::clamp(v, 0.0, 1.0);
        row[x * C + c] = png_byte(std::lround(v * 255.0));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

template <class T = float>
Tensor<T> read_png(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("read_png: cannot open '" + path + "'");
  detail::FileCloser closer{f};

  png_byte header[8];
  if (std::fread(header, 1, 8, f) != 8 || png_sig_cmp(header, 0, 8))
    throw DataError("read_png: '" + path + "' is not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("read_png: libpng failure for '" + path + "'");
  }
  png_init_io(png, f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const std::size_t W = png_get_image_width(png, info);
  const std::size_t H = png_get_image_height(png, info);
  const std::size_t C = png_get_channels(png, info);
  if (C != 1 && C != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("read_png: unsupported channel count in '" + path + "'");
  }
  std::vector<png_byte> row(W * C);
  std::vector<T> out(C * H * W);
  for (std::size_t y = 0; y < H; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c)
        out[(c * H + y) * W + x] = T(row[x * C + c] / 255.0);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return Tensor<T>::from({C, H, W}, std::move(out));
}

}  // namespace epiwarp
