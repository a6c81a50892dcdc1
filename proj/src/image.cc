// Copyright (c) the resynth-detect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rsd/image.h"

#include <png.h>
#include <setjmp.h>
#include <stdio.h>

#include <jpeglib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rsd/errors.h"

namespace rsd {

Image::Image(int channels, int height, int width, float fill)
    : channels_(channels), height_(height), width_(width) {
  RSD_REQUIRE(channels > 0 && height > 0 && width > 0,
              "image dimensions must be positive");
  data_.assign(size_t(channels) * height * width, fill);
}

void Clip01(Image& img) {
  for (float& v : img.values()) v = std::clamp(v, 0.0f, 1.0f);
}

Image ToLuma(const Image& img) {
  if (img.channels() == 1) return img;
  RSD_REQUIRE(img.channels() == 3, "luma needs a 1- or 3-channel image");
  Image out(1, img.height(), img.width());
  auto r = img.plane(0), g = img.plane(1), b = img.plane(2);
  auto y = out.plane(0);
  for (size_t i = 0; i < y.size(); ++i) {
    y[i] = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
  }
  return out;
}

std::vector<uint8_t> ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return bytes;
}

void WriteFileBytes(const std::filesystem::path& path,
                    std::span<const uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

uint8_t ToByte(float v) {
  return uint8_t(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

// ---------------------------------------------------------------- PNG ----

struct PngReadState {
  const uint8_t* data;
  size_t size;
  size_t pos;
};

void PngReadFn(png_structp png, png_bytep out, png_size_t n) {
  auto* s = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (s->pos + n > s->size) png_error(png, "truncated PNG");
  std::memcpy(out, s->data + s->pos, n);
  s->pos += n;
}

void PngWriteFn(png_structp png, png_bytep in, png_size_t n) {
  auto* v = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(png));
  v->insert(v->end(), in, in + n);
}

void PngFlushFn(png_structp) {}

void PngWarnFn(png_structp, png_const_charp) {}

struct PngRaw {
  int channels = 0;  // after stripping alpha: 1 or 3
  int height = 0;
  int width = 0;
  int bit_depth = 0;
  std::vector<uint8_t> rows;  // height * rowbytes
  size_t rowbytes = 0;
  int src_channels = 0;
};

// Returns nullptr on success, otherwise a static error string. No C++
// objects with destructors are live across the setjmp boundary except
// `raw`, which is only resized before decoding rows.
const char* DecodePngRaw(std::span<const uint8_t> bytes, PngRaw* raw) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, PngWarnFn);
  if (!png) return "png_create_read_struct failed";
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return "png_create_info_struct failed";
  }
  static const char* kUnsupported = "unsupported PNG bit depth";
  const char* volatile err = "malformed PNG";
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return err;
  }
  PngReadState state{bytes.data(), bytes.size(), 0};
  png_set_read_fn(png, &state, PngReadFn);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth != 8 && depth != 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    return kUnsupported;
  }
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);  // native little-endian uint16
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  raw->width = int(png_get_image_width(png, info));
  raw->height = int(png_get_image_height(png, info));
  raw->bit_depth = png_get_bit_depth(png, info);
  raw->src_channels = png_get_channels(png, info);
  raw->rowbytes = png_get_rowbytes(png, info);
  raw->rows.resize(raw->rowbytes * size_t(raw->height));
  std::vector<png_bytep> ptrs(size_t(raw->height));
  for (int y = 0; y < raw->height; ++y) {
    ptrs[size_t(y)] = raw->rows.data() + raw->rowbytes * size_t(y);
  }
  png_read_image(png, ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return nullptr;
}

const char* EncodePngRaw(const std::vector<uint8_t>& interleaved, int width,
                         int height, int channels, std::vector<uint8_t>* out) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, PngWarnFn);
  if (!png) return "png_create_write_struct failed";
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return "png_create_info_struct failed";
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return "PNG encoding failed";
  }
  png_set_write_fn(png, out, PngWriteFn, PngFlushFn);
  png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const size_t stride = size_t(width) * channels;
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(interleaved.data() +
                                             stride * size_t(y)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return nullptr;
}

std::vector<uint8_t> Interleave(const Image& img) {
  const int c = img.channels();
  std::vector<uint8_t> out(img.size());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int k = 0; k < c; ++k) {
        out[(size_t(y) * img.width() + x) * c + k] = ToByte(img.at(k, y, x));
      }
    }
  }
  return out;
}

// --------------------------------------------------------------- JPEG ----

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  jmp_buf jump;
};

void JpegErrorExit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  longjmp(err->jump, 1);
}

void JpegSilence(j_common_ptr, int) {}

const char* EncodeJpegRaw(const std::vector<uint8_t>& interleaved, int width,
                          int height, int channels, int quality,
                          std::vector<uint8_t>* out) {
  jpeg_compress_struct cinfo;
  JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = JpegErrorExit;
  jerr.pub.emit_message = JpegSilence;
  unsigned char* buf = nullptr;
  unsigned long len = 0;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_compress(&cinfo);
    free(buf);
    return "JPEG encoding failed";
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buf, &len);
  cinfo.image_width = JDIMENSION(width);
  cinfo.image_height = JDIMENSION(height);
  cinfo.input_components = channels;
  cinfo.in_color_space = channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);
  cinfo.dct_method = JDCT_ISLOW;
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const size_t stride = size_t(width) * channels;
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(interleaved.data() +
                                        stride * cinfo.next_scanline);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  out->assign(buf, buf + len);
  free(buf);
  return nullptr;
}

struct JpegRaw {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> pixels;
};

const char* DecodeJpegRaw(std::span<const uint8_t> bytes, JpegRaw* raw) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = JpegErrorExit;
  jerr.pub.emit_message = JpegSilence;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    return "malformed JPEG";
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.dct_method = JDCT_ISLOW;
  cinfo.out_color_space =
      cinfo.jpeg_color_space == JCS_GRAYSCALE ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  raw->width = int(cinfo.output_width);
  raw->height = int(cinfo.output_height);
  raw->channels = cinfo.output_components;
  raw->pixels.resize(size_t(raw->width) * raw->height * raw->channels);
  const size_t stride = size_t(raw->width) * raw->channels;
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = raw->pixels.data() + stride * cinfo.output_scanline;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return nullptr;
}

bool IsPng(std::span<const uint8_t> b) {
  return b.size() >= 8 && png_sig_cmp(b.data(), 0, 8) == 0;
}

bool IsJpeg(std::span<const uint8_t> b) {
  return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

}  // namespace

std::vector<uint8_t> EncodePng(const Image& img) {
  RSD_REQUIRE(img.channels() == 1 || img.channels() == 3,
              "PNG output supports 1 or 3 channels");
  std::vector<uint8_t> out;
  if (const char* err = EncodePngRaw(Interleave(img), img.width(),
                                     img.height(), img.channels(), &out)) {
    throw FormatError(err);
  }
  return out;
}

Image DecodePng(std::span<const uint8_t> bytes) {
  if (!IsPng(bytes)) throw FormatError("not a PNG stream");
  PngRaw raw;
  if (const char* err = DecodePngRaw(bytes, &raw)) throw FormatError(err);
  const int src_c = raw.src_channels;
  const int c = src_c >= 3 ? 3 : 1;
  Image img(c, raw.height, raw.width);
  const float full = raw.bit_depth == 16 ? 65535.0f : 255.0f;
  for (int y = 0; y < raw.height; ++y) {
    const uint8_t* row = raw.rows.data() + raw.rowbytes * size_t(y);
    for (int x = 0; x < raw.width; ++x) {
      for (int k = 0; k < c; ++k) {
        const size_t idx = size_t(x) * src_c + k;
        float v;
        if (raw.bit_depth == 16) {
          uint16_t s;
          std::memcpy(&s, row + idx * 2, 2);
          v = float(s) / full;
        } else {
          v = float(row[idx]) / full;
        }
        img.at(k, y, x) = v;
      }
    }
  }
  return img;
}

std::vector<uint8_t> EncodeJpeg(const Image& img, int quality) {
  RSD_REQUIRE(quality >= 1 && quality <= 100, "JPEG quality must be 1..100");
  RSD_REQUIRE(img.channels() == 1 || img.channels() == 3,
              "JPEG supports 1 or 3 channels");
  std::vector<uint8_t> out;
  if (const char* err = EncodeJpegRaw(Interleave(img), img.width(),
                                      img.height(), img.channels(), quality,
                                      &out)) {
    throw FormatError(err);
  }
  return out;
}

Image DecodeJpeg(std::span<const uint8_t> bytes) {
  if (!IsJpeg(bytes)) throw FormatError("not a JPEG stream");
  JpegRaw raw;
  if (const char* err = DecodeJpegRaw(bytes, &raw)) throw FormatError(err);
  Image img(raw.channels, raw.height, raw.width);
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      for (int k = 0; k < raw.channels; ++k) {
        img.at(k, y, x) =
            float(raw.pixels[(size_t(y) * raw.width + x) * raw.channels + k]) /
            255.0f;
      }
    }
  }
  return img;
}

std::string JpegCodecVersion() {
#ifdef LIBJPEG_TURBO_VERSION
#define RSD_STR2(x) #x
#define RSD_STR(x) RSD_STR2(x)
  return std::string("libjpeg-turbo ") + RSD_STR(LIBJPEG_TURBO_VERSION) +
         " (API " + std::to_string(JPEG_LIB_VERSION) + ")";
#undef RSD_STR
#undef RSD_STR2
#else
  return "libjpeg (API " + std::to_string(JPEG_LIB_VERSION) + ")";
#endif
}

Image LoadImage(const std::filesystem::path& path) {
  const std::vector<uint8_t> bytes = ReadFileBytes(path);
  try {
    if (IsPng(bytes)) return DecodePng(bytes);
    if (IsJpeg(bytes)) return DecodeJpeg(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  throw FormatError(path.string() + ": not a PNG or JPEG file");
}

void SavePng(const Image& img, const std::filesystem::path& path) {
  WriteFileBytes(path, EncodePng(img));
}

void SaveImage(const Image& img, const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return char(std::tolower(ch)); });
  if (ext == ".png") {
    SavePng(img, path);
  } else if (ext == ".jpg" || ext == ".jpeg") {
    WriteFileBytes(path, EncodeJpeg(img, 95));
  } else {
    throw ArgumentError("unsupported image extension: " + ext);
  }
}

}  // namespace rsd
