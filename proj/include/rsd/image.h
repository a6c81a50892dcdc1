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

#ifndef RSD_IMAGE_H_
#define RSD_IMAGE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rsd {

// Planar floating-point raster, channel-major (C x H x W). Pixel values are
// nominally in [0, 1]; operations that clip say so.
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, float fill = 0.0f);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  size_t size() const { return data_.size(); }
  size_t plane_size() const { return size_t(height_) * width_; }
  bool empty() const { return data_.empty(); }

  float& at(int c, int y, int x) {
    return data_[(size_t(c) * height_ + y) * width_ + x];
  }
  float at(int c, int y, int x) const {
    return data_[(size_t(c) * height_ + y) * width_ + x];
  }

  std::span<float> plane(int c) {
    return {data_.data() + size_t(c) * plane_size(), plane_size()};
  }
  std::span<const float> plane(int c) const {
    return {data_.data() + size_t(c) * plane_size(), plane_size()};
  }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  bool SameShape(const Image& o) const {
    return channels_ == o.channels_ && height_ == o.height_ &&
           width_ == o.width_;
  }
  bool operator==(const Image& o) const = default;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// Clamps every value into [0, 1].
void Clip01(Image& img);

// ITU-R BT.601 luma of a 3-channel image; 1-channel images are copied.
Image ToLuma(const Image& img);

// Reads a PNG or JPEG file (detected by signature). 3-channel results are
// RGB; alpha is dropped. Throws IoError if the file cannot be read and
// FormatError for malformed data or unsupported bit depths (PNG bit depths
// other than 8 and 16).
Image LoadImage(const std::filesystem::path& path);

// Writes 8-bit PNG (values are clipped and rounded to the nearest level) or
// baseline JPEG at quality 95, chosen by extension.
void SaveImage(const Image& img, const std::filesystem::path& path);
void SavePng(const Image& img, const std::filesystem::path& path);

std::vector<uint8_t> EncodePng(const Image& img);
Image DecodePng(std::span<const uint8_t> bytes);

// Baseline JPEG through the linked libjpeg, islow DCT both ways.
std::vector<uint8_t> EncodeJpeg(const Image& img, int quality);
Image DecodeJpeg(std::span<const uint8_t> bytes);

// Identifies the linked JPEG codec build, e.g. "libjpeg-turbo 2.1.2 (API 80)".
std::string JpegCodecVersion();

std::vector<uint8_t> ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path,
                    std::span<const uint8_t> bytes);

}  // namespace rsd

#endif  // RSD_IMAGE_H_
