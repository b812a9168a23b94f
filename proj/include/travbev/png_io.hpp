#ifndef TRAVBEV_PNG_IO_HPP
#define TRAVBEV_PNG_IO_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include "travbev/geometry.hpp"

namespace travbev {

/// 16-bit single channel raster, row-major.
struct ImageU16 {
  int width = 0, height = 0;
  std::vector<std::uint16_t> data;

  static ImageU16 make(int width, int height, std::uint16_t fill = 0);
  std::uint16_t& at(int x, int y) {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  std::uint16_t at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
};

// PNG read/write. Writers throw IoError on filesystem failures; readers
// throw IoError for missing files and FormatError for malformed content or
// an unexpected color type / bit depth.

void write_png_rgb8(const std::filesystem::path& path, const ImageU8& image);
void write_png_gray8(const std::filesystem::path& path, const ImageU8& image);
void write_png_gray16(const std::filesystem::path& path, const ImageU16& image);
void write_png_indexed(const std::filesystem::path& path, const ImageU8& indices,
                       const std::vector<Rgb>& palette);

ImageU8 read_png_rgb8(const std::filesystem::path& path);
ImageU8 read_png_gray8(const std::filesystem::path& path);
ImageU16 read_png_gray16(const std::filesystem::path& path);
/// Raw palette indices of an indexed PNG (no palette expansion).
ImageU8 read_png_indexed(const std::filesystem::path& path);

}  // namespace travbev

#endif  // TRAVBEV_PNG_IO_HPP
