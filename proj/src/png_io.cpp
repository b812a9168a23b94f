#include "travbev/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "travbev/errors.hpp"

namespace travbev {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) {
      std::fclose(f);
    }
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    throw IoError("cannot open " + path.string());
  }
  return f;
}

// libpng reports errors through longjmp; wrap each call site.
class PngWriter {
 public:
  explicit PngWriter(const std::filesystem::path& path)
      : path_(path), file_(open_file(path, "wb")) {
    png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                   nullptr);
    info_ = png_ ? png_create_info_struct(png_) : nullptr;
    if (!png_ || !info_) {
      throw IoError("libpng allocation failed for " + path.string());
    }
    png_init_io(png_, file_.get());
  }

  ~PngWriter() { png_destroy_write_struct(&png_, &info_); }

  void write(int width, int height, int bit_depth, int color_type,
             const std::vector<png_bytep>& rows,
             const std::vector<Rgb>* palette) {
    if (setjmp(png_jmpbuf(png_))) {
      throw IoError("libpng write failed for " + path_.string());
    }
    png_set_IHDR(png_, info_, width, height, bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    std::vector<png_color> plte;
    if (palette) {
      plte.reserve(palette->size());
      for (const Rgb& c : *palette) {
        plte.push_back(png_color{c.r, c.g, c.b});
      }
      png_set_PLTE(png_, info_, plte.data(), static_cast<int>(plte.size()));
    }
    png_write_info(png_, info_);
    if (bit_depth == 16) {
      png_set_swap(png_);  // host is little endian, PNG is big endian
    }
    png_write_image(png_, const_cast<png_bytep*>(rows.data()));
    png_write_end(png_, nullptr);
  }

 private:
  std::filesystem::path path_;
  FilePtr file_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

class PngReader {
 public:
  explicit PngReader(const std::filesystem::path& path)
      : path_(path), file_(open_file(path, "rb")) {
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                  nullptr);
    info_ = png_ ? png_create_info_struct(png_) : nullptr;
    if (!png_ || !info_) {
      throw IoError("libpng allocation failed for " + path.string());
    }
  }

  ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }

  void read_header() {
    if (setjmp(png_jmpbuf(png_))) {
      throw FormatError("not a valid PNG: " + path_.string());
    }
    png_init_io(png_, file_.get());
    png_read_info(png_, info_);
  }

  int width() const { return png_get_image_width(png_, info_); }
  int height() const { return png_get_image_height(png_, info_); }
  int bit_depth() const { return png_get_bit_depth(png_, info_); }
  int color_type() const { return png_get_color_type(png_, info_); }

  void read_rows(const std::vector<png_bytep>& rows, bool swap16 = false) {
    if (setjmp(png_jmpbuf(png_))) {
      throw FormatError("PNG decode failed: " + path_.string());
    }
    if (swap16) {
      png_set_swap(png_);
    }
    png_read_update_info(png_, info_);
    png_read_image(png_, const_cast<png_bytep*>(rows.data()));
  }

  png_structp png() { return png_; }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  FilePtr file_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

std::vector<png_bytep> row_pointers(std::uint8_t* data, int height,
                                    std::size_t stride) {
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) {
    rows[y] = data + y * stride;
  }
  return rows;
}

}  // namespace

ImageU16 ImageU16::make(int width, int height, std::uint16_t fill) {
  ImageU16 img;
  img.width = width;
  img.height = height;
  img.data.assign(static_cast<std::size_t>(width) * height, fill);
  return img;
}

void write_png_rgb8(const std::filesystem::path& path, const ImageU8& image) {
  if (image.channels != 3) {
    throw ConfigError("write_png_rgb8 requires a 3-channel image");
  }
  PngWriter w(path);
  auto rows = row_pointers(const_cast<std::uint8_t*>(image.data.data()),
                           image.height, static_cast<std::size_t>(image.width) * 3);
  w.write(image.width, image.height, 8, PNG_COLOR_TYPE_RGB, rows, nullptr);
}

void write_png_gray8(const std::filesystem::path& path, const ImageU8& image) {
  if (image.channels != 1) {
    throw ConfigError("write_png_gray8 requires a 1-channel image");
  }
  PngWriter w(path);
  auto rows = row_pointers(const_cast<std::uint8_t*>(image.data.data()),
                           image.height, image.width);
  w.write(image.width, image.height, 8, PNG_COLOR_TYPE_GRAY, rows, nullptr);
}

void write_png_gray16(const std::filesystem::path& path, const ImageU16& image) {
  PngWriter w(path);
  auto rows = row_pointers(
      reinterpret_cast<std::uint8_t*>(const_cast<std::uint16_t*>(image.data.data())),
      image.height, static_cast<std::size_t>(image.width) * 2);
  w.write(image.width, image.height, 16, PNG_COLOR_TYPE_GRAY, rows, nullptr);
}

void write_png_indexed(const std::filesystem::path& path, const ImageU8& indices,
                       const std::vector<Rgb>& palette) {
  if (indices.channels != 1) {
    throw ConfigError("write_png_indexed requires a 1-channel index image");
  }
  if (palette.empty() || palette.size() > 256) {
    throw ConfigError("palette must contain 1..256 entries");
  }
  PngWriter w(path);
  auto rows = row_pointers(const_cast<std::uint8_t*>(indices.data.data()),
                           indices.height, indices.width);
  w.write(indices.width, indices.height, 8, PNG_COLOR_TYPE_PALETTE, rows,
          &palette);
}

ImageU8 read_png_rgb8(const std::filesystem::path& path) {
  PngReader r(path);
  r.read_header();
  if (r.bit_depth() == 16) {
    png_set_strip_16(r.png());
  }
  // Normalize palette / gray / alpha inputs to 8-bit RGB.
  const int ct = r.color_type();
  if (ct == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(r.png());
  }
  if (ct == PNG_COLOR_TYPE_GRAY || ct == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(r.png());
  }
  if (ct & PNG_COLOR_MASK_ALPHA) {
    png_set_strip_alpha(r.png());
  }
  ImageU8 img = ImageU8::make(r.width(), r.height(), 3);
  auto rows = row_pointers(img.data.data(), img.height,
                           static_cast<std::size_t>(img.width) * 3);
  r.read_rows(rows);
  return img;
}

ImageU8 read_png_gray8(const std::filesystem::path& path) {
  PngReader r(path);
  r.read_header();
  if (r.color_type() != PNG_COLOR_TYPE_GRAY || r.bit_depth() != 8) {
    throw FormatError("expected 8-bit grayscale PNG: " + path.string());
  }
  ImageU8 img = ImageU8::make(r.width(), r.height(), 1);
  auto rows = row_pointers(img.data.data(), img.height, img.width);
  r.read_rows(rows);
  return img;
}

ImageU16 read_png_gray16(const std::filesystem::path& path) {
  PngReader r(path);
  r.read_header();
  if (r.color_type() != PNG_COLOR_TYPE_GRAY || r.bit_depth() != 16) {
    throw FormatError("expected 16-bit grayscale PNG: " + path.string());
  }
  ImageU16 img = ImageU16::make(r.width(), r.height());
  auto rows = row_pointers(reinterpret_cast<std::uint8_t*>(img.data.data()),
                           img.height, static_cast<std::size_t>(img.width) * 2);
  r.read_rows(rows, /*swap16=*/true);
  return img;
}

ImageU8 read_png_indexed(const std::filesystem::path& path) {
  PngReader r(path);
  r.read_header();
  if (r.color_type() != PNG_COLOR_TYPE_PALETTE || r.bit_depth() != 8) {
    throw FormatError("expected 8-bit indexed PNG: " + path.string());
  }
  ImageU8 img = ImageU8::make(r.width(), r.height(), 1);
  auto rows = row_pointers(img.data.data(), img.height, img.width);
  r.read_rows(rows);
  return img;
}

}  // namespace travbev
