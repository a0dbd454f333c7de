#include "skinnet/image.hpp"

#include <png.h>

#include <algorithm>
// jpeglib.h needs FILE and size_t declared first
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include <jpeglib.h>

#include <csetjmp>

namespace skinnet {
namespace {

enum class Format { kPng, kJpeg, kUnknown };

Format sniff(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kData, "cannot open image " + path.string());
  unsigned char head[8] = {};
  in.read(reinterpret_cast<char*>(head), 8);
  if (in.gcount() >= 8 && png_sig_cmp(head, 0, 8) == 0) return Format::kPng;
  if (in.gcount() >= 3 && head[0] == 0xFF && head[1] == 0xD8 && head[2] == 0xFF) return Format::kJpeg;
  return Format::kUnknown;
}

[[noreturn]] void undecodable(const std::filesystem::path& path, const std::string& why) {
  fail(ErrorKind::kData, "cannot decode image " + path.string() + ": " + why);
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  return FilePtr(std::fopen(path.c_str(), mode));
}

// Returns false and fills `why` on failure. No C++ objects with destructors
// live between setjmp and the possible longjmp.
bool read_jpeg(std::FILE* f, bool header_only, Image& out, std::string& why) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  err.message[0] = '\0';
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    why = err.message;
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  out.width = cinfo.image_width;
  out.height = cinfo.image_height;
  if (header_only || out.width == 0 || out.height == 0) {
    jpeg_destroy_decompress(&cinfo);
    return true;
  }
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  if (cinfo.output_components != 3) {
    jpeg_destroy_decompress(&cinfo);
    why = "unsupported color space";
    return false;
  }
  out.rgb.resize(out.width * out.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

Image load(const std::filesystem::path& path, bool header_only) {
  Image img;
  switch (sniff(path)) {
    case Format::kPng: {
      png_image png;
      std::memset(&png, 0, sizeof png);
      png.version = PNG_IMAGE_VERSION;
      if (!png_image_begin_read_from_file(&png, path.c_str())) undecodable(path, png.message);
      img.width = png.width;
      img.height = png.height;
      if (header_only || img.width == 0 || img.height == 0) {
        png_image_free(&png);
        break;
      }
      png.format = PNG_FORMAT_RGBA;
      std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(png));
      if (!png_image_finish_read(&png, nullptr, rgba.data(), 0, nullptr)) {
        const std::string why = png.message;
        png_image_free(&png);
        undecodable(path, why);
      }
      img.rgb.resize(img.width * img.height * 3);
      for (std::size_t i = 0; i < img.width * img.height; ++i)
        std::memcpy(&img.rgb[i * 3], &rgba[i * 4], 3);
      break;
    }
    case Format::kJpeg: {
      auto f = open_file(path, "rb");
      if (!f) undecodable(path, "cannot open");
      std::string why;
      if (!read_jpeg(f.get(), header_only, img, why)) undecodable(path, why);
      break;
    }
    case Format::kUnknown:
      undecodable(path, "not a PNG or JPEG file");
  }
  if (img.width == 0 || img.height == 0) undecodable(path, "zero-dimension image");
  return img;
}

}  // namespace

Image decode_image(const std::filesystem::path& path) { return load(path, false); }

ImageInfo probe_image(const std::filesystem::path& path) {
  const Image img = load(path, true);
  return {img.width, img.height};
}

void write_png(const std::filesystem::path& path, const Image& image) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.rgb.data(), 0, nullptr))
    fail(ErrorKind::kIo, "cannot write PNG " + path.string() + ": " + png.message);
}

void write_jpeg(const std::filesystem::path& path, const Image& image, int quality) {
  auto f = open_file(path, "wb");
  if (!f) fail(ErrorKind::kIo, "cannot write JPEG " + path.string());
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, f.get());
  cinfo.image_width = static_cast<JDIMENSION>(image.width);
  cinfo.image_height = static_cast<JDIMENSION>(image.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPLE*>(image.rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * image.width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
}

Tensor resize_bilinear(const Image& image, std::size_t width, std::size_t height) {
  if (image.width == 0 || image.height == 0) fail(ErrorKind::kData, "cannot resize an empty image");
  Tensor out(Shape{3, height, width});
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  const double max_x = static_cast<double>(image.width - 1), max_y = static_cast<double>(image.height - 1);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = (1 - wx) * image.at(x0, y0, c) + wx * image.at(x1, y0, c);
        const double bottom = (1 - wx) * image.at(x0, y1, c) + wx * image.at(x1, y1, c);
        out[(c * height + y) * width + x] = static_cast<float>((1 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

}  // namespace skinnet
