#include "fsmix/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include <jpeglib.h>
#include <png.h>

#include "fsmix/common.hpp"

namespace fsmix {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

Tensor rgb8_to_tensor(const std::vector<unsigned char>& rgb, int64_t h, int64_t w) {
  Tensor out({3, h, w});
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j)
      for (int64_t c = 0; c < 3; ++c)
        out[(c * h + i) * w + j] = rgb[(i * w + j) * 3 + static_cast<int64_t>(c)] / 255.0;
  return out;
}

Tensor read_png_file(FILE* f, const std::string& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png: allocation failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png: allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: decode failed for " + path);
  }
  png_init_io(png, f);
  png_read_info(png, info);

  png_set_expand(png);          // palette / low-bit-depth / tRNS to full
  png_set_strip_16(png);        // 16-bit to 8-bit
  png_set_strip_alpha(png);     // drop alpha
  png_set_gray_to_rgb(png);     // grayscale to RGB
  png_read_update_info(png, info);

  const int64_t w = png_get_image_width(png, info);
  const int64_t h = png_get_image_height(png, info);
  if (png_get_channels(png, info) != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: unexpected channel count in " + path);
  }
  std::vector<unsigned char> rgb(static_cast<size_t>(3 * h * w));
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int64_t i = 0; i < h; ++i) rows[static_cast<size_t>(i)] = rgb.data() + i * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return rgb8_to_tensor(rgb, h, w);
}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  longjmp(err->jump, 1);
}

Tensor read_jpeg_file(FILE* f, const std::string& path) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError("jpeg: decode failed for " + path);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int64_t w = cinfo.output_width;
  const int64_t h = cinfo.output_height;
  std::vector<unsigned char> rgb(static_cast<size_t>(3 * h * w));
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* rowp = rgb.data() + static_cast<int64_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &rowp, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return rgb8_to_tensor(rgb, h, w);
}

}  // namespace

Tensor read_image(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("read_image: cannot open " + path);
  unsigned char magic[8] = {0};
  const size_t got = std::fread(magic, 1, sizeof(magic), f.get());
  std::rewind(f.get());
  if (got >= 8 && png_sig_cmp(magic, 0, 8) == 0) return read_png_file(f.get(), path);
  if (got >= 2 && magic[0] == 0xFF && magic[1] == 0xD8) return read_jpeg_file(f.get(), path);
  throw IoError("read_image: unsupported format (not PNG/JPEG): " + path);
}

void write_png(const std::string& path, const Tensor& image) {
  if (image.ndim() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
    throw ShapeError("write_png: expected [1,H,W] or [3,H,W], got " + shape_str(image));
  const int64_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  std::vector<unsigned char> rgb(static_cast<size_t>(3 * H * W));
  for (int64_t i = 0; i < H; ++i)
    for (int64_t j = 0; j < W; ++j)
      for (int64_t c = 0; c < 3; ++c) {
        const double v = image[((C == 1 ? 0 : c) * H + i) * W + j];
        const double clamped = std::min(1.0, std::max(0.0, v));
        rgb[(i * W + j) * 3 + static_cast<int64_t>(c)] =
            static_cast<unsigned char>(std::lround(clamped * 255.0));
      }

  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("write_png: cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png: allocation failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png: allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("write_png: encode failed for " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t i = 0; i < H; ++i)
    png_write_row(png, const_cast<png_bytep>(rgb.data() + i * W * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor resize_bilinear(const Tensor& image, int64_t out_h, int64_t out_w) {
  if (image.ndim() != 3) throw ShapeError("resize_bilinear: expected [C,H,W]");
  const int64_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  if (H == out_h && W == out_w) return image;
  Tensor out({C, out_h, out_w});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < out_h; ++i)
      for (int64_t j = 0; j < out_w; ++j) {
        const double fy = (i + 0.5) * static_cast<double>(H) / out_h - 0.5;
        const double fx = (j + 0.5) * static_cast<double>(W) / out_w - 0.5;
        const int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(fy)), 0, H - 1);
        const int64_t x0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(fx)), 0, W - 1);
        const int64_t y1 = std::min(y0 + 1, H - 1);
        const int64_t x1 = std::min(x0 + 1, W - 1);
        const double wy = std::clamp(fy - y0, 0.0, 1.0);
        const double wx = std::clamp(fx - x0, 0.0, 1.0);
        const double v00 = image[(c * H + y0) * W + x0];
        const double v01 = image[(c * H + y0) * W + x1];
        const double v10 = image[(c * H + y1) * W + x0];
        const double v11 = image[(c * H + y1) * W + x1];
        out[(c * out_h + i) * out_w + j] =
            (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
      }
  return out;
}

Tensor tile_grid(const std::vector<Tensor>& images, int64_t rows, int64_t cols,
                 int64_t padding, double pad_value) {
  if (images.empty()) throw InvalidArgumentError("tile_grid: no images");
  const int64_t C = images[0].dim(0), H = images[0].dim(1), W = images[0].dim(2);
  for (const Tensor& im : images)
    if (im.ndim() != 3 || im.dim(0) != C || im.dim(1) != H || im.dim(2) != W)
      throw ShapeError("tile_grid: all images must share one shape");
  const int64_t out_h = rows * H + (rows + 1) * padding;
  const int64_t out_w = cols * W + (cols + 1) * padding;
  Tensor grid = Tensor::full({C, out_h, out_w}, pad_value);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t col = 0; col < cols; ++col) {
      const size_t idx = static_cast<size_t>(r * cols + col);
      if (idx >= images.size()) continue;
      const Tensor& im = images[idx];
      const int64_t oy = padding + r * (H + padding);
      const int64_t ox = padding + col * (W + padding);
      for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < H; ++i)
          for (int64_t j = 0; j < W; ++j)
            grid[(c * out_h + oy + i) * out_w + ox + j] = im[(c * H + i) * W + j];
    }
  return grid;
}

}  // namespace fsmix
