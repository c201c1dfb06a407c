#include "binary_io.hpp"
#include "splatgrasp/dataset.hpp"
#include "splatgrasp/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace sg {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp message) {
  auto* out = static_cast<std::string*>(png_get_error_ptr(png));
  if (out) *out = message;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

struct PngPixels {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> values;  // row-major, interleaved
};

void write_png(const std::filesystem::path& path, int width, int height, int channels, int bit_depth,
               const std::vector<std::uint16_t>& values) {
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorCode::IoError, "libpng initialization failed");
  }
  const std::size_t row_bytes = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  std::vector<png_byte> row(row_bytes);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoError, "'" + path.string() + "': " + message);
  }
  png_init_io(png, file.get());
  const int color_type = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    const std::size_t base = static_cast<std::size_t>(y) * width * channels;
    for (std::size_t i = 0; i < static_cast<std::size_t>(width) * channels; ++i) {
      const std::uint16_t v = values[base + i];
      if (bit_depth == 16) {
        row[2 * i] = static_cast<png_byte>(v >> 8);
        row[2 * i + 1] = static_cast<png_byte>(v & 0xff);
      } else {
        row[i] = static_cast<png_byte>(v);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

PngPixels read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, "file not found: '" + path.string() + "'");
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw Error(ErrorCode::ParseError, "'" + path.string() + "': not a PNG file");
  }
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(ErrorCode::IoError, "libpng initialization failed");
  }
  PngPixels out;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::ParseError, "'" + path.string() + "': " + message);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  row.resize(png_get_rowbytes(png, info));
  out.values.resize(static_cast<std::size_t>(out.width) * out.height * out.channels);
  for (int y = 0; y < out.height; ++y) {
    png_read_row(png, row.data(), nullptr);
    const std::size_t base = static_cast<std::size_t>(y) * out.width * out.channels;
    for (std::size_t i = 0; i < static_cast<std::size_t>(out.width) * out.channels; ++i) {
      out.values[base + i] = out.bit_depth == 16 ? static_cast<std::uint16_t>((row[2 * i] << 8) | row[2 * i + 1])
                                                 : row[i];
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

std::uint16_t to_u8(double v) {
  if (!std::isfinite(v)) v = 0.0;
  return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void write_png_rgb(const std::filesystem::path& path, const ImageD& rgb) {
  if (rgb.channels() != 3) throw Error(ErrorCode::ShapeMismatch, "rgb image needs 3 channels");
  std::vector<std::uint16_t> v(rgb.storage().size());
  std::transform(rgb.storage().begin(), rgb.storage().end(), v.begin(), to_u8);
  write_png(path, rgb.width(), rgb.height(), 3, 8, v);
}

ImageD read_png_rgb(const std::filesystem::path& path) {
  const PngPixels px = read_png(path);
  const double peak = px.bit_depth == 16 ? 65535.0 : 255.0;
  ImageD img(px.width, px.height, 3);
  for (int y = 0; y < px.height; ++y) {
    for (int x = 0; x < px.width; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * px.width + x) * px.channels;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = px.values[i + (px.channels >= 3 ? c : 0)] / peak;
    }
  }
  return img;
}

void write_png_gray16(const std::filesystem::path& path, const Image<std::uint16_t>& img) {
  if (img.channels() != 1) throw Error(ErrorCode::ShapeMismatch, "16-bit image needs 1 channel");
  write_png(path, img.width(), img.height(), 1, 16, img.storage());
}

Image<std::uint16_t> read_png_gray16(const std::filesystem::path& path) {
  const PngPixels px = read_png(path);
  if (px.channels != 1) throw Error(ErrorCode::ParseError, "'" + path.string() + "': expected a grayscale PNG");
  Image<std::uint16_t> img(px.width, px.height, 1);
  img.storage() = px.values;
  return img;
}

void write_png_gray8(const std::filesystem::path& path, const Image<std::uint8_t>& img) {
  if (img.channels() != 1) throw Error(ErrorCode::ShapeMismatch, "8-bit image needs 1 channel");
  write_png(path, img.width(), img.height(), 1, 8, {img.storage().begin(), img.storage().end()});
}

Image<std::uint16_t> depth_to_u16(const ImageD& depth_m, double scale) {
  Image<std::uint16_t> out(depth_m.width(), depth_m.height(), 1);
  for (std::size_t i = 0; i < depth_m.storage().size(); ++i) {
    const double d = depth_m.storage()[i];
    if (!(d > 0.0) || !std::isfinite(d)) continue;
    const double units = std::round(d * 1000.0 / scale);
    if (units > 65535.0) throw Error(ErrorCode::InvalidArgument, "depth exceeds the 16-bit range");
    out.storage()[i] = static_cast<std::uint16_t>(units);
  }
  return out;
}

ImageD depth_from_u16(const Image<std::uint16_t>& raw, double scale) {
  ImageD out(raw.width(), raw.height(), 1);
  for (std::size_t i = 0; i < raw.storage().size(); ++i) out.storage()[i] = raw.storage()[i] * scale / 1000.0;
  return out;
}

ImageD normals_to_rgb(const ImageD& normals) {
  ImageD out(normals.width(), normals.height(), 3);
  for (std::size_t i = 0; i < out.storage().size(); ++i) out.storage()[i] = 0.5 * (normals.storage()[i] + 1.0);
  return out;
}

ImageD relevance_colormap(const ImageD& relevance) {
  ImageD out(relevance.width(), relevance.height(), 3);
  for (int y = 0; y < relevance.height(); ++y) {
    for (int x = 0; x < relevance.width(); ++x) {
      const double s = std::clamp(relevance.at(x, y), 0.0, 1.0);
      out.at(x, y, 0) = s;
      out.at(x, y, 1) = 1.0 - std::abs(2.0 * s - 1.0);
      out.at(x, y, 2) = 1.0 - s;
    }
  }
  return out;
}

void write_feature_map(const std::filesystem::path& path, const ImageD& features) {
  detail::BinaryWriter w(path);
  w.magic("GGFM");
  w.u32(static_cast<std::uint32_t>(features.height()));
  w.u32(static_cast<std::uint32_t>(features.width()));
  w.u32(static_cast<std::uint32_t>(features.channels()));
  for (double v : features.values()) w.f32(v);
  w.finish();
}

ImageD read_feature_map(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic("GGFM");
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  const std::uint32_t d = r.u32();
  if (h > 65535 || w > 65535 || d > 65535) throw Error(ErrorCode::ParseError, "'" + path.string() + "': bad header");
  ImageD img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(d));
  for (double& v : img.storage()) v = r.f32();
  return img;
}

void write_instance_features(const std::filesystem::path& path, const std::map<std::uint16_t, VecX>& features) {
  detail::BinaryWriter w(path);
  w.magic("GGIF");
  const std::uint32_t dim = features.empty() ? 0 : static_cast<std::uint32_t>(features.begin()->second.size());
  w.u32(static_cast<std::uint32_t>(features.size()));
  w.u32(dim);
  for (const auto& [id, f] : features) {
    if (f.size() != dim) throw Error(ErrorCode::ShapeMismatch, "instance features of mixed size");
    w.u32(id);
    for (Eigen::Index i = 0; i < f.size(); ++i) w.f32(f[i]);
  }
  w.finish();
}

std::map<std::uint16_t, VecX> read_instance_features(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic("GGIF");
  const std::uint32_t count = r.u32();
  const std::uint32_t dim = r.u32();
  if (dim > (1u << 16)) throw Error(ErrorCode::ParseError, "'" + path.string() + "': implausible feature size");
  std::map<std::uint16_t, VecX> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t id = r.u32();
    if (id == 0 || id > 65535) {
      throw Error(ErrorCode::ParseError, "'" + path.string() + "': mask id " + std::to_string(id) + " out of range");
    }
    VecX f(dim);
    for (std::uint32_t i = 0; i < dim; ++i) f[i] = r.f32();
    if (!out.emplace(static_cast<std::uint16_t>(id), std::move(f)).second) {
      throw Error(ErrorCode::ParseError, "'" + path.string() + "': duplicate mask id " + std::to_string(id));
    }
  }
  return out;
}

}  // namespace sg
