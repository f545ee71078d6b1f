#include "ipn/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>

namespace ipn::png {

namespace {

struct ReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

[[noreturn]] void png_error_handler(png_structp, png_const_charp msg) { throw IoError(msg); }
void png_warning_handler(png_structp, png_const_charp) {}

void write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void flush_noop(png_structp) {}

void read_from_span(png_structp png, png_bytep data, png_size_t length) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + length > cur->bytes.size()) throw IoError("truncated PNG");
  std::memcpy(data, cur->bytes.data() + cur->pos, length);
  cur->pos += length;
}

class Writer {
 public:
  Writer() {
    png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler,
                                   png_warning_handler);
    if (png_ == nullptr) throw IoError("png_create_write_struct failed");
    info_ = png_create_info_struct(png_);
    if (info_ == nullptr) {
      png_destroy_write_struct(&png_, nullptr);
      throw IoError("png_create_info_struct failed");
    }
    png_set_write_fn(png_, &out_, write_to_vector, flush_noop);
    png_set_compression_level(png_, 6);
    png_set_filter(png_, 0, PNG_FILTER_NONE);
  }
  ~Writer() { png_destroy_write_struct(&png_, &info_); }
  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;

  png_structp png() { return png_; }
  png_infop info() { return info_; }

  Bytes finish(std::vector<png_bytep>& rows) {
    png_write_info(png_, info_);
    png_write_image(png_, rows.data());
    png_write_end(png_, nullptr);
    return std::move(out_);
  }

 private:
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : cursor_{bytes} {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw IoError("not a PNG");
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler,
                                  png_warning_handler);
    if (png_ == nullptr) throw IoError("png_create_read_struct failed");
    info_ = png_create_info_struct(png_);
    if (info_ == nullptr) {
      png_destroy_read_struct(&png_, nullptr, nullptr);
      throw IoError("png_create_info_struct failed");
    }
    png_set_read_fn(png_, &cursor_, read_from_span);
    png_read_info(png_, info_);
  }
  ~Reader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  png_structp png() { return png_; }
  png_infop info() { return info_; }
  int width() { return static_cast<int>(png_get_image_width(png_, info_)); }
  int height() { return static_cast<int>(png_get_image_height(png_, info_)); }
  int color_type() { return png_get_color_type(png_, info_); }
  int bit_depth() { return png_get_bit_depth(png_, info_); }

  /// Reads all rows after transforms have been configured.
  std::vector<std::uint8_t> rows(std::size_t& row_bytes) {
    png_read_update_info(png_, info_);
    row_bytes = png_get_rowbytes(png_, info_);
    std::vector<std::uint8_t> buf(row_bytes * static_cast<std::size_t>(height()));
    std::vector<png_bytep> ptrs(static_cast<std::size_t>(height()));
    for (int r = 0; r < height(); ++r) ptrs[r] = buf.data() + row_bytes * r;
    png_read_image(png_, ptrs.data());
    png_read_end(png_, nullptr);
    return buf;
  }

 private:
  ReadCursor cursor_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

std::vector<png_bytep> row_pointers(std::vector<std::uint8_t>& buf, int h, std::size_t stride) {
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int r = 0; r < h; ++r) rows[r] = buf.data() + stride * r;
  return rows;
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

const std::array<std::array<std::uint8_t, 3>, 256>& davis_palette() {
  static const auto palette = [] {
    std::array<std::array<std::uint8_t, 3>, 256> p{};
    for (int i = 0; i < 256; ++i) {
      int c = i;
      int r = 0, g = 0, b = 0;
      for (int j = 0; j < 8; ++j) {
        r |= ((c >> 0) & 1) << (7 - j);
        g |= ((c >> 1) & 1) << (7 - j);
        b |= ((c >> 2) & 1) << (7 - j);
        c >>= 3;
      }
      p[i] = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
              static_cast<std::uint8_t>(b)};
    }
    return p;
  }();
  return palette;
}

Bytes encode_labels(const LabelMask& labels) {
  const int h = labels.height();
  const int w = labels.width();
  Writer wr;
  png_set_IHDR(wr.png(), wr.info(), w, h, 8, PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::array<png_color, 256> colors{};
  const auto& pal = davis_palette();
  for (int i = 0; i < 256; ++i) colors[i] = {pal[i][0], pal[i][1], pal[i][2]};
  png_set_PLTE(wr.png(), wr.info(), colors.data(), 256);
  std::vector<std::uint8_t> buf(labels.labels.values().begin(), labels.labels.values().end());
  auto rows = row_pointers(buf, h, static_cast<std::size_t>(w));
  return wr.finish(rows);
}

Bytes encode_prob(const ProbMask& mask) {
  const int h = mask.height();
  const int w = mask.width();
  Writer wr;
  png_set_IHDR(wr.png(), wr.info(), w, h, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(h) * w * 2);
  for (std::size_t i = 0; i < mask.values.size(); ++i) {
    const double p = std::clamp(static_cast<double>(mask.values[i]), 0.0, 1.0);
    const auto v = static_cast<std::uint16_t>(std::lround(p * 65535.0));
    buf[2 * i] = static_cast<std::uint8_t>(v >> 8);  // PNG is big-endian
    buf[2 * i + 1] = static_cast<std::uint8_t>(v & 0xff);
  }
  auto rows = row_pointers(buf, h, static_cast<std::size_t>(w) * 2);
  return wr.finish(rows);
}

Bytes encode_frame(const Frame& frame) {
  const int h = frame.height();
  const int w = frame.width();
  Writer wr;
  png_set_IHDR(wr.png(), wr.info(), w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(h) * w * 3);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        buf[(static_cast<std::size_t>(r) * w + c) * 3 + ch] = to_byte(frame.at(ch, r, c));
      }
    }
  }
  auto rows = row_pointers(buf, h, static_cast<std::size_t>(w) * 3);
  return wr.finish(rows);
}

LabelMask decode_labels(std::span<const std::uint8_t> bytes, int num_objects) {
  Reader rd(bytes);
  const int ct = rd.color_type();
  if (ct != PNG_COLOR_TYPE_PALETTE && ct != PNG_COLOR_TYPE_GRAY) {
    throw IoError("label PNG must be indexed or grayscale");
  }
  if (rd.bit_depth() == 16) png_set_strip_16(rd.png());
  if (rd.bit_depth() < 8) png_set_packing(rd.png());
  std::size_t stride = 0;
  auto buf = rd.rows(stride);
  LabelMask out{Grid<std::uint8_t>(rd.height(), rd.width()), num_objects};
  int max_label = 0;
  for (int r = 0; r < rd.height(); ++r) {
    for (int c = 0; c < rd.width(); ++c) {
      const std::uint8_t v = buf[stride * r + c];
      out.labels(r, c) = v;
      max_label = std::max<int>(max_label, v);
    }
  }
  if (num_objects == 0) out.num_objects = max_label;
  return out;
}

ProbMask decode_prob(std::span<const std::uint8_t> bytes, int object_id) {
  Reader rd(bytes);
  if (rd.color_type() != PNG_COLOR_TYPE_GRAY || rd.bit_depth() != 16) {
    throw IoError("probability PNG must be 16-bit grayscale");
  }
  std::size_t stride = 0;
  auto buf = rd.rows(stride);
  ProbMask out{Grid<float>(rd.height(), rd.width()), object_id};
  for (int r = 0; r < rd.height(); ++r) {
    for (int c = 0; c < rd.width(); ++c) {
      const std::size_t o = stride * r + 2 * c;
      const int v = (buf[o] << 8) | buf[o + 1];
      out.values(r, c) = static_cast<float>(v / 65535.0);
    }
  }
  return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes, int index) {
  Reader rd(bytes);
  const int ct = rd.color_type();
  if (rd.bit_depth() == 16) png_set_strip_16(rd.png());
  if (ct == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(rd.png());
  if (ct == PNG_COLOR_TYPE_GRAY || ct == PNG_COLOR_TYPE_GRAY_ALPHA) {
    if (rd.bit_depth() < 8) png_set_expand_gray_1_2_4_to_8(rd.png());
    png_set_gray_to_rgb(rd.png());
  }
  png_set_strip_alpha(rd.png());
  std::size_t stride = 0;
  auto buf = rd.rows(stride);
  Frame out(rd.height(), rd.width(), index);
  for (int r = 0; r < rd.height(); ++r) {
    for (int c = 0; c < rd.width(); ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        out.at(ch, r, c) = buf[stride * r + 3 * c + ch] / 255.0f;
      }
    }
  }
  return out;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace ipn::png
