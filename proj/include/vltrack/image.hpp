#pragma once

// 8-bit RGB raster images, PPM (P6) io, and bilinear crop/resample with
// channel-mean padding outside the frame.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "vltrack/box.hpp"
#include "vltrack/tensor.hpp"

namespace vltrack {

struct Image {
  long h = 0, w = 0;
  std::vector<std::uint8_t> rgb;  // h*w*3, row-major

  Image() = default;
  Image(long height, long width, std::uint8_t fill = 0)
      : h(height), w(width), rgb(static_cast<size_t>(height * width * 3), fill) {}

  std::uint8_t at(long y, long x, long c) const {
    return rgb[static_cast<size_t>((y * w + x) * 3 + c)];
  }
  void set(long y, long x, long c, std::uint8_t v) {
    rgb[static_cast<size_t>((y * w + x) * 3 + c)] = v;
  }

  bool operator==(const Image&) const = default;
};

inline Tensor image_to_tensor(const Image& img) {
  std::vector<double> d(img.rgb.size());
  for (size_t i = 0; i < d.size(); ++i) d[i] = img.rgb[i] / 255.0;
  return Tensor::from({img.h, img.w, 3}, std::move(d));
}

inline void write_ppm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image: " + path);
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
}

inline Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read image: " + path);
  std::string magic;
  long w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0)
    throw std::runtime_error("unsupported PPM file: " + path);
  in.get();  // single whitespace after the header
  Image img(h, w);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!in) throw std::runtime_error("truncated PPM file: " + path);
  return img;
}

namespace detail {

struct ChannelMean {
  double v[3];
};

inline ChannelMean channel_mean(const Image& img) {
  double acc[3] = {0, 0, 0};
  for (long i = 0; i < img.h * img.w; ++i)
    for (long c = 0; c < 3; ++c) acc[c] += img.rgb[static_cast<size_t>(i * 3 + c)];
  const double n = static_cast<double>(img.h * img.w);
  return {{acc[0] / n, acc[1] / n, acc[2] / n}};
}

// Bilinear sample at continuous coordinates (pixel centers at x+0.5); taps
// outside the frame read the channel mean.
inline double sample(const Image& img, const ChannelMean& mean, double sx, double sy, long c) {
  const double fx = sx - 0.5, fy = sy - 0.5;
  const long x0 = static_cast<long>(std::floor(fx)), y0 = static_cast<long>(std::floor(fy));
  const double ax = fx - static_cast<double>(x0), ay = fy - static_cast<double>(y0);
  auto tap = [&](long x, long y) -> double {
    if (x < 0 || x >= img.w || y < 0 || y >= img.h) return mean.v[c];
    return static_cast<double>(img.at(y, x, c));
  };
  const double top = tap(x0, y0) * (1.0 - ax) + tap(x0 + 1, y0) * ax;
  const double bot = tap(x0, y0 + 1) * (1.0 - ax) + tap(x0 + 1, y0 + 1) * ax;
  return top * (1.0 - ay) + bot * ay;
}

}  // namespace detail

// Resample the crop window described by `crop` into an out x out image.
inline Image sample_crop(const Image& src, const CropParams& crop) {
  Image out(crop.out, crop.out);
  const detail::ChannelMean mean = detail::channel_mean(src);
  for (long i = 0; i < crop.out; ++i)
    for (long j = 0; j < crop.out; ++j) {
      const double sx = crop.source_x(static_cast<double>(j) + 0.5);
      const double sy = crop.source_y(static_cast<double>(i) + 0.5);
      for (long c = 0; c < 3; ++c) {
        const double v = detail::sample(src, mean, sx, sy, c);
        out.set(i, j, c, static_cast<std::uint8_t>(std::lround(std::min(255.0, std::max(0.0, v)))));
      }
    }
  return out;
}

}  // namespace vltrack
