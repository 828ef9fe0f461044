#pragma once

// Image containers, seeded Gaussian noise synthesis, analytic phantoms and
// binary PGM/PPM I/O.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace itsinr {

/// Unconstrained H x W x C real field, row-major and channel-interleaved.
/// Used for signed data such as error maps and raw noise.
struct Field {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> values;

  Field() = default;
  Field(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), values(h * w * c, fill) {}

  std::size_t size() const { return values.size(); }
  double at(std::size_t r, std::size_t col, std::size_t ch = 0) const {
    return values[(r * width + col) * channels + ch];
  }
  double& at(std::size_t r, std::size_t col, std::size_t ch = 0) {
    return values[(r * width + col) * channels + ch];
  }
};

/// Image with every pixel in [0, 1]; 1 or 3 channels.
class Image {
 public:
  Image() = default;

  /// Throws if any value lies outside [0, 1] or the size is inconsistent.
  static Image from_values(std::size_t h, std::size_t w, std::size_t c,
                           std::vector<double> values) {
    check_dims(h, w, c, values.size());
    for (double v : values) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument("image value outside [0,1]");
      }
    }
    return Image(h, w, c, std::move(values));
  }

  /// Clamps every value into [0, 1]; NaN maps to 0.
  static Image clamped(std::size_t h, std::size_t w, std::size_t c,
                       std::vector<double> values) {
    check_dims(h, w, c, values.size());
    for (double& v : values) v = v > 0.0 ? std::min(v, 1.0) : 0.0;
    return Image(h, w, c, std::move(values));
  }

  static Image filled(std::size_t h, std::size_t w, std::size_t c, double v) {
    return from_values(h, w, c, std::vector<double>(h * w * c, v));
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t size() const { return pixels_.size(); }
  std::size_t pixel_count() const { return height_ * width_; }
  const std::vector<double>& pixels() const { return pixels_; }

  double at(std::size_t r, std::size_t c, std::size_t ch = 0) const {
    return pixels_[(r * width_ + c) * channels_ + ch];
  }

  bool same_dims(const Image& o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  Field to_field() const {
    Field f(height_, width_, channels_);
    f.values = pixels_;
    return f;
  }

  bool operator==(const Image&) const = default;

 private:
  Image(std::size_t h, std::size_t w, std::size_t c, std::vector<double> px)
      : height_(h), width_(w), channels_(c), pixels_(std::move(px)) {}

  static void check_dims(std::size_t h, std::size_t w, std::size_t c, std::size_t n) {
    if (h == 0 || w == 0) throw std::invalid_argument("image dimensions must be positive");
    if (c != 1 && c != 3) throw std::invalid_argument("image must have 1 or 3 channels");
    if (n != h * w * c) throw std::invalid_argument("image pixel count mismatch");
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 1;
  std::vector<double> pixels_;
};

inline void require_same_dims(const Image& a, const Image& b, const char* what) {
  if (!a.same_dims(b)) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

/// Seeded generator: std::mt19937_64 (bit-exact across conforming standard
/// libraries) with an explicit 53-bit uniform mapping and Box-Muller normals,
/// since the standard distributions are not reproducible across platforms.
class Prng {
 public:
  explicit Prng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal. Each Box-Muller pair consumes exactly two uniforms;
  /// the second variate is cached for the next call.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Derives an independent stream seed from (seed, stream) with the
/// SplitMix64 finalizer.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct NoisySample {
  Image clean;
  Image noisy;
  double sigma255 = 0.0;
  std::uint64_t seed = 0;
  Field noise;  // unclamped additive noise, in [0,1] units
};

/// y = clamp(x + n, 0, 1) with n ~ N(0, (sigma255/255)^2) drawn per pixel and
/// channel in memory order.
inline NoisySample add_gaussian_noise(const Image& clean, double sigma255,
                                      std::uint64_t seed) {
  if (!(sigma255 >= 0.0) || !std::isfinite(sigma255)) {
    throw std::invalid_argument("noise sigma must be a finite value >= 0");
  }
  NoisySample out{clean, clean, sigma255, seed,
                  Field(clean.height(), clean.width(), clean.channels())};
  if (sigma255 == 0.0) return out;
  Prng rng(seed);
  const double sigma = sigma255 / 255.0;
  std::vector<double> px = clean.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double n = sigma * rng.normal();
    out.noise.values[i] = n;
    px[i] += n;
  }
  out.noisy = Image::clamped(clean.height(), clean.width(), clean.channels(),
                             std::move(px));
  return out;
}

enum class PhantomKind { gradient, disk, stripes, composite };

inline PhantomKind parse_phantom(const std::string& name) {
  if (name == "gradient") return PhantomKind::gradient;
  if (name == "disk") return PhantomKind::disk;
  if (name == "stripes") return PhantomKind::stripes;
  if (name == "composite") return PhantomKind::composite;
  throw std::invalid_argument("unknown phantom kind: " + name);
}

inline const char* phantom_name(PhantomKind k) {
  switch (k) {
    case PhantomKind::gradient: return "gradient";
    case PhantomKind::disk: return "disk";
    case PhantomKind::stripes: return "stripes";
    case PhantomKind::composite: return "composite";
  }
  return "?";
}

namespace detail {

inline double ramp_value(std::size_t r, std::size_t c, std::size_t h, std::size_t w) {
  return static_cast<double>(r + c) / static_cast<double>((h - 1) + (w - 1));
}

inline double disk_value(std::size_t r, std::size_t c, std::size_t h, std::size_t w) {
  const double dr = static_cast<double>(r) - 0.5 * static_cast<double>(h - 1);
  const double dc = static_cast<double>(c) - 0.5 * static_cast<double>(w - 1);
  const double radius = static_cast<double>(std::min(h, w)) / 4.0;
  return dr * dr + dc * dc <= radius * radius ? 0.8 : 0.2;
}

inline double stripe_value(std::size_t c) { return c % 8 < 4 ? 0.8 : 0.2; }

}  // namespace detail

/// Analytic single-channel test images:
///   gradient   diagonal ramp from 0 at (0,0) to 1 at (h-1,w-1)
///   disk       centered disk of radius min(h,w)/4, 0.8 on 0.2
///   stripes    vertical stripes, period 8 px (4 at 0.8, 4 at 0.2)
///   composite  pixelwise mean of the three
/// `channels` = 3 replicates the value into every channel.
inline Image synth_phantom(std::size_t h, std::size_t w, PhantomKind kind,
                           std::size_t channels = 1) {
  if (h < 16 || w < 16) throw std::invalid_argument("phantom needs h, w >= 16");
  std::vector<double> px;
  px.reserve(h * w * channels);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double v = 0.0;
      switch (kind) {
        case PhantomKind::gradient: v = detail::ramp_value(r, c, h, w); break;
        case PhantomKind::disk: v = detail::disk_value(r, c, h, w); break;
        case PhantomKind::stripes: v = detail::stripe_value(c); break;
        case PhantomKind::composite:
          v = (detail::ramp_value(r, c, h, w) + detail::disk_value(r, c, h, w) +
               detail::stripe_value(c)) / 3.0;
          break;
      }
      for (std::size_t ch = 0; ch < channels; ++ch) px.push_back(v);
    }
  }
  return Image::from_values(h, w, channels, std::move(px));
}

// ---------------------------------------------------------------------------
// PNM

class PnmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Reads one whitespace-delimited header token, skipping '#' comments.
inline std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {}
      if (!tok.empty()) break;
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

inline std::size_t pnm_number(std::istream& in, const char* what) {
  const std::string tok = pnm_token(in);
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
    throw PnmError(std::string("malformed PNM header: bad ") + what);
  }
  return static_cast<std::size_t>(std::stoull(tok));
}

}  // namespace detail

inline Image read_pnm(std::istream& in) {
  const std::string magic = detail::pnm_token(in);
  std::size_t channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw PnmError("unsupported PNM magic '" + magic + "' (expected P5 or P6)");
  }
  const std::size_t w = detail::pnm_number(in, "width");
  const std::size_t h = detail::pnm_number(in, "height");
  const std::size_t maxval = detail::pnm_number(in, "maxval");
  if (w == 0 || h == 0) throw PnmError("malformed PNM header: zero dimension");
  if (maxval != 255) throw PnmError("unsupported PNM maxval " + std::to_string(maxval));

  const std::size_t n = w * h * channels;
  std::vector<unsigned char> bytes(n);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw PnmError("truncated PNM payload: expected " + std::to_string(n) +
                   " bytes, got " + std::to_string(in.gcount()));
  }
  std::vector<double> px(n);
  for (std::size_t i = 0; i < n; ++i) px[i] = bytes[i] / 255.0;
  return Image::from_values(h, w, channels, std::move(px));
}

inline Image load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PnmError("cannot open " + path);
  return read_pnm(in);
}

inline std::vector<unsigned char> quantize_bytes(const Image& img) {
  std::vector<unsigned char> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(img.pixels()[i] * 255.0));
  }
  return bytes;
}

inline void write_pnm(const Image& img, std::ostream& out) {
  out << (img.channels() == 1 ? "P5" : "P6") << '\n'
      << img.width() << ' ' << img.height() << '\n'
      << "255\n";
  const auto bytes = quantize_bytes(img);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline void save_pnm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PnmError("cannot write " + path);
  write_pnm(img, out);
  if (!out) throw PnmError("write failed for " + path);
}

}  // namespace itsinr
