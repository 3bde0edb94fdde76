#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>

#include "dualfocus/dataset.hpp"
#include "dualfocus/image.hpp"
#include "dualfocus/inference.hpp"

namespace dualfocus::fixtures {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "dualfocus") {
    std::random_device rd;
    const auto base = std::filesystem::temp_directory_path();
    for (int attempt = 0; attempt < 100; ++attempt) {
      path_ = base / (tag + "_" + std::to_string(rd()) + std::to_string(attempt));
      if (std::filesystem::create_directory(path_)) return;
    }
    throw std::runtime_error("TempDir: could not create a directory");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Image random_image(int w, int h, int c, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  Image img(w, h, c);
  for (float& v : img.data()) v = u(rng);
  return img;
}

/// Smooth random image: a few sinusoids, so resampling stays well behaved.
inline Image smooth_image(int w, int h, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h, c);
  for (int ch = 0; ch < c; ++ch) {
    const double fx1 = 0.05 + 0.15 * u(rng), fy1 = 0.05 + 0.15 * u(rng);
    const double fx2 = 0.02 + 0.1 * u(rng), fy2 = 0.02 + 0.1 * u(rng);
    const double p1 = 6.28 * u(rng), p2 = 6.28 * u(rng);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        img.at(ch, y, x) = static_cast<float>(0.5 + 0.25 * std::sin(fx1 * x + fy1 * y + p1) +
                                              0.2 * std::cos(fx2 * x - fy2 * y + p2));
      }
    }
  }
  return img;
}

inline inference::Planes random_planes(int w, int h, std::uint64_t seed) {
  inference::Planes p;
  p.w = smooth_image(w, h, 3, seed);
  p.uw_warped = smooth_image(w, h, 3, seed + 1);
  p.occlusion = Image(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) p.occlusion.at(0, y, x) = (x / 9 + y / 7) % 5 == 0 ? 1.0f : 0.0f;
  }
  p.ref_defocus = random_image(w, h, 1, seed + 2, 0.0f, 4.0f);
  p.tgt_defocus = random_image(w, h, 1, seed + 3, 0.0f, 4.0f);
  return p;
}

/// Small on-disk dataset for tests that exercise the file formats.
inline std::vector<std::filesystem::path> small_dataset(const std::filesystem::path& dir, int scenes, int slices,
                                                        int size, std::uint64_t seed = 3) {
  dataset::BuildOptions o;
  o.n_scenes = scenes;
  o.n_slices = slices;
  o.seed = seed;
  o.width = size;
  o.height = size;
  return dataset::build_dataset(dir, o);
}

inline double max_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a.data()[i]) - b.data()[i]));
  return m;
}

// Direct 2-D windowed SSIM: normalized 11x11 Gaussian (sigma 1.5), clamp-to-edge
// neighbourhood, mean over pixels and channels.
inline double reference_ssim(const Image& a, const Image& b) {
  const int r = 5;
  const double sigma = 1.5;
  double wsum = 0.0;
  double win[11][11];
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      win[dy + r][dx + r] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      wsum += win[dy + r][dx + r];
    }
  }
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    for (int y = 0; y < a.height(); ++y) {
      for (int x = 0; x < a.width(); ++x) {
        double mx = 0, my = 0;
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            const double wv = win[dy + r][dx + r] / wsum;
            mx += wv * a.at_clamped(c, y + dy, x + dx);
            my += wv * b.at_clamped(c, y + dy, x + dx);
          }
        }
        double vx = 0, vy = 0, cov = 0;
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            const double wv = win[dy + r][dx + r] / wsum;
            const double ea = a.at_clamped(c, y + dy, x + dx) - mx;
            const double eb = b.at_clamped(c, y + dy, x + dx) - my;
            vx += wv * ea * ea;
            vy += wv * eb * eb;
            cov += wv * ea * eb;
          }
        }
        total += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
    }
  }
  return total / (a.width() * a.height() * a.channels());
}

// Anti-aliased disc written out from its definition: weight = clamp(r + 0.5 - |d|, 0, 1), normalized.
inline Image disc_convolve(const Image& img, double r) {
  const int e = static_cast<int>(std::ceil(r + 0.5));
  double total = 0.0;
  for (int dy = -e; dy <= e; ++dy) {
    for (int dx = -e; dx <= e; ++dx) total += std::clamp(r + 0.5 - std::sqrt(double(dx * dx + dy * dy)), 0.0, 1.0);
  }
  Image out(img.width(), img.height(), img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        double acc = 0.0;
        for (int dy = -e; dy <= e; ++dy) {
          for (int dx = -e; dx <= e; ++dx) {
            const double wgt = std::clamp(r + 0.5 - std::sqrt(double(dx * dx + dy * dy)), 0.0, 1.0);
            acc += wgt * img.at_clamped(c, y + dy, x + dx);
          }
        }
        out.at(c, y, x) = static_cast<float>(acc / total);
      }
    }
  }
  return out;
}

}  // namespace dualfocus::fixtures
