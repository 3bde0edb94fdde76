#include <array>
#include "dualfocus/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace dualfocus::metrics {
namespace {

std::vector<double> gaussian_taps(int window, double sigma) {
  std::vector<double> taps(static_cast<std::size_t>(window));
  const int half = window / 2;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - half;
    taps[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += taps[static_cast<std::size_t>(i)];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

// Separable clamp-to-edge filter of a w x h plane.
std::vector<double> blur(const std::vector<double>& src, int w, int h, const std::vector<double>& taps) {
  const int half = static_cast<int>(taps.size()) / 2;
  std::vector<double> tmp(src.size());
  std::vector<double> out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -half; k <= half; ++k) {
        acc += taps[static_cast<std::size_t>(k + half)] * src[static_cast<std::size_t>(y) * w + std::clamp(x + k, 0, w - 1)];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -half; k <= half; ++k) {
        acc += taps[static_cast<std::size_t>(k + half)] * tmp[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

}  // namespace

double mse(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mse: shape mismatch");
  double acc = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = static_cast<double>(da[i]) - db[i];
    acc += d * d;
  }
  return acc / static_cast<double>(da.size());
}

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

double ssim(const Image& a, const Image& b, const SsimParams& params) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
  const int w = a.width();
  const int h = a.height();
  const auto taps = gaussian_taps(params.window, params.sigma);
  const double c1 = std::pow(params.k1 * params.data_range, 2);
  const double c2 = std::pow(params.k2 * params.data_range, 2);
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    const auto pa = a.plane(c);
    const auto pb = b.plane(c);
    std::vector<double> x(pa.begin(), pa.end());
    std::vector<double> y(pb.begin(), pb.end());
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = blur(x, w, h, taps);
    const auto my = blur(y, w, h, taps);
    const auto sxx = blur(xx, w, h, taps);
    const auto syy = blur(yy, w, h, taps);
    const auto sxy = blur(xy, w, h, taps);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
  }
  return total / (static_cast<double>(w) * h * a.channels());
}

Image apply_alignment(const Image& img, double scale, double tx, double ty) {
  Image out(img.width(), img.height(), img.channels());
  const double cx = (img.width() - 1) / 2.0;
  const double cy = (img.height() - 1) / 2.0;
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        out.at(c, y, x) = img.sample_bilinear(c, (y - cy - ty) / scale + cy, (x - cx - tx) / scale + cx);
      }
    }
  }
  return out;
}

AlignResult fov_align(const Image& img, const Image& ref, const AlignSearch& search) {
  if (!img.same_shape(ref)) throw std::invalid_argument("fov_align: shape mismatch");
  if (search.scale_steps < 1 || search.translation_steps < 1) {
    throw std::invalid_argument("fov_align: empty search grid");
  }
  const int w = img.width();
  const int h = img.height();

  auto grid_value = [](double lo, double hi, int steps, int i) {
    if (steps == 1) return 0.5 * (lo + hi);
    return lo + (hi - lo) * i / (steps - 1);
  };
  std::vector<double> scales;
  for (int i = 0; i < search.scale_steps; ++i) {
    double s = grid_value(search.scale_min, search.scale_max, search.scale_steps, i);
    if (std::abs(s - 1.0) < 1e-12) s = 1.0;
    scales.push_back(s);
  }
  std::vector<double> shifts;
  for (int i = 0; i < search.translation_steps; ++i) {
    double t = grid_value(-search.translation_range_px, search.translation_range_px, search.translation_steps, i);
    if (std::abs(t) < 1e-12) t = 0.0;
    shifts.push_back(t);
  }
  const bool integer_shifts = std::ranges::all_of(shifts, [](double t) { return t == std::round(t); });

  double max_scale_dev = 0.0;
  for (double s : scales) max_scale_dev = std::max(max_scale_dev, std::abs(s - 1.0) / std::min(s, 1.0));
  const int margin = static_cast<int>(std::ceil(search.translation_range_px + max_scale_dev * std::max(w, h) / 2.0)) + 1;
  const int x0 = std::min(margin, w / 2 - 1);
  const int y0 = std::min(margin, h / 2 - 1);
  const int x1 = std::max(x0 + 1, w - margin);
  const int y1 = std::max(y0 + 1, h - margin);
  const double n = static_cast<double>(x1 - x0) * (y1 - y0) * img.channels();

  double best = std::numeric_limits<double>::infinity();
  double best_cost = std::numeric_limits<double>::infinity();
  AlignParams params;
  auto consider = [&](double s, double tx, double ty, double acc) {
    const double m = acc / n;
    const double cost = std::abs(s - 1.0) * 1e3 + std::abs(tx) + std::abs(ty);
    if (s == 1.0 && tx == 0.0 && ty == 0.0) params.identity_mse = m;
    if (m < best - 1e-15 || (std::abs(m - best) <= 1e-15 && cost < best_cost)) {
      best = m;
      best_cost = cost;
      params.scale = s;
      params.tx = tx;
      params.ty = ty;
      params.mse = m;
    }
  };
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  for (double s : scales) {
    if (integer_shifts) {
      // Integer shifts of one rescaled image; rows are compared directly when
      // the shifted span stays inside the image.
      const Image scaled = apply_alignment(img, s, 0.0, 0.0);
      for (double ty : shifts) {
        for (double tx : shifts) {
          const int ix = static_cast<int>(tx);
          const int iy = static_cast<int>(ty);
          double acc = 0.0;
          for (int c = 0; c < img.channels(); ++c) {
            const auto src = scaled.plane(c);
            const auto dst = ref.plane(c);
            for (int y = y0; y < y1; ++y) {
              const float* a = src.data() + static_cast<std::size_t>(std::clamp(y - iy, 0, h - 1)) * w;
              const float* b = dst.data() + static_cast<std::size_t>(y) * w;
              float row = 0.0f;
              if (x0 - ix >= 0 && x1 - ix <= w) {
                const float* as = a - ix;
                std::array<float, 8> lane{};
                int x = x0;
                for (; x + 8 <= x1; x += 8) {
                  for (int k = 0; k < 8; ++k) {
                    const float d = as[x + k] - b[x + k];
                    lane[k] += d * d;
                  }
                }
                for (; x < x1; ++x) {
                  const float d = as[x] - b[x];
                  row += d * d;
                }
                for (float v : lane) row += v;
              } else {
                for (int x = x0; x < x1; ++x) {
                  const float d = a[std::clamp(x - ix, 0, w - 1)] - b[x];
                  row += d * d;
                }
              }
              acc += row;
            }
          }
          consider(s, tx, ty, acc);
        }
      }
    } else {
      for (double ty : shifts) {
        for (double tx : shifts) {
          double acc = 0.0;
          for (int c = 0; c < img.channels(); ++c) {
            for (int y = y0; y < y1; ++y) {
              for (int x = x0; x < x1; ++x) {
                const double d = img.sample_bilinear(c, (y - cy - ty) / s + cy, (x - cx - tx) / s + cx) - ref.at(c, y, x);
                acc += d * d;
              }
            }
          }
          consider(s, tx, ty, acc);
        }
      }
    }
  }
  return {params, apply_alignment(img, params.scale, params.tx, params.ty)};
}

}  // namespace dualfocus::metrics
