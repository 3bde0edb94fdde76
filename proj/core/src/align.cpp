#include "dualfocus/align.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace dualfocus::align {
namespace {

constexpr double kBoundsEps = 1e-4;

Image half_resolution(const Image& img) {
  const int w = std::max(1, img.width() / 2);
  const int h = std::max(1, img.height() / 2);
  Image out(w, h, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        out.at(c, y, x) = 0.25f * (img.at_clamped(c, 2 * y, 2 * x) + img.at_clamped(c, 2 * y, 2 * x + 1) +
                                   img.at_clamped(c, 2 * y + 1, 2 * x) +
                                   img.at_clamped(c, 2 * y + 1, 2 * x + 1));
      }
    }
  }
  return out;
}

struct BlockStats {
  double mean = 0.0;
  double stddev = 0.0;
};

BlockStats block_stats(const Image& img, int x0, int y0, int size) {
  double sum = 0.0;
  double sq = 0.0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double v = img.at_clamped(0, y0 + y, x0 + x);
      sum += v;
      sq += v * v;
    }
  }
  const double n = static_cast<double>(size) * size;
  const double mean = sum / n;
  return {mean, std::sqrt(std::max(0.0, sq / n - mean * mean))};
}

// Zero-mean normalized cross correlation between a target block and the
// source block displaced by (dx, dy).
double zncc(const Image& target, const Image& source, int x0, int y0, int size, int dx, int dy,
            const BlockStats& tstats) {
  const BlockStats sstats = block_stats(source, x0 + dx, y0 + dy, size);
  if (sstats.stddev < 1e-9 || tstats.stddev < 1e-9) return -1.0;
  double acc = 0.0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      acc += (target.at_clamped(0, y0 + y, x0 + x) - tstats.mean) *
             (source.at_clamped(0, y0 + y + dy, x0 + x + dx) - sstats.mean);
    }
  }
  return acc / (static_cast<double>(size) * size * tstats.stddev * sstats.stddev);
}

double parabola_offset(double left, double center, double right) {
  const double denom = left - 2.0 * center + right;
  if (std::abs(denom) < 1e-12) return 0.0;
  return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

struct BlockGrid {
  int cols = 0;
  int rows = 0;
  int step = 1;
  int size = 1;
  std::vector<std::array<double, 2>> disp;
  std::vector<float> confidence;

  double center_x(int col) const { return col * step + (size - 1) / 2.0; }
  double center_y(int row) const { return row * step + (size - 1) / 2.0; }
};

void median_smooth(BlockGrid& grid) {
  auto smoothed = grid.disp;
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      for (int k = 0; k < 2; ++k) {
        std::vector<double> window;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr;
            const int cc = c + dc;
            if (rr < 0 || cc < 0 || rr >= grid.rows || cc >= grid.cols) continue;
            const auto idx = static_cast<std::size_t>(rr * grid.cols + cc);
            if (grid.confidence[idx] > 0.5f) window.push_back(grid.disp[idx][k]);
          }
        }
        if (window.empty()) continue;
        std::nth_element(window.begin(), window.begin() + window.size() / 2, window.end());
        smoothed[static_cast<std::size_t>(r * grid.cols + c)][k] = window[window.size() / 2];
      }
    }
  }
  grid.disp = std::move(smoothed);
}

// Interpolates block-center vectors to a dense per-pixel field.
Image densify(const BlockGrid& grid, int width, int height, Image* confidence) {
  Image field(width, height, 2);
  if (confidence) *confidence = Image(width, height, 1);
  for (int y = 0; y < height; ++y) {
    const double gy = std::clamp((y - (grid.size - 1) / 2.0) / grid.step, 0.0, grid.rows - 1.0);
    const int r0 = static_cast<int>(std::floor(gy));
    const int r1 = std::min(r0 + 1, grid.rows - 1);
    const double fy = gy - r0;
    for (int x = 0; x < width; ++x) {
      const double gx = std::clamp((x - (grid.size - 1) / 2.0) / grid.step, 0.0, grid.cols - 1.0);
      const int c0 = static_cast<int>(std::floor(gx));
      const int c1 = std::min(c0 + 1, grid.cols - 1);
      const double fx = gx - c0;
      auto at = [&](int r, int c) { return static_cast<std::size_t>(r * grid.cols + c); };
      for (int k = 0; k < 2; ++k) {
        const double top = (1 - fx) * grid.disp[at(r0, c0)][k] + fx * grid.disp[at(r0, c1)][k];
        const double bottom = (1 - fx) * grid.disp[at(r1, c0)][k] + fx * grid.disp[at(r1, c1)][k];
        field.at(k, y, x) = static_cast<float>((1 - fy) * top + fy * bottom);
      }
      if (confidence) {
        const int rn = static_cast<int>(std::lround(gy));
        const int cn = static_cast<int>(std::lround(gx));
        confidence->at(0, y, x) = grid.confidence[at(rn, cn)];
      }
    }
  }
  return field;
}

}  // namespace

WarpField WarpField::zeros(int width, int height) { return constant(width, height, 0.0f, 0.0f); }

WarpField WarpField::constant(int width, int height, float dx, float dy) {
  WarpField f{Image(width, height, 2), Image(width, height, 1, 1.0f)};
  std::ranges::fill(f.displacement.plane(0), dx);
  std::ranges::fill(f.displacement.plane(1), dy);
  return f;
}

WarpResult warp(const Image& source, const WarpField& field) {
  if (field.displacement.channels() != 2 || !field.displacement.same_dims(field.validity)) {
    throw std::invalid_argument("warp: malformed warp field");
  }
  const int w = field.width();
  const int h = field.height();
  WarpResult out{Image(w, h, source.channels()), Image(w, h, 1)};
  const double max_x = source.width() - 1.0;
  const double max_y = source.height() - 1.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!field.valid_at(y, x)) continue;
      const double sx = x + static_cast<double>(field.displacement.at(0, y, x));
      const double sy = y + static_cast<double>(field.displacement.at(1, y, x));
      if (!std::isfinite(sx) || !std::isfinite(sy) || sx < -kBoundsEps || sy < -kBoundsEps ||
          sx > max_x + kBoundsEps || sy > max_y + kBoundsEps) {
        continue;
      }
      out.valid.at(0, y, x) = 1.0f;
      for (int c = 0; c < source.channels(); ++c) out.image.at(c, y, x) = source.sample_bilinear(c, sy, sx);
    }
  }
  return out;
}

WarpField estimate_warp(const Image& source, const Image& target, const BlockMatchConfig& config) {
  if (config.levels < 1 || config.block < 2 || config.search < 0) {
    throw std::invalid_argument("estimate_warp: invalid config");
  }
  std::vector<Image> src_pyr{luminance(source)};
  std::vector<Image> tgt_pyr{luminance(target)};
  for (int l = 1; l < config.levels; ++l) {
    src_pyr.push_back(half_resolution(src_pyr.back()));
    tgt_pyr.push_back(half_resolution(tgt_pyr.back()));
  }

  Image prior;  // dense 2-channel field at the current level, in that level's pixels
  BlockGrid grid;
  for (int level = config.levels - 1; level >= 0; --level) {
    const Image& src = src_pyr[static_cast<std::size_t>(level)];
    const Image& tgt = tgt_pyr[static_cast<std::size_t>(level)];
    const int size = std::min({config.block, tgt.width(), tgt.height()});
    grid = BlockGrid{};
    grid.size = size;
    grid.step = std::max(1, size / 2);
    grid.cols = std::max(1, (tgt.width() - size) / grid.step + 1);
    grid.rows = std::max(1, (tgt.height() - size) / grid.step + 1);
    grid.disp.assign(static_cast<std::size_t>(grid.cols * grid.rows), {0.0, 0.0});
    grid.confidence.assign(grid.disp.size(), 0.0f);

    for (int r = 0; r < grid.rows; ++r) {
      for (int c = 0; c < grid.cols; ++c) {
        const int x0 = c * grid.step;
        const int y0 = r * grid.step;
        const auto idx = static_cast<std::size_t>(r * grid.cols + c);
        double pdx = 0.0;
        double pdy = 0.0;
        if (!prior.empty()) {
          const int cx = std::min(tgt.width() - 1, x0 + size / 2);
          const int cy = std::min(tgt.height() - 1, y0 + size / 2);
          pdx = prior.at(0, cy, cx);
          pdy = prior.at(1, cy, cx);
        }
        grid.disp[idx] = {pdx, pdy};
        const BlockStats tstats = block_stats(tgt, x0, y0, size);
        if (tstats.stddev < config.min_texture_std) continue;

        const int bx = static_cast<int>(std::lround(pdx));
        const int by = static_cast<int>(std::lround(pdy));
        const int span = 2 * config.search + 1;
        std::vector<double> scores(static_cast<std::size_t>(span * span), -2.0);
        double best = -2.0;
        int best_i = config.search;
        int best_j = config.search;
        for (int j = 0; j < span; ++j) {
          for (int i = 0; i < span; ++i) {
            const double s = zncc(tgt, src, x0, y0, size, bx + i - config.search, by + j - config.search, tstats);
            scores[static_cast<std::size_t>(j * span + i)] = s;
            // Ties prefer the smallest displacement so flat optima stay at the prior.
            const int dist = std::abs(i - config.search) + std::abs(j - config.search);
            const int best_dist = std::abs(best_i - config.search) + std::abs(best_j - config.search);
            if (s > best + 1e-12 || (std::abs(s - best) <= 1e-12 && dist < best_dist)) {
              best = s;
              best_i = i;
              best_j = j;
            }
          }
        }
        double sub_x = 0.0;
        double sub_y = 0.0;
        auto score = [&](int i, int j) { return scores[static_cast<std::size_t>(j * span + i)]; };
        // A perfect correlation is already the peak; the parabola would only add bias.
        const bool exact = best >= 1.0 - 1e-9;
        if (!exact && best_i > 0 && best_i < span - 1) {
          sub_x = parabola_offset(score(best_i - 1, best_j), best, score(best_i + 1, best_j));
        }
        if (!exact && best_j > 0 && best_j < span - 1) {
          sub_y = parabola_offset(score(best_i, best_j - 1), best, score(best_i, best_j + 1));
        }
        grid.disp[idx] = {bx + best_i - config.search + sub_x, by + best_j - config.search + sub_y};
        grid.confidence[idx] = best >= config.min_correlation ? 1.0f : 0.0f;
      }
    }
    median_smooth(grid);

    Image dense = densify(grid, tgt.width(), tgt.height(), nullptr);
    if (level > 0) {
      const Image& finer = tgt_pyr[static_cast<std::size_t>(level - 1)];
      prior = Image(finer.width(), finer.height(), 2);
      for (int k = 0; k < 2; ++k) {
        for (int y = 0; y < finer.height(); ++y) {
          for (int x = 0; x < finer.width(); ++x) {
            prior.at(k, y, x) = 2.0f * dense.sample_bilinear(k, (y - 0.5) / 2.0, (x - 0.5) / 2.0);
          }
        }
      }
    }
  }

  WarpField out;
  out.displacement = densify(grid, target.width(), target.height(), &out.validity);
  for (int y = 0; y < target.height(); ++y) {
    for (int x = 0; x < target.width(); ++x) {
      const double sx = x + out.displacement.at(0, y, x);
      const double sy = y + out.displacement.at(1, y, x);
      if (sx < 0.0 || sy < 0.0 || sx > source.width() - 1.0 || sy > source.height() - 1.0) {
        out.validity.at(0, y, x) = 0.0f;
      }
    }
  }
  return out;
}

Image estimate_occlusion(const WarpField& forward, const WarpField& backward, double threshold_px) {
  if (!forward.displacement.same_dims(backward.displacement)) {
    throw std::invalid_argument("estimate_occlusion: field dims differ");
  }
  const int w = forward.width();
  const int h = forward.height();
  Image mask(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float& m = mask.at(0, y, x);
      if (!forward.valid_at(y, x)) {
        m = 1.0f;
        continue;
      }
      const double fdx = forward.displacement.at(0, y, x);
      const double fdy = forward.displacement.at(1, y, x);
      const double qx = x + fdx;
      const double qy = y + fdy;
      if (!(qx >= -kBoundsEps && qy >= -kBoundsEps && qx <= w - 1 + kBoundsEps && qy <= h - 1 + kBoundsEps)) {
        m = 1.0f;
        continue;
      }
      if (backward.validity.sample_bilinear(0, qy, qx) <= 0.5f) {
        m = 1.0f;
        continue;
      }
      const double bdx = backward.displacement.sample_bilinear(0, qy, qx);
      const double bdy = backward.displacement.sample_bilinear(1, qy, qx);
      const double err = std::hypot(fdx + bdx, fdy + bdy);
      m = err > threshold_px ? 1.0f : 0.0f;
    }
  }
  return mask;
}

}  // namespace dualfocus::align
