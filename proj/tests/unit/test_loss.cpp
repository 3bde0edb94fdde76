#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "dualfocus/loss.hpp"
#include "dualfocus/tensor_bridge.hpp"
#include "support.hpp"

using namespace dualfocus;

namespace {

// Plain [C][H][W] double volume for loop-based reference computations.
struct Vol {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;
  Vol(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(std::size_t(c_) * h_ * w_, 0.0) {}
  double& at(int k, int y, int x) { return v[(std::size_t(k) * h + y) * w + x]; }
  double at(int k, int y, int x) const { return v[(std::size_t(k) * h + y) * w + x]; }
};

Vol from_image(const Image& img) {
  Vol out(img.channels(), img.height(), img.width());
  for (int k = 0; k < out.c; ++k)
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x) out.at(k, y, x) = img.at(k, y, x);
  return out;
}

torch::Tensor batch_of(const Image& img) { return to_tensor(img).to(torch::kFloat64).unsqueeze(0); }

double mean_abs(const Vol& a, const Vol& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) s += std::abs(a.v[i] - b.v[i]);
  return s / a.v.size();
}

// Independent pyramid: He-normal weights from mt19937_64, drawn in
// [out][in][ky][kx] order, stride-2 pad-1 convolution, ReLU.
std::vector<Vol> pyramid_features(const Vol& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int ch[] = {3, 8, 16, 16};
  std::vector<Vol> feats;
  Vol cur = x;
  for (int s = 0; s < 3; ++s) {
    const int in = ch[s], out = ch[s + 1];
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (in * 9)));
    std::vector<double> wt(std::size_t(out) * in * 9);
    for (double& v : wt) v = normal(rng);
    const int oh = (cur.h + 2 - 3) / 2 + 1;
    const int ow = (cur.w + 2 - 3) / 2 + 1;
    Vol next(out, oh, ow);
    for (int o = 0; o < out; ++o) {
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          double acc = 0.0;
          for (int i = 0; i < in; ++i) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const int sy = 2 * y - 1 + ky, sx = 2 * xx - 1 + kx;
                if (sy < 0 || sx < 0 || sy >= cur.h || sx >= cur.w) continue;
                acc += wt[((std::size_t(o) * in + i) * 3 + ky) * 3 + kx] * cur.at(i, sy, sx);
              }
            }
          }
          next.at(o, y, xx) = std::max(acc, 0.0);
        }
      }
    }
    feats.push_back(next);
    cur = next;
  }
  return feats;
}

double grad_l1(const Vol& a, const Vol& b) {
  double s = 0.0;
  for (int k = 0; k < a.c; ++k) {
    for (int y = 0; y < a.h; ++y) {
      for (int x = 0; x < a.w; ++x) {
        const double ax = x + 1 < a.w ? a.at(k, y, x + 1) - a.at(k, y, x) : 0.0;
        const double bx = x + 1 < a.w ? b.at(k, y, x + 1) - b.at(k, y, x) : 0.0;
        const double ay = y + 1 < a.h ? a.at(k, y + 1, x) - a.at(k, y, x) : 0.0;
        const double by = y + 1 < a.h ? b.at(k, y + 1, x) - b.at(k, y, x) : 0.0;
        s += std::abs(ax - bx) + std::abs(ay - by);
      }
    }
  }
  return s / (2.0 * a.v.size());
}

Image box_down(const Image& img, int f) {
  Image out(img.width() / f, img.height() / f, img.channels());
  for (int k = 0; k < out.channels(); ++k) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        double s = 0.0;
        for (int dy = 0; dy < f; ++dy)
          for (int dx = 0; dx < f; ++dx) s += img.at(k, y * f + dy, x * f + dx);
        out.at(k, y, x) = static_cast<float>(s / (f * f));
      }
    }
  }
  return out;
}

}  // namespace

TEST(Loss, IdentityGivesZero) {
  const auto t = batch_of(fixtures::random_image(32, 24, 3, 1));
  const std::vector<torch::Tensor> outs = {loss::area_downsample(t, 8), loss::area_downsample(t, 4),
                                           loss::area_downsample(t, 2), t};
  const loss::RandomPyramid pyr;
  const auto b = loss::loss_total(outs, t, &pyr);
  ASSERT_EQ(b.per_scale.size(), 4u);
  EXPECT_NEAR(b.summed.total, 0.0, 1e-12);
  EXPECT_NEAR(b.total.item<double>(), 0.0, 1e-12);
}

TEST(Loss, ConstantOffsetClosedForm) {
  const Image img = fixtures::random_image(24, 24, 3, 2, 0.1f, 0.8f);
  const auto t = batch_of(img);
  const auto pred = t + 0.1;
  EXPECT_NEAR(loss::l1(pred, t).item<double>(), 0.1, 1e-12);
  EXPECT_NEAR(loss::l1(loss::gradients(pred), loss::gradients(t)).item<double>(), 0.0, 1e-12);
  const auto b = loss::loss_total({pred}, t, nullptr);
  EXPECT_NEAR(b.summed.l1_pixel, 0.1, 1e-12);
  EXPECT_NEAR(b.summed.l1_grad, 0.0, 1e-12);
  EXPECT_EQ(b.summed.perceptual, 0.0);
}

TEST(Loss, GradientsLayout) {
  auto x = torch::arange(12, torch::kFloat64).view({1, 1, 3, 4}).pow(2);
  const auto g = loss::gradients(x);
  EXPECT_EQ(g.sizes(), torch::IntArrayRef({1, 2, 3, 4}));
  for (int y = 0; y < 3; ++y) {
    for (int xx = 0; xx < 4; ++xx) {
      const double v = x[0][0][y][xx].item<double>();
      const double dx = xx < 3 ? x[0][0][y][xx + 1].item<double>() - v : 0.0;
      const double dy = y < 2 ? x[0][0][y + 1][xx].item<double>() - v : 0.0;
      EXPECT_EQ(g[0][0][y][xx].item<double>(), dx);
      EXPECT_EQ(g[0][1][y][xx].item<double>(), dy);
    }
  }
}

TEST(Loss, SsimMatchesReferenceAndIsSymmetric) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Image a = fixtures::random_image(21, 17, 3, 10 + s);
    const Image b = fixtures::random_image(21, 17, 3, 20 + s);
    const double v = loss::ssim(batch_of(a), batch_of(b)).item<double>();
    EXPECT_NEAR(v, fixtures::reference_ssim(a, b), 1e-9);
    EXPECT_NEAR(v, loss::ssim(batch_of(b), batch_of(a)).item<double>(), 1e-12);
  }
  const auto a = batch_of(fixtures::random_image(12, 12, 3, 5));
  EXPECT_NEAR(loss::ssim(a, a).item<double>(), 1.0, 1e-12);
}

TEST(Loss, AllTermsMatchLoopOracle) {
  const Image tgt_img = fixtures::smooth_image(32, 32, 3, 30);
  const Image pred_full = fixtures::random_image(32, 32, 3, 31);
  const Image pred_half = box_down(fixtures::random_image(32, 32, 3, 32), 2);
  const loss::RandomPyramid pyr;
  loss::LossWeights w{1.0, 0.5, 2.0, 0.25};
  const auto b = loss::loss_total({batch_of(pred_half), batch_of(pred_full)}, batch_of(tgt_img), &pyr, w);
  ASSERT_EQ(b.per_scale.size(), 2u);

  double expected_total = 0.0;
  const std::pair<const Image*, int> scales[] = {{&pred_half, 2}, {&pred_full, 1}};
  for (int i = 0; i < 2; ++i) {
    const Image tgt_s = scales[i].second == 1 ? tgt_img : box_down(tgt_img, scales[i].second);
    const Vol p = from_image(*scales[i].first);
    const Vol t = from_image(tgt_s);
    const double e_pix = mean_abs(p, t);
    const double e_grad = grad_l1(p, t);
    const double e_ssim = 1.0 - fixtures::reference_ssim(*scales[i].first, tgt_s);
    const auto fp = pyramid_features(p, 20240917);
    const auto ft = pyramid_features(t, 20240917);
    double e_perc = 0.0;
    for (std::size_t k = 0; k < fp.size(); ++k) e_perc += mean_abs(fp[k], ft[k]);
    const auto& got = b.per_scale[i];
    EXPECT_NEAR(got.l1_pixel, e_pix, 1e-6);
    EXPECT_NEAR(got.l1_grad, e_grad, 1e-6);
    EXPECT_NEAR(got.ssim, e_ssim, 1e-6);
    EXPECT_NEAR(got.perceptual, e_perc, 1e-6);
    EXPECT_GT(e_perc, 0.0);
    const double e_total = e_pix + 0.5 * e_grad + 2.0 * e_ssim + 0.25 * e_perc;
    EXPECT_NEAR(got.total, e_total, 1e-6);
    expected_total += e_total;
  }
  EXPECT_NEAR(b.summed.total, expected_total, 1e-6);
  EXPECT_NEAR(b.total.item<double>(), expected_total, 1e-6);
}

TEST(Loss, PyramidShapesAndDeterminism) {
  const auto x = torch::rand({2, 3, 32, 24}, torch::kFloat64);
  const loss::RandomPyramid a, b;
  const loss::RandomPyramid other(7);
  const auto fa = a.features(x);
  const auto fb = b.features(x);
  ASSERT_EQ(fa.size(), 3u);
  EXPECT_EQ(fa[0].sizes(), torch::IntArrayRef({2, 8, 16, 12}));
  EXPECT_EQ(fa[1].sizes(), torch::IntArrayRef({2, 16, 8, 6}));
  EXPECT_EQ(fa[2].sizes(), torch::IntArrayRef({2, 16, 4, 3}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(torch::equal(fa[i], fb[i]));
  EXPECT_FALSE(torch::equal(fa[0], other.features(x)[0]));
  EXPECT_EQ(loss::make_backend("none"), nullptr);
  EXPECT_EQ(loss::make_backend("random")->name(), "random-pyramid");
  EXPECT_THROW(loss::make_backend("vgg"), std::invalid_argument);
}

TEST(Loss, AnalyticGradientMatchesFiniteDifferences) {
  torch::manual_seed(3);
  const auto target = torch::rand({1, 3, 16, 16}, torch::kFloat64);
  auto pred = torch::rand({1, 3, 16, 16}, torch::kFloat64).requires_grad_(true);
  const loss::RandomPyramid pyr;
  auto value = [&](const torch::Tensor& p) {
    return loss::loss_total({loss::area_downsample(p, 2), p}, target, &pyr).total;
  };
  value(pred).backward();
  const auto grad = pred.grad().clone();
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int64_t> pick(0, pred.numel() - 1);
  const double h = 1e-6;
  for (int i = 0; i < 30; ++i) {
    const auto idx = pick(rng);
    torch::NoGradGuard ng;
    auto plus = pred.detach().clone();
    auto minus = pred.detach().clone();
    plus.view(-1)[idx] += h;
    minus.view(-1)[idx] -= h;
    const double fd = (value(plus).item<double>() - value(minus).item<double>()) / (2 * h);
    const double an = grad.view(-1)[idx].item<double>();
    EXPECT_LT(std::abs(fd - an), 1e-3 * std::max(1.0, std::abs(fd))) << "index " << idx;
  }
}

TEST(Loss, RejectsMismatchedScales) {
  const auto t = torch::rand({1, 3, 16, 16}, torch::kFloat64);
  EXPECT_THROW(loss::loss_total({torch::rand({1, 3, 5, 5}, torch::kFloat64)}, t, nullptr), std::invalid_argument);
  EXPECT_THROW(loss::ssim(t, torch::rand({1, 3, 8, 8}, torch::kFloat64)), std::invalid_argument);
}
