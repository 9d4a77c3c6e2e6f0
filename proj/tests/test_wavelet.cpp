#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "sgfm/field.hpp"
#include "sgfm/spectral.hpp"
#include "sgfm/wavelet.hpp"
#include "support.hpp"

using namespace sgfm;
using sgfm::testing::dot;
using sgfm::testing::euclid;
using sgfm::testing::rel_diff;

namespace {

const WaveletFamily kFamilies[] = {WaveletFamily::haar(), WaveletFamily::daubechies4()};

double sum_sq(std::span<const double> v) { return dot(v, v); }

}  // namespace

TEST(WaveletFamily, FiltersAreOrthonormalQmf) {
  for (const auto& fam : kFamilies) {
    const auto h = fam.lowpass();
    const auto g = fam.highpass();
    const std::size_t L = h.size();
    EXPECT_NEAR(sum_sq(h), 1.0, 1e-14) << fam.name();
    EXPECT_NEAR(sum_sq(g), 1.0, 1e-14) << fam.name();
    for (std::size_t i = 0; i < L; ++i)
      EXPECT_DOUBLE_EQ(g[i], (i % 2 ? -1.0 : 1.0) * h[L - 1 - i]);
    // Even shifts of h are orthogonal; the low-pass has unit DC gain sqrt(2).
    for (std::size_t s = 2; s < L; s += 2) {
      double acc = 0.0;
      for (std::size_t i = 0; i + s < L; ++i) acc += h[i] * h[i + s];
      EXPECT_NEAR(acc, 0.0, 1e-14);
    }
    double dc = 0.0;
    for (double v : h) dc += v;
    EXPECT_NEAR(dc, std::sqrt(2.0), 1e-14);
  }
}

TEST(WaveletFamily, Names) {
  EXPECT_EQ(WaveletFamily::from_name("haar"), WaveletFamily::haar());
  EXPECT_EQ(WaveletFamily::from_name("db4"), WaveletFamily::daubechies4());
  EXPECT_THROW(WaveletFamily::from_name("sym8"), std::invalid_argument);
}

TEST(AnalysisStep, HaarConstantRow) {
  const double x[4] = {1, 1, 1, 1};
  double a[2], d[2];
  analysis_step(WaveletFamily::haar(), x, a, d);
  EXPECT_NEAR(a[0], std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(a[1], std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(d[0], 0.0, 1e-15);
  EXPECT_NEAR(d[1], 0.0, 1e-15);
}

TEST(AnalysisStep, HaarAlternating) {
  const double x[2] = {1, -1};
  double a[1], d[1];
  analysis_step(WaveletFamily::haar(), x, a, d);
  EXPECT_NEAR(a[0], 0.0, 1e-15);
  EXPECT_NEAR(d[0], std::sqrt(2.0), 1e-15);
}

TEST(AnalysisStep, SynthesisInverts) {
  for (const auto& fam : kFamilies) {
    std::vector<double> x = {0.3, -1.2, 2.5, 0.7, -0.1, 1.9, 0.0, -3.3};
    std::vector<double> a(4), d(4), y(8);
    analysis_step(fam, x, a, d);
    synthesis_step(fam, a, d, y);
    for (int i = 0; i < 8; ++i) EXPECT_NEAR(y[i], x[i], 1e-14);
  }
}

TEST(Dwt, HaarOneLevelIsBlockSum) {
  // Level-1 2D Haar approximation of a 2x2 block is (a+b+c+d)/2.
  const Grid g = make_grid(2, 8);
  const Field f = gaussian_field(g, 1, 3);
  const auto c = forward_dwt(f, WaveletFamily::haar(), 1);
  const auto approx = c.band(0);
  ASSERT_EQ(approx.size(), 16u);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double s = f[(2 * i) * 8 + 2 * j] + f[(2 * i) * 8 + 2 * j + 1] +
                       f[(2 * i + 1) * 8 + 2 * j] + f[(2 * i + 1) * 8 + 2 * j + 1];
      EXPECT_NEAR(approx[i * 4 + j], s / 2.0, 1e-14);
    }
}

TEST(Dwt, CriticalSamplingAndBands) {
  const Grid g = make_grid(3, 8);
  const CoefficientLayout layout(WaveletFamily::daubechies4(), g, 2, 3);
  EXPECT_EQ(layout.size(), g.size() * 2);
  // approximation bands plus 7 orientations per level and channel
  EXPECT_EQ(layout.bands().size(), 2u + 3u * 7u * 2u);
  std::size_t offset = 0;
  int last_scale = 0;
  for (const auto& b : layout.bands()) {
    EXPECT_EQ(b.offset, offset);
    EXPECT_GE(b.scale, last_scale);
    last_scale = b.scale;
    offset += b.size;
  }
}

TEST(Dwt, ParsevalAndReconstruction) {
  for (const auto& fam : kFamilies)
    for (int ndim : {2, 3}) {
      const Grid g = make_grid(ndim, ndim == 2 ? 32 : 8);
      for (int levels = 0; levels <= ilog2(g.n); ++levels) {
        const Field f = gaussian_field(g, 2, 100 + levels);
        const auto c = forward_dwt(f, fam, levels);
        EXPECT_LT(std::abs(c.norm() - grid_norm(f)) / grid_norm(f), 1e-10);
        EXPECT_LT(rel_diff(inverse_dwt(c), f), 1e-10);
      }
    }
}

TEST(Dwt, InverseOfZeroIsZero) {
  const Grid g = make_grid(2, 16);
  const CoefficientLayout layout(WaveletFamily::daubechies4(), g, 2, 3);
  const Field f = inverse_dwt(WaveletCoefficients(layout));
  EXPECT_EQ(max_abs(f), 0.0);
}

TEST(Dwt, Linearity) {
  const Grid g = make_grid(2, 16);
  for (const auto& fam : kFamilies) {
    const Field f = gaussian_field(g, 1, 1), h = gaussian_field(g, 1, 2);
    const double a = 1.7, b = -0.4;
    const auto lhs = forward_dwt(a * f + b * h, fam, 4);
    auto rhs = forward_dwt(f, fam, 4);
    rhs *= a;
    auto t = forward_dwt(h, fam, 4);
    t *= b;
    rhs += t;
    for (std::size_t i = 0; i < lhs.size(); ++i)
      EXPECT_NEAR(lhs.values()[i], rhs.values()[i], 1e-12);
  }
}

TEST(Dwt, RejectsBadLevels) {
  const Grid g = make_grid(2, 8);
  const Field f(g, 1);
  EXPECT_THROW(forward_dwt(f, WaveletFamily::haar(), 4), std::invalid_argument);
  EXPECT_THROW(forward_dwt(f, WaveletFamily::haar(), -1), std::invalid_argument);
}

TEST(Dwt, InconsistentShapesRejected) {
  const Grid g = make_grid(2, 8);
  const CoefficientLayout layout(WaveletFamily::haar(), g, 1, 2);
  EXPECT_THROW(WaveletCoefficients(layout, std::vector<double>(10)), std::invalid_argument);
}

TEST(Dwt, PackedImageRoundTrip) {
  const Grid g = make_grid(3, 8);
  for (const auto& fam : kFamilies) {
    const auto c = forward_dwt(gaussian_field(g, 3, 5), fam, 2);
    const Field packed = to_packed_field(c);
    EXPECT_EQ(from_packed_field(packed, fam, 2), c);
  }
}

TEST(ScaleSplit, Boundaries) {
  const Grid g = make_grid(2, 16);
  const auto c = forward_dwt(gaussian_field(g, 2, 9), WaveletFamily::haar(), 3);
  const auto top = split_scales(c, c.j_max());
  EXPECT_TRUE(top.fine.empty());
  const auto bottom = split_scales(c, 0);
  // deepest approximation: (16 >> 3)^2 per channel
  EXPECT_EQ(bottom.coarse.size(), 2u * 4u);
  EXPECT_THROW(split_scales(c, -1), std::invalid_argument);
  EXPECT_THROW(split_scales(c, 4), std::invalid_argument);
}

TEST(ScaleSplit, PartitionAndRoundTrip) {
  const Grid g = make_grid(3, 8);
  for (const auto& fam : kFamilies) {
    const auto c = forward_dwt(gaussian_field(g, 3, 11), fam, 3);
    for (int j = 0; j <= c.j_max(); ++j) {
      const auto s = split_scales(c, j);
      EXPECT_EQ(s.coarse.size() + s.fine.size(), c.size());
      EXPECT_NEAR(sum_sq(s.coarse) + sum_sq(s.fine), c.norm() * c.norm(),
                  1e-10 * c.norm() * c.norm());
      EXPECT_EQ(merge_scales(s), c);
    }
  }
}

TEST(ScaleSplit, MergeRejectsWrongSizes) {
  const Grid g = make_grid(2, 8);
  const auto c = forward_dwt(gaussian_field(g, 1, 1), WaveletFamily::haar(), 2);
  auto s = split_scales(c, 1);
  s.fine.pop_back();
  EXPECT_THROW(merge_scales(s), std::invalid_argument);
}

TEST(ScaleSplit, IndependentHalvesAddInEnergy) {
  const Grid g = make_grid(2, 16);
  const auto a = forward_dwt(gaussian_field(g, 2, 1), WaveletFamily::daubechies4(), 3);
  const auto b = forward_dwt(gaussian_field(g, 2, 2), WaveletFamily::daubechies4(), 3);
  auto s = split_scales(a, 1);
  s.fine = split_scales(b, 1).fine;
  const auto m = merge_scales(s);
  const auto sa = split_scales(a, 1), sb = split_scales(b, 1);
  EXPECT_NEAR(m.norm() * m.norm(), sum_sq(sa.coarse) + sum_sq(sb.fine), 1e-10);
}

TEST(ScaleSplit, ZeroedFineIsHaarBlockAverage) {
  // With Haar, keeping scales <= j of an L-level transform is the orthogonal
  // projection onto piecewise constants on blocks of side 2^(L - j).
  const Grid g = make_grid(2, 8);
  const Field f = gaussian_field(g, 2, 21);
  const int L = 3;
  const auto c = forward_dwt(f, WaveletFamily::haar(), L);
  for (int j = 0; j <= L; ++j) {
    auto s = split_scales(c, j);
    std::fill(s.fine.begin(), s.fine.end(), 0.0);
    const Field low = inverse_dwt(merge_scales(s));
    const int block = 1 << (L - j);
    for (int ch = 0; ch < 2; ++ch)
      for (int i = 0; i < 8; ++i)
        for (int k = 0; k < 8; ++k) {
          const int bi = i / block * block, bk = k / block * block;
          double mean = 0.0;
          for (int a = 0; a < block; ++a)
            for (int b = 0; b < block; ++b) mean += f[ch * 64 + (bi + a) * 8 + bk + b];
          mean /= block * block;
          EXPECT_NEAR(low[ch * 64 + i * 8 + k], mean, 1e-12);
        }
  }
}

TEST(ScaleSplit, ZeroedFineIsProjectionOntoCoarseAtoms) {
  // Brute force: project f onto every coarse atom W^-1 e_i by inner products.
  const Grid g = make_grid(2, 8);
  const auto fam = WaveletFamily::daubechies4();
  const Field f = gaussian_field(g, 1, 8);
  const auto c = forward_dwt(f, fam, 2);
  const int j = 1;
  auto s = split_scales(c, j);
  std::fill(s.fine.begin(), s.fine.end(), 0.0);
  const Field low = inverse_dwt(merge_scales(s));

  Field brute(g, 1);
  const std::size_t prefix = c.layout().prefix_size(j);
  for (std::size_t i = 0; i < prefix; ++i) {
    WaveletCoefficients e(c.layout());
    e.values()[i] = 1.0;
    const Field atom = inverse_dwt(e);
    brute.axpy(dot(f.data(), atom.data()), atom);
  }
  EXPECT_LT(rel_diff(low, brute), 1e-12);
}

TEST(Dwt, HaarIsSparserThanFourierOnSteps) {
  const Grid g = make_grid(2, 32);
  const Field step = sample_field(g, 1, [](std::span<const double> x, int) {
    return (x[0] < std::numbers::pi ? 1.0 : 0.0) + (x[1] < std::numbers::pi / 2 ? 2.0 : 0.0);
  });
  const auto c = forward_dwt(step, WaveletFamily::haar(), 5);
  std::size_t wav = 0;
  for (double v : c.values()) wav += std::abs(v) > 1e-8;
  const auto mags = fourier_magnitudes(step, 0);
  std::size_t four = 0;
  for (double v : mags) four += v > 1e-8;
  const double wav_frac = double(wav) / c.size();
  const double four_frac = double(four) / mags.size();
  EXPECT_LT(wav_frac, four_frac);
}
