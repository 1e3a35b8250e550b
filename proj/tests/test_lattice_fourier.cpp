#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "heiskam/lattice_fourier.hpp"

namespace heiskam {
namespace {

MIdx mk(int a, int b, int c, int d) {
  MIdx m = midx_zero();
  m[0] = static_cast<int16_t>(a);
  m[1] = static_cast<int16_t>(b);
  m[2] = static_cast<int16_t>(c);
  m[3] = static_cast<int16_t>(d);
  return m;
}

TEST(SobolevNorm, SingleModeMatchesWeightFormula) {
  MIdx m = mk(1, -2, 0, 3);
  TorusField f = field_mode(2, m, cplx(0.5, -0.25));
  double mag = std::abs(cplx(0.5, -0.25));
  for (double s : {0.0, 1.0, 2.5, 6.0}) {
    double expect = std::pow(1.0 + 4.0 * kPi * kPi * 14.0, s / 2.0) * mag;
    EXPECT_NEAR(sobolev_norm(f, s), expect, 1e-12 * expect);
  }
}

TEST(SobolevNorm, ZeroOrderIsL2) {
  DetRng rng(11);
  TorusField f = random_field(rng, 2, 2, 1.0);
  double sq = 0.0;
  for (const auto& e : f.entries) sq += std::norm(e.c);
  EXPECT_NEAR(sobolev_norm(f, 0.0), std::sqrt(sq), 1e-13 * std::sqrt(sq));
}

TEST(Translation, MultiplierAgreesWithShiftedEvaluation) {
  DetRng rng(3);
  TorusField f = random_field(rng, 2, 2, 1.0);
  std::vector<double> kappa = {0.13, -0.42, 0.07, 0.91};
  TorusField g = apply_translation_multiplier(f, kappa);
  for (int k = 0; k < 5; ++k) {
    std::vector<double> x(4);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    std::vector<double> xs(4);
    for (int a = 0; a < 4; ++a) xs[a] = x[a] + kappa[a];
    EXPECT_NEAR(std::abs(evaluate(g, x) - evaluate(f, xs)), 0.0, 1e-12);
  }
}

TEST(Translation, RoundTripRestoresCoefficients) {
  DetRng rng(4);
  TorusField f = random_field(rng, 2, 3, 1.0);
  std::vector<double> kappa = {std::sqrt(2.0), std::sqrt(3.0), -0.3, 0.77};
  std::vector<double> back = {-kappa[0], -kappa[1], -kappa[2], -kappa[3]};
  TorusField g = apply_translation_multiplier(apply_translation_multiplier(f, kappa), back);
  TorusField diff = field_add(f, g, 1.0, -1.0);
  EXPECT_LE(sobolev_norm(diff, 0.0), 1e-13 * sobolev_norm(f, 0.0));
}

TEST(Coboundary, MatchesDifferenceOfEvaluations) {
  DetRng rng(5);
  TorusField f = random_field(rng, 2, 2, 1.0);
  std::vector<double> kappa = {0.31, 0.17, -0.23, 0.05};
  TorusField d = coboundary_multiplier(f, kappa);
  std::vector<double> x = {0.2, 0.8, -0.4, 0.6};
  std::vector<double> xs = {x[0] + kappa[0], x[1] + kappa[1], x[2] + kappa[2], x[3] + kappa[3]};
  cplx expect = evaluate(f, xs) - evaluate(f, x);
  EXPECT_NEAR(std::abs(evaluate(d, x) - expect), 0.0, 1e-13);
}

TEST(Coboundary, RejectsNonzeroMean) {
  TorusField f = field_mode(2, midx_zero(), cplx(0.3, 0.0), true);
  f = field_add(f, field_mode(2, mk(1, 0, 0, 0), cplx(0.1, 0.0)));
  std::vector<double> kappa = {0.1, 0.2, 0.3, 0.4};
  EXPECT_THROW(coboundary_multiplier(f, kappa), NonZeroMean);
}

TEST(Smoothing, RaisedCosineShoulder) {
  SmoothingProfile prof;
  prof.t = 10.0;
  EXPECT_EQ(prof.weight(4.9), 1.0);
  EXPECT_EQ(prof.weight(5.0), 1.0);
  EXPECT_EQ(prof.weight(10.0), 0.0);
  EXPECT_EQ(prof.weight(12.0), 0.0);
  EXPECT_NEAR(prof.weight(7.5), 0.5, 1e-15);
}

TEST(Smoothing, PinsTheAverage) {
  TorusField f = field_mode(2, midx_zero(), cplx(0.7, 0.0), true);
  f = field_add(f, field_mode(2, mk(9, 9, 9, 9), cplx(0.2, 0.0)));
  SmoothingProfile prof;
  prof.t = 4.0;
  TorusField s = smoothing_apply(f, prof);
  EXPECT_NEAR(std::abs(s.mean() - cplx(0.7, 0.0)), 0.0, 0.0);
  EXPECT_EQ(s.entries.size(), 1u);  // the far mode is gone
}

TEST(GridSamples, AgreeWithDirectEvaluation) {
  DetRng rng(6);
  TorusField f = random_field(rng, 2, 1, 1.0);
  int G = 5;
  std::vector<cplx> samples = grid_samples(f, G);
  // row major, axis 0 slowest
  std::vector<int> idx = {1, 4, 2, 3};
  std::size_t flat = 0;
  for (int a = 0; a < 4; ++a) flat = flat * G + idx[a];
  std::vector<double> x(4);
  for (int a = 0; a < 4; ++a) x[a] = double(idx[a]) / G;
  EXPECT_NEAR(std::abs(samples[flat] - evaluate(f, x)), 0.0, 1e-12);
}

TEST(FitFromSamples, RoundTripsRandomField) {
  DetRng rng(7);
  TorusField f = random_field(rng, 2, 2, 1.0);
  int N = 2, G = 2 * N + 2;
  FitResult fit = fit_from_samples(grid_samples(f, G), 2, G, N, true);
  EXPECT_FALSE(fit.alias_risk);
  TorusField diff = field_add(f, fit.field, 1.0, -1.0);
  EXPECT_LE(sobolev_norm(diff, 0.0), 1e-12 * sobolev_norm(f, 0.0));
}

TEST(FitFromSamples, RejectsUnresolvableCutoff) {
  std::vector<cplx> samples(3 * 3 * 3 * 3, cplx(0.0, 0.0));
  EXPECT_THROW(fit_from_samples(samples, 2, 3, 2), BadInput);
}

TEST(FieldProduct, ModesAddAndCoefficientsMultiply) {
  TorusField a = field_mode(2, mk(1, 0, 2, 0), cplx(2.0, 1.0));
  TorusField b = field_mode(2, mk(0, 3, -1, 1), cplx(0.5, -0.5));
  TorusField p = field_product(a, b);
  ASSERT_EQ(p.entries.size(), 1u);
  EXPECT_EQ(p.entries[0].m, mk(1, 3, 1, 1));
  EXPECT_NEAR(std::abs(p.entries[0].c - cplx(2.0, 1.0) * cplx(0.5, -0.5)), 0.0, 1e-15);
}

TEST(FieldProduct, MatchesPointwiseProduct) {
  DetRng rng(8);
  TorusField a = random_field(rng, 2, 2, 1.0);
  TorusField b = random_field(rng, 2, 1, 1.0);
  TorusField p = field_product(a, b);
  for (int k = 0; k < 4; ++k) {
    std::vector<double> x(4);
    for (double& v : x) v = rng.uniform(0.0, 1.0);
    cplx expect = evaluate(a, x) * evaluate(b, x);
    EXPECT_NEAR(std::abs(evaluate(p, x) - expect), 0.0, 1e-11);
  }
}

TEST(RandomField, MeanFreeSymmetricAndReproducible) {
  DetRng rng1(42), rng2(42);
  TorusField f1 = random_field(rng1, 2, 2, 0.7);
  TorusField f2 = random_field(rng2, 2, 2, 0.7);
  EXPECT_TRUE(f1.real_valued);
  EXPECT_EQ(std::abs(f1.mean()), 0.0);
  EXPECT_LE(f1.symmetry_defect(), 1e-15);
  ASSERT_EQ(f1.entries.size(), f2.entries.size());
  for (std::size_t i = 0; i < f1.entries.size(); ++i) {
    EXPECT_EQ(f1.entries[i].m, f2.entries[i].m);
    EXPECT_EQ(f1.entries[i].c, f2.entries[i].c);
  }
}

TEST(Normalize, ProjectsRealFieldOntoSymmetricSubspace) {
  TorusField f = field_zero(2, true);
  // deliberately unbalanced pair plus an orphan and a complex constant
  f.entries.push_back({mk(1, 0, 0, 0), cplx(0.4, 0.1)});
  f.entries.push_back({mk(-1, 0, 0, 0), cplx(0.2, 0.3)});
  f.entries.push_back({mk(0, 2, 0, 0), cplx(0.6, 0.0)});
  f.entries.push_back({midx_zero(), cplx(0.5, 0.7)});
  f.normalize();
  EXPECT_LE(f.symmetry_defect(), 1e-16);
  const cplx* c0 = f.find(midx_zero());
  ASSERT_NE(c0, nullptr);
  EXPECT_EQ(*c0, cplx(0.5, 0.0));
  const cplx* cp = f.find(mk(1, 0, 0, 0));
  ASSERT_NE(cp, nullptr);
  EXPECT_EQ(*cp, 0.5 * (cplx(0.4, 0.1) + std::conj(cplx(0.2, 0.3))));
  // the orphan was halved and mirrored
  const cplx* co = f.find(mk(0, -2, 0, 0));
  ASSERT_NE(co, nullptr);
  EXPECT_EQ(*co, cplx(0.3, 0.0));
}

TEST(Prune, KeepsConjugatePairsTogether) {
  TorusField f = field_zero(2, true);
  f.entries.push_back({mk(1, 0, 0, 0), cplx(1.0, 0.0)});
  f.entries.push_back({mk(-1, 0, 0, 0), cplx(1.0, 0.0)});
  f.entries.push_back({mk(0, 1, 0, 0), cplx(1e-16, 1e-16)});
  f.entries.push_back({mk(0, -1, 0, 0), cplx(1e-16, -1e-16)});
  f.normalize();
  f.prune(1e-13);
  EXPECT_EQ(f.entries.size(), 2u);
  EXPECT_LE(f.symmetry_defect(), 1e-16);
}

TEST(Validate, FlagsBrokenSymmetryInjectedPastNormalize) {
  TorusField f = field_zero(2, true);
  f.entries.push_back({mk(1, 0, 0, 0), cplx(0.4, 0.1)});
  f.cutoff = 1;
  EXPECT_THROW(f.validate(), InternalCheck);
}

TEST(Parseval, GridMeanSquareMatchesCoefficientSum) {
  DetRng rng(9);
  TorusField f = random_field(rng, 2, 2, 1.0);
  int G = 8;
  std::vector<cplx> s = grid_samples(f, G);
  double grid_sq = 0.0;
  for (const cplx& v : s) grid_sq += std::norm(v);
  grid_sq /= double(s.size());
  double coef_sq = 0.0;
  for (const auto& e : f.entries) coef_sq += std::norm(e.c);
  EXPECT_NEAR(grid_sq, coef_sq, 1e-12 * coef_sq);
}

}  // namespace
}  // namespace heiskam
