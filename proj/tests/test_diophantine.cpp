#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "heiskam/diophantine.hpp"

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

TEST(MakePair, CertifiesTheCanonicalPair) {
  FrequencyPair pair = default_pair();
  EXPECT_GT(pair.c, 0.0);
  EXPECT_DOUBLE_EQ(pair.c, 0.19137191714035978);
  EXPECT_DOUBLE_EQ(pair.c_block_form, pair.c_full_form);
  EXPECT_NEAR(pair.tau, std::sqrt(5.0), 1e-15);
  EXPECT_NEAR(pair.eta_norm, std::sqrt(5.0), 1e-15);
}

TEST(MakePair, WorstWitnessesAreSymmetricUnderBlockSwap) {
  FrequencyPair pair = default_pair();
  ASSERT_EQ(pair.worst_tau.m.size(), 2u);
  EXPECT_EQ(pair.worst_tau.m[0], -5);
  EXPECT_EQ(pair.worst_tau.m[1], -4);
  EXPECT_EQ(pair.worst_tau.p, -14);
  EXPECT_EQ(pair.worst_eta.m[0], -4);
  EXPECT_EQ(pair.worst_eta.m[1], 5);
  EXPECT_EQ(pair.worst_eta.p, -14);
  EXPECT_DOUBLE_EQ(pair.worst_tau.dist, pair.worst_eta.dist);
  // score = dist * |m|^{2 gamma} and the certified constant is the minimum
  double mm = 25.0 + 16.0;
  EXPECT_DOUBLE_EQ(pair.worst_tau.score, pair.worst_tau.dist * std::pow(mm, pair.gamma));
  EXPECT_DOUBLE_EQ(pair.c, std::min(pair.worst_tau.score, pair.worst_eta.score));
}

TEST(MakePair, ConstantIsMonotoneInTheSearchBound) {
  double c4 = make_pair({std::sqrt(2.0), std::sqrt(3.0)}, {std::sqrt(3.0), -std::sqrt(2.0)}, 1.5, 4).c;
  double c50 = make_pair({std::sqrt(2.0), std::sqrt(3.0)}, {std::sqrt(3.0), -std::sqrt(2.0)}, 1.5, 50).c;
  double c200 = default_pair().c;
  EXPECT_GE(c4, c50);
  EXPECT_GE(c50, c200);
  EXPECT_DOUBLE_EQ(c50, c200);  // the binding witness sits inside bound 50
}

TEST(MakePair, RejectsNonOrthogonalDirections) {
  EXPECT_THROW(make_pair({1.0, 0.0}, {1.0, 1.0}), NotOrthogonal);
}

TEST(MakePair, RejectsResonantDirections) {
  // (1, sqrt2) hits an integer at m = (1, 0)
  EXPECT_THROW(make_pair({1.0, std::sqrt(2.0)}, {std::sqrt(2.0), -1.0}), DiophantineFailure);
}

TEST(FrequencyPair, DivisorVanishesExactlyOnItsStratum) {
  FrequencyPair pair = default_pair();
  EXPECT_EQ(pair.zeta_tau(mk(0, 0, 3, 1)), cplx(0.0, 0.0));
  EXPECT_TRUE(pair.block_tau_zero(mk(0, 0, 3, 1)));
  EXPECT_GT(std::abs(pair.zeta_eta(mk(0, 0, 3, 1))), 0.0);
  EXPECT_EQ(pair.zeta_eta(mk(2, -1, 0, 0)), cplx(0.0, 0.0));
  EXPECT_GT(std::abs(pair.zeta_tau(mk(2, -1, 0, 0))), 0.0);
  EXPECT_EQ(pair.zeta_tau(midx_zero()), cplx(0.0, 0.0));
  EXPECT_EQ(pair.zeta_eta(midx_zero()), cplx(0.0, 0.0));
}

TEST(FrequencyPair, DivisorIsConjugateSymmetric) {
  FrequencyPair pair = default_pair();
  for (const MIdx& m : {mk(1, 2, -3, 0), mk(-5, -4, 1, 1), mk(0, 1, 0, -2)}) {
    cplx a = pair.zeta_tau(m);
    cplx b = pair.zeta_tau(midx_neg(m));
    EXPECT_NEAR(std::abs(b - std::conj(a)), 0.0, 1e-16);
    cplx ae = pair.zeta_eta(m);
    cplx be = pair.zeta_eta(midx_neg(m));
    EXPECT_NEAR(std::abs(be - std::conj(ae)), 0.0, 1e-16);
  }
}

TEST(FrequencyPair, EmbeddingsOccupyDisjointBlocks) {
  FrequencyPair pair = default_pair();
  std::vector<double> te = pair.tau_embedded();
  std::vector<double> ee = pair.eta_embedded();
  ASSERT_EQ(te.size(), 4u);
  EXPECT_EQ(te[2], 0.0);
  EXPECT_EQ(te[3], 0.0);
  EXPECT_EQ(ee[0], 0.0);
  EXPECT_EQ(ee[1], 0.0);
  EXPECT_DOUBLE_EQ(te[0], std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(ee[2], std::sqrt(3.0));
  EXPECT_DOUBLE_EQ(ee[3], -std::sqrt(2.0));
}

TEST(DivisorTable, MeasuredConstantsStayUnderTheCertifiedBound) {
  FrequencyPair pair = default_pair();
  DivisorTable table = small_divisor_table(pair, 8);
  std::size_t expect = 17u * 17u * 17u * 17u;
  EXPECT_EQ(table.entries.size(), expect);
  EXPECT_GT(table.const_tau, 0.0);
  EXPECT_GT(table.const_eta, 0.0);
  EXPECT_DOUBLE_EQ(table.cert_bound, std::pow(4.0 * kPi * kPi, -pair.gamma) / (4.0 * pair.c));
  EXPECT_LE(table.const_tau, table.cert_bound);
  EXPECT_LE(table.const_eta, table.cert_bound);
}

TEST(DivisorTable, RejectsCutoffBeyondTheCertifiedRange) {
  FrequencyPair pair = make_pair({std::sqrt(2.0), std::sqrt(3.0)},
                                 {std::sqrt(3.0), -std::sqrt(2.0)}, 1.5, 10);
  EXPECT_THROW(small_divisor_table(pair, 11), InternalCheck);
}

}  // namespace
}  // namespace heiskam
