#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mteforge/agreement.hpp"
#include "mteforge/random.hpp"
#include "synth.hpp"

using namespace mteforge;
using namespace mteforge::agreement;

namespace {

double naive_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Rank of x[i] = (count below) + (count equal + 1)/2.
std::vector<double> naive_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double below = 0, equal = 0;
    for (double v : x) {
      below += v < x[i];
      equal += v == x[i];
    }
    r[i] = below + (equal + 1) / 2;
  }
  return r;
}

double naive_kendall(const std::vector<double>& x, const std::vector<double>& y) {
  double c = 0, d = 0, tx = 0, ty = 0, n0 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      ++n0;
      const double a = x[i] - x[j], b = y[i] - y[j];
      if (a == 0) ++tx;
      if (b == 0) ++ty;
      if (a * b > 0) ++c;
      if (a * b < 0) ++d;
    }
  }
  return (c - d) / std::sqrt((n0 - tx) * (n0 - ty));
}

std::vector<double> random_vec(Rng& rng, std::size_t n, bool ties) {
  std::vector<double> v(n);
  for (auto& x : v) x = ties ? static_cast<double>(rng.index(6)) : rng.normal();
  return v;
}

}  // namespace

TEST(Pearson, Basics) {
  const std::vector<double> x = {1, 2, 3, 4, 7};
  std::vector<double> neg;
  for (double v : x) neg.push_back(-v);
  EXPECT_NEAR(pearson(x, x), 1.0, 1e-15);
  EXPECT_NEAR(pearson(x, neg), -1.0, 1e-15);
  EXPECT_THROW(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}), DegenerateInput);
  EXPECT_THROW(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DegenerateInput);
  EXPECT_THROW(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}), LengthMismatch);
}

TEST(Pearson, TenElementDefinitional) {
  const std::vector<double> x = {3.1, 0.2, 5.5, 2.0, 9.9, 4.4, 1.0, 7.7, 6.1, 8.0};
  const std::vector<double> y = {2.0, 1.1, 4.9, 3.3, 8.1, 3.9, 0.5, 6.6, 7.2, 9.4};
  EXPECT_NEAR(pearson(x, y), naive_pearson(x, y), 1e-12);
}

TEST(Spearman, Basics) {
  std::vector<double> x = {0.1, 0.5, 0.9, 1.5, 3.0};
  std::vector<double> rev(x.rbegin(), x.rend());
  EXPECT_NEAR(spearman(x, std::vector<double>{1, 2, 3, 4, 5}), 1.0, 1e-15);
  EXPECT_NEAR(spearman(x, rev), -1.0, 1e-15);
}

TEST(Spearman, TiesUseAverageRanks) {
  const std::vector<double> x = {1, 2, 2, 3}, y = {10, 20, 20, 40};
  EXPECT_EQ(average_ranks(x), (std::vector<double>{1, 2.5, 2.5, 4}));
  EXPECT_NEAR(spearman(x, y), naive_pearson(naive_ranks(x), naive_ranks(y)), 1e-12);
  EXPECT_NEAR(spearman(x, y), 1.0, 1e-12);
}

TEST(Spearman, AllTiedIsDegenerate) {
  EXPECT_THROW(spearman(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}), DegenerateInput);
}

TEST(Kendall, Basics) {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  EXPECT_NEAR(kendall_tau_b(x, x), 1.0, 1e-15);
  EXPECT_NEAR(kendall_tau_b(x, std::vector<double>{5, 4, 3, 2, 1}), -1.0, 1e-15);
  EXPECT_THROW(kendall_tau_b(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}),
               DegenerateInput);
}

TEST(Kendall, EightWithTiesMatchesPairEnumeration) {
  const std::vector<double> x = {1, 2, 2, 3, 4, 4, 4, 5};
  const std::vector<double> y = {2, 1, 3, 3, 5, 4, 6, 6};
  EXPECT_NEAR(kendall_tau_b(x, y), naive_kendall(x, y), 1e-12);
}

TEST(Correlations, RandomVectorsMatchNaive) {
  Rng rng(42);
  for (int t = 0; t < 200; ++t) {
    const bool ties = t % 2 == 1;
    const std::size_t n = 3 + rng.index(60);
    const auto x = random_vec(rng, n, ties), y = random_vec(rng, n, ties);
    const auto rx = naive_ranks(x), ry = naive_ranks(y);
    double np, ns, nk;
    try {
      np = naive_pearson(x, y);
      ns = naive_pearson(rx, ry);
      nk = naive_kendall(x, y);
    } catch (...) {
      continue;
    }
    if (!std::isfinite(np) || !std::isfinite(nk)) continue;
    EXPECT_NEAR(pearson(x, y), np, 1e-10);
    EXPECT_NEAR(spearman(x, y), ns, 1e-10);
    EXPECT_NEAR(kendall_tau_b(x, y), nk, 1e-10);
    // Symmetry in the arguments.
    EXPECT_NEAR(pearson(y, x), pearson(x, y), 1e-14);
    EXPECT_NEAR(spearman(y, x), spearman(x, y), 1e-14);
    EXPECT_NEAR(kendall_tau_b(y, x), kendall_tau_b(x, y), 1e-14);
  }
}

TEST(Correlations, SpearmanEqualsPearsonOfRanks) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const auto x = random_vec(rng, 25, true), y = random_vec(rng, 25, false);
    EXPECT_EQ(spearman(x, y), pearson(average_ranks(x), average_ranks(y)));
  }
}

TEST(Icc, IdenticalColumnsGiveOne) {
  const std::vector<double> a = {1, 5, 3, 8, 2, 9};
  EXPECT_NEAR(icc3k(RatingMatrix::from_columns(a, a)), 1.0, 1e-12);
  std::vector<double> shifted;
  for (double v : a) shifted.push_back(v + 7.5);
  EXPECT_NEAR(icc3k(RatingMatrix::from_columns(a, shifted)), 1.0, 1e-12);
}

TEST(Icc, SixByTwoHandAnova) {
  // Grand mean 71/12. Row means 5.5,3.5,6,4,7.5,4; column means 46/6, 25/6.
  // SS_rows = 2*sum (rowmean-gm)^2 = 281/12, SS_cols = 961/12,
  // SS_total = 1283/12, SS_E = 41/12. MS_R = 281/60, MS_E = 41/60.
  const RatingMatrix m(6, 2, {9, 2, 6, 1, 8, 4, 7, 1, 10, 5, 6, 2});
  const auto t = two_way_anova(m);
  EXPECT_NEAR(t.ms_rows, 281.0 / 60.0, 1e-12);
  EXPECT_NEAR(t.ms_cols, 961.0 / 12.0, 1e-12);
  EXPECT_NEAR(t.ms_error, 41.0 / 60.0, 1e-12);
  EXPECT_NEAR(t.ss_total, 1283.0 / 12.0, 1e-12);
  EXPECT_NEAR(icc3k(m), 240.0 / 281.0, 1e-9);
}

TEST(Icc, InvarianceUnderShifts) {
  Rng rng(8);
  RatingMatrix m(10, 2);
  for (std::size_t i = 0; i < 10; ++i) {
    m.at(i, 0) = rng.normal();
    m.at(i, 1) = m.at(i, 0) + rng.normal(0, 0.5);
  }
  const double base = icc3k(m);
  RatingMatrix a = m, b = m;
  for (std::size_t i = 0; i < 10; ++i) {
    a.at(i, 1) += 3.0;
    b.at(i, 0) += 11.0;
    b.at(i, 1) += 11.0;
  }
  EXPECT_NEAR(icc3k(a), base, 1e-12);
  EXPECT_NEAR(icc3k(b), base, 1e-12);
}

TEST(Icc, Errors) {
  EXPECT_THROW(icc3k(RatingMatrix(2, 2, {1, 2, 3, 4})), InvalidArgument);
  EXPECT_THROW(icc3k(RatingMatrix(3, 1, {1, 2, 3})), InvalidArgument);
  EXPECT_THROW(icc3k(RatingMatrix(3, 2, {1, 2, 1, 2, 1, 2})), DegenerateInput);
}

struct GateRow {
  const char* lp;
  double p, s, icc;
  Gate expected;
};

TEST(Gate, AgreementTableRows) {
  const GateRow rows[] = {
      {"eng-amh", .597, .653, .747, Gate::Pass}, {"eng-hau", .406, .476, .573, Gate::Pass},
      {"eng-ibo", .314, .253, .358, Gate::Fail}, {"eng-kik", .735, .776, .847, Gate::Pass},
      {"eng-kin", .486, .513, .632, Gate::Pass}, {"eng-luo", .735, .724, .842, Gate::Pass},
      {"eng-twi", .757, .772, .862, Gate::Pass}, {"eng-yor", .567, .520, .723, Gate::Pass},
      {"eng-zul", .249, .107, .392, Gate::Fail}, {"fra-ewe", .560, .612, .694, Gate::Pass},
      {"fra-lin", .399, .339, .570, Gate::Fail}, {"fra-wol", .592, .648, .741, Gate::Pass},
      {"por-vmw", .620, .580, .764, Gate::Pass}, {"por-nya", .812, .751, .896, Gate::Pass},
  };
  for (const auto& r : rows) EXPECT_EQ(agreement_gate(r.p, r.s, r.icc), r.expected) << r.lp;
}

TEST(Gate, StrictInequalities) {
  EXPECT_EQ(agreement_gate(0.4, 0.9, 0.9), Gate::Fail);
  EXPECT_EQ(agreement_gate(0.9, 0.4, 0.9), Gate::Fail);
  EXPECT_EQ(agreement_gate(0.9, 0.9, 0.5), Gate::Fail);
  EXPECT_EQ(agreement_gate(0.4001, 0.4001, 0.5001), Gate::Pass);
}

TEST(Overlap, PairsItemsAndUsesZScores) {
  Rng rng(12);
  std::vector<corpus::AnnotationRecord> recs;
  std::vector<double> a, b;
  for (int i = 0; i < 30; ++i) {
    const double q = rng.uniform(10, 90);
    const std::string src = "src" + std::to_string(i), mt = "mt" + std::to_string(i);
    a.push_back(q);
    b.push_back(0.5 * q + 20 + rng.normal(0, 5));
    recs.push_back(synth::rec("a" + std::to_string(i), a.back(), src, mt, "r", "eng-yor", "d", "ev1"));
  }
  // The second evaluator's records arrive in reverse order.
  for (int i = 29; i >= 0; --i) {
    recs.push_back(synth::rec("b" + std::to_string(i), b[i], "src" + std::to_string(i),
                              "mt" + std::to_string(i), "r", "eng-yor", "d", "ev2"));
  }
  const auto rep = overlap_agreement(recs, false);
  EXPECT_EQ(rep.n, 30u);
  EXPECT_EQ(rep.lp.to_string(), "eng-yor");
  // z-scoring is affine per evaluator, so Pearson/Spearman/Kendall equal raw ones.
  EXPECT_NEAR(rep.pearson, naive_pearson(a, b), 1e-10);
  EXPECT_NEAR(rep.spearman, naive_pearson(naive_ranks(a), naive_ranks(b)), 1e-10);
  EXPECT_NEAR(rep.kendall, naive_kendall(a, b), 1e-10);
  // ICC on z-scores differs from ICC on raw scores with unequal scales.
  auto z = [](std::vector<double> v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / (v.size() - 1));
    for (auto& x : v) x = (x - m) / sd;
    return v;
  };
  EXPECT_NEAR(rep.icc3k, icc3k(RatingMatrix::from_columns(z(a), z(b))), 1e-10);
  EXPECT_EQ(rep.gate, agreement_gate(rep.pearson, rep.spearman, rep.icc3k));
  EXPECT_EQ(rep.included, rep.gate == Gate::Pass);
}

TEST(Overlap, ForceIncludeDoesNotMoveGate) {
  std::vector<corpus::AnnotationRecord> recs;
  const double a[] = {10, 20, 30, 40, 50}, b[] = {50, 10, 40, 20, 30};
  for (int i = 0; i < 5; ++i) {
    const auto s = "s" + std::to_string(i);
    recs.push_back(synth::rec("a" + s, a[i], s, "m", "r", "fra-lin", "d", "x"));
    recs.push_back(synth::rec("b" + s, b[i], s, "m", "r", "fra-lin", "d", "y"));
  }
  const auto rep = overlap_agreement(recs, true);
  EXPECT_EQ(rep.gate, Gate::Fail);
  EXPECT_TRUE(rep.included);
}

TEST(Overlap, RequiresTwoEvaluators) {
  std::vector<corpus::AnnotationRecord> recs = {synth::rec("a", 1, "s1"), synth::rec("b", 2, "s2"),
                                                synth::rec("c", 3, "s3")};
  EXPECT_THROW(overlap_agreement(recs, false), InvalidArgument);
}
