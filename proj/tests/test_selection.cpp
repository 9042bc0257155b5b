#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "oracles.hpp"
#include "pisces/dbscan.hpp"
#include "pisces/selection.hpp"

using namespace pisces;

namespace {

ClientProfile measured(ClientId id, double rms, std::vector<Version> staleness = {}, double latency = 1.0) {
  ClientProfile p;
  p.id = id;
  p.sample_count = 10;
  p.last_aggregate_rms = rms;
  p.staleness_history = std::move(staleness);
  p.profiled_latency = latency;
  return p;
}

std::set<std::set<std::size_t>> as_sets(const DbscanResult& r) {
  std::set<std::set<std::size_t>> out;
  for (const auto& c : r.clusters) out.insert({c.begin(), c.end()});
  return out;
}

std::set<std::set<std::size_t>> oracle_sets(const std::vector<int>& labels) {
  std::map<int, std::set<std::size_t>> by;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) by[labels[i]].insert(i);
  }
  std::set<std::set<std::size_t>> out;
  for (auto& [k, s] : by) out.insert(s);
  return out;
}

}  // namespace

TEST(StalenessEstimate, Examples) {
  EXPECT_DOUBLE_EQ(staleness_estimate(std::vector<Version>{2, 3, 4}, 3), 3.0);
  EXPECT_DOUBLE_EQ(staleness_estimate(std::vector<Version>{}, 5), 0.0);
  EXPECT_DOUBLE_EQ(staleness_estimate(std::vector<Version>{1, 2, 3, 4, 5}, 3), 4.0);
  EXPECT_DOUBLE_EQ(staleness_estimate(std::vector<Version>{7}, 5), 7.0);
  try {
    staleness_estimate(std::vector<Version>{1}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidWindow);
  }
}

TEST(PiscesUtility, Examples) {
  EXPECT_DOUBLE_EQ(pisces_utility(4.0, 0.0, 0.5), 4.0);
  EXPECT_NEAR(pisces_utility(7.0710678, 3.0, 0.5), 3.5355339, 1e-7);
  EXPECT_LT(pisces_utility(2.0, 5.0, 0.5), pisces_utility(2.0, 1.0, 0.5));
  try {
    pisces_utility(-1.0, 0.0, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NegativeInput);
  }
}

TEST(OortUtility, Examples) {
  EXPECT_DOUBLE_EQ(oort_utility(10, 4, 5, 2), 10.0);
  EXPECT_DOUBLE_EQ(oort_utility(10, 10, 5, 2), 2.5);
  EXPECT_DOUBLE_EQ(oort_utility(10, 10, 5, 0), 10.0);
  try {
    oort_utility(10, 0, 5, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonPositiveLatency);
  }
}

TEST(Utilities, ScaleCovariant) {
  RngStream r(31);
  for (int i = 0; i < 50; ++i) {
    const double rms = r.uniform(0, 10), c = r.uniform(0.1, 10), tau = r.uniform(0, 8);
    const double t = r.uniform(0.1, 10), T = r.uniform(0.1, 10), alpha = r.uniform(0, 3);
    EXPECT_NEAR(pisces_utility(c * rms, tau, 0.5), c * pisces_utility(rms, tau, 0.5), 1e-12 * c * rms + 1e-300);
    EXPECT_NEAR(oort_utility(c * rms, t, T, alpha), c * oort_utility(rms, t, T, alpha), 1e-12 * c * rms + 1e-300);
  }
}

TEST(ObserveLatency, RunningMean) {
  ClientProfile p;
  observe_latency(p, 4.0);
  EXPECT_DOUBLE_EQ(p.profiled_latency, 4.0);
  ClientProfile q;
  observe_latency(q, 2.0);
  observe_latency(q, 4.0);
  observe_latency(q, 6.0);
  EXPECT_DOUBLE_EQ(q.profiled_latency, 4.0);
  ClientProfile r;
  for (double v : {6.0, 2.0, 4.0}) observe_latency(r, v);
  EXPECT_DOUBLE_EQ(r.profiled_latency, q.profiled_latency);
  EXPECT_THROW(observe_latency(r, 0.0), Error);
  EXPECT_THROW(observe_latency(r, -1.0), Error);
}

TEST(SelectPisces, TopUtilities) {
  std::vector<ClientProfile> ps{measured(0, 3), measured(1, 1), measured(2, 2)};
  SelectionConfig cfg;
  EXPECT_EQ(select_pisces(ps, cfg, 2), (std::vector<ClientId>{0, 2}));
}

TEST(SelectPisces, TieBrokenById) {
  std::vector<ClientProfile> ps{measured(1, 1), measured(0, 1)};
  SelectionConfig cfg;
  EXPECT_EQ(select_pisces(ps, cfg, 1), (std::vector<ClientId>{0}));
}

TEST(SelectPisces, QuotaExceedsSupply) {
  std::vector<ClientProfile> ps{measured(0, 3), measured(1, 1), measured(2, 2)};
  SelectionConfig cfg;
  EXPECT_EQ(select_pisces(ps, cfg, 5).size(), 3u);
}

TEST(SelectPisces, UnmeasuredFirstThenStalenessPenalty) {
  std::vector<ClientProfile> ps{measured(0, 4.0, {8, 8}), measured(1, 3.0, {0}), ClientProfile{}, ClientProfile{}};
  ps[2].id = 2;
  ps[2].sample_count = 5;
  ps[3].id = 3;
  ps[3].sample_count = 5;
  SelectionConfig cfg;
  // Client 0: 4/3 = 1.33; client 1: 3.
  EXPECT_EQ(select_pisces(ps, cfg, 3), (std::vector<ClientId>{2, 3, 1}));
}

TEST(SelectPisces, NeverBusyBlacklistedOrDuplicate) {
  RngStream r(41);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ClientProfile> ps;
    for (ClientId i = 0; i < 15; ++i) {
      auto p = measured(i, r.uniform(0, 5), {static_cast<Version>(r.below(4))});
      if (r.uniform() < 0.3) p.last_aggregate_rms.reset();
      p.busy = r.uniform() < 0.2;
      p.blacklisted = r.uniform() < 0.2;
      ps.push_back(p);
    }
    const std::size_t quota = r.below(12);
    const auto out = select_pisces(ps, SelectionConfig{}, quota);
    EXPECT_LE(out.size(), quota);
    std::set<ClientId> uniq(out.begin(), out.end());
    EXPECT_EQ(uniq.size(), out.size());
    for (ClientId id : out) {
      EXPECT_FALSE(ps[id].busy);
      EXPECT_FALSE(ps[id].blacklisted);
    }
  }
}

TEST(SelectPisces, TinyBetaRanksByDataQuality) {
  RngStream r(42);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ClientProfile> ps;
    for (ClientId i = 0; i < 10; ++i) ps.push_back(measured(i, r.uniform(0, 10), {static_cast<Version>(r.below(20))}));
    SelectionConfig cfg;
    cfg.beta = 1e-9;
    const auto out = select_pisces(ps, cfg, 10);
    std::vector<ClientId> by_rms(10);
    std::iota(by_rms.begin(), by_rms.end(), 0u);
    std::sort(by_rms.begin(), by_rms.end(),
              [&](ClientId a, ClientId b) { return *ps[a].last_aggregate_rms > *ps[b].last_aggregate_rms; });
    EXPECT_EQ(out, by_rms);
  }
}

TEST(SelectOort, SinglePositiveMass) {
  std::vector<ClientProfile> ps{measured(0, 1), measured(1, 0), measured(2, 0)};
  SelectionConfig cfg;
  cfg.policy = Policy::Oort;
  RngStream r(1);
  for (int i = 0; i < 200; ++i) EXPECT_EQ(select_oort(ps, cfg, 1, r), (std::vector<ClientId>{0}));
}

TEST(SelectOort, ProportionalAndUniformFallback) {
  SelectionConfig cfg;
  cfg.policy = Policy::Oort;
  RngStream r(2);
  for (double u : {1.0, 0.0}) {
    std::vector<ClientProfile> ps{measured(0, u), measured(1, u)};
    int a = 0;
    for (int i = 0; i < 10000; ++i) a += select_oort(ps, cfg, 1, r)[0] == 0;
    EXPECT_GE(a, 4500);
    EXPECT_LE(a, 5500);
  }
}

TEST(SelectOort, WithoutReplacementAndLatencyPenalty) {
  SelectionConfig cfg;
  cfg.policy = Policy::Oort;
  cfg.oort_T = 1.0;
  cfg.oort_alpha = 2.0;
  // Client 1 is 3x over T: utility 1/9 of client 0's.
  std::vector<ClientProfile> ps{measured(0, 1, {}, 1.0), measured(1, 1, {}, 3.0)};
  RngStream r(3);
  int slow = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto out = select_oort(ps, cfg, 2, r);
    ASSERT_EQ(out.size(), 2u);
    ASSERT_NE(out[0], out[1]);
    slow += out[0] == 1;
  }
  EXPECT_NEAR(slow / 10000.0, 0.1, 0.015);
}

TEST(SelectRandom, UniformOverEligible) {
  std::vector<ClientProfile> ps{measured(0, 1), measured(1, 1), measured(2, 1)};
  ps[1].blacklisted = true;
  RngStream r(4);
  std::map<ClientId, int> c;
  for (int i = 0; i < 6000; ++i) ++c[select_random(ps, 1, r)[0]];
  EXPECT_EQ(c.count(1), 0u);
  EXPECT_NEAR(c[0], 3000, 200);
}

TEST(Dbscan, Examples) {
  const std::vector<double> p{1.0, 1.1, 1.2, 9.0};
  const auto r = dbscan_1d(p, 0.5, 2);
  ASSERT_EQ(r.clusters.size(), 1u);
  EXPECT_EQ(r.clusters[0], (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(r.outliers, (std::vector<std::size_t>{3}));

  const std::vector<double> same(6, 2.5);
  const auto s = dbscan_1d(same, 0.1, 6);
  ASSERT_EQ(s.clusters.size(), 1u);
  EXPECT_TRUE(s.outliers.empty());

  const std::vector<double> one{4.0};
  EXPECT_EQ(dbscan_1d(one, 1.0, 2).outliers, (std::vector<std::size_t>{0}));
  EXPECT_THROW(dbscan_1d(std::vector<double>{}, 1.0, 2), Error);
}

TEST(Dbscan, MatchesBruteForceOracle) {
  RngStream r(51);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + r.below(40);
    std::vector<double> p(n);
    for (double& v : p) v = std::round(r.uniform(0, 20) * 4) / 4;  // quarter grid forces ties
    const double eps = 0.25 + 0.25 * static_cast<double>(r.below(4));
    const std::size_t min_pts = 1 + r.below(5);
    const auto got = dbscan_1d(p, eps, min_pts);
    const auto want = oracle::dbscan_labels(p, eps, min_pts);
    EXPECT_EQ(as_sets(got), oracle_sets(want)) << "trial " << trial;
    std::vector<std::size_t> outl;
    for (std::size_t i = 0; i < n; ++i) {
      if (want[i] < 0) outl.push_back(i);
    }
    EXPECT_EQ(got.outliers, outl);
  }
}

TEST(Dbscan, OrderIndependent) {
  RngStream r(52);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + r.below(30);
    std::vector<double> p(n);
    for (double& v : p) v = std::round(r.uniform(0, 10) * 2) / 2;
    const auto perm = r.permutation(n);
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = p[perm[i]];
    const auto a = dbscan_1d(p, 0.5, 3);
    const auto b = dbscan_1d(q, 0.5, 3);
    // Map b's indices back to p's.
    std::set<std::set<std::size_t>> mapped;
    for (const auto& c : b.clusters) {
      std::set<std::size_t> s;
      for (std::size_t i : c) s.insert(perm[i]);
      mapped.insert(s);
    }
    EXPECT_EQ(as_sets(a), mapped);
    std::set<std::size_t> ob;
    for (std::size_t i : b.outliers) ob.insert(perm[i]);
    EXPECT_EQ(std::set<std::size_t>(a.outliers.begin(), a.outliers.end()), ob);
  }
}

TEST(Dbscan, EveryIndexExactlyOnce) {
  RngStream r(53);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(1 + r.below(50));
    for (double& v : p) v = r.normal();
    const auto res = dbscan_1d(p, 0.3, 3);
    std::vector<int> seen(p.size(), 0);
    for (const auto& c : res.clusters) {
      for (std::size_t i : c) ++seen[i];
    }
    for (std::size_t i : res.outliers) ++seen[i];
    for (int s : seen) EXPECT_EQ(s, 1);
  }
}

TEST(CreditUpdate, OutlierLosesOneCredit) {
  std::vector<ClientProfile> ps(4);
  for (ClientId i = 0; i < 4; ++i) {
    ps[i].id = i;
    ps[i].reliability_credits = 2;
  }
  const std::vector<PooledLoss> pool{{0, 1.0, 3}, {1, 1.05, 3}, {2, 0.95, 4}, {3, 9.0, 4}};
  const VersionWindow w{0, 5};
  EXPECT_TRUE(credit_update(ps, pool, w).empty());
  EXPECT_EQ(ps[3].reliability_credits, 1);
  for (ClientId i = 0; i < 3; ++i) EXPECT_EQ(ps[i].reliability_credits, 2);
  EXPECT_EQ(credit_update(ps, pool, w), (std::vector<ClientId>{3}));
  EXPECT_TRUE(ps[3].blacklisted);
  EXPECT_EQ(ps[3].reliability_credits, 0);
  // Blacklisted clients leave the pool; the rest is a single cluster.
  EXPECT_TRUE(credit_update(ps, pool, w).empty());
  for (ClientId i = 0; i < 3; ++i) EXPECT_EQ(ps[i].reliability_credits, 2);
}

TEST(CreditUpdate, SmallPoolSkipped) {
  std::vector<ClientProfile> ps(1);
  ps[0].reliability_credits = 1;
  const std::vector<PooledLoss> pool{{0, 100.0, 0}};
  EXPECT_TRUE(credit_update(ps, pool, VersionWindow{0, 0}).empty());
  EXPECT_EQ(ps[0].reliability_credits, 1);
}

TEST(CreditUpdate, WindowAndNonFiniteFiltered) {
  std::vector<ClientProfile> ps(5);
  for (ClientId i = 0; i < 5; ++i) ps[i].id = i;
  const std::vector<PooledLoss> pool{{0, 1.0, 5}, {1, 1.0, 5}, {2, 1.0, 6}, {3, 50.0, 1}, {4, NAN, 5}};
  credit_update(ps, pool, VersionWindow{4, 6});
  for (const auto& p : ps) EXPECT_EQ(p.reliability_credits, 3);
}

TEST(CreditUpdate, CreditsNeverIncreaseAndBlacklistGrows) {
  RngStream r(61);
  std::vector<ClientProfile> ps(12);
  for (ClientId i = 0; i < 12; ++i) ps[i].id = i;
  std::set<ClientId> black;
  for (int round = 0; round < 40; ++round) {
    std::vector<PooledLoss> pool;
    for (ClientId i = 0; i < 12; ++i) pool.push_back({i, i < 2 ? r.uniform(20, 40) : r.uniform(0.9, 1.1), 0});
    const auto before = ps;
    for (ClientId id : credit_update(ps, pool, VersionWindow{0, 0})) black.insert(id);
    for (ClientId i = 0; i < 12; ++i) {
      EXPECT_LE(ps[i].reliability_credits, before[i].reliability_credits);
      EXPECT_GE(before[i].reliability_credits - ps[i].reliability_credits, 0);
      EXPECT_LE(before[i].reliability_credits - ps[i].reliability_credits, 1);
      if (before[i].blacklisted) EXPECT_TRUE(ps[i].blacklisted);
      EXPECT_EQ(ps[i].blacklisted, ps[i].reliability_credits == 0);
    }
  }
  EXPECT_EQ(black, (std::set<ClientId>{0, 1}));
}
