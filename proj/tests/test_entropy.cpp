#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "klnn/entropy.hpp"
#include "testutil.hpp"

using namespace klnn;

namespace {

// Straight-line reference implementation of the degree-2 resubstitution
// estimate: brute-force neighbor sort, textbook moment sums, no shared code
// with the library.
double reference_klnn(const PointCloud& cloud, int k, int m, double bias) {
    const int n = cloud.n();
    const int d = cloud.d();
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto nbrs = testutil::brute_knn(cloud, i, std::min(m, n - 1));
        const double rho = nbrs[static_cast<std::size_t>(k) - 1].distance;
        double s0 = 0.0;
        std::vector<double> s1(static_cast<std::size_t>(d), 0.0);
        std::vector<double> s2(static_cast<std::size_t>(d) * d, 0.0);
        for (const auto& nb : nbrs) {
            double sq = 0.0;
            for (int a = 0; a < d; ++a) {
                const double diff = cloud.at(nb.index, a) - cloud.at(i, a);
                sq += diff * diff;
            }
            const double w = std::exp(-sq / (2.0 * rho * rho));
            s0 += w;
            for (int a = 0; a < d; ++a) {
                const double da = (cloud.at(nb.index, a) - cloud.at(i, a)) / rho;
                s1[a] += da * w;
                for (int b = 0; b < d; ++b)
                    s2[static_cast<std::size_t>(a) * d + b] +=
                        da * (cloud.at(nb.index, b) - cloud.at(i, b)) / rho * w;
            }
        }
        // sigma, det, inverse by textbook formulas (d <= 2 in these tests)
        double logdet, quad;
        if (d == 1) {
            const double sg = s2[0] / s0 - s1[0] * s1[0] / (s0 * s0);
            logdet = std::log(sg);
            quad = s1[0] * s1[0] / sg / (s0 * s0);
        } else {
            const double g00 = s2[0] / s0 - s1[0] * s1[0] / (s0 * s0);
            const double g01 = s2[1] / s0 - s1[0] * s1[1] / (s0 * s0);
            const double g11 = s2[3] / s0 - s1[1] * s1[1] / (s0 * s0);
            const double det = g00 * g11 - g01 * g01;
            logdet = std::log(det);
            quad = (s1[0] * (g11 * s1[0] - g01 * s1[1]) +
                    s1[1] * (g00 * s1[1] - g01 * s1[0])) /
                   det / (s0 * s0);
        }
        total += std::log(static_cast<double>(n)) + d * 0.5 * std::log(2.0 * M_PI) +
                 d * std::log(rho) - std::log(s0) + 0.5 * logdet + 0.5 * quad;
    }
    return total / n - bias;
}

double reference_kl(const PointCloud& cloud, int k) {
    const int n = cloud.n();
    const int d = cloud.d();
    double sum = 0.0;
    for (int i = 0; i < n; ++i)
        sum += std::log(testutil::brute_knn(cloud, i, k).back().distance);
    return d * sum / n + std::log(unit_ball_volume(d)) + std::log(static_cast<double>(n)) -
           digamma(static_cast<double>(k));
}

double reference_kde(const PointCloud& cloud, double h) {
    const int n = cloud.n();
    const int d = cloud.d();
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double s0 = 0.0;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double sq = 0.0;
            for (int a = 0; a < d; ++a) {
                const double diff = cloud.at(j, a) - cloud.at(i, a);
                sq += diff * diff;
            }
            s0 += std::exp(-sq / (2.0 * h * h));
        }
        total -= std::log(s0 / (n * std::pow(2.0 * M_PI, d / 2.0) * std::pow(h, d)));
    }
    return total / n;
}

PointCloud twelve_points() {
    PointCloud cloud(12, 1);
    const double xs[12] = {0.12, 0.25, 0.31, 0.47, 0.55, 0.61,
                           0.77, 0.89, 1.02, 1.18, 1.33, 1.49};
    for (int i = 0; i < 12; ++i) cloud.at(i, 0) = xs[i];
    return cloud;
}

}  // namespace

TEST_CASE("entropy_kl hand value") {
    PointCloud cloud(3, 1);
    cloud.at(0, 0) = 0.0;
    cloud.at(1, 0) = 0.5;
    cloud.at(2, 0) = 1.0;
    const EstimateReport rep = entropy_kl(cloud, 1);
    // log 3 + gamma
    CHECK(rep.value == Catch::Approx(1.6758279535696428).margin(1e-12));
    CHECK(rep.bias_subtracted == Catch::Approx(-0.5772156649015329).margin(1e-12));
    CHECK(rep.value_bits() == Catch::Approx(rep.value / std::log(2.0)));
}

TEST_CASE("entropy_kl guards") {
    PointCloud dup(3, 1);
    dup.at(0, 0) = 0.0;
    dup.at(1, 0) = 0.0;
    dup.at(2, 0) = 1.0;
    CHECK_THROWS_AS(entropy_kl(dup, 1), DegenerateBandwidth);
    PointCloud tiny(2, 1);
    tiny.at(1, 0) = 1.0;
    CHECK_THROWS_AS(entropy_kl(tiny, 2), InvalidArgument);
    CHECK_THROWS_AS(entropy_kl(tiny, 0), InvalidArgument);
}

TEST_CASE("12-point frozen reference value") {
    // independently cross-checked against a from-scratch script: the
    // straight-line oracle below reproduces 0.976662464992234 (k=3, m=11, B=0)
    const PointCloud cloud = twelve_points();
    const double oracle = reference_klnn(cloud, 3, 11, 0.0);
    CHECK(oracle == Catch::Approx(0.976662464992234).margin(1e-9));

    EstimatorConfig cfg;
    cfg.k = 3;
    cfg.m = 11;
    const EstimateReport rep = entropy_klnn(cloud, cfg);
    CHECK(rep.value == Catch::Approx(oracle).margin(1e-10));
    CHECK(rep.m_used == 11);
    CHECK(rep.skipped == 0);
}

TEST_CASE("klnn matches the naive oracle on random instances") {
    for (const auto& [n, d, seed] : {std::tuple{18, 1, 100u}, std::tuple{25, 2, 101u},
                                     std::tuple{30, 2, 102u}}) {
        const PointCloud cloud = testutil::random_cloud(n, d, seed);
        EstimatorConfig cfg;
        cfg.k = 4;
        cfg.m = 9;
        const EstimateReport rep = entropy_klnn(cloud, cfg);
        CHECK(rep.value == Catch::Approx(reference_klnn(cloud, 4, 9, 0.0)).margin(1e-10));
    }
}

TEST_CASE("kl matches the naive oracle") {
    const PointCloud cloud = testutil::random_cloud(30, 2, 103);
    CHECK(entropy_kl(cloud, 4).value ==
          Catch::Approx(reference_kl(cloud, 4)).margin(1e-10));
}

TEST_CASE("kde matches the naive oracle and hand value") {
    const PointCloud cloud = testutil::random_cloud(30, 2, 104);
    KdeBandwidth bw;
    bw.rule = BandwidthRule::fixed;
    bw.value = 0.7;
    CHECK(entropy_kde(cloud, bw).value ==
          Catch::Approx(reference_kde(cloud, 0.7)).margin(1e-10));

    PointCloud pair(2, 1);
    pair.at(1, 0) = 1.0;
    bw.value = 1.0;
    // each point sees one neighbor at distance 1
    CHECK(entropy_kde(pair, bw).value ==
          Catch::Approx(-std::log(std::exp(-0.5) / (2.0 * std::sqrt(2.0 * M_PI))))
              .margin(1e-12));
    CHECK_THROWS_AS(entropy_kde(PointCloud(1, 1), bw), EstimationFailure);
}

TEST_CASE("kde bandwidth rules") {
    const PointCloud cloud = testutil::random_cloud(500, 2, 105);
    KdeBandwidth rot{BandwidthRule::rot, 0.0};
    KdeBandwidth p4{BandwidthRule::pow_d4, 0.0};
    KdeBandwidth p2{BandwidthRule::pow_d2, 0.0};
    const double h_rot = kde_bandwidth(cloud, rot);
    const double h_p4 = kde_bandwidth(cloud, p4);
    const double h_p2 = kde_bandwidth(cloud, p2);
    CHECK(h_rot > 0.0);
    // at d=2, n^{-1/5} < n^{-1/6}: the rot rule keeps the d=1 exponent
    CHECK(h_p4 > h_rot);
    CHECK(h_p2 < h_p4);
}

TEST_CASE("scaling law: H(lambda X) - H(X) = d log lambda") {
    const PointCloud cloud = testutil::random_cloud(60, 2, 106);
    const double lambda = 3.7;
    PointCloud scaled(60, 2);
    for (int i = 0; i < 60; ++i)
        for (int j = 0; j < 2; ++j) scaled.at(i, j) = lambda * cloud.at(i, j);
    const double shift = 2.0 * std::log(lambda);

    CHECK(entropy_kl(scaled, 4).value - entropy_kl(cloud, 4).value ==
          Catch::Approx(shift).margin(1e-10));

    EstimatorConfig cfg;
    cfg.k = 4;
    cfg.m_multiplier = 7.0;
    CHECK(entropy_klnn(scaled, cfg).value - entropy_klnn(cloud, cfg).value ==
          Catch::Approx(shift).margin(1e-10));

    KdeBandwidth bw{BandwidthRule::fixed, 0.5};
    KdeBandwidth bws{BandwidthRule::fixed, 0.5 * lambda};
    CHECK(entropy_kde(scaled, bws).value - entropy_kde(cloud, bw).value ==
          Catch::Approx(shift).margin(1e-10));
}

TEST_CASE("translation invariance") {
    SECTION("bit-exact when the shift introduces no rounding") {
        // quantize coordinates to 2^-20 so x + c is exact and all pairwise
        // differences are bit-identical before and after the shift
        PointCloud cloud = testutil::random_cloud(50, 2, 107);
        for (double& v : cloud.data())
            v = std::round(v * 1048576.0) / 1048576.0;
        PointCloud shifted = cloud;
        for (int i = 0; i < 50; ++i) {
            shifted.at(i, 0) += 123.25;
            shifted.at(i, 1) += -41.5;
        }
        EstimatorConfig cfg;
        cfg.k = 4;
        CHECK(entropy_klnn(cloud, cfg).value == entropy_klnn(shifted, cfg).value);
    }
    SECTION("general shifts agree to rounding noise") {
        const PointCloud cloud = testutil::random_cloud(50, 2, 117);
        PointCloud shifted = cloud;
        for (int i = 0; i < 50; ++i) {
            shifted.at(i, 0) += M_PI;
            shifted.at(i, 1) += -0.1234567;
        }
        EstimatorConfig cfg;
        cfg.k = 4;
        CHECK(entropy_klnn(cloud, cfg).value ==
              Catch::Approx(entropy_klnn(shifted, cfg).value).margin(1e-9));
    }
}

TEST_CASE("bias additivity") {
    const PointCloud cloud = testutil::random_cloud(40, 1, 108);
    EstimatorConfig none;
    none.k = 4;
    EstimatorConfig zero = none;
    zero.bias_source = BiasSource::inline_constant;
    zero.bias_value = 0.0;
    EstimatorConfig shiftd = none;
    shiftd.bias_source = BiasSource::inline_constant;
    shiftd.bias_value = 0.37;
    CHECK(entropy_klnn(cloud, none).value == entropy_klnn(cloud, zero).value);
    CHECK(entropy_klnn(cloud, none).value - entropy_klnn(cloud, shiftd).value ==
          Catch::Approx(-(-0.37)).margin(1e-12));
}

TEST_CASE("bias table plumbing in estimators") {
    const PointCloud cloud = testutil::random_cloud(40, 2, 109);
    BiasTable table;
    BiasEstimate entry;
    entry.k = 4;
    entry.d = 2;
    entry.m = 100;
    entry.samples = 1;
    entry.mean = -0.1;
    table.insert(entry);
    EstimatorConfig cfg;
    cfg.k = 4;
    cfg.bias_source = BiasSource::table;
    cfg.bias_table = &table;
    const EstimateReport rep = entropy_klnn(cloud, cfg);
    CHECK(rep.bias_subtracted == -0.1);
    cfg.k = 5;  // (5, 2) missing
    CHECK_THROWS_AS(entropy_klnn(cloud, cfg), MissingEntry);
    cfg.bias_table = nullptr;
    CHECK_THROWS_AS(entropy_klnn(cloud, cfg), MissingEntry);
}

TEST_CASE("permutation invariance") {
    const PointCloud cloud = testutil::random_cloud(48, 2, 110);
    std::vector<int> perm(48);
    std::iota(perm.begin(), perm.end(), 0);
    SplitMix64 rng(3);
    for (int i = 47; i > 0; --i)
        std::swap(perm[static_cast<std::size_t>(i)],
                  perm[static_cast<std::size_t>(rng.next_u64() % (i + 1))]);
    PointCloud shuffled(48, 2);
    for (int i = 0; i < 48; ++i)
        for (int j = 0; j < 2; ++j) shuffled.at(perm[i], j) = cloud.at(i, j);
    EstimatorConfig cfg;
    cfg.k = 4;
    CHECK(entropy_klnn(cloud, cfg).value ==
          Catch::Approx(entropy_klnn(shuffled, cfg).value).margin(1e-12));
    CHECK(entropy_kl(cloud, 4).value ==
          Catch::Approx(entropy_kl(shuffled, 4).value).margin(1e-12));
}

TEST_CASE("klnn guards") {
    const PointCloud cloud = testutil::random_cloud(6, 1, 111);
    EstimatorConfig cfg;
    cfg.k = 5;
    CHECK_THROWS_AS(entropy_klnn(cloud, cfg), InvalidArgument);  // n < k + 2
    cfg.k = 2;
    CHECK_THROWS_AS(entropy_klnn(cloud, cfg), UnsupportedK);

    PointCloud dup(8, 1);
    for (int i = 0; i < 8; ++i) dup.at(i, 0) = i < 4 ? 0.0 : 1.0 + i;
    EstimatorConfig dcfg;
    dcfg.k = 3;
    CHECK_THROWS_AS(entropy_klnn(dup, dcfg), DegenerateBandwidth);
}

TEST_CASE("singular-sigma policies") {
    // one point whose m nearest neighbors are triple-coincident (rank-1
    // local geometry, rho > 0), plus a generic cluster that stays regular
    PointCloud cloud(10, 2);
    cloud.at(0, 0) = 0.0;
    cloud.at(0, 1) = 0.0;
    for (int i = 1; i <= 3; ++i) {  // three copies at (1, 0)
        cloud.at(i, 0) = 1.0;
        cloud.at(i, 1) = 0.0;
    }
    const PointCloud generic = testutil::random_cloud(6, 2, 118);
    for (int i = 0; i < 6; ++i) {
        cloud.at(4 + i, 0) = 100.0 + generic.at(i, 0);
        cloud.at(4 + i, 1) = 100.0 + generic.at(i, 1);
    }
    EstimatorConfig cfg;
    cfg.k = 3;
    cfg.m = 3;
    cfg.sigma_policy = SingularSigmaPolicy::error;
    CHECK_THROWS_AS(entropy_klnn(cloud, cfg), SingularSigma);
    cfg.sigma_policy = SingularSigmaPolicy::fallback_p1;
    const EstimateReport fb = entropy_klnn(cloud, cfg);
    CHECK(fb.fallbacks > 0);
    CHECK(std::isfinite(fb.value));
    cfg.sigma_policy = SingularSigmaPolicy::skip;
    const EstimateReport sk = entropy_klnn(cloud, cfg);
    CHECK(sk.skipped > 0);
    CHECK(sk.skipped < 10);
    CHECK(sk.per_point.empty());
    cfg.keep_per_point = true;
    CHECK(static_cast<int>(entropy_klnn(cloud, cfg).per_point.size()) ==
          10 - sk.skipped);
}

TEST_CASE("per-point clamp is counted") {
    const PointCloud cloud = testutil::random_cloud(20, 1, 112);
    EstimatorConfig cfg;
    cfg.k = 3;
    cfg.clamp = 0.5;  // artificially tight
    cfg.keep_per_point = true;
    const EstimateReport rep = entropy_klnn(cloud, cfg);
    CHECK(rep.clamped > 0);
    for (double t : rep.per_point) CHECK(std::abs(t) <= 0.5);
}

TEST_CASE("worker count does not change the estimate") {
    const PointCloud cloud = testutil::random_cloud(400, 2, 113);
    EstimatorConfig w1;
    w1.k = 5;
    w1.workers = 1;
    EstimatorConfig w7 = w1;
    w7.workers = 7;
    CHECK(entropy_klnn(cloud, w1).value == entropy_klnn(cloud, w7).value);
    KdeBandwidth bw{BandwidthRule::rot, 0.0};
    CHECK(entropy_kde(cloud, bw, w1).value == entropy_kde(cloud, bw, w7).value);
}

TEST_CASE("coupled bandwidths reduce to klnn on marginal radii") {
    const PointCloud cloud = testutil::random_cloud(200, 2, 114);
    EstimatorConfig cfg;
    cfg.k = 5;
    cfg.m_multiplier = 7.0;  // budget covers the kernel reach of rho_k
    NeighborIndex index(cloud);
    const int m_eff = std::min(
        static_cast<int>(std::ceil(7.0 * std::log(200.0))), cloud.n() - 1);
    std::vector<double> rho(200);
    for (int i = 0; i < 200; ++i)
        rho[static_cast<std::size_t>(i)] = index.knn_of_sample(i, m_eff).rho(5);
    const EstimateReport coupled = entropy_lnn_coupled(cloud, rho, cfg);
    const EstimateReport direct = entropy_klnn(cloud, cfg);
    CHECK(coupled.value == direct.value);  // bit-for-bit
}

TEST_CASE("coupled bandwidth scaling equivariance") {
    const PointCloud cloud = testutil::random_cloud(100, 1, 115);
    EstimatorConfig cfg;
    cfg.k = 4;
    cfg.m_multiplier = 7.0;
    std::vector<double> bw(100, 0.2);
    const double lambda = 2.5;
    PointCloud scaled(100, 1);
    for (int i = 0; i < 100; ++i) scaled.at(i, 0) = lambda * cloud.at(i, 0);
    std::vector<double> bws(100, 0.2 * lambda);
    CHECK(entropy_lnn_coupled(scaled, bws, cfg).value -
              entropy_lnn_coupled(cloud, bw, cfg).value ==
          Catch::Approx(std::log(lambda)).margin(1e-10));
}

TEST_CASE("coupled bandwidths far below the spacing clamp instead of NaN") {
    const PointCloud cloud = testutil::random_cloud(30, 1, 119);
    EstimatorConfig cfg;
    cfg.k = 3;
    cfg.keep_per_point = true;
    std::vector<double> tiny(30, 1e-300);  // every kernel weight underflows
    const EstimateReport rep = entropy_lnn_coupled(cloud, tiny, cfg);
    CHECK(rep.clamped == 30);
    CHECK(std::isfinite(rep.value));
    CHECK(rep.value == cfg.clamp);
}

TEST_CASE("coupled bandwidth input validation") {
    const PointCloud cloud = testutil::random_cloud(50, 1, 116);
    EstimatorConfig cfg;
    cfg.k = 3;
    std::vector<double> wrong_size(49, 0.1);
    CHECK_THROWS_AS(entropy_lnn_coupled(cloud, wrong_size, cfg), InvalidArgument);
    std::vector<double> has_zero(50, 0.1);
    has_zero[7] = 0.0;
    CHECK_THROWS_AS(entropy_lnn_coupled(cloud, has_zero, cfg), DegenerateBandwidth);
}

TEST_CASE("kl estimator is consistent on the unit uniform") {
    // truth H = 0
    double mean = 0.0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        SplitMix64 rng(5000 + s);
        PointCloud cloud(10000, 1);
        for (int i = 0; i < 10000; ++i) cloud.at(i, 0) = rng.uniform();
        mean += entropy_kl(cloud, 5).value;
    }
    mean /= seeds;
    INFO("mean " << mean);
    CHECK(std::abs(mean) < 0.02);
}

TEST_CASE("calibrate_bias_generic") {
    SECTION("degree 0 step recovers psi(k) - log k") {
        CalibrateOptions opts;
        opts.trials = 20;
        const BiasEstimate est =
            calibrate_bias_generic(5, 1, 0, CalibKernel::step, 10000, 0, 2025, opts);
        const double target = kl_bias_constant(5);
        INFO("calibrated " << est.mean << " +- " << est.std_error << " vs " << target);
        CHECK(std::abs(est.mean - target) < 3.0 * est.std_error);
    }
    SECTION("degree 2 gaussian agrees with the order-statistic constant") {
        CalibrateOptions opts;
        opts.trials = 12;
        const BiasEstimate cal =
            calibrate_bias_generic(5, 1, 2, CalibKernel::gaussian, 20000, 0, 2026, opts);
        const BiasEstimate mc = bias_constant(5, 1, 10000, 100000, 2027);
        const double se = std::sqrt(cal.std_error * cal.std_error +
                                    mc.std_error * mc.std_error);
        INFO("calibrated " << cal.mean << " vs sampled " << mc.mean << " (se " << se << ")");
        CHECK(std::abs(cal.mean - mc.mean) < 3.0 * se + 0.004);
    }
    SECTION("degree 0 gaussian is distribution-free") {
        CalibrateOptions uni;
        uni.trials = 12;
        CalibrateOptions gau = uni;
        gau.source = CalibSource::gaussian;
        const BiasEstimate a =
            calibrate_bias_generic(5, 1, 0, CalibKernel::gaussian, 20000, 0, 2028, uni);
        const BiasEstimate b =
            calibrate_bias_generic(5, 1, 0, CalibKernel::gaussian, 20000, 0, 2029, gau);
        const double se = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
        INFO("uniform " << a.mean << " vs gaussian " << b.mean << " (se " << se << ")");
        CHECK(std::isfinite(a.mean));
        CHECK(std::abs(a.mean - b.mean) < 3.0 * se + 0.004);
    }
    SECTION("unsupported combinations") {
        CHECK_THROWS_AS(calibrate_bias_generic(5, 1, 1, CalibKernel::step, 100, 0, 1),
                        Unsupported);
        CHECK_THROWS_AS(calibrate_bias_generic(5, 1, 3, CalibKernel::gaussian, 100, 0, 1),
                        Unsupported);
    }
}
