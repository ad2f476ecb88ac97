#include <doctest.h>

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "rfdense/metrics.hpp"

using namespace rfdense;

namespace {

std::vector<double> uniform_values(std::size_t n, Rng& rng, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

std::vector<std::uint8_t> random_mask(std::size_t n, Rng& rng, double keep = 0.8) {
    std::vector<std::uint8_t> m(n);
    for (auto& v : m) v = rng.uniform() < keep ? 1 : 0;
    m[0] = 1;
    m[1] = 1;
    return m;
}

}  // namespace

TEST_CASE("alignment of an exact affine relation") {
    const std::vector<double> pred{0.1, 0.4, 0.2, 0.9, 0.5};
    std::vector<double> gt;
    for (double p : pred) gt.push_back(2.5 * p - 0.3);
    const std::vector<std::uint8_t> mask(pred.size(), 1);
    const AlignedDepth a = align(pred, gt, mask);
    CHECK(std::abs(a.scale - 2.5) < 1e-12);
    CHECK(std::abs(a.shift + 0.3) < 1e-12);
    for (std::size_t i = 0; i < gt.size(); ++i) CHECK(std::abs(a.values[i] - gt[i]) < 1e-12);
}

TEST_CASE("alignment ignores unmasked pixels but still maps them") {
    const std::vector<double> pred{1.0, 2.0, 3.0, 100.0};
    const std::vector<double> gt{2.0, 4.0, 6.0, -50.0};
    const std::vector<std::uint8_t> mask{1, 1, 1, 0};
    const AlignedDepth a = align(pred, gt, mask);
    CHECK(std::abs(a.scale - 2.0) < 1e-12);
    CHECK(std::abs(a.shift) < 1e-12);
    CHECK(std::abs(a.values[3] - 200.0) < 1e-9);
}

TEST_CASE("alignment minimises squared error against a grid of perturbations") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 30;
        const auto pred = uniform_values(n, rng, 0.0, 1.0);
        const auto gt = uniform_values(n, rng, 0.2, 1.0);
        const auto mask = random_mask(n, rng);
        const AlignedDepth a = align(pred, gt, mask);
        const double best = oracle::sse(pred, gt, mask, a.scale, a.shift);
        for (int i = -20; i <= 20; ++i) {
            for (int j = -20; j <= 20; ++j) {
                const double s = a.scale + 0.01 * i, b = a.shift + 0.01 * j;
                CHECK(best <= oracle::sse(pred, gt, mask, s, b) + 1e-12);
            }
        }
    }
}

TEST_CASE("singular alignment is reported") {
    const std::vector<double> pred(6, 0.7), gt{1, 2, 3, 4, 5, 6};
    const std::vector<std::uint8_t> mask(6, 1);
    CHECK_THROWS_AS(align(pred, gt, mask), SingularAlignment);
    const std::vector<std::uint8_t> one{1, 0, 0, 0, 0, 0};
    const std::vector<double> varied{1, 2, 3, 4, 5, 6};
    CHECK_THROWS_AS(align(varied, gt, one), SingularAlignment);
}

TEST_CASE("depth metrics on fixed examples") {
    const std::vector<double> gt{1.0, 2.0, 4.0, 5.0};
    const std::vector<std::uint8_t> mask{1, 1, 1, 0};
    CHECK(absrel(gt, gt, mask) == 0.0);
    CHECK(delta1(gt, gt, mask) == 1.0);
    const std::vector<double> off{1.1, 2.0, 6.0, 0.0};
    CHECK(std::abs(absrel(off, gt, mask) - (0.1 + 0.0 + 0.5) / 3.0) < 1e-15);
    CHECK(std::abs(delta1(off, gt, mask) - 2.0 / 3.0) < 1e-15);
    const std::vector<double> negative{-1.0, 2.0, 4.0, 5.0};
    CHECK(std::abs(delta1(negative, gt, mask) - 2.0 / 3.0) < 1e-15);
}

TEST_CASE("absrel and delta1 match the reference loops") {
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 64;
        const auto a = uniform_values(n, rng, -0.1, 1.5);
        const auto d = uniform_values(n, rng, 0.25, 1.0);
        const auto mask = random_mask(n, rng);
        CHECK(std::abs(absrel(a, d, mask) - oracle::absrel(a, d, mask)) < 1e-12);
        CHECK(delta1(a, d, mask) == oracle::delta1(a, d, mask));
    }
}

TEST_CASE("angular error on fixed examples") {
    const std::vector<double> gt{0, 0, 1, 0, 0, 1, 0, 0, 1};
    const std::vector<double> pred{0, 0, 2, 1, 0, 0, 0, 0, 0};
    const std::vector<std::uint8_t> mask{1, 1, 1};
    const AngularStats s = angular_error(pred, gt, mask);
    CHECK(std::abs(s.mean_degrees - 60.0) < 1e-12);
    CHECK(std::abs(s.fraction_below_11_25 - 1.0 / 3.0) < 1e-15);
    const std::vector<double> opposite{0, 0, -1};
    CHECK(std::abs(angular_error(opposite, std::vector<double>{0, 0, 1}, std::vector<std::uint8_t>{1}).mean_degrees - 180.0) < 1e-12);
}

TEST_CASE("angular error matches the long-double reference") {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t pixels = 40;
        const auto p = uniform_values(pixels * 3, rng, -1.0, 1.0);
        auto g = uniform_values(pixels * 3, rng, -1.0, 1.0);
        for (std::size_t i = 0; i < pixels; ++i) {
            const double norm = std::sqrt(g[3 * i] * g[3 * i] + g[3 * i + 1] * g[3 * i + 1] + g[3 * i + 2] * g[3 * i + 2]);
            for (int c = 0; c < 3; ++c) g[3 * i + c] /= norm;
        }
        const auto mask = random_mask(pixels, rng);
        const AngularStats s = angular_error(p, g, mask);
        const auto [mean, below] = oracle::angular(p, g, mask);
        CHECK(std::abs(s.mean_degrees - mean) < 1e-9);
        CHECK(s.fraction_below_11_25 == below);
    }
}

TEST_CASE("average rank with ties") {
    const std::vector<std::vector<double>> table{{0.1, 0.9}, {0.2, 0.9}, {0.1, 0.5}};
    const auto r = avg_rank(table, {Direction::lower_better, Direction::higher_better});
    CHECK(r[0] == doctest::Approx((1.5 + 1.5) / 2.0));
    CHECK(r[1] == doctest::Approx((3.0 + 1.5) / 2.0));
    CHECK(r[2] == doctest::Approx((1.5 + 3.0) / 2.0));
}

TEST_CASE("average rank matches the pairwise reference and is invariant to monotone maps") {
    Rng rng(14);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t methods = 2 + rng.index(6), columns = 1 + rng.index(5);
        std::vector<std::vector<double>> table(methods, std::vector<double>(columns));
        for (auto& row : table)
            for (double& v : row) v = static_cast<double>(rng.index(5)) * 0.1;  // coarse values force ties
        std::vector<Direction> dirs;
        std::vector<bool> lower;
        for (std::size_t c = 0; c < columns; ++c) {
            const bool lb = rng.uniform() < 0.5;
            dirs.push_back(lb ? Direction::lower_better : Direction::higher_better);
            lower.push_back(lb);
        }
        const auto got = avg_rank(table, dirs);
        const auto expected = oracle::avg_rank(table, lower);
        double total = 0.0;
        for (std::size_t m = 0; m < methods; ++m) {
            CHECK(std::abs(got[m] - expected[m]) < 1e-12);
            total += got[m];
        }
        CHECK(std::abs(total - static_cast<double>(methods * (methods + 1)) / 2.0) < 1e-9);
        auto warped = table;
        for (auto& row : warped)
            for (double& v : row) v = std::exp(3.0 * v) + 7.0;
        const auto again = avg_rank(warped, dirs);
        for (std::size_t m = 0; m < methods; ++m) CHECK(again[m] == got[m]);
    }
}

TEST_CASE("radial spectrum of a constant map has only a DC term") {
    const int n = 16;
    const auto bins = radial_power_spectrum(LatentMap(n, n, 1, 2.0));
    REQUIRE(bins.size() == static_cast<std::size_t>(std::floor(std::sqrt(2.0) * (n / 2))) + 1);
    CHECK(bins[0].count == 1);
    CHECK(std::abs(bins[0].mean_power - std::pow(2.0 * n * n, 2)) < 1e-6);
    for (std::size_t r = 1; r < bins.size(); ++r) {
        CHECK(bins[r].mean_power < 1e-18);
        CHECK(std::abs(bins[r].log_power + 12.0) < 1e-6);
    }
}

TEST_CASE("radial spectrum of a cosine peaks at its frequency") {
    const int n = 16, k = 3;
    LatentMap m(n, n, 1);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) m.at(y, x, 0) = std::cos(2.0 * std::numbers::pi * k * x / n);
    const auto bins = radial_power_spectrum(m);
    std::size_t peak = 0;
    for (std::size_t r = 0; r < bins.size(); ++r)
        if (bins[r].mean_power > bins[peak].mean_power) peak = r;
    CHECK(peak == static_cast<std::size_t>(k));
    CHECK(std::abs(bins[k].mean_power * static_cast<double>(bins[k].count) - 2.0 * std::pow(n * n / 2.0, 2)) < 1e-6);
}

TEST_CASE("radial spectrum matches the direct DFT and satisfies Parseval") {
    Rng rng(15);
    const int n = 16;
    for (int trial = 0; trial < 100; ++trial) {
        LatentMap m(n, n, 1);
        for (double& v : m.values) v = rng.uniform(-1.0, 1.0);
        const auto bins = radial_power_spectrum(m);
        const auto expected = oracle::radial_log_power(m.values, n);
        REQUIRE(bins.size() == expected.size());
        for (std::size_t r = 0; r < bins.size(); ++r) CHECK(std::abs(bins[r].log_power - expected[r]) < 1e-8);
        double spectral = 0.0, spatial = 0.0;
        std::size_t total = 0;
        for (const auto& b : bins) {
            spectral += b.mean_power * static_cast<double>(b.count);
            total += b.count;
        }
        for (double v : m.values) spatial += v * v;
        CHECK(total == static_cast<std::size_t>(n * n));
        CHECK(std::abs(spectral - n * n * spatial) < 1e-8 * n * n * spatial);
    }
    CHECK_THROWS_AS(radial_power_spectrum(LatentMap(8, 4, 1)), ShapeError);
    CHECK_THROWS_AS(radial_power_spectrum(LatentMap(8, 8, 3)), ShapeError);
}

TEST_CASE("aligned metrics are invariant to affine changes of the prediction") {
    Rng rng(16);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 50;
        const auto pred = uniform_values(n, rng, 0.0, 1.0);
        const auto gt = uniform_values(n, rng, 0.25, 1.0);
        const auto mask = random_mask(n, rng);
        const double s = rng.uniform(0.5, 3.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0), b = rng.uniform(-2.0, 2.0);
        std::vector<double> moved;
        for (double p : pred) moved.push_back(s * p + b);
        const auto a1 = align(pred, gt, mask), a2 = align(moved, gt, mask);
        CHECK(std::abs(absrel(a1.values, gt, mask) - absrel(a2.values, gt, mask)) < 1e-9);
        CHECK(delta1(a1.values, gt, mask) == doctest::Approx(delta1(a2.values, gt, mask)));
    }
}

TEST_CASE("patch boundary discontinuity") {
    LatentMap smooth(8, 8, 1);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) smooth.at(y, x, 0) = 0.1 * x + 0.05 * y;
    CHECK(std::abs(patch_boundary_discontinuity(smooth)) < 1e-12);
    LatentMap blocky(8, 8, 1);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) blocky.at(y, x, 0) = static_cast<double>((x / 2 + y / 2) % 2);
    CHECK(patch_boundary_discontinuity(blocky) == doctest::Approx(1.0));
    CHECK_THROWS_AS(patch_boundary_discontinuity(LatentMap(2, 2, 1)), ShapeError);
}

TEST_CASE("report aggregates only ok rows") {
    MetricsReport report;
    report.task = "depth";
    report.samples.push_back({"a", true, "ok", 0.1, 0.9, 0, 0});
    report.samples.push_back({"b", true, "ok", 0.3, 0.7, 0, 0});
    report.samples.push_back({"c", false, "singular_alignment", 0, 0, 0, 0});
    report.finalize();
    CHECK(report.flagged == 1);
    REQUIRE(report.aggregate.has_value());
    CHECK(report.aggregate->absrel == doctest::Approx(0.2));
    CHECK(report.aggregate->delta1 == doctest::Approx(0.8));
    CHECK(report.to_csv().find("singular_alignment") != std::string::npos);
    const auto j = nlohmann::json::parse(report.to_json());
    CHECK(j.contains("aggregate"));
}
