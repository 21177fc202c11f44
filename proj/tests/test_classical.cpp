#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gatflfm/classical.hpp"
#include "gatflfm/optics.hpp"
#include "gatflfm/phantoms.hpp"
#include "gatflfm/reference.hpp"
#include "helpers.hpp"

#include <cmath>
#include <random>

using namespace gatflfm;

namespace {

PsfStack delta_psf(int h, int w, int nz) {
    PsfStack psf;
    psf.h = h;
    psf.w = w;
    for (int j = 0; j < nz; ++j) psf.z_planes.push_back(j);
    psf.values.assign(static_cast<std::size_t>(nz) * h * w, 0.0);
    for (int j = 0; j < nz; ++j)
        psf.slice(j)[static_cast<std::size_t>(h / 2) * w + w / 2] = 1.0;
    psf.normalized = true;
    return psf;
}

PsfStack random_psf(int h, int w, int nz, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    PsfStack psf;
    psf.h = h;
    psf.w = w;
    for (int j = 0; j < nz; ++j) psf.z_planes.push_back(j);
    psf.values.resize(static_cast<std::size_t>(nz) * h * w);
    for (double& v : psf.values) v = unif(rng);
    for (int j = 0; j < nz; ++j) {
        auto s = psf.slice(j);
        double sum = 0.0;
        for (double v : s) sum += v;
        for (double& v : s) v /= sum;
    }
    psf.normalized = true;
    return psf;
}

} // namespace

TEST_CASE("wiener with delta psf and w=0 reproduces the measurement per slice") {
    const int hw = 16;
    const GridSpec grid = GridSpec::centered({16, 16, 2}, {1, 1, 1});
    const auto psf = delta_psf(hw, hw, 2);
    const auto img = test_helpers::random_image(hw, hw, 1.0, 3);
    WienerConfig cfg;
    cfg.w = 0.0;
    cfg.clamp_negative = false;
    const auto vol = wiener_reconstruct(img, psf, cfg, grid);
    for (int j = 0; j < 2; ++j) {
        const auto s = vol.slice(j);
        double max_err = 0.0;
        for (int iy = 0; iy < 16; ++iy)
            for (int ix = 0; ix < 16; ++ix)
                max_err = std::max(max_err,
                                   std::abs(s[static_cast<std::size_t>(iy) * 16 + ix] -
                                            img.at(iy, ix)));
        CHECK(max_err <= 1e-6 * img.max_value());
    }
}

TEST_CASE("wiener output vanishes as w grows large") {
    const int hw = 16;
    const GridSpec grid = GridSpec::centered({12, 12, 1}, {1, 1, 1});
    const auto psf = random_psf(hw, hw, 1, 5);
    const auto img = test_helpers::random_image(hw, hw, 1.0, 6);
    WienerConfig cfg;
    cfg.w = 1e6;
    const auto vol = wiener_reconstruct(img, psf, cfg, grid);
    // bounded by sum|I~ H~*| / w^2
    CHECK(vol.max_value() <= img.sum() / 1e12 * hw * hw);
}

TEST_CASE("wiener matches the direct-DFT oracle") {
    const int hw = 16;
    const GridSpec grid = GridSpec::centered({12, 10, 3}, {1, 1, 1});
    const auto psf = random_psf(hw, hw, 3, 7);
    const auto img = test_helpers::random_image(hw, hw, 1.0, 8, -0.2, 1.0);
    WienerConfig cfg;
    cfg.w = 0.1;
    cfg.clamp_negative = false;
    const auto fast = wiener_reconstruct(img, psf, cfg, grid);
    const auto oracle = reference::wiener_direct(img, psf, 0.1, grid, false);
    CHECK(test_helpers::max_rel_diff(fast.values, oracle.values) <= 1e-5);
}

TEST_CASE("wiener is linear in the measurement for fixed psf and w") {
    const int hw = 12;
    const GridSpec grid = GridSpec::centered({10, 10, 2}, {1, 1, 1});
    const auto psf = random_psf(hw, hw, 2, 9);
    const auto a = test_helpers::random_image(hw, hw, 1.0, 10);
    const auto b = test_helpers::random_image(hw, hw, 1.0, 11);
    WienerConfig cfg;
    cfg.w = 0.2;
    cfg.clamp_negative = false; // clamping is the nonlinearity, switched off here
    SensorImage combo(hw, hw, 1.0);
    for (std::size_t k = 0; k < combo.values.size(); ++k)
        combo.values[k] = 2.0 * a.values[k] - 0.5 * b.values[k];
    const auto va = wiener_reconstruct(a, psf, cfg, grid);
    const auto vb = wiener_reconstruct(b, psf, cfg, grid);
    const auto vc = wiener_reconstruct(combo, psf, cfg, grid);
    std::vector<double> lin(vc.values.size());
    for (std::size_t k = 0; k < lin.size(); ++k)
        lin[k] = 2.0 * va.values[k] - 0.5 * vb.values[k];
    CHECK(test_helpers::max_rel_diff(vc.values, lin) <= 1e-9);
}

TEST_CASE("wiener errors on w=0 with a zero spectral bin") {
    const int hw = 8;
    const GridSpec grid = GridSpec::centered({8, 8, 1}, {1, 1, 1});
    // Constant kernel: H~ vanishes away from DC.
    PsfStack psf;
    psf.h = hw;
    psf.w = hw;
    psf.z_planes = {0.0};
    psf.values.assign(64, 1.0 / 64.0);
    psf.normalized = true;
    const auto img = test_helpers::random_image(hw, hw, 1.0, 12);
    WienerConfig cfg;
    cfg.w = 0.0;
    CHECK_THROWS_AS(wiener_reconstruct(img, psf, cfg, grid), std::runtime_error);
}

TEST_CASE("default wiener parameter is accepted and clamps negatives") {
    const int hw = 24;
    const GridSpec grid = GridSpec::centered({16, 16, 2}, {0.5, 0.5, 1.0});
    const auto psf = synthesize_psf(OpticsConfig::ring_views(3, 2.0, 0.3, 0.8, 0.1),
                                    hw | 1, hw | 1, grid);
    const auto vol = test_helpers::random_volume(grid, 13);
    const auto img = forward_project(vol, psf);
    const auto rec = wiener_reconstruct(img, psf, WienerConfig{}, grid);
    for (double v : rec.values) CHECK(v >= 0.0);
}

TEST_CASE("rl fixed point: exact forward image leaves the iterate unchanged") {
    const GridSpec grid = GridSpec::centered({10, 10, 3}, {0.5, 0.5, 1.0});
    const auto psf = synthesize_psf(OpticsConfig::ring_views(3, 2.0, 0.25, 0.8, 0.1),
                                    41, 41, grid);
    auto truth = test_helpers::random_volume(grid, 20, 0.1, 1.0);
    const auto img = forward_project(truth, psf);
    RlConfig cfg;
    cfg.iterations = 1;
    const auto res = rl_deconvolve(img, psf, cfg, grid, truth);
    CHECK(test_helpers::max_rel_diff(res.volume.values, truth.values) <= 1e-6);
}

TEST_CASE("rl zero voxels are absorbing") {
    const GridSpec grid = GridSpec::centered({8, 8, 2}, {0.5, 0.5, 1.0});
    const auto psf = synthesize_psf(OpticsConfig::ring_views(3, 1.5, 0.2, 0.7, 0.1),
                                    33, 33, grid);
    auto truth = test_helpers::random_volume(grid, 21, 0.1, 1.0);
    const auto img = forward_project(truth, psf);
    VoxelGrid init(grid, 0.5);
    init.at(3, 4, 1) = 0.0;
    init.at(0, 0, 0) = 0.0;
    RlConfig cfg;
    cfg.iterations = 5;
    const auto res = rl_deconvolve(img, psf, cfg, grid, init);
    CHECK(res.volume.at(3, 4, 1) == 0.0);
    CHECK(res.volume.at(0, 0, 0) == 0.0);
}

TEST_CASE("rl nonnegativity and monotone likelihood on a noiseless bead scene") {
    const GridSpec grid = GridSpec::centered({32, 32, 8}, {0.5, 0.5, 1.5});
    BeadSpec spec;
    spec.count = 4;
    spec.radius_sigma = 0.8;
    spec.min_separation = 4.0;
    spec.intensity = 2.0;
    spec.seed = 99;
    auto [truth, centers] = phantom_beads(grid, spec);
    const auto psf = synthesize_psf(OpticsConfig::ring_views(5, 4.0, 0.35, 0.9, 0.15),
                                    81, 81, grid);
    const auto img = forward_project(truth, psf);

    RlConfig cfg;
    cfg.iterations = 30;
    cfg.record_likelihood = true;
    bool nonneg = true;
    const auto res = rl_deconvolve(img, psf, cfg, grid, std::nullopt,
                                   [&](int, const VoxelGrid& v) {
                                       for (double x : v.values)
                                           if (x < 0.0) nonneg = false;
                                   });
    CHECK(nonneg);
    REQUIRE(res.likelihood.size() == 30);
    for (std::size_t k = 1; k < res.likelihood.size(); ++k)
        CHECK(res.likelihood[k] >=
              res.likelihood[k - 1] - 1e-8 * std::abs(res.likelihood[k - 1]));
}

TEST_CASE("rl input validation") {
    const GridSpec grid = GridSpec::centered({8, 8, 1}, {0.5, 0.5, 1.0});
    const auto psf =
        synthesize_psf(OpticsConfig::ring_views(1, 0.0, 0.0, 0.7, 0.0), 33, 33, grid);
    SensorImage img(33, 33, 0.5, 1.0);

    SUBCASE("negative measurement entries") {
        img.values[5] = -0.1;
        CHECK_THROWS_AS(rl_deconvolve(img, psf, RlConfig{}, grid), std::invalid_argument);
    }
    SUBCASE("zero psf slice") {
        PsfStack zero = psf;
        std::fill(zero.values.begin(), zero.values.end(), 0.0);
        zero.normalized = false;
        CHECK_THROWS_AS(rl_deconvolve(img, zero, RlConfig{}, grid), std::invalid_argument);
    }
    SUBCASE("bad iterations") {
        RlConfig cfg;
        cfg.iterations = 0;
        CHECK_THROWS_AS(rl_deconvolve(img, psf, cfg, grid), std::invalid_argument);
    }
}
