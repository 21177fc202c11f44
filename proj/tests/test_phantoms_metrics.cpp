#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gatflfm/metrics.hpp"
#include "gatflfm/phantoms.hpp"
#include "gatflfm/reference.hpp"
#include "helpers.hpp"

#include <cmath>
#include <filesystem>
#include <random>

using namespace gatflfm;

TEST_CASE("bead phantom: single forced bead has the analytic FWHM") {
    const GridSpec grid = GridSpec::centered({48, 48, 24}, {0.25, 0.25, 0.5});
    BeadSpec spec;
    spec.radius_sigma = 1.0;
    spec.intensity = 3.0;
    spec.forced_centers = {{0.0, 0.0, 0.0}};
    const auto [vol, centers] = phantom_beads(grid, spec);
    REQUIRE(centers.size() == 1);

    const auto profile =
        line_profile(vol, {-4.0, 0.0, 0.0}, {4.0, 0.0, 0.0}, 161); // 0.05 um steps
    // symmetric around the center sample
    for (int k = 0; k < 80; ++k)
        CHECK(profile[80 - k] == doctest::Approx(profile[80 + k]).epsilon(1e-9));
    const double width = fwhm(profile, 0.05);
    CHECK(std::abs(width - 2.3548 * spec.radius_sigma) <= 0.125); // half a voxel pitch
}

TEST_CASE("bead phantom: count 0 gives an empty volume, separation is enforced") {
    const GridSpec grid = GridSpec::centered({32, 32, 16}, {0.5, 0.5, 1.0});
    BeadSpec none;
    none.count = 0;
    const auto [zero_vol, zero_centers] = phantom_beads(grid, none);
    CHECK(zero_centers.empty());
    CHECK(zero_vol.max_value() == 0.0);

    BeadSpec spec;
    spec.count = 20;
    spec.radius_sigma = 0.4;
    spec.min_separation = 5.0;
    spec.seed = 5;
    const auto [vol, centers] = phantom_beads(grid, spec);
    REQUIRE(centers.size() == 20);
    for (std::size_t a = 0; a < centers.size(); ++a)
        for (std::size_t b = a + 1; b < centers.size(); ++b) {
            const double d2 = (centers[a][0] - centers[b][0]) * (centers[a][0] - centers[b][0]) +
                              (centers[a][1] - centers[b][1]) * (centers[a][1] - centers[b][1]) +
                              (centers[a][2] - centers[b][2]) * (centers[a][2] - centers[b][2]);
            CHECK(d2 >= 5.0 * 5.0 - 1e-9);
        }
    // impossible packing errors out
    BeadSpec dense;
    dense.count = 50;
    dense.radius_sigma = 0.4;
    dense.min_separation = 10.0;
    CHECK_THROWS_AS(phantom_beads(grid, dense), std::runtime_error);
}

TEST_CASE("line phantom geometry") {
    const GridSpec grid = GridSpec::centered({64, 16, 5}, {0.12, 0.12, 0.5});
    LinePhantomSpec spec;
    spec.spacings = {1.68};
    spec.line_width = 0.24;

    SUBCASE("centers 14 voxels apart at 0.12 um pitch") {
        const auto centers = line_centers_x(grid, spec, 0);
        REQUIRE(centers.size() == 3);
        const double step = (centers[1] - centers[0]) / grid.pitch[0];
        CHECK(step == doctest::Approx(14.0).epsilon(1e-12));
        // centers land on voxel centers
        for (double c : centers) {
            const double frac = (c - grid.origin[0]) / grid.pitch[0];
            CHECK(std::abs(frac - std::lround(frac)) <= 1e-9);
        }
    }
    SUBCASE("profile across a 3-line group has exactly 3 local maxima") {
        const auto vol = phantom_lines(grid, spec);
        const int iz = grid.nz() / 2, iy = grid.ny() / 2;
        int maxima = 0;
        for (int ix = 1; ix + 1 < grid.nx(); ++ix)
            if (vol.at(ix, iy, iz) > vol.at(ix - 1, iy, iz) &&
                vol.at(ix, iy, iz) >= vol.at(ix + 1, iy, iz))
                ++maxima;
        CHECK(maxima == 3);
    }
    SUBCASE("sub-voxel line occupies one column with the fill fraction") {
        LinePhantomSpec thin = spec;
        thin.spacings = {1.2};
        thin.line_width = 0.06; // half a voxel
        const auto vol = phantom_lines(grid, thin);
        const int iz = grid.nz() / 2, iy = grid.ny() / 2;
        std::vector<int> cols;
        for (int ix = 0; ix < grid.nx(); ++ix)
            if (vol.at(ix, iy, iz) > 0.0) {
                cols.push_back(ix);
                CHECK(vol.at(ix, iy, iz) == doctest::Approx(0.5).epsilon(1e-9));
            }
        CHECK(cols.size() == 3);
    }
    SUBCASE("group that cannot fit names itself in the error") {
        LinePhantomSpec wide = spec;
        wide.spacings = {1.68, 12.0}; // second group blows the centered layout
        CHECK_THROWS_WITH_AS(phantom_lines(grid, wide),
                             doctest::Contains("does not fit"), std::runtime_error);
    }
}

TEST_CASE("add_noise") {
    SensorImage img(40, 25, 1.0, 100.0);
    SUBCASE("huge photon scale and zero sigma approaches the identity") {
        const auto out = add_noise(img, 1e12, 0.0, 9);
        for (double v : out.values) CHECK(std::abs(v - 100.0) <= 1e-4 * 100.0);
    }
    SUBCASE("poisson moments at photon_scale 1") {
        const auto out = add_noise(img, 1.0, 0.0, 10);
        double mean = 0.0;
        for (double v : out.values) mean += v;
        mean /= static_cast<double>(out.values.size());
        double var = 0.0;
        for (double v : out.values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(out.values.size() - 1);
        const double n = static_cast<double>(out.values.size());
        CHECK(std::abs(mean - 100.0) <= 3.0 * std::sqrt(100.0 / n));
        // var of sample variance of Poisson(100): ~ (2*lambda^2 + lambda)/n
        CHECK(std::abs(var - 100.0) <= 3.0 * std::sqrt((2 * 100.0 * 100.0 + 100.0) / n));
    }
    SUBCASE("deterministic per seed") {
        const auto a = add_noise(img, 50.0, 0.3, 11);
        const auto b = add_noise(img, 50.0, 0.3, 11);
        CHECK(a.values == b.values);
    }
    SUBCASE("negative input rejected") {
        img.values[0] = -1.0;
        CHECK_THROWS_AS(add_noise(img, 1.0, 0.0, 12), std::invalid_argument);
    }
}

TEST_CASE("psnr") {
    const GridSpec grid = GridSpec::centered({8, 8, 4}, {1, 1, 1});
    const auto gt = test_helpers::random_volume(grid, 90, 0.1, 2.0);

    SUBCASE("identical volumes are flagged") {
        const auto r = psnr(gt, gt);
        CHECK(r.identical);
    }
    SUBCASE("normalized mse 0.01 is exactly 20 dB") {
        VoxelGrid flat_gt(grid, 0.0);
        flat_gt.values[0] = 1.0; // gt max 1
        VoxelGrid recon = flat_gt;
        // perturb every voxel by 0.1 -> normalized mse 0.01
        for (double& v : recon.values) v += 0.1;
        const auto r = psnr(recon, flat_gt);
        CHECK(r.db == doctest::Approx(20.0).epsilon(1e-12));
    }
    SUBCASE("matches the direct-formula oracle and is scale invariant") {
        const auto recon = test_helpers::random_volume(grid, 91, 0.0, 2.0);
        const auto r = psnr(recon, gt);
        const double norm = gt.max_value();
        double mse = 0.0;
        for (std::size_t k = 0; k < gt.values.size(); ++k) {
            const double d = (recon.values[k] - gt.values[k]) / norm;
            mse += d * d;
        }
        mse /= static_cast<double>(gt.values.size());
        CHECK(r.db == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-9));

        VoxelGrid recon_s = recon, gt_s = gt;
        for (double& v : recon_s.values) v *= 4.0; // power of two: exact in fp
        for (double& v : gt_s.values) v *= 4.0;
        CHECK(psnr(recon_s, gt_s).db == r.db);
    }
    SUBCASE("per-layer yields nz values") {
        const auto recon = test_helpers::random_volume(grid, 92, 0.0, 2.0);
        CHECK(psnr_per_layer(recon, gt).size() == 4);
    }
    SUBCASE("dim mismatch errors") {
        VoxelGrid other(GridSpec::centered({8, 8, 3}, {1, 1, 1}));
        CHECK_THROWS_AS(psnr(other, gt), std::invalid_argument);
    }
}

TEST_CASE("frc") {
    const auto x = test_helpers::random_image(32, 32, 1.0, 95, 0.1, 1.0);
    SUBCASE("self correlation is 1 on every ring") {
        for (double v : frc(x, x)) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("sign flip gives -1 on every ring") {
        SensorImage neg = x;
        for (double& v : neg.values) v = -v;
        for (double v : frc(x, neg)) CHECK(v == doctest::Approx(-1.0).epsilon(1e-12));
    }
    SUBCASE("independent white noise decorrelates") {
        const auto a = test_helpers::random_image(128, 128, 1.0, 96, -1.0, 1.0);
        const auto b = test_helpers::random_image(128, 128, 1.0, 97, -1.0, 1.0);
        const auto curve = frc(a, b);
        double mean = 0.0;
        for (double v : curve) mean += v;
        mean /= static_cast<double>(curve.size());
        CHECK(std::abs(mean) <= 0.05);
    }
    SUBCASE("all-zero image errors") {
        SensorImage zero(32, 32, 1.0);
        CHECK_THROWS_AS(frc(x, zero), std::invalid_argument);
    }
    SUBCASE("frc_qe lies in [-1, 1] and skips empty pairs") {
        const GridSpec grid = GridSpec::centered({24, 24, 6}, {0.5, 0.5, 1.0});
        auto vol = test_helpers::random_volume(grid, 98, 0.0, 1.0);
        for (double& v : vol.slice(0)) v = 0.0; // one empty slice is skipped
        const double qe = frc_qe(vol);
        CHECK(qe >= -1.0);
        CHECK(qe <= 1.0);
    }
}

TEST_CASE("line_profile") {
    const GridSpec grid = GridSpec::centered({16, 16, 8}, {0.5, 0.5, 1.0});
    SUBCASE("constant volume gives a flat profile of ones") {
        VoxelGrid vol(grid, 3.3);
        const auto p = line_profile(vol, {-2, -1, 0}, {2, 1, 1}, 33);
        for (double v : p) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("profile across a bead peaks at the midpoint sample") {
        BeadSpec spec;
        spec.radius_sigma = 0.8;
        spec.forced_centers = {{0.0, 0.0, 0.0}};
        const auto [vol, centers] = phantom_beads(grid, spec);
        const auto p = line_profile(vol, {-2, 0, 0}, {2, 0, 0}, 41);
        CHECK(*std::max_element(p.begin(), p.end()) == p[20]);
    }
    SUBCASE("out-of-bounds endpoint errors") {
        VoxelGrid vol(grid, 1.0);
        CHECK_THROWS_AS(line_profile(vol, {-100, 0, 0}, {0, 0, 0}, 5),
                        std::invalid_argument);
    }
}

TEST_CASE("profile across a line group reproduces the spacing") {
    const GridSpec grid = GridSpec::centered({64, 16, 3}, {0.12, 0.12, 0.5});
    LinePhantomSpec spec;
    spec.spacings = {0.96};
    const auto vol = phantom_lines(grid, spec);
    const auto centers = line_centers_x(grid, spec, 0);
    const double y = 0.0, z = grid.z_plane(grid.nz() / 2);
    const int n = 201;
    const double x0 = centers.front() - 1.0, x1 = centers.back() + 1.0;
    const auto p = line_profile(vol, {x0, y, z}, {x1, y, z}, n);
    const double step = (x1 - x0) / (n - 1);

    // find the three tallest local maxima positions
    std::vector<int> peaks;
    for (int i = 1; i + 1 < n; ++i)
        if (p[i] > p[i - 1] && p[i] >= p[i + 1]) peaks.push_back(i);
    REQUIRE(peaks.size() == 3);
    CHECK(std::abs((peaks[1] - peaks[0]) * step - 0.96) <= step);
    CHECK(std::abs((peaks[2] - peaks[1]) * step - 0.96) <= step);
}

TEST_CASE("fwhm") {
    SUBCASE("sampled gaussian, converging with pitch") {
        auto gauss_profile = [](double pitch) {
            std::vector<double> p;
            for (double x = -5.0; x <= 5.0 + 1e-12; x += pitch)
                p.push_back(std::exp(-0.5 * x * x));
            return p;
        };
        const double w1 = fwhm(gauss_profile(0.05), 0.05);
        CHECK(std::abs(w1 - 2.3548) <= 0.05);
        const double w2 = fwhm(gauss_profile(0.025), 0.025);
        CHECK(std::abs(w2 - 2.3548200450) <= std::abs(w1 - 2.3548200450) + 1e-12);
    }
    SUBCASE("triangular peak of half-width h has FWHM h") {
        // triangle from 0 up to 1 over 10 samples and back down
        std::vector<double> p;
        for (int i = 0; i <= 10; ++i) p.push_back(i / 10.0);
        for (int i = 9; i >= 0; --i) p.push_back(i / 10.0);
        // half-width at half max: crossing at 0.5 -> width = 10 samples * pitch
        CHECK(fwhm(p, 0.2) == doctest::Approx(10 * 0.2).epsilon(1e-12));
    }
    SUBCASE("monotone profile errors") {
        std::vector<double> p;
        for (int i = 0; i < 20; ++i) p.push_back(0.1 * i);
        CHECK_THROWS_WITH_AS(fwhm(p, 1.0), doctest::Contains("not resolved"),
                             std::runtime_error);
    }
}

TEST_CASE("mip") {
    const GridSpec grid = GridSpec::centered({10, 12, 6}, {0.5, 0.5, 1.0});
    SUBCASE("single voxel lights one pixel in every axis projection") {
        VoxelGrid vol(grid);
        vol.at(3, 7, 2) = 2.0;
        for (char axis : {'x', 'y', 'z'}) {
            const auto m = mip(vol, axis);
            int nonzero = 0;
            for (double v : m.values)
                if (v > 0.0) ++nonzero;
            CHECK(nonzero == 1);
        }
        CHECK(mip(vol, 'z').at(7, 3) == 2.0);
        CHECK(mip(vol, 'y').at(2, 3) == 2.0);
        CHECK(mip(vol, 'x').at(2, 7) == 2.0);
    }
    SUBCASE("dominates every slice and matches the naive oracle") {
        const auto vol = test_helpers::random_volume(grid, 99, -1.0, 1.0);
        const auto m = mip(vol, 'z');
        for (int iz = 0; iz < grid.nz(); ++iz)
            for (int iy = 0; iy < grid.ny(); ++iy)
                for (int ix = 0; ix < grid.nx(); ++ix)
                    CHECK(m.at(iy, ix) >= vol.at(ix, iy, iz));
        for (char axis : {'x', 'y', 'z'}) {
            int rows, cols;
            const auto ref = reference::mip_naive(vol, axis == 'x' ? 0 : axis == 'y' ? 1 : 2,
                                                  rows, cols);
            const auto fast = mip(vol, axis);
            REQUIRE(fast.h == rows);
            REQUIRE(fast.w == cols);
            CHECK(fast.values == ref);
        }
    }
}

TEST_CASE("png export writes a 16-bit file plus a window sidecar") {
    test_helpers::TempDir tmp("png");
    const auto img = test_helpers::random_image(24, 32, 1.0, 101, -2.0, 5.0);
    const auto path = tmp.file("m.png");
    export_png16(img, path);
    CHECK(std::filesystem::file_size(path) > 8);
    CHECK(std::filesystem::exists(path + ".json"));
    // PNG signature
    std::ifstream in(path, std::ios::binary);
    unsigned char sig[8];
    in.read(reinterpret_cast<char*>(sig), 8);
    CHECK(sig[0] == 0x89);
    CHECK(sig[1] == 'P');
    CHECK(sig[2] == 'N');
    CHECK(sig[3] == 'G');
}

TEST_CASE("assess_line_resolution distinguishes resolved from merged peaks") {
    // two clean gaussian bumps, then a merged blob
    const double pitch = 0.05;
    auto two_bumps = [&](double sep, double sigma) {
        std::vector<double> p;
        for (double x = 0.0; x <= sep + 4.0; x += pitch)
            p.push_back(std::exp(-0.5 * std::pow((x - 2.0) / sigma, 2)) +
                        std::exp(-0.5 * std::pow((x - 2.0 - sep) / sigma, 2)));
        return p;
    };
    const std::vector<double> centers{2.0, 3.2};
    const auto resolved = assess_line_resolution(two_bumps(1.2, 0.3), pitch, centers);
    CHECK(resolved.resolved);
    const auto merged = assess_line_resolution(two_bumps(1.2, 0.8), pitch, centers);
    CHECK_FALSE(merged.resolved);
}
