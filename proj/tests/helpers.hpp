#pragma once

#include "gatflfm/gaussians.hpp"
#include "gatflfm/types.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace test_helpers {

inline gatflfm::VoxelGrid random_volume(const gatflfm::GridSpec& grid, std::uint64_t seed,
                                        double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> unif(static_cast<float>(lo),
                                               static_cast<float>(hi));
    gatflfm::VoxelGrid vol(grid);
    for (double& v : vol.values) v = unif(rng); // f32 values, exact on disk
    return vol;
}

inline gatflfm::SensorImage random_image(int h, int w, double pitch, std::uint64_t seed,
                                         double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> unif(static_cast<float>(lo),
                                               static_cast<float>(hi));
    gatflfm::SensorImage img(h, w, pitch);
    for (double& v : img.values) v = unif(rng);
    return img;
}

/// Random anisotropic rotated kernels with means inside the grid interior.
inline gatflfm::GaussianCloud random_cloud(const gatflfm::GridSpec& grid, int m,
                                           std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    gatflfm::GaussianCloud cloud;
    for (int i = 0; i < m; ++i) {
        cloud.density_raw.push_back(-1.0 + 3.0 * unif(rng));
        Eigen::Vector3d mu;
        for (int a = 0; a < 3; ++a) {
            const double span = (grid.dims[a] - 1) * grid.pitch[a];
            mu[a] = grid.origin[a] + (0.15 + 0.7 * unif(rng)) * span;
        }
        cloud.mean.push_back(mu);
        Eigen::Vector3d ls;
        for (int a = 0; a < 3; ++a)
            ls[a] = std::log(grid.pitch[a] * (0.8 + 1.8 * unif(rng)));
        cloud.log_scale.push_back(ls);
        Eigen::Vector4d q;
        for (int a = 0; a < 4; ++a) q[a] = -1.0 + 2.0 * unif(rng);
        if (q.norm() < 0.2) q[0] += 1.0;
        cloud.quat.push_back(q);
    }
    return cloud;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double scale = std::max(max_abs(a), max_abs(b));
    if (scale == 0.0) return 0.0;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m / scale;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("gatflfm_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace test_helpers
