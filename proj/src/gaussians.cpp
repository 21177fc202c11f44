#include "gatflfm/gaussians.hpp"

#include <json.hpp>

#include <Eigen/Cholesky>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace gatflfm {

double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double softplus_inv(double y) {
    if (!(y > 0.0)) throw std::invalid_argument("softplus_inv: argument must be > 0");
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void GaussianCloud::validate() const {
    const std::size_t m = density_raw.size();
    if (m == 0) throw std::invalid_argument("GaussianCloud: empty cloud");
    if (mean.size() != m || log_scale.size() != m || quat.size() != m)
        throw std::invalid_argument("GaussianCloud: parameter arrays disagree on m");
    for (std::size_t i = 0; i < m; ++i) {
        if (!std::isfinite(density_raw[i]) || !mean[i].allFinite() ||
            !log_scale[i].allFinite() || !quat[i].allFinite())
            throw std::invalid_argument("GaussianCloud: non-finite parameter at kernel " +
                                        std::to_string(i));
        if (quat[i].squaredNorm() == 0.0)
            throw std::invalid_argument("GaussianCloud: zero quaternion at kernel " +
                                        std::to_string(i));
    }
}

void VoxelizeConfig::validate() const {
    if (!(cutoff_sigma >= 1.0))
        throw std::invalid_argument("VoxelizeConfig: cutoff_sigma must be >= 1");
    if (tile_size < 1) throw std::invalid_argument("VoxelizeConfig: tile_size must be >= 1");
}

Eigen::Matrix3d quat_to_rotation(const Eigen::Vector4d& quat) {
    const double n = quat.norm();
    if (n == 0.0) throw std::invalid_argument("quat_to_rotation: zero quaternion");
    const double w = quat[0] / n, x = quat[1] / n, y = quat[2] / n, z = quat[3] / n;
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Eigen::Matrix3d assemble_covariance(const Eigen::Vector3d& log_scale,
                                    const Eigen::Vector4d& quat) {
    const Eigen::Matrix3d rot = quat_to_rotation(quat);
    const Eigen::Vector3d s2 = (2.0 * log_scale.array()).exp().matrix();
    return rot * s2.asDiagonal() * rot.transpose();
}

double eval_gaussian(double rho, const Eigen::Vector3d& mu, const Eigen::Matrix3d& sigma,
                     const Eigen::Vector3d& x) {
    const Eigen::LLT<Eigen::Matrix3d> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("eval_gaussian: covariance is not SPD");
    const Eigen::Vector3d d = x - mu;
    const double q = d.dot(llt.solve(d));
    return rho * std::exp(-0.5 * q);
}

namespace {

// Per-kernel quantities reused by the forward and backward passes.
struct KernelFrame {
    double rho;
    Eigen::Matrix3d rot;
    Eigen::Vector3d inv_s2; // 1/s_k^2
    Eigen::Vector3d mu;
    // voxel index bounds of the AABB at the cutoff radius, clamped to grid
    int lo[3], hi[3];
    bool in_grid;
};

KernelFrame make_frame(const GaussianCloud& cloud, std::size_t i, const GridSpec& grid,
                       double cutoff) {
    KernelFrame f;
    f.rho = cloud.density(i);
    f.rot = quat_to_rotation(cloud.quat[i]);
    f.inv_s2 = (-2.0 * cloud.log_scale[i].array()).exp().matrix();
    f.mu = cloud.mean[i];
    const Eigen::Vector3d s2 = (2.0 * cloud.log_scale[i].array()).exp().matrix();
    f.in_grid = true;
    for (int a = 0; a < 3; ++a) {
        // sqrt(Sigma_aa) = half extent of the unit-Mahalanobis ellipsoid
        double var = 0.0;
        for (int k = 0; k < 3; ++k) var += f.rot(a, k) * f.rot(a, k) * s2[k];
        const double ext = cutoff * std::sqrt(var);
        f.lo[a] = static_cast<int>(std::ceil((f.mu[a] - ext - grid.origin[a]) / grid.pitch[a] - 1e-12));
        f.hi[a] = static_cast<int>(std::floor((f.mu[a] + ext - grid.origin[a]) / grid.pitch[a] + 1e-12));
        f.lo[a] = std::max(f.lo[a], 0);
        f.hi[a] = std::min(f.hi[a], grid.dims[a] - 1);
        if (f.lo[a] > f.hi[a]) f.in_grid = false;
    }
    return f;
}

} // namespace

VoxelGrid voxelize(const GaussianCloud& cloud, const GridSpec& grid,
                   const VoxelizeConfig& cfg) {
    cloud.validate();
    grid.validate();
    cfg.validate();

    const std::size_t m = cloud.size();
    std::vector<KernelFrame> frames(m);
    for (std::size_t i = 0; i < m; ++i) frames[i] = make_frame(cloud, i, grid, cfg.cutoff_sigma);

    const int t = cfg.tile_size;
    const int ntx = (grid.nx() + t - 1) / t;
    const int nty = (grid.ny() + t - 1) / t;
    const int ntz = (grid.nz() + t - 1) / t;
    const std::size_t n_tiles = static_cast<std::size_t>(ntx) * nty * ntz;

    // Kernel -> tile binning from the AABB; kernels stay in index order per
    // tile, so per-voxel accumulation order is fixed.
    std::vector<std::vector<std::uint32_t>> bins(n_tiles);
    for (std::size_t i = 0; i < m; ++i) {
        const auto& f = frames[i];
        if (!f.in_grid) continue;
        for (int tz = f.lo[2] / t; tz <= f.hi[2] / t; ++tz)
            for (int ty = f.lo[1] / t; ty <= f.hi[1] / t; ++ty)
                for (int tx = f.lo[0] / t; tx <= f.hi[0] / t; ++tx)
                    bins[static_cast<std::size_t>(tz) * nty * ntx + static_cast<std::size_t>(ty) * ntx + tx]
                        .push_back(static_cast<std::uint32_t>(i));
    }

    VoxelGrid out(grid);
    const double cutoff2 = cfg.cutoff_sigma * cfg.cutoff_sigma;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t tile = 0; tile < static_cast<std::ptrdiff_t>(n_tiles); ++tile) {
        const auto& list = bins[tile];
        if (list.empty()) continue;
        const int tz = static_cast<int>(tile / (static_cast<std::size_t>(nty) * ntx));
        const int ty = static_cast<int>(tile / ntx % nty);
        const int tx = static_cast<int>(tile % ntx);
        const int x0 = tx * t, x1 = std::min(grid.nx(), x0 + t);
        const int y0 = ty * t, y1 = std::min(grid.ny(), y0 + t);
        const int z0 = tz * t, z1 = std::min(grid.nz(), z0 + t);
        for (const std::uint32_t i : list) {
            const auto& f = frames[i];
            const int ax0 = std::max(x0, f.lo[0]), ax1 = std::min(x1 - 1, f.hi[0]);
            const int ay0 = std::max(y0, f.lo[1]), ay1 = std::min(y1 - 1, f.hi[1]);
            const int az0 = std::max(z0, f.lo[2]), az1 = std::min(z1 - 1, f.hi[2]);
            for (int iz = az0; iz <= az1; ++iz)
                for (int iy = ay0; iy <= ay1; ++iy)
                    for (int ix = ax0; ix <= ax1; ++ix) {
                        const auto p = grid.voxel_center(ix, iy, iz);
                        const Eigen::Vector3d d{p[0] - f.mu[0], p[1] - f.mu[1], p[2] - f.mu[2]};
                        const Eigen::Vector3d u = f.rot.transpose() * d;
                        const double q = (u.array().square() * f.inv_s2.array()).sum();
                        if (q <= cutoff2) out.at(ix, iy, iz) += f.rho * std::exp(-0.5 * q);
                    }
        }
    }
    return out;
}

CloudGrads CloudGrads::zeros(std::size_t m) {
    CloudGrads g;
    g.density_raw.assign(m, 0.0);
    g.mean.assign(m, Eigen::Vector3d::Zero());
    g.log_scale.assign(m, Eigen::Vector3d::Zero());
    g.quat.assign(m, Eigen::Vector4d::Zero());
    return g;
}

void CloudGrads::add_scaled(const CloudGrads& other, double factor) {
    for (std::size_t i = 0; i < density_raw.size(); ++i) {
        density_raw[i] += factor * other.density_raw[i];
        mean[i] += factor * other.mean[i];
        log_scale[i] += factor * other.log_scale[i];
        quat[i] += factor * other.quat[i];
    }
}

namespace {

// d(R)/d(unit quaternion component), for R as in quat_to_rotation.
void rotation_jacobian(const Eigen::Vector4d& unit_q, Eigen::Matrix3d dr[4]) {
    const double w = unit_q[0], x = unit_q[1], y = unit_q[2], z = unit_q[3];
    dr[0] << 0, -z, y, z, 0, -x, -y, x, 0;
    dr[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
    dr[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
    dr[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
    for (int k = 0; k < 4; ++k) dr[k] *= 2.0;
}

} // namespace

CloudGrads voxelize_backward(const GaussianCloud& cloud, const GridSpec& grid,
                             const VoxelizeConfig& cfg, const VoxelGrid& grad_out) {
    cloud.validate();
    grid.validate();
    cfg.validate();
    if (grad_out.grid.dims != grid.dims)
        throw std::invalid_argument("voxelize_backward: grad_out dims do not match grid");
    if (!grad_out.all_finite())
        throw std::invalid_argument("voxelize_backward: grad_out must be finite");

    const std::size_t m = cloud.size();
    CloudGrads grads = CloudGrads::zeros(m);
    const double cutoff2 = cfg.cutoff_sigma * cfg.cutoff_sigma;

    // Parallel over kernels: each kernel's accumulator is owned by one
    // iteration, voxels are visited in a fixed order.
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
        const std::size_t i = static_cast<std::size_t>(ii);
        const KernelFrame f = make_frame(cloud, i, grid, cfg.cutoff_sigma);
        if (!f.in_grid) continue;

        const double dsig = sigmoid(cloud.density_raw[i]);
        double g_rho_raw = 0.0;
        Eigen::Vector3d g_mu = Eigen::Vector3d::Zero();
        Eigen::Vector3d g_ls = Eigen::Vector3d::Zero();
        Eigen::Matrix3d g_rot = Eigen::Matrix3d::Zero();

        for (int iz = f.lo[2]; iz <= f.hi[2]; ++iz)
            for (int iy = f.lo[1]; iy <= f.hi[1]; ++iy)
                for (int ix = f.lo[0]; ix <= f.hi[0]; ++ix) {
                    const double go = grad_out.at(ix, iy, iz);
                    if (go == 0.0) continue;
                    const auto p = grid.voxel_center(ix, iy, iz);
                    const Eigen::Vector3d d{p[0] - f.mu[0], p[1] - f.mu[1], p[2] - f.mu[2]};
                    const Eigen::Vector3d u = f.rot.transpose() * d;
                    const Eigen::Vector3d v = (u.array() * f.inv_s2.array()).matrix();
                    const double q = u.dot(v);
                    if (q > cutoff2) continue;
                    const double gval = f.rho * std::exp(-0.5 * q);
                    const double gg = go * gval;

                    g_rho_raw += go * std::exp(-0.5 * q) * dsig;
                    g_mu += gg * (f.rot * v); // Sigma^-1 (x - mu)
                    g_ls += gg * (u.array() * v.array()).matrix();
                    g_rot -= gg * (d * v.transpose()); // dG/dR = -G d v^T
                }

        grads.density_raw[i] = g_rho_raw;
        grads.mean[i] = g_mu;
        grads.log_scale[i] = g_ls;

        // Chain dG/dR through the quaternion map and its normalization.
        const double n = cloud.quat[i].norm();
        const Eigen::Vector4d qhat = cloud.quat[i] / n;
        Eigen::Matrix3d dr[4];
        rotation_jacobian(qhat, dr);
        Eigen::Vector4d g_qhat;
        for (int k = 0; k < 4; ++k) g_qhat[k] = (g_rot.array() * dr[k].array()).sum();
        grads.quat[i] = (g_qhat - qhat * qhat.dot(g_qhat)) / n;
    }
    return grads;
}

GaussianCloud init_from_volume(const VoxelGrid& vol, int n, std::uint64_t seed,
                               const InitConfig& cfg) {
    vol.grid.validate();
    if (n < 1) throw std::invalid_argument("init_from_volume: n must be >= 1");
    if (!(cfg.percentile >= 0.0 && cfg.percentile <= 100.0))
        throw std::invalid_argument("init_from_volume: percentile must be in [0, 100]");
    if (!(cfg.scale_factor > 0.0))
        throw std::invalid_argument("init_from_volume: scale_factor must be > 0");

    std::vector<double> nonzero;
    for (double v : vol.values)
        if (v > 0.0) nonzero.push_back(v);
    if (nonzero.empty())
        throw std::runtime_error("init_from_volume: initializer found no signal");

    // Nearest-rank percentile of the nonzero intensities.
    std::sort(nonzero.begin(), nonzero.end());
    std::size_t rank = 0;
    if (cfg.percentile > 0.0)
        rank = std::min(nonzero.size() - 1,
                        static_cast<std::size_t>(
                            std::ceil(cfg.percentile / 100.0 * nonzero.size())) -
                            1);
    const double threshold = nonzero[rank];

    std::vector<std::size_t> candidates;
    for (std::size_t k = 0; k < vol.values.size(); ++k)
        if (vol.values[k] >= threshold) candidates.push_back(k);
    if (static_cast<std::size_t>(n) > candidates.size())
        throw std::runtime_error("init_from_volume: n=" + std::to_string(n) +
                                 " exceeds " + std::to_string(candidates.size()) +
                                 " candidate voxels");

    // Weighted sampling without replacement via the exponential race:
    // the n smallest Exp(1)/weight keys are the chosen voxels.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::pair<double, std::size_t>> keys;
    keys.reserve(candidates.size());
    for (std::size_t k : candidates) {
        const double u = std::max(unif(rng), 1e-300);
        keys.emplace_back(-std::log(u) / vol.values[k], k);
    }
    std::partial_sort(keys.begin(), keys.begin() + n, keys.end());

    GaussianCloud cloud;
    const int nx = vol.grid.nx(), ny = vol.grid.ny();
    for (int i = 0; i < n; ++i) {
        const std::size_t k = keys[i].second;
        const int ix = static_cast<int>(k % nx);
        const int iy = static_cast<int>(k / nx % ny);
        const int iz = static_cast<int>(k / (static_cast<std::size_t>(nx) * ny));
        const auto p = vol.grid.voxel_center(ix, iy, iz);
        cloud.density_raw.push_back(softplus_inv(vol.values[k]));
        cloud.mean.emplace_back(p[0], p[1], p[2]);
        cloud.log_scale.emplace_back(std::log(cfg.scale_factor * vol.grid.pitch[0]),
                                     std::log(cfg.scale_factor * vol.grid.pitch[1]),
                                     std::log(cfg.scale_factor * vol.grid.pitch[2]));
        cloud.quat.emplace_back(1.0, 0.0, 0.0, 0.0);
    }
    return cloud;
}

namespace {

void append_f32(std::vector<float>& buf, double v) { buf.push_back(static_cast<float>(v)); }

} // namespace

void save_cloud(const GaussianCloud& cloud, const std::string& path) {
    cloud.validate();
    const std::size_t m = cloud.size();
    nlohmann::json header{{"format", "gatflfm-cloud"},
                          {"version", 1},
                          {"m", m},
                          {"fields", {"density_raw", "mean", "log_scale", "quat"}}};
    std::vector<float> buf;
    buf.reserve(m * 11);
    for (std::size_t i = 0; i < m; ++i) append_f32(buf, cloud.density_raw[i]);
    for (std::size_t i = 0; i < m; ++i)
        for (int a = 0; a < 3; ++a) append_f32(buf, cloud.mean[i][a]);
    for (std::size_t i = 0; i < m; ++i)
        for (int a = 0; a < 3; ++a) append_f32(buf, cloud.log_scale[i][a]);
    for (std::size_t i = 0; i < m; ++i)
        for (int a = 0; a < 4; ++a) append_f32(buf, cloud.quat[i][a]);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << header.dump() << "\n";
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw std::runtime_error("write failed: " + path);
}

GaussianCloud load_cloud(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string header_line;
    if (!std::getline(in, header_line))
        throw std::runtime_error("malformed cloud file (no header): " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed cloud header in " + path + ": " + e.what());
    }
    if (header.value("format", "") != "gatflfm-cloud")
        throw std::runtime_error("not a cloud file: " + path);
    const std::size_t m = header.at("m").get<std::size_t>();
    if (m == 0) throw std::runtime_error("cloud file has m=0: " + path);

    std::vector<float> buf(m * 11);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != buf.size() * sizeof(float))
        throw std::runtime_error("cloud payload truncated: " + path);

    GaussianCloud cloud;
    std::size_t k = 0;
    cloud.density_raw.resize(m);
    for (std::size_t i = 0; i < m; ++i) cloud.density_raw[i] = buf[k++];
    cloud.mean.resize(m);
    for (std::size_t i = 0; i < m; ++i)
        for (int a = 0; a < 3; ++a) cloud.mean[i][a] = buf[k++];
    cloud.log_scale.resize(m);
    for (std::size_t i = 0; i < m; ++i)
        for (int a = 0; a < 3; ++a) cloud.log_scale[i][a] = buf[k++];
    cloud.quat.resize(m);
    for (std::size_t i = 0; i < m; ++i)
        for (int a = 0; a < 4; ++a) cloud.quat[i][a] = buf[k++];
    cloud.validate();
    return cloud;
}

} // namespace gatflfm
