#pragma once

#include "gatflfm/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace gatflfm {

/// Numerically stable softplus and its inverse; density activation.
double softplus(double x);
double softplus_inv(double y);
double sigmoid(double x);

/// Cloud of m anisotropic 3D Gaussian kernels. Raw parameters are stored
/// unconstrained; activations guarantee density > 0 and scale > 0:
///   density rho_i = softplus(density_raw_i)
///   scale   s_i   = exp(log_scale_i)            [um]
///   quat r_i is normalized at every consumption site.
struct GaussianCloud {
    std::vector<double> density_raw;
    std::vector<Eigen::Vector3d> mean;      // um, physical coordinates
    std::vector<Eigen::Vector3d> log_scale; // log-um
    std::vector<Eigen::Vector4d> quat;      // (w, x, y, z), unnormalized

    std::size_t size() const { return density_raw.size(); }
    bool empty() const { return density_raw.empty(); }

    double density(std::size_t i) const { return softplus(density_raw[i]); }
    Eigen::Vector3d scale(std::size_t i) const {
        return log_scale[i].array().exp().matrix();
    }

    void validate() const; // consistent array sizes, finite values, m >= 1
};

struct VoxelizeConfig {
    double cutoff_sigma = 3.0; // Mahalanobis truncation radius
    int tile_size = 8;         // voxels per tile edge

    void validate() const;
};

/// Rotation matrix of the normalized quaternion (w, x, y, z).
Eigen::Matrix3d quat_to_rotation(const Eigen::Vector4d& quat);

/// Sigma = R * S * S^T * R^T with S = diag(exp(log_scale)). Errors on a zero
/// quaternion.
Eigen::Matrix3d assemble_covariance(const Eigen::Vector3d& log_scale,
                                    const Eigen::Vector4d& quat);

/// rho * exp(-1/2 (x-mu)^T Sigma^-1 (x-mu)). Errors if Sigma is not SPD.
double eval_gaussian(double rho, const Eigen::Vector3d& mu, const Eigen::Matrix3d& sigma,
                     const Eigen::Vector3d& x);

/// Tile-binned evaluation of the summed kernel field on the voxel grid.
/// A kernel contributes to a voxel iff its Mahalanobis distance is within
/// cutoff_sigma; kernel-tile binning uses the axis-aligned bounding box at
/// the cutoff radius. Tiles are processed in parallel; each voxel is owned
/// by exactly one tile, so results do not depend on the thread count.
VoxelGrid voxelize(const GaussianCloud& cloud, const GridSpec& grid,
                   const VoxelizeConfig& cfg);

struct CloudGrads {
    std::vector<double> density_raw;
    std::vector<Eigen::Vector3d> mean;
    std::vector<Eigen::Vector3d> log_scale;
    std::vector<Eigen::Vector4d> quat;

    static CloudGrads zeros(std::size_t m);
    void add_scaled(const CloudGrads& other, double factor);
};

/// Analytic adjoint of voxelize: given dLoss/dVoxel, returns dLoss/dTheta for
/// all four parameter groups, chained through the activations and the
/// quaternion-to-rotation map. Parallel over kernels (each kernel's gradient
/// is accumulated by one thread), so results do not depend on thread count.
CloudGrads voxelize_backward(const GaussianCloud& cloud, const GridSpec& grid,
                             const VoxelizeConfig& cfg, const VoxelGrid& grad_out);

struct InitConfig {
    double percentile = 90.0;  // candidate threshold, percentile of nonzero values
    double scale_factor = 1.5; // initial sigma in units of voxel pitch, per axis
};

/// Seeds a cloud from a preliminary reconstruction: voxels above the
/// percentile threshold are sampled without replacement with probability
/// proportional to intensity; each kernel starts isotropic at the sampled
/// voxel center with rho equal to the voxel intensity.
GaussianCloud init_from_volume(const VoxelGrid& vol, int n, std::uint64_t seed,
                               const InitConfig& cfg = {});

/// Checkpoint format (.gc): one JSON header line (format, version, m, field
/// layout), '\n', then raw f32 LE arrays in field order. Round-trips the
/// file bit-exactly.
void save_cloud(const GaussianCloud& cloud, const std::string& path);
GaussianCloud load_cloud(const std::string& path);

} // namespace gatflfm
