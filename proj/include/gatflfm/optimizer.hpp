#pragma once

#include "gatflfm/gaussians.hpp"
#include "gatflfm/optics.hpp"
#include "gatflfm/types.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

namespace gatflfm {

struct LossConfig {
    double alpha = 1e-3;        // Fourier-domain loss weight
    double lambda_erank = 1e-2; // effective-rank penalty weight
    double e_min = 1.2;         // effective-rank floor, in (1, 3]

    void validate() const;
};

struct TrainConfig {
    int iterations = 5000;
    // Per-group learning rates. lr_mean is in units of scene extent per step
    // (multiplied by the largest physical grid dimension) and decays
    // exponentially to mean_lr_final_frac of its initial value over the run.
    double lr_density = 0.05;
    double lr_mean = 1.6e-4;
    double lr_log_scale = 5e-3;
    double lr_quat = 1e-3;
    double mean_lr_final_frac = 0.01;

    int densify_interval = 100;  // steps between density-control passes
    double densify_until = 0.5;  // fraction of total iterations
    double tau_grad = 2e-4;      // mean positional-gradient norm threshold
    double tau_scale = 2.0;      // split-vs-clone threshold, in min-pitch units
    double tau_prune = 1e-3;     // density floor, fraction of current max rho
    double split_factor = 1.6;   // scale shrink on split

    std::uint64_t seed = 0;

    void validate() const;
};

struct LossValue {
    double total = 0.0;
    double mse = 0.0;   // mean squared pixel difference
    double fdl = 0.0;   // unweighted Fourier-domain L1
    double erank = 0.0; // weighted effective-rank penalty
};

struct LossRecord {
    int iteration = 0;
    std::size_t m = 0;
    double total = 0.0, mse = 0.0, fdl = 0.0, erank = 0.0;
    double lr_mean = 0.0;
};

/// Optimizer state: Adam moments per parameter, positional-gradient
/// accumulators for density control, and the loss history.
struct TrainState {
    std::vector<double> m_density, v_density;
    std::vector<Eigen::Vector3d> m_mean, v_mean, m_log_scale, v_log_scale;
    std::vector<Eigen::Vector4d> m_quat, v_quat;

    std::vector<double> grad_norm_accum; // sum of ||dL/dmu_i|| since last pass
    std::vector<std::int64_t> grad_count;

    std::int64_t step = 0;
    std::vector<LossRecord> history;

    static TrainState zeros(std::size_t m);
    std::size_t size() const { return m_density.size(); }
};

/// L1 distance between the unnormalized 2D DFTs of the two images.
double fdl(const SensorImage& x, const SensorImage& y);

/// Hinge penalty on the effective rank of each kernel's covariance
/// (eigenvalues s_k^2): penalty = lambda * mean_i max(0, e_min - erank_i),
/// with analytic gradients on log_scale. Kernels at or above the floor
/// contribute zero penalty and zero gradient.
std::pair<double, std::vector<Eigen::Vector3d>> erank_penalty(const GaussianCloud& cloud,
                                                              const LossConfig& cfg);

/// Full objective of one training step:
///   I_proj = forward(voxelize(cloud)),
///   total  = MSE(I_proj, I) + alpha * FDL(I_proj, I) + erank penalty,
/// with gradients for all four parameter groups, chained through the
/// projection adjoint and the analytic voxelizer backward pass.
std::pair<LossValue, CloudGrads> loss_and_grad(const GaussianCloud& cloud,
                                               const SensorImage& measurement,
                                               const ConvolutionOperator& op,
                                               const GridSpec& grid,
                                               const LossConfig& loss_cfg,
                                               const VoxelizeConfig& vox_cfg);

/// Convenience overload constructing the operator on the fly.
std::pair<LossValue, CloudGrads> loss_and_grad(const GaussianCloud& cloud,
                                               const SensorImage& measurement,
                                               const PsfStack& psf, const GridSpec& grid,
                                               const LossConfig& loss_cfg,
                                               const VoxelizeConfig& vox_cfg);

struct DensifyResult {
    GaussianCloud cloud;
    TrainState state;
    int pruned = 0, split = 0, cloned = 0;
};

/// Adaptive density control: prune kernels below the density floor; split
/// large high-gradient kernels into two mass-preserving children sampled
/// from the parent distribution; clone small high-gradient kernels in
/// place. All other kernels continue plain refinement untouched. Gradient
/// accumulators are reset; new kernels start with zero moments.
DensifyResult densify_and_prune(const GaussianCloud& cloud, const TrainState& state,
                                const GridSpec& grid, const TrainConfig& cfg,
                                std::mt19937_64& rng);

struct TrainResult {
    GaussianCloud cloud;
    VoxelGrid volume;
    TrainState state;
};

/// Called after every optimizer step with (iteration, cloud, state).
using TrainObserver = std::function<void(int, const GaussianCloud&, const TrainState&)>;

/// The full training loop: bias-corrected moment updates per group with the
/// configured learning rates, density control on its schedule, loss history
/// every step. Bit-reproducible for a fixed seed and thread count.
TrainResult train(const SensorImage& measurement, const PsfStack& psf,
                  const GridSpec& grid, GaussianCloud cloud, const LossConfig& loss_cfg,
                  const TrainConfig& train_cfg, const VoxelizeConfig& vox_cfg,
                  const TrainObserver& observer = nullptr);

} // namespace gatflfm
