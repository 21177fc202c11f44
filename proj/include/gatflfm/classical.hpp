#pragma once

#include "gatflfm/optics.hpp"
#include "gatflfm/types.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace gatflfm {

struct WienerConfig {
    /// Regularization parameter. Unset selects 0.05 * max_j max|H~_j|, a mild
    /// default two to three orders below the peak spectral power.
    std::optional<double> w;
    bool clamp_negative = true;

    void validate() const;
};

/// Per-depth frequency-domain inverse filter
///   O_j = IDFT( I~ conj(H~_j) / (|H~_j|^2 + w^2) ),
/// cropped to the target grid with the shared centering convention.
/// Errors when w = 0 meets a zero spectral bin.
VoxelGrid wiener_reconstruct(const SensorImage& img, const PsfStack& psf,
                             const WienerConfig& cfg, const GridSpec& grid);

struct RlConfig {
    int iterations = 100;
    /// Division guard, relative to max(img): the absolute guard is
    /// epsilon * max(img).
    double epsilon = 1e-9;
    bool record_likelihood = false;

    void validate() const;
};

struct RlResult {
    VoxelGrid volume;
    /// Poisson log-likelihood sum(I*log(HO + eps) - HO) of iterate k,
    /// recorded per iteration when record_likelihood is set.
    std::vector<double> likelihood;
};

/// Called after each multiplicative update with (iteration index, iterate).
using RlObserver = std::function<void(int, const VoxelGrid&)>;

/// Richardson-Lucy deconvolution with flat-field correction:
///   O <- O * H^T(I / (H O + eps)) / (H^T 1 + eps).
/// Default init is a uniform volume of mean(img)/nz. Output is nonnegative
/// at every iteration.
RlResult rl_deconvolve(const SensorImage& img, const PsfStack& psf, const RlConfig& cfg,
                       const GridSpec& grid,
                       const std::optional<VoxelGrid>& init = std::nullopt,
                       const RlObserver& observer = nullptr);

} // namespace gatflfm
