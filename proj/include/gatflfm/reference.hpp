#pragma once

#include "gatflfm/gaussians.hpp"
#include "gatflfm/types.hpp"

#include <complex>
#include <vector>

// Serial brute-force implementations of the hot kernels. They share the
// coordinate conventions of the fast paths but none of the code: spatial
// nested loops instead of FFTs, all-pairs evaluation instead of tiling.
// Tests use them as oracles; the bench target compares against them.
namespace gatflfm::reference {

/// Depthwise "same"-size spatial convolution, volume laterally centered on
/// the sensor grid. O(h*w*nx*ny*nz).
SensorImage forward_project_spatial(const VoxelGrid& vol, const PsfStack& psf);

/// Exact transpose of forward_project_spatial, by direct summation.
VoxelGrid back_project_spatial(const SensorImage& img, const PsfStack& psf,
                               const GridSpec& grid);

/// Direct O(N^2 M^2) unnormalized 2D DFT (and inverse, with 1/(NM)).
std::vector<std::complex<double>> dft2d_direct(const std::vector<double>& values,
                                               int rows, int cols);
std::vector<std::complex<double>> idft2d_direct(
    const std::vector<std::complex<double>>& spectrum, int rows, int cols);

/// Wiener inverse filter computed bin-by-bin with the direct DFT.
VoxelGrid wiener_direct(const SensorImage& img, const PsfStack& psf, double w,
                        const GridSpec& grid, bool clamp_negative);

/// All-pairs kernel-field evaluation with the same Mahalanobis cutoff as
/// gatflfm::voxelize, no tiling.
VoxelGrid voxelize_dense(const GaussianCloud& cloud, const GridSpec& grid,
                         const VoxelizeConfig& cfg);

/// Nested-loop maximum projection along axis 0 (x), 1 (y) or 2 (z).
std::vector<double> mip_naive(const VoxelGrid& vol, int axis, int& out_rows,
                              int& out_cols);

} // namespace gatflfm::reference
