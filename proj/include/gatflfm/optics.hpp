#pragma once

#include "gatflfm/fft.hpp"
#include "gatflfm/types.hpp"

#include <array>
#include <complex>
#include <memory>
#include <vector>

namespace gatflfm {

// Coordinate conventions shared by projection, PSF synthesis and Wiener:
//  - sensor pixel (row, col) sits at physical ((col - w/2)*dx, (row - h/2)*dy),
//    i.e. the sensor center is pixel (h/2, w/2) (floor division);
//  - the volume is embedded laterally centered: voxel (ix, iy) maps to pixel
//    (row = iy - ny/2 + h/2, col = ix - nx/2 + w/2).

/// Simplified multi-view FLFM geometry: each view contributes one parallax-
/// shifted Gaussian spot per depth, with hyperbolic defocus growth
/// sigma(z) = base_sigma * sqrt(1 + (defocus_slope*z/base_sigma)^2).
struct OpticsConfig {
    int n_views = 1;
    std::vector<std::array<double, 2>> view_centers;   // sensor positions [um], (x, y)
    std::vector<std::array<double, 2>> parallax_slope; // sensor um per object um of depth
    double base_sigma = 1.0;                           // in-focus spot sigma [um]
    double defocus_slope = 0.0;
    double magnification = 1.0; // metadata only
    double na = 0.0;            // metadata only

    void validate() const;

    /// One central view plus (n-1) views on a ring of the given radius, each
    /// ring view with a radially outward parallax slope. The standard
    /// synthetic configuration used by the CLI presets.
    static OpticsConfig ring_views(int n, double ring_radius_um, double parallax_gain,
                                   double base_sigma_um, double defocus_slope);
};

/// Per-depth sum of the view spots, each slice energy-normalized to sum 1.
/// z planes and the pixel pitch are taken from the grid. Errors if any spot
/// center comes closer than 3*sigma(z) to the sensor border.
PsfStack synthesize_psf(const OpticsConfig& cfg, int sensor_h, int sensor_w,
                        const GridSpec& grid);

/// Depthwise FFT convolution I = sum_j H_j * O_j and its exact adjoint.
/// Padding goes to the next small-prime size >= full linear support, so the
/// adjoint identity holds to round-off. Spectra of the PSF are cached, which
/// makes this the right entry point for iterative solvers.
class ConvolutionOperator {
public:
    /// lateral = (nx, ny) of the volumes this operator acts on.
    ConvolutionOperator(const PsfStack& psf, std::array<int, 2> lateral);

    int nz() const { return nz_; }
    int sensor_h() const { return h_; }
    int sensor_w() const { return w_; }

    /// Forward projection. When clamp_roundoff is set and the volume is
    /// nonnegative, values below -1e-6*max are reported as errors and the
    /// remaining round-off negatives are clamped to 0.
    SensorImage forward(const VoxelGrid& vol, bool clamp_roundoff = true) const;

    /// Exact adjoint of forward (per-depth correlation with H_j). The grid
    /// supplies the output geometry; grid dims must match (nx, ny, nz).
    VoxelGrid adjoint(const SensorImage& img, const GridSpec& grid) const;

private:
    int h_, w_, nx_, ny_, nz_;
    int pr_, pc_; // padded FFT shape
    std::shared_ptr<fft::Dft2d> dft_;
    std::vector<std::complex<double>> otf_; // nz_ spectra of size pr_*pc_
};

/// One-shot convenience wrappers around ConvolutionOperator.
SensorImage forward_project(const VoxelGrid& vol, const PsfStack& psf);
VoxelGrid back_project(const SensorImage& img, const PsfStack& psf,
                       const GridSpec& grid);

} // namespace gatflfm
