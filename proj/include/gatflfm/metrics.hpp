#pragma once

#include "gatflfm/types.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gatflfm {

struct PsnrResult {
    double db = 0.0;
    bool identical = false; // MSE was exactly 0; db is not meaningful
};

/// Both volumes are normalized by the ground truth's global max, then
/// PSNR = 10*log10(1/MSE). Scale-invariant: psnr(a*r, a*g) == psnr(r, g).
PsnrResult psnr(const VoxelGrid& recon, const VoxelGrid& gt);

/// Same normalization (gt global max), MSE per x-y layer.
std::vector<PsnrResult> psnr_per_layer(const VoxelGrid& recon, const VoxelGrid& gt);

/// Fourier ring correlation per integer-radius frequency ring, rings
/// 0..min(h,w)/2: FRC_r = Re sum(A conj(B)) / sqrt(sum|A|^2 sum|B|^2).
std::vector<double> frc(const SensorImage& a, const SensorImage& b);

/// No-reference quality score: mean over consecutive z-slice pairs of the
/// mean ring FRC up to Nyquist. Pairs with an all-zero slice are skipped.
double frc_qe(const VoxelGrid& vol);

/// Trilinear interpolation at n equally spaced points from p0 to p1 (um).
/// Peak-normalized unless normalize is false.
std::vector<double> line_profile(const VoxelGrid& vol, const std::array<double, 3>& p0,
                                 const std::array<double, 3>& p1, int n,
                                 bool normalize = true);

/// Full width at half the dominant peak, measured above the profile minimum,
/// with linear interpolation between samples. Errors when either half-level
/// crossing is missing ("peak not resolved").
double fwhm(std::span<const double> profile, double sample_pitch);

/// Per-pixel maximum intensity projection along 'x', 'y' or 'z'.
SensorImage mip(const VoxelGrid& vol, char axis);

/// 16-bit grayscale PNG with min-max scaling; the applied (min, max) window
/// is recorded in a <path>.json sidecar.
void export_png16(const SensorImage& img, const std::string& path);

struct ResolveReport {
    std::vector<double> peaks;       // per expected line, max in its window
    std::vector<double> dips;        // between consecutive peaks
    std::vector<double> peak_pos_um; // along the profile
    bool resolved = false;
};

/// Rayleigh-style criterion: every expected line must show a local maximum
/// near its nominal position and every dip between neighbors must fall to
/// at most dip_threshold of the lower adjacent peak.
ResolveReport assess_line_resolution(std::span<const double> profile, double sample_pitch,
                                     std::span<const double> expected_centers_um,
                                     double dip_threshold = 0.85);

struct MetricsReport {
    std::optional<PsnrResult> psnr_overall;
    std::vector<PsnrResult> psnr_layers;
    std::vector<double> frc_curve;
    std::optional<double> frc_qe_score;
    std::vector<double> fwhm_lateral_um; // per bead
    std::vector<double> fwhm_axial_um;

    std::string to_json_string() const;
    /// One row per layer and per ring: kind,index,value.
    void write_csv(const std::string& path) const;
    void write_json(const std::string& path) const;
};

} // namespace gatflfm
