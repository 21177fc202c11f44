#pragma once

#include "gatflfm/types.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace gatflfm {

struct BeadSpec {
    int count = 1;
    double radius_sigma = 0.5;  // isotropic Gaussian bead sigma [um]
    double min_separation = 0.0; // pairwise center distance floor [um]
    double intensity = 1.0;
    std::uint64_t seed = 0;
    /// When nonempty, placement sampling is skipped and these centers are
    /// used verbatim (count is ignored).
    std::vector<std::array<double, 3>> forced_centers;

    void validate() const;
};

/// Sum of isotropic 3D Gaussian beads placed uniformly at random, at least
/// 3 sigma from every volume border and min_separation apart. Errors after
/// 10^4 * count failed placement attempts.
std::pair<VoxelGrid, std::vector<std::array<double, 3>>> phantom_beads(
    const GridSpec& grid, const BeadSpec& spec);

struct LinePhantomSpec {
    std::vector<double> spacings = {1.68, 1.44, 1.20, 0.96, 0.72, 0.48}; // um
    double line_width = 0.24; // um
    int lines_per_group = 3;
    double intensity = 1.0;
    /// Lines extend along y at a single z plane (-1 selects the middle);
    /// n_z_planes > 1 stacks the pattern over several planes.
    int z_index = -1;
    int n_z_planes = 1;
    double group_gap_factor = 3.0; // inter-group gap, in units of max spacing
    double y_margin_um = 0.0;      // dark margin at both y ends

    void validate() const;
};

/// One group of parallel lines per spacing, groups laid out along x and
/// centered in the grid. Group start positions snap to voxel centers; line
/// cross-sections are rasterized by column overlap, so sub-voxel widths
/// become fill fractions. Errors name the group that does not fit.
VoxelGrid phantom_lines(const GridSpec& grid, const LinePhantomSpec& spec);

/// Physical x positions (um) of the line centers of group g, matching the
/// layout of phantom_lines. Used to anchor resolution profiles.
std::vector<double> line_centers_x(const GridSpec& grid, const LinePhantomSpec& spec,
                                   std::size_t group);

/// Shot + read noise: pixel -> Poisson(pixel*photon_scale)/photon_scale
/// + N(0, gaussian_sigma). Deterministic per seed.
SensorImage add_noise(const SensorImage& img, double photon_scale, double gaussian_sigma,
                      std::uint64_t seed);

} // namespace gatflfm
