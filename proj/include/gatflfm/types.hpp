#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace gatflfm {

/// Geometry of a voxel grid. Voxel (ix, iy, iz) is centered at
/// origin + (ix*dx, iy*dy, iz*dz), all in micrometers.
struct GridSpec {
    std::array<int, 3> dims{1, 1, 1};         // nx, ny, nz
    std::array<double, 3> pitch{1.0, 1.0, 1.0}; // dx, dy, dz [um/voxel]
    std::array<double, 3> origin{0.0, 0.0, 0.0}; // center of voxel (0,0,0) [um]

    int nx() const { return dims[0]; }
    int ny() const { return dims[1]; }
    int nz() const { return dims[2]; }
    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }

    std::array<double, 3> voxel_center(int ix, int iy, int iz) const {
        return {origin[0] + ix * pitch[0], origin[1] + iy * pitch[1],
                origin[2] + iz * pitch[2]};
    }
    /// Inverse of voxel_center, rounding to the nearest voxel index.
    std::array<int, 3> nearest_voxel(const std::array<double, 3>& p) const;

    /// z coordinate of depth plane iz.
    double z_plane(int iz) const { return origin[2] + iz * pitch[2]; }

    /// Grid spanning dims voxels, laterally and axially centered on the
    /// physical origin (coordinate 0 lands on the center voxel dims/2).
    static GridSpec centered(std::array<int, 3> dims, std::array<double, 3> pitch);

    /// Throws std::invalid_argument on violated invariants.
    void validate() const;

    bool operator==(const GridSpec&) const = default;
};

/// Discretized 3D fluorescence intensity field. Storage is z-major:
/// values[ix + nx*(iy + ny*iz)], x fastest.
struct VoxelGrid {
    GridSpec grid;
    std::vector<double> values;

    VoxelGrid() = default;
    explicit VoxelGrid(const GridSpec& g, double fill = 0.0);

    double& at(int ix, int iy, int iz) { return values[index(ix, iy, iz)]; }
    double at(int ix, int iy, int iz) const { return values[index(ix, iy, iz)]; }
    std::size_t index(int ix, int iy, int iz) const {
        return static_cast<std::size_t>(ix) +
               static_cast<std::size_t>(grid.dims[0]) *
                   (static_cast<std::size_t>(iy) +
                    static_cast<std::size_t>(grid.dims[1]) * iz);
    }
    /// Contiguous x-y slice at depth iz.
    std::span<double> slice(int iz);
    std::span<const double> slice(int iz) const;

    double max_value() const;
    double sum() const;
    bool all_finite() const;
    void clamp_nonnegative();
};

/// 2D FLFM sensor mosaic. values[col + w*row]; col maps to x, row to y.
struct SensorImage {
    int h = 0, w = 0;
    double pixel_pitch = 1.0; // um, object-space equivalent
    std::vector<double> values;

    SensorImage() = default;
    SensorImage(int h_, int w_, double pitch_um, double fill = 0.0);

    double& at(int row, int col) { return values[idx(row, col)]; }
    double at(int row, int col) const { return values[idx(row, col)]; }
    std::size_t idx(int row, int col) const {
        return static_cast<std::size_t>(col) + static_cast<std::size_t>(w) * row;
    }
    std::size_t pixel_count() const {
        return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    }

    double max_value() const;
    double sum() const;
    bool all_finite() const;
};

/// Per-depth 2D kernels H_j relating object slice j to the sensor.
/// Slices share the sensor dims; slice j is stored like a SensorImage.
struct PsfStack {
    int h = 0, w = 0;
    std::vector<double> z_planes; // um, strictly increasing
    bool normalized = false;      // each slice sums to 1
    std::vector<double> values;   // nz slices, each h*w, row-major

    int nz() const { return static_cast<int>(z_planes.size()); }
    std::size_t slice_size() const {
        return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    }
    std::span<double> slice(int j);
    std::span<const double> slice(int j) const;

    /// Throws std::invalid_argument on violated invariants
    /// (negative values, inconsistent sizes, non-increasing z_planes).
    void validate() const;
};

} // namespace gatflfm
