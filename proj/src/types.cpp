#include "gatflfm/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gatflfm {

std::array<int, 3> GridSpec::nearest_voxel(const std::array<double, 3>& p) const {
    std::array<int, 3> ix{};
    for (int a = 0; a < 3; ++a)
        ix[a] = static_cast<int>(std::lround((p[a] - origin[a]) / pitch[a]));
    return ix;
}

GridSpec GridSpec::centered(std::array<int, 3> dims, std::array<double, 3> pitch) {
    GridSpec g;
    g.dims = dims;
    g.pitch = pitch;
    for (int a = 0; a < 3; ++a) g.origin[a] = -(dims[a] / 2) * pitch[a];
    g.validate();
    return g;
}

void GridSpec::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 1)
            throw std::invalid_argument("GridSpec: dims must all be >= 1");
        if (!(pitch[a] > 0.0) || !std::isfinite(pitch[a]))
            throw std::invalid_argument("GridSpec: pitch must all be > 0");
        if (!std::isfinite(origin[a]))
            throw std::invalid_argument("GridSpec: origin must be finite");
    }
}

VoxelGrid::VoxelGrid(const GridSpec& g, double fill) : grid(g) {
    grid.validate();
    values.assign(grid.voxel_count(), fill);
}

std::span<double> VoxelGrid::slice(int iz) {
    const std::size_t n = static_cast<std::size_t>(grid.dims[0]) * grid.dims[1];
    return {values.data() + n * iz, n};
}

std::span<const double> VoxelGrid::slice(int iz) const {
    const std::size_t n = static_cast<std::size_t>(grid.dims[0]) * grid.dims[1];
    return {values.data() + n * iz, n};
}

double VoxelGrid::max_value() const {
    return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

double VoxelGrid::sum() const {
    return std::accumulate(values.begin(), values.end(), 0.0);
}

bool VoxelGrid::all_finite() const {
    return std::all_of(values.begin(), values.end(),
                       [](double v) { return std::isfinite(v); });
}

void VoxelGrid::clamp_nonnegative() {
    for (double& v : values) v = std::max(v, 0.0);
}

SensorImage::SensorImage(int h_, int w_, double pitch_um, double fill)
    : h(h_), w(w_), pixel_pitch(pitch_um) {
    if (h < 1 || w < 1)
        throw std::invalid_argument("SensorImage: dims must be positive");
    if (!(pixel_pitch > 0.0))
        throw std::invalid_argument("SensorImage: pixel_pitch must be > 0");
    values.assign(pixel_count(), fill);
}

double SensorImage::max_value() const {
    return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

double SensorImage::sum() const {
    return std::accumulate(values.begin(), values.end(), 0.0);
}

bool SensorImage::all_finite() const {
    return std::all_of(values.begin(), values.end(),
                       [](double v) { return std::isfinite(v); });
}

std::span<double> PsfStack::slice(int j) {
    return {values.data() + slice_size() * j, slice_size()};
}

std::span<const double> PsfStack::slice(int j) const {
    return {values.data() + slice_size() * j, slice_size()};
}

void PsfStack::validate() const {
    if (h < 1 || w < 1) throw std::invalid_argument("PsfStack: slice dims must be positive");
    if (z_planes.empty()) throw std::invalid_argument("PsfStack: empty stack");
    if (values.size() != slice_size() * z_planes.size())
        throw std::invalid_argument("PsfStack: value count does not match nz*h*w");
    for (std::size_t j = 1; j < z_planes.size(); ++j)
        if (!(z_planes[j] > z_planes[j - 1]))
            throw std::invalid_argument("PsfStack: z_planes must be strictly increasing");
    for (double v : values)
        if (!(v >= 0.0))
            throw std::invalid_argument("PsfStack: kernel values must be >= 0");
    if (normalized) {
        for (int j = 0; j < nz(); ++j) {
            double s = 0.0;
            for (double v : slice(j)) s += v;
            if (std::abs(s - 1.0) > 1e-6)
                throw std::invalid_argument(
                    "PsfStack: normalized flag set but slice " + std::to_string(j) +
                    " sums to " + std::to_string(s));
        }
    }
}

} // namespace gatflfm
