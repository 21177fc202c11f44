#include "gatflfm/phantoms.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace gatflfm {

void BeadSpec::validate() const {
    if (count < 0) throw std::invalid_argument("BeadSpec: count must be >= 0");
    if (!(radius_sigma > 0.0))
        throw std::invalid_argument("BeadSpec: radius_sigma must be > 0");
    if (min_separation < 0.0)
        throw std::invalid_argument("BeadSpec: min_separation must be >= 0");
    if (!(intensity > 0.0)) throw std::invalid_argument("BeadSpec: intensity must be > 0");
}

namespace {

void rasterize_bead(VoxelGrid& vol, const std::array<double, 3>& c, double sigma,
                    double intensity) {
    const auto& g = vol.grid;
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    int lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
        lo[a] = std::max(0, static_cast<int>(std::ceil((c[a] - 5 * sigma - g.origin[a]) / g.pitch[a])));
        hi[a] = std::min(g.dims[a] - 1,
                         static_cast<int>(std::floor((c[a] + 5 * sigma - g.origin[a]) / g.pitch[a])));
    }
    for (int iz = lo[2]; iz <= hi[2]; ++iz)
        for (int iy = lo[1]; iy <= hi[1]; ++iy)
            for (int ix = lo[0]; ix <= hi[0]; ++ix) {
                const auto p = g.voxel_center(ix, iy, iz);
                const double r2 = (p[0] - c[0]) * (p[0] - c[0]) +
                                  (p[1] - c[1]) * (p[1] - c[1]) +
                                  (p[2] - c[2]) * (p[2] - c[2]);
                vol.at(ix, iy, iz) += intensity * std::exp(-r2 * inv2s2);
            }
}

} // namespace

std::pair<VoxelGrid, std::vector<std::array<double, 3>>> phantom_beads(
    const GridSpec& grid, const BeadSpec& spec) {
    grid.validate();
    spec.validate();
    VoxelGrid vol(grid);
    std::vector<std::array<double, 3>> centers;

    if (!spec.forced_centers.empty()) {
        centers = spec.forced_centers;
    } else if (spec.count > 0) {
        // Placement region: 3 sigma inside the physical volume borders.
        double lo[3], hi[3];
        for (int a = 0; a < 3; ++a) {
            lo[a] = grid.origin[a] - grid.pitch[a] / 2 + 3 * spec.radius_sigma;
            hi[a] = grid.origin[a] + (grid.dims[a] - 1 + 0.5) * grid.pitch[a] -
                    3 * spec.radius_sigma;
            if (lo[a] > hi[a])
                throw std::runtime_error(
                    "phantom_beads: grid too small to host beads 3 sigma from borders");
        }
        std::mt19937_64 rng(spec.seed);
        std::uniform_real_distribution<double> ux(lo[0], hi[0]), uy(lo[1], hi[1]),
            uz(lo[2], hi[2]);
        const long long max_attempts = 10000LL * spec.count;
        long long attempts = 0;
        while (static_cast<int>(centers.size()) < spec.count) {
            if (++attempts > max_attempts)
                throw std::runtime_error(
                    "phantom_beads: failed to place " + std::to_string(spec.count) +
                    " beads at min_separation " + std::to_string(spec.min_separation) +
                    " um after " + std::to_string(max_attempts) + " attempts");
            const std::array<double, 3> c{ux(rng), uy(rng), uz(rng)};
            bool ok = true;
            for (const auto& o : centers) {
                const double d2 = (c[0] - o[0]) * (c[0] - o[0]) +
                                  (c[1] - o[1]) * (c[1] - o[1]) +
                                  (c[2] - o[2]) * (c[2] - o[2]);
                if (d2 < spec.min_separation * spec.min_separation) {
                    ok = false;
                    break;
                }
            }
            if (ok) centers.push_back(c);
        }
    }

    for (const auto& c : centers) rasterize_bead(vol, c, spec.radius_sigma, spec.intensity);
    return {std::move(vol), std::move(centers)};
}

void LinePhantomSpec::validate() const {
    if (spacings.empty()) throw std::invalid_argument("LinePhantomSpec: no spacings");
    for (double s : spacings)
        if (!(s > 0.0)) throw std::invalid_argument("LinePhantomSpec: spacings must be > 0");
    if (!(line_width > 0.0))
        throw std::invalid_argument("LinePhantomSpec: line_width must be > 0");
    if (lines_per_group < 1)
        throw std::invalid_argument("LinePhantomSpec: lines_per_group must be >= 1");
    if (!(intensity > 0.0)) throw std::invalid_argument("LinePhantomSpec: intensity must be > 0");
    if (n_z_planes < 1) throw std::invalid_argument("LinePhantomSpec: n_z_planes must be >= 1");
    if (group_gap_factor < 0.0)
        throw std::invalid_argument("LinePhantomSpec: group_gap_factor must be >= 0");
    if (y_margin_um < 0.0)
        throw std::invalid_argument("LinePhantomSpec: y_margin_um must be >= 0");
}

namespace {

// First-line center x of every group, snapped to voxel centers.
std::vector<double> group_starts(const GridSpec& grid, const LinePhantomSpec& spec) {
    const double max_spacing = *std::max_element(spec.spacings.begin(), spec.spacings.end());
    const double gap = spec.group_gap_factor * max_spacing;
    std::vector<double> extents;
    double total = 0.0;
    for (double s : spec.spacings) {
        extents.push_back((spec.lines_per_group - 1) * s + spec.line_width);
        total += extents.back();
    }
    total += gap * (spec.spacings.size() - 1);

    const double dx = grid.pitch[0];
    const double x_center = grid.origin[0] + (grid.nx() - 1) * dx / 2;
    double cursor = x_center - total / 2 + spec.line_width / 2;
    std::vector<double> starts;
    for (std::size_t g = 0; g < spec.spacings.size(); ++g) {
        // snap to the nearest voxel center
        const double snapped =
            grid.origin[0] + std::lround((cursor - grid.origin[0]) / dx) * dx;
        starts.push_back(snapped);
        cursor += extents[g] - spec.line_width / 2 + gap + spec.line_width / 2;
    }
    return starts;
}

} // namespace

std::vector<double> line_centers_x(const GridSpec& grid, const LinePhantomSpec& spec,
                                   std::size_t group) {
    spec.validate();
    if (group >= spec.spacings.size())
        throw std::invalid_argument("line_centers_x: group index out of range");
    const auto starts = group_starts(grid, spec);
    std::vector<double> centers;
    for (int l = 0; l < spec.lines_per_group; ++l)
        centers.push_back(starts[group] + l * spec.spacings[group]);
    return centers;
}

VoxelGrid phantom_lines(const GridSpec& grid, const LinePhantomSpec& spec) {
    grid.validate();
    spec.validate();
    VoxelGrid vol(grid);
    const double dx = grid.pitch[0];
    const double x_lo = grid.origin[0] - dx / 2;
    const double x_hi = grid.origin[0] + (grid.nx() - 1 + 0.5) * dx;

    const auto starts = group_starts(grid, spec);
    int z0 = spec.z_index < 0 ? grid.nz() / 2 : spec.z_index;
    z0 -= (spec.n_z_planes - 1) / 2;
    if (z0 < 0 || z0 + spec.n_z_planes > grid.nz())
        throw std::invalid_argument("phantom_lines: z planes out of range");

    const int y_margin_vox = static_cast<int>(std::round(spec.y_margin_um / grid.pitch[1]));
    const int y0 = std::min(grid.ny() / 2, y_margin_vox);
    const int y1 = std::max(y0, grid.ny() - y_margin_vox);

    for (std::size_t g = 0; g < spec.spacings.size(); ++g) {
        const double span_lo = starts[g] - spec.line_width / 2;
        const double span_hi =
            starts[g] + (spec.lines_per_group - 1) * spec.spacings[g] + spec.line_width / 2;
        if (span_lo < x_lo || span_hi > x_hi)
            throw std::runtime_error("phantom_lines: group " + std::to_string(g) +
                                     " (spacing " + std::to_string(spec.spacings[g]) +
                                     " um) does not fit laterally in the grid");
        for (int l = 0; l < spec.lines_per_group; ++l) {
            const double xc = starts[g] + l * spec.spacings[g];
            const double a = xc - spec.line_width / 2, b = xc + spec.line_width / 2;
            const int ix0 = std::max(0, static_cast<int>(std::floor((a - x_lo) / dx)));
            const int ix1 = std::min(grid.nx() - 1, static_cast<int>(std::floor((b - x_lo) / dx)));
            for (int ix = ix0; ix <= ix1; ++ix) {
                const double col_lo = x_lo + ix * dx, col_hi = col_lo + dx;
                const double overlap = std::min(b, col_hi) - std::max(a, col_lo);
                if (overlap <= 0.0) continue;
                const double value = spec.intensity * overlap / dx;
                for (int iz = z0; iz < z0 + spec.n_z_planes; ++iz)
                    for (int iy = y0; iy < y1; ++iy) vol.at(ix, iy, iz) += value;
            }
        }
    }
    return vol;
}

SensorImage add_noise(const SensorImage& img, double photon_scale, double gaussian_sigma,
                      std::uint64_t seed) {
    if (!(photon_scale > 0.0))
        throw std::invalid_argument("add_noise: photon_scale must be > 0");
    if (gaussian_sigma < 0.0)
        throw std::invalid_argument("add_noise: gaussian_sigma must be >= 0");
    for (double v : img.values)
        if (v < 0.0) throw std::invalid_argument("add_noise: input has negative pixels");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, gaussian_sigma > 0.0 ? gaussian_sigma : 1.0);
    SensorImage out = img;
    for (double& v : out.values) {
        if (v > 0.0) {
            std::poisson_distribution<long long> poisson(v * photon_scale);
            v = static_cast<double>(poisson(rng)) / photon_scale;
        }
        if (gaussian_sigma > 0.0) v += gauss(rng);
    }
    return out;
}

} // namespace gatflfm
