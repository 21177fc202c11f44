#include "gatflfm/reference.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace gatflfm::reference {

SensorImage forward_project_spatial(const VoxelGrid& vol, const PsfStack& psf) {
    if (vol.grid.nz() != psf.nz())
        throw std::invalid_argument("forward_project_spatial: nz mismatch");
    const int h = psf.h, w = psf.w;
    const int nx = vol.grid.nx(), ny = vol.grid.ny(), nz = vol.grid.nz();
    const int cx = nx / 2, cy = ny / 2;
    SensorImage out(h, w, vol.grid.pitch[0]);
    for (int j = 0; j < nz; ++j) {
        const auto hj = psf.slice(j);
        const auto oj = vol.slice(j);
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                double acc = 0.0;
                for (int iy = 0; iy < ny; ++iy) {
                    const int kr = r - (iy - cy);
                    if (kr < 0 || kr >= h) continue;
                    for (int ix = 0; ix < nx; ++ix) {
                        const int kc = c - (ix - cx);
                        if (kc < 0 || kc >= w) continue;
                        acc += oj[static_cast<std::size_t>(iy) * nx + ix] *
                               hj[static_cast<std::size_t>(kr) * w + kc];
                    }
                }
                out.at(r, c) += acc;
            }
        }
    }
    return out;
}

VoxelGrid back_project_spatial(const SensorImage& img, const PsfStack& psf,
                               const GridSpec& grid) {
    if (grid.nz() != psf.nz())
        throw std::invalid_argument("back_project_spatial: nz mismatch");
    const int h = psf.h, w = psf.w;
    const int nx = grid.nx(), ny = grid.ny(), nz = grid.nz();
    const int cx = nx / 2, cy = ny / 2;
    VoxelGrid out(grid);
    for (int j = 0; j < nz; ++j) {
        const auto hj = psf.slice(j);
        auto oj = out.slice(j);
        for (int iy = 0; iy < ny; ++iy) {
            for (int ix = 0; ix < nx; ++ix) {
                double acc = 0.0;
                for (int r = 0; r < h; ++r) {
                    const int kr = r - (iy - cy);
                    if (kr < 0 || kr >= h) continue;
                    for (int c = 0; c < w; ++c) {
                        const int kc = c - (ix - cx);
                        if (kc < 0 || kc >= w) continue;
                        acc += img.at(r, c) * hj[static_cast<std::size_t>(kr) * w + kc];
                    }
                }
                oj[static_cast<std::size_t>(iy) * nx + ix] = acc;
            }
        }
    }
    return out;
}

std::vector<std::complex<double>> dft2d_direct(const std::vector<double>& values,
                                               int rows, int cols) {
    std::vector<std::complex<double>> out(static_cast<std::size_t>(rows) * cols);
    const double tau = 2.0 * std::numbers::pi;
    for (int k = 0; k < rows; ++k) {
        for (int l = 0; l < cols; ++l) {
            std::complex<double> acc{0.0, 0.0};
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) {
                    const double phase =
                        -tau * (static_cast<double>(k) * r / rows +
                                static_cast<double>(l) * c / cols);
                    acc += values[static_cast<std::size_t>(r) * cols + c] *
                           std::complex<double>{std::cos(phase), std::sin(phase)};
                }
            out[static_cast<std::size_t>(k) * cols + l] = acc;
        }
    }
    return out;
}

std::vector<std::complex<double>> idft2d_direct(
    const std::vector<std::complex<double>>& spectrum, int rows, int cols) {
    std::vector<std::complex<double>> out(static_cast<std::size_t>(rows) * cols);
    const double tau = 2.0 * std::numbers::pi;
    const double norm = 1.0 / (static_cast<double>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            std::complex<double> acc{0.0, 0.0};
            for (int k = 0; k < rows; ++k)
                for (int l = 0; l < cols; ++l) {
                    const double phase =
                        tau * (static_cast<double>(k) * r / rows +
                               static_cast<double>(l) * c / cols);
                    acc += spectrum[static_cast<std::size_t>(k) * cols + l] *
                           std::complex<double>{std::cos(phase), std::sin(phase)};
                }
            out[static_cast<std::size_t>(r) * cols + c] = acc * norm;
        }
    }
    return out;
}

VoxelGrid wiener_direct(const SensorImage& img, const PsfStack& psf, double w,
                        const GridSpec& grid, bool clamp_negative) {
    const int h = psf.h, wid = psf.w;
    const int nx = grid.nx(), ny = grid.ny(), nz = grid.nz();
    if (img.h != h || img.w != wid)
        throw std::invalid_argument("wiener_direct: image dims do not match psf");
    if (nz != psf.nz()) throw std::invalid_argument("wiener_direct: nz mismatch");

    const auto img_spec = dft2d_direct(img.values, h, wid);
    VoxelGrid out(grid);
    const int cx = nx / 2, cy = ny / 2;
    for (int j = 0; j < nz; ++j) {
        // Kernel center moved to index (0,0) so the filter is shift-free.
        std::vector<double> shifted(static_cast<std::size_t>(h) * wid);
        const auto hj = psf.slice(j);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < wid; ++c)
                shifted[static_cast<std::size_t>(r) * wid + c] =
                    hj[static_cast<std::size_t>((r + h / 2) % h) * wid + (c + wid / 2) % wid];
        const auto otf = dft2d_direct(shifted, h, wid);
        std::vector<std::complex<double>> filtered(otf.size());
        for (std::size_t k = 0; k < otf.size(); ++k) {
            const double denom = std::norm(otf[k]) + w * w;
            if (denom == 0.0)
                throw std::runtime_error("wiener_direct: unregularized zero bin");
            filtered[k] = img_spec[k] * std::conj(otf[k]) / denom;
        }
        const auto slice = idft2d_direct(filtered, h, wid);
        auto oj = out.slice(j);
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) {
                double v = slice[static_cast<std::size_t>(iy - cy + h / 2) * wid +
                                 (ix - cx + wid / 2)]
                               .real();
                if (clamp_negative && v < 0.0) v = 0.0;
                oj[static_cast<std::size_t>(iy) * nx + ix] = v;
            }
    }
    return out;
}

VoxelGrid voxelize_dense(const GaussianCloud& cloud, const GridSpec& grid,
                         const VoxelizeConfig& cfg) {
    cloud.validate();
    grid.validate();
    cfg.validate();
    VoxelGrid out(grid);
    const double cutoff2 = cfg.cutoff_sigma * cfg.cutoff_sigma;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double rho = cloud.density(i);
        const Eigen::Matrix3d rot = quat_to_rotation(cloud.quat[i]);
        const Eigen::Vector3d inv_s2 =
            (-2.0 * cloud.log_scale[i].array()).exp().matrix();
        for (int iz = 0; iz < grid.nz(); ++iz)
            for (int iy = 0; iy < grid.ny(); ++iy)
                for (int ix = 0; ix < grid.nx(); ++ix) {
                    const auto p = grid.voxel_center(ix, iy, iz);
                    const Eigen::Vector3d d{p[0] - cloud.mean[i][0],
                                            p[1] - cloud.mean[i][1],
                                            p[2] - cloud.mean[i][2]};
                    const Eigen::Vector3d u = rot.transpose() * d;
                    const double q = (u.array().square() * inv_s2.array()).sum();
                    if (q <= cutoff2)
                        out.at(ix, iy, iz) += rho * std::exp(-0.5 * q);
                }
    }
    return out;
}

std::vector<double> mip_naive(const VoxelGrid& vol, int axis, int& out_rows,
                              int& out_cols) {
    const int nx = vol.grid.nx(), ny = vol.grid.ny(), nz = vol.grid.nz();
    switch (axis) {
    case 2: out_rows = ny; out_cols = nx; break;
    case 1: out_rows = nz; out_cols = nx; break;
    case 0: out_rows = nz; out_cols = ny; break;
    default: throw std::invalid_argument("mip_naive: axis must be 0, 1 or 2");
    }
    std::vector<double> out(static_cast<std::size_t>(out_rows) * out_cols,
                            -std::numeric_limits<double>::infinity());
    for (int iz = 0; iz < nz; ++iz)
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) {
                const double v = vol.at(ix, iy, iz);
                std::size_t idx = 0;
                if (axis == 2) idx = static_cast<std::size_t>(iy) * nx + ix;
                else if (axis == 1) idx = static_cast<std::size_t>(iz) * nx + ix;
                else idx = static_cast<std::size_t>(iz) * ny + iy;
                out[idx] = std::max(out[idx], v);
            }
    return out;
}

} // namespace gatflfm::reference
