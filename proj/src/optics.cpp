#include "gatflfm/optics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace gatflfm {

void OpticsConfig::validate() const {
    if (n_views < 1) throw std::invalid_argument("OpticsConfig: n_views must be >= 1");
    if (!(base_sigma > 0.0)) throw std::invalid_argument("OpticsConfig: base_sigma must be > 0");
    if (defocus_slope < 0.0)
        throw std::invalid_argument("OpticsConfig: defocus_slope must be >= 0");
    if (static_cast<int>(view_centers.size()) != n_views ||
        static_cast<int>(parallax_slope.size()) != n_views)
        throw std::invalid_argument("OpticsConfig: view arrays must have n_views entries");
    for (int a = 0; a < n_views; ++a)
        for (int b = a + 1; b < n_views; ++b)
            if (view_centers[a] == view_centers[b])
                throw std::invalid_argument("OpticsConfig: view_centers must be pairwise distinct");
}

OpticsConfig OpticsConfig::ring_views(int n, double ring_radius_um, double parallax_gain,
                                      double base_sigma_um, double defocus_slope) {
    OpticsConfig cfg;
    cfg.n_views = n;
    cfg.base_sigma = base_sigma_um;
    cfg.defocus_slope = defocus_slope;
    cfg.view_centers.push_back({0.0, 0.0});
    cfg.parallax_slope.push_back({0.0, 0.0});
    for (int v = 1; v < n; ++v) {
        const double th = 2.0 * std::numbers::pi * (v - 1) / std::max(1, n - 1);
        const double cx = std::cos(th), sy = std::sin(th);
        cfg.view_centers.push_back({ring_radius_um * cx, ring_radius_um * sy});
        cfg.parallax_slope.push_back({parallax_gain * cx, parallax_gain * sy});
    }
    cfg.validate();
    return cfg;
}

PsfStack synthesize_psf(const OpticsConfig& cfg, int sensor_h, int sensor_w,
                        const GridSpec& grid) {
    cfg.validate();
    grid.validate();
    if (sensor_h < 1 || sensor_w < 1)
        throw std::invalid_argument("synthesize_psf: sensor dims must be positive");

    const double dx = grid.pitch[0], dy = grid.pitch[1];
    const int nz = grid.nz();
    PsfStack psf;
    psf.h = sensor_h;
    psf.w = sensor_w;
    psf.z_planes.resize(nz);
    for (int j = 0; j < nz; ++j) psf.z_planes[j] = grid.z_plane(j);
    psf.values.assign(psf.slice_size() * nz, 0.0);

    // Physical sensor bounds (pixel centers).
    const double x_lo = (0 - sensor_w / 2) * dx, x_hi = (sensor_w - 1 - sensor_w / 2) * dx;
    const double y_lo = (0 - sensor_h / 2) * dy, y_hi = (sensor_h - 1 - sensor_h / 2) * dy;

    for (int j = 0; j < nz; ++j) {
        const double z = psf.z_planes[j];
        const double t = cfg.defocus_slope * z / cfg.base_sigma;
        const double sigma = cfg.base_sigma * std::sqrt(1.0 + t * t);
        for (int v = 0; v < cfg.n_views; ++v) {
            const double cx = cfg.view_centers[v][0] + cfg.parallax_slope[v][0] * z;
            const double cy = cfg.view_centers[v][1] + cfg.parallax_slope[v][1] * z;
            if (cx - 3 * sigma < x_lo || cx + 3 * sigma > x_hi || cy - 3 * sigma < y_lo ||
                cy + 3 * sigma > y_hi)
                throw std::invalid_argument(
                    "synthesize_psf: spot of view " + std::to_string(v) + " at z=" +
                    std::to_string(z) + " um comes within 3 sigma of the sensor border");
        }
    }

#pragma omp parallel for schedule(static)
    for (int j = 0; j < nz; ++j) {
        const double z = psf.z_planes[j];
        const double t = cfg.defocus_slope * z / cfg.base_sigma;
        const double sigma = cfg.base_sigma * std::sqrt(1.0 + t * t);
        const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
        auto slice = psf.slice(j);
        for (int v = 0; v < cfg.n_views; ++v) {
            const double cx = cfg.view_centers[v][0] + cfg.parallax_slope[v][0] * z;
            const double cy = cfg.view_centers[v][1] + cfg.parallax_slope[v][1] * z;
            // 5-sigma support box; tails beyond are < 1e-11 of the peak.
            const int c0 = std::max(0, static_cast<int>(std::floor((cx - 5 * sigma) / dx)) + sensor_w / 2);
            const int c1 = std::min(sensor_w - 1, static_cast<int>(std::ceil((cx + 5 * sigma) / dx)) + sensor_w / 2);
            const int r0 = std::max(0, static_cast<int>(std::floor((cy - 5 * sigma) / dy)) + sensor_h / 2);
            const int r1 = std::min(sensor_h - 1, static_cast<int>(std::ceil((cy + 5 * sigma) / dy)) + sensor_h / 2);
            for (int r = r0; r <= r1; ++r) {
                const double py = (r - sensor_h / 2) * dy - cy;
                for (int c = c0; c <= c1; ++c) {
                    const double px = (c - sensor_w / 2) * dx - cx;
                    slice[static_cast<std::size_t>(c) + static_cast<std::size_t>(sensor_w) * r] +=
                        std::exp(-(px * px + py * py) * inv2s2);
                }
            }
        }
        double sum = 0.0;
        for (double s : slice) sum += s;
        for (double& s : slice) s /= sum;
    }
    psf.normalized = true;
    return psf;
}

ConvolutionOperator::ConvolutionOperator(const PsfStack& psf, std::array<int, 2> lateral)
    : h_(psf.h), w_(psf.w), nx_(lateral[0]), ny_(lateral[1]), nz_(psf.nz()) {
    psf.validate();
    if (nz_ == 0) throw std::invalid_argument("ConvolutionOperator: empty psf");
    if (nx_ < 1 || ny_ < 1)
        throw std::invalid_argument("ConvolutionOperator: lateral dims must be positive");
    if (nx_ > w_ || ny_ > h_)
        throw std::invalid_argument("ConvolutionOperator: volume lateral dims exceed sensor dims");
    pr_ = fft::next_fast_size(h_ + ny_ - 1);
    pc_ = fft::next_fast_size(w_ + nx_ - 1);
    dft_ = std::make_shared<fft::Dft2d>(pr_, pc_);

    otf_.assign(static_cast<std::size_t>(nz_) * pr_ * pc_, {0.0, 0.0});
#pragma omp parallel for schedule(static)
    for (int j = 0; j < nz_; ++j) {
        auto* spec = otf_.data() + static_cast<std::size_t>(j) * pr_ * pc_;
        const auto hj = psf.slice(j);
        for (int r = 0; r < h_; ++r)
            for (int c = 0; c < w_; ++c)
                spec[static_cast<std::size_t>(r) * pc_ + c] = hj[static_cast<std::size_t>(r) * w_ + c];
        dft_->forward(spec);
    }
}

SensorImage ConvolutionOperator::forward(const VoxelGrid& vol, bool clamp_roundoff) const {
    if (vol.grid.nz() != nz_)
        throw std::invalid_argument("forward_project: volume nz=" + std::to_string(vol.grid.nz()) +
                                    " does not match psf nz=" + std::to_string(nz_));
    if (vol.grid.nx() != nx_ || vol.grid.ny() != ny_)
        throw std::invalid_argument("forward_project: volume lateral dims do not match operator");

    const std::size_t padded = static_cast<std::size_t>(pr_) * pc_;
    std::vector<std::complex<double>> spectra(static_cast<std::size_t>(nz_) * padded);
#pragma omp parallel for schedule(static)
    for (int j = 0; j < nz_; ++j) {
        auto* buf = spectra.data() + static_cast<std::size_t>(j) * padded;
        std::fill(buf, buf + padded, std::complex<double>{0.0, 0.0});
        const auto oj = vol.slice(j);
        for (int iy = 0; iy < ny_; ++iy)
            for (int ix = 0; ix < nx_; ++ix)
                buf[static_cast<std::size_t>(iy) * pc_ + ix] =
                    oj[static_cast<std::size_t>(iy) * nx_ + ix];
        dft_->forward(buf);
        const auto* spec = otf_.data() + static_cast<std::size_t>(j) * padded;
        for (std::size_t k = 0; k < padded; ++k) buf[k] *= spec[k];
    }
    // Fixed-order accumulation keeps results identical across thread counts.
    std::vector<std::complex<double>> acc(padded, {0.0, 0.0});
    for (int j = 0; j < nz_; ++j) {
        const auto* buf = spectra.data() + static_cast<std::size_t>(j) * padded;
        for (std::size_t k = 0; k < padded; ++k) acc[k] += buf[k];
    }
    dft_->backward(acc.data());

    SensorImage out(h_, w_, vol.grid.pitch[0]);
    const double scale = 1.0 / static_cast<double>(padded);
    const int cy = ny_ / 2, cx = nx_ / 2;
    for (int r = 0; r < h_; ++r)
        for (int c = 0; c < w_; ++c)
            out.at(r, c) = acc[static_cast<std::size_t>(r + cy) * pc_ + (c + cx)].real() * scale;

    const bool vol_nonneg =
        std::all_of(vol.values.begin(), vol.values.end(), [](double v) { return v >= 0.0; });
    if (clamp_roundoff && vol_nonneg) {
        const double eps_fp = 1e-6 * std::max(out.max_value(), 0.0);
        for (double& v : out.values) {
            if (v < -eps_fp)
                throw std::runtime_error("forward_project: negative output " + std::to_string(v) +
                                         " below round-off threshold " + std::to_string(-eps_fp));
            v = std::max(v, 0.0);
        }
    }
    return out;
}

VoxelGrid ConvolutionOperator::adjoint(const SensorImage& img, const GridSpec& grid) const {
    if (img.h != h_ || img.w != w_)
        throw std::invalid_argument("back_project: image dims do not match psf slice dims");
    if (grid.nx() != nx_ || grid.ny() != ny_ || grid.nz() != nz_)
        throw std::invalid_argument("back_project: grid dims do not match operator");

    VoxelGrid out(grid);
    const std::size_t padded = static_cast<std::size_t>(pr_) * pc_;
    const double scale = 1.0 / static_cast<double>(padded);
    const int cy = ny_ / 2, cx = nx_ / 2;
#pragma omp parallel for schedule(static)
    for (int j = 0; j < nz_; ++j) {
        std::vector<std::complex<double>> buf(padded, {0.0, 0.0});
        for (int r = 0; r < h_; ++r)
            for (int c = 0; c < w_; ++c)
                buf[static_cast<std::size_t>(r + cy) * pc_ + (c + cx)] = img.at(r, c);
        dft_->forward(buf.data());
        const auto* spec = otf_.data() + static_cast<std::size_t>(j) * padded;
        for (std::size_t k = 0; k < padded; ++k) buf[k] *= std::conj(spec[k]);
        dft_->backward(buf.data());
        auto oj = out.slice(j);
        for (int iy = 0; iy < ny_; ++iy)
            for (int ix = 0; ix < nx_; ++ix)
                oj[static_cast<std::size_t>(iy) * nx_ + ix] =
                    buf[static_cast<std::size_t>(iy) * pc_ + ix].real() * scale;
    }
    return out;
}

SensorImage forward_project(const VoxelGrid& vol, const PsfStack& psf) {
    ConvolutionOperator op(psf, {vol.grid.nx(), vol.grid.ny()});
    return op.forward(vol);
}

VoxelGrid back_project(const SensorImage& img, const PsfStack& psf, const GridSpec& grid) {
    ConvolutionOperator op(psf, {grid.nx(), grid.ny()});
    return op.adjoint(img, grid);
}

} // namespace gatflfm
