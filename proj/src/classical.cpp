#include "gatflfm/classical.hpp"

#include "gatflfm/fft.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gatflfm {

void WienerConfig::validate() const {
    if (w && (!(*w >= 0.0) || !std::isfinite(*w)))
        throw std::invalid_argument("WienerConfig: w must be >= 0");
}

void RlConfig::validate() const {
    if (iterations < 1) throw std::invalid_argument("RlConfig: iterations must be >= 1");
    if (!(epsilon > 0.0)) throw std::invalid_argument("RlConfig: epsilon must be > 0");
}

VoxelGrid wiener_reconstruct(const SensorImage& img, const PsfStack& psf,
                             const WienerConfig& cfg, const GridSpec& grid) {
    cfg.validate();
    psf.validate();
    grid.validate();
    const int h = psf.h, w = psf.w;
    const int nx = grid.nx(), ny = grid.ny(), nz = grid.nz();
    if (img.h != h || img.w != w)
        throw std::invalid_argument("wiener_reconstruct: image dims do not match psf slice dims");
    if (nz != psf.nz())
        throw std::invalid_argument("wiener_reconstruct: grid nz does not match psf nz");
    if (nx > w || ny > h)
        throw std::invalid_argument("wiener_reconstruct: grid lateral dims exceed sensor dims");

    const std::size_t npix = static_cast<std::size_t>(h) * w;
    fft::Dft2d dft(h, w);

    std::vector<std::complex<double>> img_spec(npix);
    for (std::size_t k = 0; k < npix; ++k) img_spec[k] = img.values[k];
    dft.forward(img_spec.data());

    // OTF per slice, kernel center rotated to index (0,0) so filtering is
    // shift-free on the sensor grid.
    std::vector<std::vector<std::complex<double>>> otf(nz);
    double max_mag = 0.0;
#pragma omp parallel for schedule(static) reduction(max : max_mag)
    for (int j = 0; j < nz; ++j) {
        otf[j].assign(npix, {0.0, 0.0});
        const auto hj = psf.slice(j);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                otf[j][static_cast<std::size_t>(r) * w + c] =
                    hj[static_cast<std::size_t>((r + h / 2) % h) * w + (c + w / 2) % w];
        dft.forward(otf[j].data());
        for (const auto& v : otf[j]) max_mag = std::max(max_mag, std::abs(v));
    }

    const double wien = cfg.w ? *cfg.w : 0.05 * max_mag;
    if (wien == 0.0) {
        for (int j = 0; j < nz; ++j)
            for (const auto& v : otf[j])
                if (std::norm(v) == 0.0)
                    throw std::runtime_error(
                        "wiener_reconstruct: w = 0 with a zero spectral bin in slice " +
                        std::to_string(j));
    }

    VoxelGrid out(grid);
    const int cx = nx / 2, cy = ny / 2;
    const double scale = 1.0 / static_cast<double>(npix);
#pragma omp parallel for schedule(static)
    for (int j = 0; j < nz; ++j) {
        std::vector<std::complex<double>> buf(npix);
        for (std::size_t k = 0; k < npix; ++k)
            buf[k] = img_spec[k] * std::conj(otf[j][k]) / (std::norm(otf[j][k]) + wien * wien);
        dft.backward(buf.data());
        auto oj = out.slice(j);
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) {
                double v = buf[static_cast<std::size_t>(iy - cy + h / 2) * w +
                               (ix - cx + w / 2)]
                               .real() *
                           scale;
                if (cfg.clamp_negative && v < 0.0) v = 0.0;
                oj[static_cast<std::size_t>(iy) * nx + ix] = v;
            }
    }
    return out;
}

RlResult rl_deconvolve(const SensorImage& img, const PsfStack& psf, const RlConfig& cfg,
                       const GridSpec& grid, const std::optional<VoxelGrid>& init,
                       const RlObserver& observer) {
    cfg.validate();
    psf.validate();
    grid.validate();
    if (grid.nz() != psf.nz())
        throw std::invalid_argument("rl_deconvolve: grid nz does not match psf nz");
    for (double v : img.values)
        if (v < 0.0)
            throw std::invalid_argument("rl_deconvolve: measurement has negative entries");
    for (int j = 0; j < psf.nz(); ++j) {
        double s = 0.0;
        for (double v : psf.slice(j)) s += v;
        if (!(s > 0.0))
            throw std::invalid_argument("rl_deconvolve: psf slice " + std::to_string(j) +
                                        " is identically zero");
    }

    const double eps = cfg.epsilon * std::max(img.max_value(), 1e-300);
    ConvolutionOperator op(psf, {grid.nx(), grid.ny()});

    VoxelGrid est;
    if (init) {
        if (init->grid.dims != grid.dims)
            throw std::invalid_argument("rl_deconvolve: init dims do not match grid");
        for (double v : init->values)
            if (v < 0.0) throw std::invalid_argument("rl_deconvolve: init has negative entries");
        est = *init;
        est.grid = grid;
    } else {
        const double level = img.sum() / static_cast<double>(img.pixel_count()) / grid.nz();
        est = VoxelGrid(grid, level);
    }

    // Flat-field denominator H^T 1; compensates PSF energy lost off-sensor.
    SensorImage ones(img.h, img.w, img.pixel_pitch, 1.0);
    const VoxelGrid flat = op.adjoint(ones, grid);

    RlResult result;
    if (cfg.record_likelihood) result.likelihood.reserve(cfg.iterations);

    for (int it = 0; it < cfg.iterations; ++it) {
        SensorImage proj = op.forward(est);
        if (cfg.record_likelihood) {
            double ll = 0.0;
            for (std::size_t k = 0; k < proj.values.size(); ++k)
                ll += img.values[k] * std::log(proj.values[k] + eps) - proj.values[k];
            result.likelihood.push_back(ll);
        }
        for (std::size_t k = 0; k < proj.values.size(); ++k)
            proj.values[k] = img.values[k] / (proj.values[k] + eps);
        VoxelGrid update = op.adjoint(proj, grid);
        for (std::size_t k = 0; k < est.values.size(); ++k) {
            const double u = std::max(update.values[k], 0.0); // round-off guard
            est.values[k] *= u / (flat.values[k] + eps);
        }
        if (observer) observer(it, est);
    }
    result.volume = std::move(est);
    return result;
}

} // namespace gatflfm
