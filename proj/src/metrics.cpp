#include "gatflfm/metrics.hpp"

#include "gatflfm/fft.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace gatflfm {

namespace {

double mse_normalized(std::span<const double> a, std::span<const double> b, double norm) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = (a[k] - b[k]) / norm;
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

PsnrResult psnr_from_mse(double mse) {
    PsnrResult r;
    if (mse == 0.0) {
        r.identical = true;
        r.db = std::numeric_limits<double>::infinity();
    } else {
        r.db = 10.0 * std::log10(1.0 / mse);
    }
    return r;
}

} // namespace

PsnrResult psnr(const VoxelGrid& recon, const VoxelGrid& gt) {
    if (recon.grid.dims != gt.grid.dims)
        throw std::invalid_argument("psnr: volume dims mismatch");
    const double norm = gt.max_value();
    if (!(norm > 0.0)) throw std::invalid_argument("psnr: ground truth max must be > 0");
    return psnr_from_mse(mse_normalized(recon.values, gt.values, norm));
}

std::vector<PsnrResult> psnr_per_layer(const VoxelGrid& recon, const VoxelGrid& gt) {
    if (recon.grid.dims != gt.grid.dims)
        throw std::invalid_argument("psnr: volume dims mismatch");
    const double norm = gt.max_value();
    if (!(norm > 0.0)) throw std::invalid_argument("psnr: ground truth max must be > 0");
    std::vector<PsnrResult> out;
    for (int iz = 0; iz < gt.grid.nz(); ++iz)
        out.push_back(psnr_from_mse(mse_normalized(recon.slice(iz), gt.slice(iz), norm)));
    return out;
}

namespace {

std::vector<double> frc_rings(const std::vector<double>& av, const std::vector<double>& bv,
                              int h, int w) {
    fft::Dft2d dft(h, w);
    std::vector<std::complex<double>> a(av.begin(), av.end());
    std::vector<std::complex<double>> b(bv.begin(), bv.end());
    dft.forward(a.data());
    dft.forward(b.data());

    const int nyquist = std::min(h, w) / 2;
    std::vector<double> num(nyquist + 1, 0.0), ea(nyquist + 1, 0.0), eb(nyquist + 1, 0.0);
    for (int r = 0; r < h; ++r) {
        const double fr = r <= h / 2 ? r : r - h;
        for (int c = 0; c < w; ++c) {
            const double fc = c <= w / 2 ? c : c - w;
            const int ring = static_cast<int>(std::lround(std::sqrt(fr * fr + fc * fc)));
            if (ring > nyquist) continue;
            const auto& x = a[static_cast<std::size_t>(r) * w + c];
            const auto& y = b[static_cast<std::size_t>(r) * w + c];
            num[ring] += (x * std::conj(y)).real();
            ea[ring] += std::norm(x);
            eb[ring] += std::norm(y);
        }
    }
    std::vector<double> curve(nyquist + 1, 0.0);
    for (int ring = 0; ring <= nyquist; ++ring) {
        const double den = std::sqrt(ea[ring] * eb[ring]);
        curve[ring] = den > 0.0 ? num[ring] / den : 0.0;
    }
    return curve;
}

bool all_zero(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

} // namespace

std::vector<double> frc(const SensorImage& a, const SensorImage& b) {
    if (a.h != b.h || a.w != b.w) throw std::invalid_argument("frc: image dims mismatch");
    if (all_zero(a.values) || all_zero(b.values))
        throw std::invalid_argument("frc: all-zero image");
    return frc_rings(a.values, b.values, a.h, a.w);
}

double frc_qe(const VoxelGrid& vol) {
    const int nz = vol.grid.nz();
    if (nz < 2) throw std::invalid_argument("frc_qe: needs at least two z slices");
    double acc = 0.0;
    int pairs = 0;
    for (int iz = 0; iz + 1 < nz; ++iz) {
        const auto a = vol.slice(iz);
        const auto b = vol.slice(iz + 1);
        if (all_zero(a) || all_zero(b)) continue;
        const auto curve = frc_rings({a.begin(), a.end()}, {b.begin(), b.end()},
                                     vol.grid.ny(), vol.grid.nx());
        double mean = 0.0;
        for (double v : curve) mean += v;
        acc += mean / static_cast<double>(curve.size());
        ++pairs;
    }
    if (pairs == 0) throw std::runtime_error("frc_qe: no nonzero slice pairs");
    return acc / pairs;
}

std::vector<double> line_profile(const VoxelGrid& vol, const std::array<double, 3>& p0,
                                 const std::array<double, 3>& p1, int n, bool normalize) {
    if (n < 2) throw std::invalid_argument("line_profile: n must be >= 2");
    const auto& g = vol.grid;
    auto to_frac = [&](const std::array<double, 3>& p, double f[3]) {
        for (int a = 0; a < 3; ++a) {
            f[a] = (p[a] - g.origin[a]) / g.pitch[a];
            if (f[a] < 0.0 || f[a] > g.dims[a] - 1)
                throw std::invalid_argument("line_profile: endpoint outside the grid");
        }
    };
    double f0[3], f1[3];
    to_frac(p0, f0);
    to_frac(p1, f1);

    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / (n - 1);
        double f[3];
        int base[3];
        double frac[3];
        for (int a = 0; a < 3; ++a) {
            f[a] = f0[a] + t * (f1[a] - f0[a]);
            base[a] = std::min(static_cast<int>(std::floor(f[a])), g.dims[a] - 2);
            base[a] = std::max(base[a], 0);
            frac[a] = std::clamp(f[a] - base[a], 0.0, 1.0);
            if (g.dims[a] == 1) {
                base[a] = 0;
                frac[a] = 0.0;
            }
        }
        double acc = 0.0;
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const int ix = std::min(base[0] + dx, g.dims[0] - 1);
                    const int iy = std::min(base[1] + dy, g.dims[1] - 1);
                    const int iz = std::min(base[2] + dz, g.dims[2] - 1);
                    const double wgt = (dx ? frac[0] : 1 - frac[0]) *
                                       (dy ? frac[1] : 1 - frac[1]) *
                                       (dz ? frac[2] : 1 - frac[2]);
                    acc += wgt * vol.at(ix, iy, iz);
                }
        out[i] = acc;
    }
    if (normalize) {
        const double peak = *std::max_element(out.begin(), out.end());
        if (!(peak > 0.0))
            throw std::runtime_error("line_profile: profile has no positive signal to normalize");
        for (double& v : out) v /= peak;
    }
    return out;
}

double fwhm(std::span<const double> profile, double sample_pitch) {
    if (profile.size() < 3) throw std::invalid_argument("fwhm: profile too short");
    if (!(sample_pitch > 0.0)) throw std::invalid_argument("fwhm: sample_pitch must be > 0");
    const auto peak_it = std::max_element(profile.begin(), profile.end());
    const std::size_t peak = static_cast<std::size_t>(peak_it - profile.begin());
    const double lo = *std::min_element(profile.begin(), profile.end());
    const double half = lo + (*peak_it - lo) / 2.0;
    if (!(*peak_it > lo)) throw std::runtime_error("fwhm: peak not resolved (flat profile)");

    double left = -1.0, right = -1.0;
    for (std::size_t i = peak; i-- > 0;) {
        if (profile[i] <= half) {
            const double t = (half - profile[i]) / (profile[i + 1] - profile[i]);
            left = static_cast<double>(i) + t;
            break;
        }
    }
    for (std::size_t i = peak + 1; i < profile.size(); ++i) {
        if (profile[i] <= half) {
            const double t = (profile[i - 1] - half) / (profile[i - 1] - profile[i]);
            right = static_cast<double>(i - 1) + t;
            break;
        }
    }
    if (left < 0.0 || right < 0.0)
        throw std::runtime_error("fwhm: peak not resolved (no half-level crossing)");
    return (right - left) * sample_pitch;
}

SensorImage mip(const VoxelGrid& vol, char axis) {
    const auto& g = vol.grid;
    int rows, cols;
    double col_pitch;
    switch (axis) {
    case 'z': rows = g.ny(); cols = g.nx(); col_pitch = g.pitch[0]; break;
    case 'y': rows = g.nz(); cols = g.nx(); col_pitch = g.pitch[0]; break;
    case 'x': rows = g.nz(); cols = g.ny(); col_pitch = g.pitch[1]; break;
    default: throw std::invalid_argument("mip: axis must be 'x', 'y' or 'z'");
    }
    SensorImage out(rows, cols, col_pitch, -std::numeric_limits<double>::infinity());
    for (int iz = 0; iz < g.nz(); ++iz)
        for (int iy = 0; iy < g.ny(); ++iy)
            for (int ix = 0; ix < g.nx(); ++ix) {
                double& dst = axis == 'z'   ? out.at(iy, ix)
                              : axis == 'y' ? out.at(iz, ix)
                                            : out.at(iz, iy);
                dst = std::max(dst, vol.at(ix, iy, iz));
            }
    return out;
}

ResolveReport assess_line_resolution(std::span<const double> profile, double sample_pitch,
                                     std::span<const double> expected_centers_um,
                                     double dip_threshold) {
    if (expected_centers_um.size() < 2)
        throw std::invalid_argument("assess_line_resolution: need at least two lines");
    ResolveReport rep;
    const std::size_t n = profile.size();

    // Peak per expected line: maximum within half a spacing of the nominal
    // center.
    std::vector<std::size_t> peak_idx;
    for (std::size_t l = 0; l < expected_centers_um.size(); ++l) {
        const double spacing = l + 1 < expected_centers_um.size()
                                   ? expected_centers_um[l + 1] - expected_centers_um[l]
                                   : expected_centers_um[l] - expected_centers_um[l - 1];
        const double c = expected_centers_um[l] / sample_pitch;
        const double hw = 0.5 * spacing / sample_pitch;
        const std::size_t a = static_cast<std::size_t>(std::max(0.0, std::ceil(c - hw)));
        const std::size_t b =
            std::min(n - 1, static_cast<std::size_t>(std::floor(c + hw)));
        if (a > b) throw std::invalid_argument("assess_line_resolution: window outside profile");
        std::size_t best = a;
        for (std::size_t i = a; i <= b; ++i)
            if (profile[i] > profile[best]) best = i;
        peak_idx.push_back(best);
        rep.peaks.push_back(profile[best]);
        rep.peak_pos_um.push_back(best * sample_pitch);
    }

    bool ok = true;
    for (std::size_t l = 0; l + 1 < peak_idx.size(); ++l) {
        if (peak_idx[l + 1] <= peak_idx[l] + 1) { // peaks merged
            rep.dips.push_back(1.0);
            ok = false;
            continue;
        }
        double dip = profile[peak_idx[l] + 1];
        for (std::size_t i = peak_idx[l] + 1; i < peak_idx[l + 1]; ++i)
            dip = std::min(dip, profile[i]);
        rep.dips.push_back(dip);
        const double lower_peak = std::min(rep.peaks[l], rep.peaks[l + 1]);
        if (!(lower_peak > 0.0) || dip > dip_threshold * lower_peak) ok = false;
    }
    rep.resolved = ok;
    return rep;
}

std::string MetricsReport::to_json_string() const {
    nlohmann::json j;
    auto psnr_json = [](const PsnrResult& p) {
        nlohmann::json e;
        e["identical"] = p.identical;
        if (!p.identical) e["db"] = p.db;
        return e;
    };
    if (psnr_overall) j["psnr"] = psnr_json(*psnr_overall);
    if (!psnr_layers.empty()) {
        j["psnr_per_layer"] = nlohmann::json::array();
        for (const auto& p : psnr_layers) j["psnr_per_layer"].push_back(psnr_json(p));
    }
    if (!frc_curve.empty()) j["frc_curve"] = frc_curve;
    if (frc_qe_score) j["frc_qe"] = *frc_qe_score;
    if (!fwhm_lateral_um.empty()) j["fwhm_lateral_um"] = fwhm_lateral_um;
    if (!fwhm_axial_um.empty()) j["fwhm_axial_um"] = fwhm_axial_um;
    return j.dump(2);
}

void MetricsReport::write_json(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << to_json_string() << "\n";
}

void MetricsReport::write_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "kind,index,value\n";
    if (psnr_overall)
        out << "psnr_db,0," << (psnr_overall->identical ? "identical" : std::to_string(psnr_overall->db)) << "\n";
    for (std::size_t i = 0; i < psnr_layers.size(); ++i)
        out << "psnr_layer_db," << i << ","
            << (psnr_layers[i].identical ? "identical" : std::to_string(psnr_layers[i].db))
            << "\n";
    for (std::size_t i = 0; i < frc_curve.size(); ++i)
        out << "frc_ring," << i << "," << frc_curve[i] << "\n";
    if (frc_qe_score) out << "frc_qe,0," << *frc_qe_score << "\n";
    for (std::size_t i = 0; i < fwhm_lateral_um.size(); ++i)
        out << "fwhm_lateral_um," << i << "," << fwhm_lateral_um[i] << "\n";
    for (std::size_t i = 0; i < fwhm_axial_um.size(); ++i)
        out << "fwhm_axial_um," << i << "," << fwhm_axial_um[i] << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

} // namespace gatflfm
