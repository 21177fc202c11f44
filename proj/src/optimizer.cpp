#include "gatflfm/optimizer.hpp"

#include "gatflfm/fft.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gatflfm {

namespace {
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
} // namespace

void LossConfig::validate() const {
    if (!(alpha >= 0.0)) throw std::invalid_argument("LossConfig: alpha must be >= 0");
    if (!(lambda_erank >= 0.0))
        throw std::invalid_argument("LossConfig: lambda_erank must be >= 0");
    if (!(e_min > 1.0 && e_min <= 3.0))
        throw std::invalid_argument("LossConfig: e_min must be in (1, 3]");
}

void TrainConfig::validate() const {
    if (iterations < 0) throw std::invalid_argument("TrainConfig: iterations must be >= 0");
    if (!(lr_density > 0.0 && lr_mean > 0.0 && lr_log_scale > 0.0 && lr_quat > 0.0))
        throw std::invalid_argument("TrainConfig: learning rates must be > 0");
    if (!(mean_lr_final_frac > 0.0 && mean_lr_final_frac <= 1.0))
        throw std::invalid_argument("TrainConfig: mean_lr_final_frac must be in (0, 1]");
    if (densify_interval < 1)
        throw std::invalid_argument("TrainConfig: densify_interval must be >= 1");
    if (!(densify_until >= 0.0 && densify_until <= 1.0))
        throw std::invalid_argument("TrainConfig: densify_until must be in [0, 1]");
    if (!(tau_grad > 0.0 && tau_scale > 0.0 && tau_prune > 0.0 && split_factor > 0.0))
        throw std::invalid_argument("TrainConfig: thresholds must be > 0");
}

TrainState TrainState::zeros(std::size_t m) {
    TrainState s;
    s.m_density.assign(m, 0.0);
    s.v_density.assign(m, 0.0);
    s.m_mean.assign(m, Eigen::Vector3d::Zero());
    s.v_mean.assign(m, Eigen::Vector3d::Zero());
    s.m_log_scale.assign(m, Eigen::Vector3d::Zero());
    s.v_log_scale.assign(m, Eigen::Vector3d::Zero());
    s.m_quat.assign(m, Eigen::Vector4d::Zero());
    s.v_quat.assign(m, Eigen::Vector4d::Zero());
    s.grad_norm_accum.assign(m, 0.0);
    s.grad_count.assign(m, 0);
    return s;
}

double fdl(const SensorImage& x, const SensorImage& y) {
    if (x.h != y.h || x.w != y.w)
        throw std::invalid_argument("fdl: image dims mismatch");
    fft::Dft2d dft(x.h, x.w);
    std::vector<std::complex<double>> bx(x.values.begin(), x.values.end());
    std::vector<std::complex<double>> by(y.values.begin(), y.values.end());
    dft.forward(bx.data());
    dft.forward(by.data());
    double acc = 0.0;
    for (std::size_t k = 0; k < bx.size(); ++k) acc += std::abs(bx[k] - by[k]);
    return acc;
}

std::pair<double, std::vector<Eigen::Vector3d>> erank_penalty(const GaussianCloud& cloud,
                                                              const LossConfig& cfg) {
    cloud.validate();
    cfg.validate();
    const std::size_t m = cloud.size();
    std::vector<Eigen::Vector3d> grads(m, Eigen::Vector3d::Zero());
    double penalty = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const Eigen::Vector3d lam = (2.0 * cloud.log_scale[i].array()).exp().matrix();
        const double total = lam.sum();
        const Eigen::Vector3d p = lam / total;
        double entropy = 0.0;
        for (int k = 0; k < 3; ++k) entropy -= p[k] * std::log(p[k]);
        const double erank = std::exp(entropy);
        if (erank >= cfg.e_min) continue; // hinge inactive
        penalty += cfg.e_min - erank;
        for (int k = 0; k < 3; ++k) {
            const double derank_dlam = erank * (-std::log(p[k]) - entropy) / total;
            grads[i][k] = -cfg.lambda_erank / static_cast<double>(m) * derank_dlam *
                          2.0 * lam[k];
        }
    }
    penalty *= cfg.lambda_erank / static_cast<double>(m);
    return {penalty, std::move(grads)};
}

std::pair<LossValue, CloudGrads> loss_and_grad(const GaussianCloud& cloud,
                                               const SensorImage& measurement,
                                               const ConvolutionOperator& op,
                                               const GridSpec& grid,
                                               const LossConfig& loss_cfg,
                                               const VoxelizeConfig& vox_cfg) {
    loss_cfg.validate();
    if (measurement.h != op.sensor_h() || measurement.w != op.sensor_w())
        throw std::invalid_argument("loss_and_grad: measurement dims do not match operator");

    const VoxelGrid vol = voxelize(cloud, grid, vox_cfg);
    const SensorImage proj = op.forward(vol);

    const std::size_t npix = proj.pixel_count();
    LossValue loss;
    SensorImage dl_dproj(proj.h, proj.w, proj.pixel_pitch);
    for (std::size_t k = 0; k < npix; ++k) {
        const double diff = proj.values[k] - measurement.values[k];
        loss.mse += diff * diff;
        dl_dproj.values[k] = 2.0 * diff / static_cast<double>(npix);
    }
    loss.mse /= static_cast<double>(npix);

    if (loss_cfg.alpha > 0.0) {
        fft::Dft2d dft(proj.h, proj.w);
        std::vector<std::complex<double>> bx(proj.values.begin(), proj.values.end());
        std::vector<std::complex<double>> by(measurement.values.begin(),
                                             measurement.values.end());
        dft.forward(bx.data());
        dft.forward(by.data());
        // Subgradient of sum |X - Y|: sign of each complex bin, 0 at 0.
        std::vector<std::complex<double>> sign(npix);
        for (std::size_t k = 0; k < npix; ++k) {
            const std::complex<double> d = bx[k] - by[k];
            const double mag = std::abs(d);
            loss.fdl += mag;
            sign[k] = mag > 0.0 ? std::conj(d / mag) : std::complex<double>{0.0, 0.0};
        }
        dft.forward(sign.data());
        for (std::size_t k = 0; k < npix; ++k)
            dl_dproj.values[k] += loss_cfg.alpha * sign[k].real();
    } else {
        loss.fdl = fdl(proj, measurement);
    }

    const VoxelGrid dl_dvol = op.adjoint(dl_dproj, grid);
    CloudGrads grads = voxelize_backward(cloud, grid, vox_cfg, dl_dvol);

    auto [erank_pen, erank_grads] = erank_penalty(cloud, loss_cfg);
    loss.erank = erank_pen;
    for (std::size_t i = 0; i < cloud.size(); ++i) grads.log_scale[i] += erank_grads[i];

    loss.total = loss.mse + loss_cfg.alpha * loss.fdl + loss.erank;
    return {loss, std::move(grads)};
}

std::pair<LossValue, CloudGrads> loss_and_grad(const GaussianCloud& cloud,
                                               const SensorImage& measurement,
                                               const PsfStack& psf, const GridSpec& grid,
                                               const LossConfig& loss_cfg,
                                               const VoxelizeConfig& vox_cfg) {
    ConvolutionOperator op(psf, {grid.nx(), grid.ny()});
    return loss_and_grad(cloud, measurement, op, grid, loss_cfg, vox_cfg);
}

DensifyResult densify_and_prune(const GaussianCloud& cloud, const TrainState& state,
                                const GridSpec& grid, const TrainConfig& cfg,
                                std::mt19937_64& rng) {
    cloud.validate();
    cfg.validate();
    const std::size_t m = cloud.size();
    if (state.size() != m || state.grad_norm_accum.size() != m)
        throw std::invalid_argument("densify_and_prune: state does not match cloud size");

    double max_rho = 0.0;
    for (std::size_t i = 0; i < m; ++i) max_rho = std::max(max_rho, cloud.density(i));
    const double prune_floor = cfg.tau_prune * max_rho;
    const double min_pitch = *std::min_element(grid.pitch.begin(), grid.pitch.end());
    const double scale_limit = cfg.tau_scale * min_pitch;
    const double log_shrink = std::log(cfg.split_factor);
    // Mass-preserving density for two children with scales s/phi:
    // rho_child = rho * phi^3 / 2.
    const double child_rho_factor = std::pow(cfg.split_factor, 3) / 2.0;

    DensifyResult out;
    out.state.step = state.step;
    out.state.history = state.history;
    std::normal_distribution<double> normal(0.0, 1.0);

    auto keep_kernel = [&](std::size_t i, bool zero_moments) {
        out.cloud.density_raw.push_back(cloud.density_raw[i]);
        out.cloud.mean.push_back(cloud.mean[i]);
        out.cloud.log_scale.push_back(cloud.log_scale[i]);
        out.cloud.quat.push_back(cloud.quat[i]);
        if (zero_moments) {
            out.state.m_density.push_back(0.0);
            out.state.v_density.push_back(0.0);
            out.state.m_mean.push_back(Eigen::Vector3d::Zero());
            out.state.v_mean.push_back(Eigen::Vector3d::Zero());
            out.state.m_log_scale.push_back(Eigen::Vector3d::Zero());
            out.state.v_log_scale.push_back(Eigen::Vector3d::Zero());
            out.state.m_quat.push_back(Eigen::Vector4d::Zero());
            out.state.v_quat.push_back(Eigen::Vector4d::Zero());
        } else {
            out.state.m_density.push_back(state.m_density[i]);
            out.state.v_density.push_back(state.v_density[i]);
            out.state.m_mean.push_back(state.m_mean[i]);
            out.state.v_mean.push_back(state.v_mean[i]);
            out.state.m_log_scale.push_back(state.m_log_scale[i]);
            out.state.v_log_scale.push_back(state.v_log_scale[i]);
            out.state.m_quat.push_back(state.m_quat[i]);
            out.state.v_quat.push_back(state.v_quat[i]);
        }
    };

    auto push_child = [&](std::size_t i, double rho_child) {
        const Eigen::Matrix3d rot = quat_to_rotation(cloud.quat[i]);
        const Eigen::Vector3d s = cloud.scale(i);
        const Eigen::Vector3d z{normal(rng), normal(rng), normal(rng)};
        out.cloud.density_raw.push_back(softplus_inv(rho_child));
        out.cloud.mean.push_back(cloud.mean[i] + rot * (s.array() * z.array()).matrix());
        out.cloud.log_scale.push_back(cloud.log_scale[i] -
                                      Eigen::Vector3d::Constant(log_shrink));
        out.cloud.quat.push_back(cloud.quat[i]);
        out.state.m_density.push_back(0.0);
        out.state.v_density.push_back(0.0);
        out.state.m_mean.push_back(Eigen::Vector3d::Zero());
        out.state.v_mean.push_back(Eigen::Vector3d::Zero());
        out.state.m_log_scale.push_back(Eigen::Vector3d::Zero());
        out.state.v_log_scale.push_back(Eigen::Vector3d::Zero());
        out.state.m_quat.push_back(Eigen::Vector4d::Zero());
        out.state.v_quat.push_back(Eigen::Vector4d::Zero());
    };

    for (std::size_t i = 0; i < m; ++i) {
        const double rho = cloud.density(i);
        if (rho < prune_floor) {
            ++out.pruned;
            continue;
        }
        const double mean_grad =
            state.grad_count[i] > 0
                ? state.grad_norm_accum[i] / static_cast<double>(state.grad_count[i])
                : 0.0;
        if (mean_grad > cfg.tau_grad) {
            if (cloud.scale(i).maxCoeff() > scale_limit) {
                push_child(i, rho * child_rho_factor);
                push_child(i, rho * child_rho_factor);
                ++out.split;
                continue;
            }
            keep_kernel(i, false);
            keep_kernel(i, true); // in-place duplicate; separates under gradients
            ++out.cloned;
            continue;
        }
        keep_kernel(i, false);
    }

    if (out.cloud.empty())
        throw std::runtime_error(
            "densify_and_prune: cloud collapsed (all " + std::to_string(m) +
            " kernels pruned; max density " + std::to_string(max_rho) +
            ", prune floor " + std::to_string(prune_floor) + ")");

    out.state.grad_norm_accum.assign(out.cloud.size(), 0.0);
    out.state.grad_count.assign(out.cloud.size(), 0);
    return out;
}

namespace {

void adam_scalar(double& param, double grad, double& m1, double& m2, double lr,
                 double bc1, double bc2) {
    m1 = kAdamBeta1 * m1 + (1.0 - kAdamBeta1) * grad;
    m2 = kAdamBeta2 * m2 + (1.0 - kAdamBeta2) * grad * grad;
    param -= lr * (m1 / bc1) / (std::sqrt(m2 / bc2) + kAdamEps);
}

template <typename Vec>
void adam_vector(Vec& param, const Vec& grad, Vec& m1, Vec& m2, double lr, double bc1,
                 double bc2) {
    for (int k = 0; k < param.size(); ++k)
        adam_scalar(param[k], grad[k], m1[k], m2[k], lr, bc1, bc2);
}

} // namespace

TrainResult train(const SensorImage& measurement, const PsfStack& psf,
                  const GridSpec& grid, GaussianCloud cloud, const LossConfig& loss_cfg,
                  const TrainConfig& train_cfg, const VoxelizeConfig& vox_cfg,
                  const TrainObserver& observer) {
    loss_cfg.validate();
    train_cfg.validate();
    vox_cfg.validate();
    cloud.validate();
    grid.validate();

    ConvolutionOperator op(psf, {grid.nx(), grid.ny()});
    TrainState state = TrainState::zeros(cloud.size());
    std::mt19937_64 rng(train_cfg.seed);

    double scene_extent = 0.0;
    for (int a = 0; a < 3; ++a)
        scene_extent = std::max(scene_extent, grid.dims[a] * grid.pitch[a]);
    const double lr_mean0 = train_cfg.lr_mean * scene_extent;
    const int iters = train_cfg.iterations;

    for (int it = 0; it < iters; ++it) {
        auto [loss, grads] = loss_and_grad(cloud, measurement, op, grid, loss_cfg, vox_cfg);
        if (!std::isfinite(loss.total))
            throw std::runtime_error(
                "train: non-finite loss at iteration " + std::to_string(it) + " (mse=" +
                std::to_string(loss.mse) + ", fdl=" + std::to_string(loss.fdl) +
                ", erank=" + std::to_string(loss.erank) + ")");

        const double decay =
            iters > 1 ? std::pow(train_cfg.mean_lr_final_frac,
                                 static_cast<double>(it) / (iters - 1))
                      : 1.0;
        const double lr_mean_t = lr_mean0 * decay;

        state.step += 1;
        const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
        const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            state.grad_norm_accum[i] += grads.mean[i].norm();
            state.grad_count[i] += 1;
            adam_scalar(cloud.density_raw[i], grads.density_raw[i], state.m_density[i],
                        state.v_density[i], train_cfg.lr_density, bc1, bc2);
            adam_vector(cloud.mean[i], grads.mean[i], state.m_mean[i], state.v_mean[i],
                        lr_mean_t, bc1, bc2);
            adam_vector(cloud.log_scale[i], grads.log_scale[i], state.m_log_scale[i],
                        state.v_log_scale[i], train_cfg.lr_log_scale, bc1, bc2);
            adam_vector(cloud.quat[i], grads.quat[i], state.m_quat[i], state.v_quat[i],
                        train_cfg.lr_quat, bc1, bc2);
        }

        state.history.push_back({it, cloud.size(), loss.total, loss.mse, loss.fdl,
                                 loss.erank, lr_mean_t});

        const int step1 = it + 1;
        if (step1 % train_cfg.densify_interval == 0 &&
            step1 < train_cfg.densify_until * iters) {
            DensifyResult d = densify_and_prune(cloud, state, grid, train_cfg, rng);
            cloud = std::move(d.cloud);
            state = std::move(d.state);
        }

        if (observer) observer(it, cloud, state);
    }

    TrainResult result;
    result.volume = voxelize(cloud, grid, vox_cfg);
    result.volume.clamp_nonnegative();
    result.cloud = std::move(cloud);
    result.state = std::move(state);
    return result;
}

} // namespace gatflfm
