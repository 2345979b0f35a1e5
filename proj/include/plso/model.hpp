#pragma once

// Generative model: rotation dynamics, closed-form second-order statistics,
// component spectra, window PSDs and the forward simulator.

#include "plso/rng.hpp"
#include "plso/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace plso {

using Mat2 = Eigen::Matrix2d;

inline Mat2 rotation_matrix(double omega) {
    const double c = std::cos(omega);
    const double s = std::sin(omega);
    Mat2 r;
    r << c, -s, s, c;
    return r;
}

// Q_j(n) = sigma^2 cos(omega_j n) exp(-n delta / l_j)
inline double autocovariance(const ModelParams& params, std::size_t j, double sigma2, long n_lag) {
    require(n_lag >= 0, ErrorKind::usage, "autocovariance lag must be nonnegative");
    const double n = static_cast<double>(n_lag);
    return sigma2 * std::cos(params.center_freqs.at(j) * n) *
           std::exp(-n * params.delta / params.lengthscales.at(j));
}

// phi(w) / sigma^2 = (1 - rho^2) / (1 + rho^2 - 2 rho cos(w - omega_j))
inline double oscillator_lobe(double rho, double omega_j, double omega) {
    const double rho2 = rho * rho;
    return (1.0 - rho2) / (1.0 + rho2 - 2.0 * rho * std::cos(omega - omega_j));
}

// Unit-power spectrum of one oscillator, phi(omega) + phi(-omega).
inline double spectral_shape(double rho, double omega_j, double omega) {
    return oscillator_lobe(rho, omega_j, omega) + oscillator_lobe(rho, omega_j, -omega);
}

inline double component_spectrum(const ModelParams& params, std::size_t j, double sigma2,
                                 double omega) {
    return sigma2 * spectral_shape(params.decay(j), params.center_freqs.at(j), omega);
}

inline Eigen::VectorXd dft_grid(Index n_bins) {
    Eigen::VectorXd w(n_bins);
    for (Index n = 0; n < n_bins; ++n) w(n) = 2.0 * M_PI * static_cast<double>(n) / static_cast<double>(n_bins);
    return w;
}

// alpha_{j,n}: J x N table of unit-power shapes on the DFT grid.
inline Eigen::MatrixXd spectral_shape_table(const ModelParams& params, Index n_bins) {
    const auto n_comp = static_cast<Index>(params.n_components());
    const Eigen::VectorXd grid = dft_grid(n_bins);
    Eigen::MatrixXd table(n_comp, n_bins);
    for (Index j = 0; j < n_comp; ++j) {
        const double rho = params.decay(static_cast<std::size_t>(j));
        const double wj = params.center_freqs[static_cast<std::size_t>(j)];
        for (Index n = 0; n < n_bins; ++n) table(j, n) = spectral_shape(rho, wj, grid(n));
    }
    return table;
}

// Window PSD from the J log powers of one window.
inline SpectrumGrid psd(const ModelParams& params, const Eigen::Ref<const Eigen::VectorXd>& window_log_vars,
                        Index n_bins) {
    require(n_bins >= 2, ErrorKind::usage, "psd needs at least two grid points");
    require(window_log_vars.size() == static_cast<Index>(params.n_components()), ErrorKind::usage,
            "window log variances do not match the number of components");
    SpectrumGrid out;
    out.freqs = dft_grid(n_bins);
    out.per_component = spectral_shape_table(params, n_bins);
    for (Index j = 0; j < out.per_component.rows(); ++j)
        out.per_component.row(j) *= std::exp(window_log_vars(j));
    out.total = Eigen::VectorXd::Constant(n_bins, params.obs_noise_var);
    for (Index j = 0; j < out.per_component.rows(); ++j) out.total += out.per_component.row(j).transpose();
    return out;
}

// Steady state of P <- rho^2 R P R^T + sigma^2 (1 - rho^2) I.
inline Mat2 steady_state_covariance(const ModelParams&, std::size_t, double sigma2) {
    require(sigma2 > 0.0, ErrorKind::usage, "power must be positive");
    return sigma2 * Mat2::Identity();
}

// One step of the component covariance recursion under power sigma2.
inline Mat2 lyapunov_step(const ModelParams& params, std::size_t j, const Mat2& cov, double sigma2) {
    const double rho = params.decay(j);
    const Mat2 r = rotation_matrix(params.center_freqs.at(j));
    return rho * rho * r * cov * r.transpose() + sigma2 * (1.0 - rho * rho) * Mat2::Identity();
}

// Prior state covariance of component j at every sample, starting from sigma^2_{j,1} I,
// with the window power switching every `window_len` samples.
inline std::vector<Mat2> propagate_state_covariance(const ModelParams& params, std::size_t j,
                                                    const Eigen::Ref<const Eigen::VectorXd>& window_log_vars,
                                                    Index window_len) {
    const Index n_windows = window_log_vars.size();
    std::vector<Mat2> out;
    out.reserve(static_cast<std::size_t>(n_windows * window_len));
    Mat2 cov = std::exp(window_log_vars(0)) * Mat2::Identity();
    out.push_back(cov);
    for (Index k = 1; k < n_windows * window_len; ++k) {
        cov = lyapunov_step(params, j, cov, std::exp(window_log_vars(k / window_len)));
        out.push_back(cov);
    }
    return out;
}

// Closed-form variance n samples into a new window: s_next + rho^{2n} (s_prev - s_next).
inline double transition_variance(double rho, double s_prev, double s_next, Index n) {
    return s_next + std::pow(rho, 2.0 * static_cast<double>(n)) * (s_prev - s_next);
}

// E[dz dz^T] = c I for dz = z_{k+1} - z_k across a boundary, z_k at steady state s_prev.
inline double boundary_increment_variance(double rho, double omega, double s_prev, double s_next) {
    return (1.0 + rho * rho - 2.0 * rho * std::cos(omega)) * s_prev + (1.0 - rho * rho) * s_next;
}

struct GenerativeSample {
    Eigen::VectorXd observations;
    LatentTrajectory latent;
};

inline GenerativeSample simulate_generative(const ModelParams& params, const LogVarianceField& field,
                                            std::uint64_t seed) {
    const auto n_comp = static_cast<Index>(params.n_components());
    require(field.n_components() == n_comp, ErrorKind::usage, "field rows must equal the number of components");
    require(field.window_len >= 1 && field.n_windows() >= 1, ErrorKind::usage, "empty log-variance field");
    require(params.obs_noise_var >= 0.0, ErrorKind::usage, "observation noise variance must be nonnegative");
    const Index n_samples = field.n_samples();
    const Index n_len = field.window_len;

    GenerativeSample out;
    out.latent.delta = params.delta;
    out.latent.states.resize(n_samples, 2 * n_comp);
    out.observations = Eigen::VectorXd::Zero(n_samples);

    for (Index j = 0; j < n_comp; ++j) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(j));
        const auto ju = static_cast<std::size_t>(j);
        const double rho = params.decay(ju);
        const Mat2 a = rho * rotation_matrix(params.center_freqs[ju]);
        Eigen::Vector2d z;
        const double s0 = std::sqrt(std::exp(field.values(j, 0)));
        z << rng.normal(s0), rng.normal(s0);
        out.latent.states.block<1, 2>(0, 2 * j) = z.transpose();
        for (Index k = 1; k < n_samples; ++k) {
            const double sd = std::sqrt(std::exp(field.values(j, k / n_len)) * (1.0 - rho * rho));
            Eigen::Vector2d eps;
            eps << rng.normal(sd), rng.normal(sd);
            z = a * z + eps;
            out.latent.states.block<1, 2>(k, 2 * j) = z.transpose();
        }
        out.observations += out.latent.states.col(2 * j);
    }
    Rng noise = Rng::stream(seed, static_cast<std::uint64_t>(n_comp));
    const double sd_nu = std::sqrt(params.obs_noise_var);
    for (Index k = 0; k < n_samples; ++k) out.observations(k) += noise.normal(sd_nu);
    return out;
}

}  // namespace plso
