#pragma once

// Windowed periodogram, penalized Whittle objective and its gradient.

#include "plso/model.hpp"
#include "plso/types.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <span>
#include <vector>

namespace plso {

// M x N matrix of |DFT|^2 / N per non-overlapping window, zero-based frequency grid.
struct Periodogram {
    Eigen::MatrixXd values;

    Index n_windows() const noexcept { return values.rows(); }
    Index window_len() const noexcept { return values.cols(); }
    double max_value() const { return values.size() ? values.maxCoeff() : 0.0; }
};

// Squared DFT magnitudes over N of one block of samples.
inline Eigen::VectorXd power_spectrum(std::span<const double> block) {
    const auto n = static_cast<Index>(block.size());
    Eigen::FFT<double> fft;
    std::vector<double> in(block.begin(), block.end());
    std::vector<std::complex<double>> out;
    fft.fwd(out, in);
    Eigen::VectorXd p(n);
    for (Index i = 0; i < n; ++i) p(i) = std::norm(out[static_cast<std::size_t>(i)]) / static_cast<double>(n);
    return p;
}

inline Periodogram periodogram(std::span<const double> observations, Index window_len) {
    const auto n_samples = static_cast<Index>(observations.size());
    check_divisible(n_samples, window_len);
    for (double y : observations) require(std::isfinite(y), ErrorKind::data, "non-finite observation");
    const Index n_windows = n_samples / window_len;
    Periodogram pg;
    pg.values.resize(n_windows, window_len);
    for (Index m = 0; m < n_windows; ++m) {
        auto block = observations.subspan(static_cast<std::size_t>(m * window_len),
                                          static_cast<std::size_t>(window_len));
        pg.values.row(m) = power_spectrum(block).transpose();
    }
    return pg;
}

inline Periodogram periodogram(const Eigen::VectorXd& observations, Index window_len) {
    return periodogram(std::span<const double>(observations.data(), static_cast<std::size_t>(observations.size())),
                       window_len);
}

namespace detail {

inline constexpr double psd_floor = 1e-300;

inline void check_shapes(const Periodogram& pg, const ModelParams& params, const LogVarianceField& psi) {
    require(psi.n_components() == static_cast<Index>(params.n_components()), ErrorKind::usage,
            "log-variance rows do not match the number of components");
    require(psi.n_windows() == pg.n_windows() && psi.window_len == pg.window_len(), ErrorKind::usage,
            "log-variance field and periodogram shapes disagree");
}

}  // namespace detail

// Precomputed pieces of the Whittle likelihood for fixed (periodogram, theta).
// gamma_{m,n} = sigma_nu^2 + sum_j exp(psi_{j,m}) alpha_{j,n}.
class WhittleModel {
public:
    WhittleModel(const Periodogram& pg, const ModelParams& params)
        : pg_(&pg), noise_(params.obs_noise_var), shapes_(spectral_shape_table(params, pg.window_len())) {}

    const Eigen::MatrixXd& shapes() const noexcept { return shapes_; }
    const Periodogram& periodogram() const noexcept { return *pg_; }

    // M x N window PSDs.
    Eigen::MatrixXd psd(const Eigen::MatrixXd& psi) const {
        Eigen::MatrixXd gamma = psi.array().exp().matrix().transpose() * shapes_;
        gamma.array() += noise_;
        return gamma;
    }

    double loglik(const Eigen::MatrixXd& psi) const {
        const Eigen::MatrixXd gamma = psd(psi);
        check(gamma);
        return -0.5 * (gamma.array().log() + pg_->values.array() / gamma.array()).sum();
    }

    // d f / d psi_{j,m} = -1/2 sum_n alpha_{j,n} e^{psi_{j,m}} (1/gamma - I/gamma^2)
    Eigen::MatrixXd gradient(const Eigen::MatrixXd& psi) const {
        const Eigen::MatrixXd gamma = psd(psi);
        check(gamma);
        const Eigen::MatrixXd resid =
            (gamma.array().inverse() - pg_->values.array() / gamma.array().square()).matrix();  // M x N
        Eigen::MatrixXd grad = shapes_ * resid.transpose();                                    // J x M
        grad.array() *= psi.array().exp();
        return -0.5 * grad;
    }

private:
    static void check(const Eigen::MatrixXd& gamma) {
        if (!gamma.allFinite()) fail(ErrorKind::numerical, "non-finite model PSD");
        if (gamma.minCoeff() < detail::psd_floor)
            fail(ErrorKind::numerical, "model PSD fell below the numerical floor");
    }

    const Periodogram* pg_;
    double noise_;
    Eigen::MatrixXd shapes_;
};

inline double whittle_loglik(const Periodogram& pg, const ModelParams& params, const LogVarianceField& psi) {
    detail::check_shapes(pg, params, psi);
    return WhittleModel(pg, params).loglik(psi.values);
}

inline Eigen::MatrixXd grad_loglik(const Periodogram& pg, const ModelParams& params, const LogVarianceField& psi) {
    detail::check_shapes(pg, params, psi);
    return WhittleModel(pg, params).gradient(psi.values);
}

// g = -(lambda/2) sum_j sum_{m>=2} (psi_{j,m} - psi_{j,m-1})^2. No term for the first window.
// In the stationary limit g is 0 on row-constant fields and -inf elsewhere.
inline double log_prior(const Eigen::MatrixXd& psi, Lambda lambda) {
    if (psi.cols() < 2) return 0.0;
    const Eigen::MatrixXd diffs = psi.rightCols(psi.cols() - 1) - psi.leftCols(psi.cols() - 1);
    if (lambda.is_stationary()) {
        const double scale = 1.0 + psi.cwiseAbs().maxCoeff();
        return diffs.cwiseAbs().maxCoeff() <= 1e-12 * scale ? 0.0 : -std::numeric_limits<double>::infinity();
    }
    if (lambda.value() == 0.0) return 0.0;
    return -0.5 * lambda.value() * diffs.squaredNorm();
}

inline double log_prior(const LogVarianceField& psi, Lambda lambda) { return log_prior(psi.values, lambda); }

struct ObjectiveReport {
    double log_lik = 0.0;
    double log_prior = 0.0;
    double total = 0.0;  // h = -total is what the optimizer minimizes
    Eigen::MatrixXd grad;
};

inline ObjectiveReport evaluate_objective(const Periodogram& pg, const ModelParams& params,
                                          const LogVarianceField& psi) {
    detail::check_shapes(pg, params, psi);
    const WhittleModel model(pg, params);
    ObjectiveReport r;
    r.log_lik = model.loglik(psi.values);
    r.log_prior = log_prior(psi.values, params.lambda);
    r.total = r.log_lik + r.log_prior;
    r.grad = model.gradient(psi.values);
    return r;
}

// C = (J M N C_alpha C_psi / sigma_nu^2)(1 + C_I / sigma_nu^2),
// C_alpha = (1 + e^{-delta/l_max}) / (1 - e^{-delta/l_max}), C_psi = exp(log_psi_bound).
inline double lipschitz_bound(const Periodogram& pg, const ModelParams& params, double log_psi_bound) {
    double l_max = params.lengthscale_max;
    if (!std::isfinite(l_max)) {
        l_max = 0.0;
        for (double l : params.lengthscales) l_max = std::max(l_max, l);
    }
    const double r = std::exp(-params.delta / l_max);
    const double c_alpha = (1.0 + r) / (1.0 - r);
    const double c_psi = std::exp(log_psi_bound);
    const double s2 = params.obs_noise_var;
    const double jmn = static_cast<double>(params.n_components()) * static_cast<double>(pg.n_windows()) *
                       static_cast<double>(pg.window_len());
    return jmn * c_alpha * c_psi / s2 * (1.0 + pg.max_value() / s2);
}

}  // namespace plso
