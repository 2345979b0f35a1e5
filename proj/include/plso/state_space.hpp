#pragma once

// Stage-2 inference over the stacked 2J-dimensional state: Kalman filter, RTS smoother,
// credible bands, forward-filter backward-sampling and Monte Carlo phase estimates.

#include "plso/model.hpp"
#include "plso/rng.hpp"
#include "plso/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace plso {

struct PosteriorTrajectories {
    Eigen::MatrixXd means;              // K x 2J smoothed means
    std::vector<Eigen::MatrixXd> covs;  // K blocks, 2J x 2J
    double loglik = 0.0;                // innovation-form log p(y | theta, psi)

    Index n_samples() const noexcept { return means.rows(); }
    Index n_components() const noexcept { return means.cols() / 2; }
};

// Forward pass output kept for smoothing and sampling.
struct FilterPass {
    Eigen::MatrixXd transition;         // A = blkdiag(rho_j R(omega_j))
    Eigen::MatrixXd filtered_means;     // K x 2J, z_{k|k}
    Eigen::MatrixXd predicted_means;    // K x 2J, z_{k|k-1} (prior mean for k = 0)
    std::vector<Eigen::MatrixXd> filtered_covs;
    std::vector<Eigen::MatrixXd> predicted_covs;
    double loglik = 0.0;
};

inline Eigen::MatrixXd transition_matrix(const ModelParams& params) {
    const auto n_comp = static_cast<Index>(params.n_components());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n_comp, 2 * n_comp);
    for (Index j = 0; j < n_comp; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        a.block<2, 2>(2 * j, 2 * j) = params.decay(ju) * rotation_matrix(params.center_freqs[ju]);
    }
    return a;
}

namespace detail {

inline void symmetrize(Eigen::MatrixXd& p) { p = 0.5 * (p + p.transpose()).eval(); }

inline void check_state_inputs(const Eigen::VectorXd& y, const ModelParams& params, const LogVarianceField& psi) {
    params.validate();
    require(psi.n_components() == static_cast<Index>(params.n_components()), ErrorKind::usage,
            "log-variance rows do not match the number of components");
    require(y.size() == psi.n_samples(), ErrorKind::data,
            "observation length does not equal windows x window length");
    require(y.allFinite(), ErrorKind::data, "non-finite observation");
    require(psi.values.allFinite(), ErrorKind::numerical, "non-finite log-variance field");
}

}  // namespace detail

inline FilterPass kalman_filter(const Eigen::VectorXd& y, const ModelParams& params, const LogVarianceField& psi) {
    detail::check_state_inputs(y, params, psi);
    const Index n_samples = y.size();
    const auto n_comp = static_cast<Index>(params.n_components());
    const Index dim = 2 * n_comp;
    const Index n_len = psi.window_len;
    const double noise = params.obs_noise_var;

    FilterPass fp;
    fp.transition = transition_matrix(params);
    const Eigen::MatrixXd& a = fp.transition;
    fp.filtered_means.resize(n_samples, dim);
    fp.predicted_means.resize(n_samples, dim);
    fp.filtered_covs.resize(static_cast<std::size_t>(n_samples));
    fp.predicted_covs.resize(static_cast<std::size_t>(n_samples));

    std::vector<double> one_minus_rho2(static_cast<std::size_t>(n_comp));
    for (Index j = 0; j < n_comp; ++j) {
        const double rho = params.decay(static_cast<std::size_t>(j));
        one_minus_rho2[static_cast<std::size_t>(j)] = 1.0 - rho * rho;
    }

    Eigen::VectorXd z = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(dim, dim);
    for (Index j = 0; j < n_comp; ++j) p.block<2, 2>(2 * j, 2 * j) = psi.power(j, 0) * Mat2::Identity();

    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dim, dim);
    Eigen::VectorXd gain(dim);
    Eigen::VectorXd ph(dim);
    double loglik = 0.0;
    for (Index k = 0; k < n_samples; ++k) {
        if (k > 0) {
            z = a * z;
            p = a * p * a.transpose();
            const Index m = k / n_len;
            for (Index j = 0; j < n_comp; ++j) {
                const double q = psi.power(j, m) * one_minus_rho2[static_cast<std::size_t>(j)];
                p(2 * j, 2 * j) += q;
                p(2 * j + 1, 2 * j + 1) += q;
            }
            detail::symmetrize(p);
        }
        fp.predicted_means.row(k) = z.transpose();
        fp.predicted_covs[static_cast<std::size_t>(k)] = p;

        // H picks the real part of every component.
        double pred_obs = 0.0;
        for (Index j = 0; j < n_comp; ++j) pred_obs += z(2 * j);
        ph.setZero();
        for (Index j = 0; j < n_comp; ++j) ph += p.col(2 * j);
        double s = noise;
        for (Index j = 0; j < n_comp; ++j) s += ph(2 * j);
        if (!(s > 0.0) || !std::isfinite(s))
            fail(ErrorKind::numerical, "innovation variance is not positive at sample " + std::to_string(k));
        const double innov = y(k) - pred_obs;
        gain = ph / s;
        z += gain * innov;
        // Joseph form: (I - K H) P (I - K H)^T + K sigma_nu^2 K^T
        Eigen::MatrixXd ikh = eye;
        for (Index j = 0; j < n_comp; ++j) ikh.col(2 * j) -= gain;
        p = ikh * p * ikh.transpose() + noise * gain * gain.transpose();
        detail::symmetrize(p);
        loglik += -0.5 * (std::log(2.0 * M_PI * s) + innov * innov / s);

        fp.filtered_means.row(k) = z.transpose();
        fp.filtered_covs[static_cast<std::size_t>(k)] = p;
    }
    fp.loglik = loglik;
    return fp;
}

inline PosteriorTrajectories rts_smooth(const FilterPass& fp) {
    const Index n_samples = fp.filtered_means.rows();
    const Index dim = fp.filtered_means.cols();
    PosteriorTrajectories post;
    post.loglik = fp.loglik;
    post.means.resize(n_samples, dim);
    post.covs.resize(static_cast<std::size_t>(n_samples));
    if (n_samples == 0) return post;
    const Eigen::MatrixXd& a = fp.transition;

    post.means.row(n_samples - 1) = fp.filtered_means.row(n_samples - 1);
    post.covs.back() = fp.filtered_covs.back();
    for (Index k = n_samples - 2; k >= 0; --k) {
        const auto ku = static_cast<std::size_t>(k);
        const Eigen::MatrixXd& pf = fp.filtered_covs[ku];
        const Eigen::MatrixXd& pp_next = fp.predicted_covs[ku + 1];
        // C = P_{k|k} A^T P_{k+1|k}^{-1}, via a symmetric solve.
        const Eigen::MatrixXd c = pp_next.ldlt().solve(a * pf).transpose();
        const Eigen::VectorXd dz =
            (post.means.row(k + 1) - fp.predicted_means.row(k + 1)).transpose();
        post.means.row(k) = fp.filtered_means.row(k) + (c * dz).transpose();
        Eigen::MatrixXd ps = pf + c * (post.covs[ku + 1] - pp_next) * c.transpose();
        detail::symmetrize(ps);
        post.covs[ku] = std::move(ps);
    }
    return post;
}

inline PosteriorTrajectories kalman_smooth(const Eigen::VectorXd& y, const ModelParams& params,
                                           const LogVarianceField& psi) {
    return rts_smooth(kalman_filter(y, params, psi));
}

struct ComponentEstimate {
    Eigen::VectorXd mean;
    Eigen::VectorXd ci_lower;
    Eigen::VectorXd ci_upper;
};

// Real part of component j with a Gaussian band of +/- z * posterior std (z = 1.96 for 95%).
inline ComponentEstimate reconstruct_component(const PosteriorTrajectories& post, Index j, double z_score = 1.96) {
    require(j >= 0 && j < post.n_components(), ErrorKind::usage, "component index out of range");
    ComponentEstimate est;
    const Index n = post.n_samples();
    est.mean = post.means.col(2 * j);
    est.ci_lower.resize(n);
    est.ci_upper.resize(n);
    for (Index k = 0; k < n; ++k) {
        const double sd = std::sqrt(std::max(0.0, post.covs[static_cast<std::size_t>(k)](2 * j, 2 * j)));
        est.ci_lower(k) = est.mean(k) - z_score * sd;
        est.ci_upper(k) = est.mean(k) + z_score * sd;
    }
    return est;
}

// ---------------------------------------------------------------------------
// Forward-filter backward-sampling.

// Per-sample backward kernels: z_k | z_{k+1} ~ N(zf_k + G_k (z_{k+1} - A zf_k), L_k L_k^T).
struct BackwardKernels {
    Eigen::MatrixXd transition;
    Eigen::MatrixXd filtered_means;
    std::vector<Eigen::MatrixXd> gains;
    std::vector<Eigen::MatrixXd> factors;
};

namespace detail {

inline Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov, Index k) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const Eigen::VectorXd ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (ev.minCoeff() < -1e-9 * scale)
        fail(ErrorKind::numerical, "backward sampling covariance is not positive semidefinite at sample " +
                                       std::to_string(k));
    return es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace detail

inline BackwardKernels backward_kernels(const FilterPass& fp) {
    const Index n_samples = fp.filtered_means.rows();
    BackwardKernels bk;
    bk.transition = fp.transition;
    bk.filtered_means = fp.filtered_means;
    bk.gains.resize(static_cast<std::size_t>(n_samples));
    bk.factors.resize(static_cast<std::size_t>(n_samples));
    if (n_samples == 0) return bk;
    const Eigen::MatrixXd& a = fp.transition;
    bk.factors.back() = detail::psd_factor(fp.filtered_covs.back(), n_samples - 1);
    for (Index k = n_samples - 2; k >= 0; --k) {
        const auto ku = static_cast<std::size_t>(k);
        const Eigen::MatrixXd& pf = fp.filtered_covs[ku];
        const Eigen::MatrixXd apf = a * pf;
        const Eigen::MatrixXd g = fp.predicted_covs[ku + 1].ldlt().solve(apf).transpose();
        Eigen::MatrixXd cond = pf - g * apf;
        detail::symmetrize(cond);
        bk.gains[ku] = g;
        bk.factors[ku] = detail::psd_factor(cond, k);
    }
    return bk;
}

// One posterior trajectory (K x 2J) from stream s of `seed`.
inline Eigen::MatrixXd draw_trajectory(const BackwardKernels& bk, std::uint64_t seed, std::uint64_t s) {
    const Index n_samples = bk.filtered_means.rows();
    const Index dim = bk.filtered_means.cols();
    Rng rng = Rng::stream(seed, s);
    Eigen::MatrixXd out(n_samples, dim);
    Eigen::VectorXd eps(dim);
    if (n_samples == 0) return out;
    for (Index i = 0; i < dim; ++i) eps(i) = rng.normal();
    Eigen::VectorXd z = bk.filtered_means.row(n_samples - 1).transpose() + bk.factors.back() * eps;
    out.row(n_samples - 1) = z.transpose();
    for (Index k = n_samples - 2; k >= 0; --k) {
        const auto ku = static_cast<std::size_t>(k);
        const Eigen::VectorXd zf = bk.filtered_means.row(k).transpose();
        for (Index i = 0; i < dim; ++i) eps(i) = rng.normal();
        z = zf + bk.gains[ku] * (z - bk.transition * zf) + bk.factors[ku] * eps;
        out.row(k) = z.transpose();
    }
    return out;
}

struct SampleEnsemble {
    std::vector<Eigen::MatrixXd> samples;  // S entries of K x 2J
    std::uint64_t seed = 0;

    Index size() const noexcept { return static_cast<Index>(samples.size()); }
};

inline SampleEnsemble ffbs_sample(const Eigen::VectorXd& y, const ModelParams& params, const LogVarianceField& psi,
                                  Index n_draws, std::uint64_t seed) {
    require(n_draws >= 1, ErrorKind::usage, "sample count must be at least 1");
    const BackwardKernels bk = backward_kernels(kalman_filter(y, params, psi));
    SampleEnsemble ens;
    ens.seed = seed;
    ens.samples.reserve(static_cast<std::size_t>(n_draws));
    for (Index s = 0; s < n_draws; ++s) ens.samples.push_back(draw_trajectory(bk, seed, static_cast<std::uint64_t>(s)));
    return ens;
}

// ---------------------------------------------------------------------------
// Phase.

inline double wrap_angle(double a) {
    double w = std::remainder(a, 2.0 * M_PI);  // [-pi, pi]
    if (w <= -M_PI) w += 2.0 * M_PI;
    return w;
}

struct PhaseEstimate {
    Eigen::VectorXd mean_phase;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    std::vector<bool> degenerate;
};

namespace detail {

// Linear-interpolation empirical quantile of a sorted sample.
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

struct PhaseOptions {
    double level = 0.95;
    Index min_samples = 50;
    double min_resultant = 0.1;
};

// Circular mean of atan2(Im, Re) across draws; bounds are empirical quantiles of the wrapped
// deviations from that mean. Draws with mean resultant length below min_resultant are flagged
// degenerate and get a full-circle interval (lower = upper = antipode of the mean).
inline PhaseEstimate phase_estimate(const SampleEnsemble& ens, Index j, const PhaseOptions& opt = {}) {
    require(opt.level > 0.0 && opt.level < 1.0, ErrorKind::usage, "credible level must lie in (0, 1)");
    require(ens.size() >= std::max<Index>(1, opt.min_samples), ErrorKind::usage,
            "phase estimation needs at least " + std::to_string(opt.min_samples) + " samples");
    const Index n_samples = ens.samples.front().rows();
    require(j >= 0 && 2 * j + 1 < ens.samples.front().cols(), ErrorKind::usage, "component index out of range");

    PhaseEstimate pe;
    pe.mean_phase.resize(n_samples);
    pe.lower.resize(n_samples);
    pe.upper.resize(n_samples);
    pe.degenerate.assign(static_cast<std::size_t>(n_samples), false);
    std::vector<double> phases(static_cast<std::size_t>(ens.size()));
    std::vector<double> dev(phases.size());
    for (Index k = 0; k < n_samples; ++k) {
        double sc = 0.0, ss = 0.0;
        for (Index s = 0; s < ens.size(); ++s) {
            const auto& z = ens.samples[static_cast<std::size_t>(s)];
            const double ph = std::atan2(z(k, 2 * j + 1), z(k, 2 * j));
            phases[static_cast<std::size_t>(s)] = ph;
            sc += std::cos(ph);
            ss += std::sin(ph);
        }
        const double n = static_cast<double>(ens.size());
        const double resultant = std::hypot(sc, ss) / n;
        const double mean = wrap_angle(std::atan2(ss, sc));
        pe.mean_phase(k) = mean;
        if (resultant < opt.min_resultant) {
            pe.degenerate[static_cast<std::size_t>(k)] = true;
            pe.lower(k) = pe.upper(k) = wrap_angle(mean + M_PI);
            continue;
        }
        for (std::size_t s = 0; s < phases.size(); ++s) dev[s] = wrap_angle(phases[s] - mean);
        std::sort(dev.begin(), dev.end());
        pe.lower(k) = wrap_angle(mean + detail::sorted_quantile(dev, 0.5 * (1.0 - opt.level)));
        pe.upper(k) = wrap_angle(mean + detail::sorted_quantile(dev, 0.5 * (1.0 + opt.level)));
    }
    return pe;
}

// Smooths each window on its own (prior reset to sigma^2_{j,m} I at every window start),
// discarding the coupling across boundaries. Used as a discontinuity probe.
inline Eigen::MatrixXd windowed_independent_means(const Eigen::VectorXd& y, const ModelParams& params,
                                                  const LogVarianceField& psi) {
    detail::check_state_inputs(y, params, psi);
    const Index n_len = psi.window_len;
    Eigen::MatrixXd out(y.size(), 2 * psi.n_components());
    for (Index m = 0; m < psi.n_windows(); ++m) {
        const LogVarianceField one(psi.values.col(m), n_len);
        const Eigen::VectorXd seg = y.segment(m * n_len, n_len);
        out.middleRows(m * n_len, n_len) = kalman_smooth(seg, params, one).means;
    }
    return out;
}

}  // namespace plso
