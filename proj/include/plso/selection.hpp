#pragma once

// Noise-floor estimate, initialization, AIC over J and even/odd cross-validation over lambda.

#include "plso/apg.hpp"
#include "plso/types.hpp"
#include "plso/whittle.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace plso {

struct FitConfig {
    double delta = 1.0;                   // seconds per sample
    Index window_len = 0;                 // N
    double cutoff_hz = 0.0;               // omega_c, Hz
    double prominence = 5.0;              // peak threshold, multiple of the median power
    double lengthscale_fraction = 1.0;    // l_init = fraction * period
    double lengthscale_max = 0.0;         // 0 selects N delta / 4
    ApgConfig apg;
    ThetaConfig theta;
    int outer_iters = 5;
    bool cv_refit_theta = true;

    double resolved_lengthscale_max() const {
        return lengthscale_max > 0.0 ? lengthscale_max : static_cast<double>(window_len) * delta / 4.0;
    }
    void validate() const {
        require(std::isfinite(delta) && delta > 0.0, ErrorKind::usage, "delta must be positive");
        require(window_len >= 2, ErrorKind::usage, "window length must be at least 2 samples");
        require(std::isfinite(cutoff_hz) && cutoff_hz >= 0.0, ErrorKind::usage, "cutoff must be nonnegative");
        require(prominence > 0.0, ErrorKind::usage, "prominence threshold must be positive");
        require(lengthscale_fraction > 0.0, ErrorKind::usage, "lengthscale fraction must be positive");
        require(outer_iters >= 0, ErrorKind::usage, "outer iteration count must be nonnegative");
        apg.validate();
    }
};

inline std::vector<Lambda> default_lambda_grid() {
    return {Lambda(0.0), Lambda(1e-2), Lambda(1e-1), Lambda(1.0), Lambda(10.0), Lambda(100.0), Lambda::stationary()};
}

// Mean of the full-record periodogram (|DFT|^2 / K) over frequencies in [cutoff, fs/2].
inline double estimate_obs_noise(const Eigen::VectorXd& y, double delta, double cutoff_hz) {
    require(y.size() >= 2, ErrorKind::data, "record too short to estimate the noise floor");
    require(y.allFinite(), ErrorKind::data, "non-finite observation");
    const double nyquist = 0.5 / delta;
    require(cutoff_hz < nyquist, ErrorKind::usage, "cutoff frequency must lie below the Nyquist frequency");
    const Eigen::VectorXd p =
        power_spectrum(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
    const double k = static_cast<double>(y.size());
    double sum = 0.0;
    Index count = 0;
    for (Index n = 0; n <= y.size() / 2; ++n) {
        const double f = static_cast<double>(n) / (k * delta);
        if (f >= cutoff_hz && f <= nyquist) {
            sum += p(n);
            ++count;
        }
    }
    require(count > 0, ErrorKind::usage, "no frequencies between the cutoff and Nyquist");
    const double est = sum / static_cast<double>(count);
    require(est > 0.0, ErrorKind::data, "noise floor estimate is zero; the record has no high-frequency power");
    return est;
}

// Centre frequencies (rad/sample) of bands whose power exceeds prominence x median,
// strongest first. Only bins at or below the cutoff are searched.
inline std::vector<double> find_prominent_bands(const Eigen::VectorXd& mean_power, double delta, double cutoff_hz,
                                                double prominence) {
    const Index n_bins = mean_power.size();
    const Index half = n_bins / 2;
    std::vector<double> positive(mean_power.data(), mean_power.data() + half + 1);
    std::vector<double> sorted = positive;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
    const double threshold = prominence * sorted[sorted.size() / 2];
    const double hz_per_bin = 1.0 / (static_cast<double>(n_bins) * delta);

    std::vector<std::pair<double, Index>> bands;  // (peak power, peak bin)
    Index n = 0;
    while (n <= half) {
        if (positive[static_cast<std::size_t>(n)] <= threshold || static_cast<double>(n) * hz_per_bin > cutoff_hz) {
            ++n;
            continue;
        }
        Index best = n;
        while (n <= half && positive[static_cast<std::size_t>(n)] > threshold &&
               static_cast<double>(n) * hz_per_bin <= cutoff_hz) {
            if (positive[static_cast<std::size_t>(n)] > positive[static_cast<std::size_t>(best)]) best = n;
            ++n;
        }
        bands.emplace_back(positive[static_cast<std::size_t>(best)], best);
    }
    std::stable_sort(bands.begin(), bands.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<double> out;
    for (const auto& b : bands) out.push_back(2.0 * M_PI * static_cast<double>(b.second) / static_cast<double>(n_bins));
    return out;
}

struct Initialization {
    ModelParams params;
    LogVarianceField psi;  // after the lambda = 0 fit
    std::vector<std::string> warnings;
};

// Seed theta from the spectrogram, then fit psi at lambda = 0.
inline Initialization initialize(const Eigen::VectorXd& y, Index n_components, const FitConfig& cfg,
                                 double obs_noise_var) {
    cfg.validate();
    require(n_components >= 1, ErrorKind::usage, "need at least one component");
    const Periodogram pg = periodogram(y, cfg.window_len);
    const Eigen::VectorXd mean_power = pg.values.colwise().mean().transpose();
    const double omega_c = std::min(M_PI, 2.0 * M_PI * cfg.cutoff_hz * cfg.delta);

    std::vector<double> freqs = find_prominent_bands(mean_power, cfg.delta, cfg.cutoff_hz, cfg.prominence);
    if (static_cast<Index>(freqs.size()) > n_components) freqs.resize(static_cast<std::size_t>(n_components));
    const Index remaining = n_components - static_cast<Index>(freqs.size());
    for (Index i = 0; i < remaining; ++i)
        freqs.push_back(omega_c * static_cast<double>(i + 1) / static_cast<double>(remaining + 1));

    Initialization init;
    ModelParams& p = init.params;
    p.delta = cfg.delta;
    p.lambda = Lambda(0.0);
    p.obs_noise_var = obs_noise_var;
    p.lengthscale_max = cfg.resolved_lengthscale_max();
    p.center_freqs = freqs;
    for (double w : freqs) {
        double l = w > 0.0 ? cfg.lengthscale_fraction * (2.0 * M_PI / w) * cfg.delta : p.lengthscale_max;
        l = std::min(std::max(l, 10.0 * cfg.delta), p.lengthscale_max);
        p.lengthscales.push_back(l);
    }
    p.validate();

    // Split each window's excess variance evenly across components.
    Eigen::MatrixXd psi0(n_components, pg.n_windows());
    for (Index m = 0; m < pg.n_windows(); ++m) {
        const double var = y.segment(m * cfg.window_len, cfg.window_len).squaredNorm() /
                           static_cast<double>(cfg.window_len);
        const double excess = std::max(var - obs_noise_var, 1e-3 * obs_noise_var);
        psi0.col(m).setConstant(std::log(excess / static_cast<double>(n_components)));
    }
    detail::project_box(psi0, cfg.apg.log_psi_bound);
    ApgResult fit = apg_fit_psi(pg, p, LogVarianceField(psi0, cfg.window_len), cfg.apg);
    init.psi = std::move(fit.psi);
    init.warnings = std::move(fit.warnings);
    return init;
}

struct FitOutcome {
    ModelParams params;
    LogVarianceField psi;
    double loglik = 0.0;          // Whittle f at the optimum
    std::vector<double> trace;    // per-round h
    std::vector<std::string> warnings;
};

// initialize + block coordinate fit at lambda = 0.
inline FitOutcome fit_unpenalized(const Eigen::VectorXd& y, Index n_components, const FitConfig& cfg,
                                  double obs_noise_var) {
    Initialization init = initialize(y, n_components, cfg, obs_noise_var);
    const Periodogram pg = periodogram(y, cfg.window_len);
    BlockFitResult bf = block_coordinate_fit(pg, init.params, init.psi, cfg.apg, cfg.theta, cfg.outer_iters);
    FitOutcome out;
    out.params = std::move(bf.params);
    out.psi = std::move(bf.psi);
    out.loglik = whittle_loglik(pg, out.params, out.psi);
    out.trace = std::move(bf.trace);
    out.warnings = std::move(init.warnings);
    for (auto& w : bf.warnings) out.warnings.push_back(std::move(w));
    return out;
}

// Refit at another lambda starting from a previous estimate.
inline FitOutcome fit_at_lambda(const Eigen::VectorXd& y, const FitOutcome& start, Lambda lambda, const FitConfig& cfg) {
    const Periodogram pg = periodogram(y, cfg.window_len);
    ModelParams p = start.params;
    p.lambda = lambda;
    BlockFitResult bf = block_coordinate_fit(pg, p, start.psi, cfg.apg, cfg.theta, cfg.outer_iters);
    FitOutcome out;
    out.params = std::move(bf.params);
    out.psi = std::move(bf.psi);
    out.loglik = whittle_loglik(pg, out.params, out.psi);
    out.trace = std::move(bf.trace);
    out.warnings = std::move(bf.warnings);
    return out;
}

// AIC(J) = -(2/M) loglik + 6 J
inline double aic_value(double loglik, Index n_windows, Index n_components) {
    require(n_windows >= 1, ErrorKind::usage, "AIC needs at least one window");
    return -(2.0 / static_cast<double>(n_windows)) * loglik + 6.0 * static_cast<double>(n_components);
}

inline double aic(const Eigen::VectorXd& y, Index n_components, const FitConfig& cfg, double obs_noise_var) {
    const FitOutcome fit = fit_unpenalized(y, n_components, cfg, obs_noise_var);
    return aic_value(fit.loglik, y.size() / cfg.window_len, n_components);
}

struct SelectionReport {
    std::map<Index, double> aic_by_j;
    Index chosen_j = 0;
    std::vector<std::pair<Lambda, double>> cv_by_lambda;  // grid order
    Lambda chosen_lambda;
    double sigma_nu2 = 0.0;
    ModelParams init_params;
    LogVarianceField init_psi;
    std::vector<std::string> warnings;
};

// Fits every candidate J at lambda = 0; the unpenalized fit of the winner is returned too.
inline std::pair<SelectionReport, FitOutcome> select_j(const Eigen::VectorXd& y, const std::vector<Index>& candidates,
                                                       const FitConfig& cfg, double obs_noise_var) {
    require(!candidates.empty(), ErrorKind::usage, "empty list of component counts");
    SelectionReport rep;
    rep.sigma_nu2 = obs_noise_var;
    std::map<Index, FitOutcome> fits;
    const Index n_windows = y.size() / cfg.window_len;
    for (Index j : candidates) {
        if (fits.count(j)) continue;
        FitOutcome f = fit_unpenalized(y, j, cfg, obs_noise_var);
        rep.aic_by_j[j] = aic_value(f.loglik, n_windows, j);
        fits.emplace(j, std::move(f));
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [j, a] : rep.aic_by_j) {  // ascending J, so ties keep the smaller J
        if (a < best) {
            best = a;
            rep.chosen_j = j;
        }
    }
    require(std::isfinite(best), ErrorKind::numerical, "no candidate produced a finite AIC");
    FitOutcome chosen = std::move(fits.at(rep.chosen_j));
    rep.init_params = chosen.params;
    rep.init_psi = chosen.psi;
    rep.warnings = chosen.warnings;
    return {std::move(rep), std::move(chosen)};
}

// ---------------------------------------------------------------------------
// Even/odd cross-validation.

struct CvFold {
    Eigen::VectorXd y;
    Periodogram pg;
};

inline std::pair<CvFold, CvFold> even_odd_folds(const Eigen::VectorXd& y, Index window_len) {
    require(window_len % 2 == 0, ErrorKind::usage, "cross-validation needs an even window length");
    check_divisible(y.size(), window_len);
    const Index half = y.size() / 2;
    CvFold even, odd;
    even.y.resize(half);
    odd.y.resize(half);
    for (Index i = 0; i < half; ++i) {
        even.y(i) = y(2 * i);
        odd.y(i) = y(2 * i + 1);
    }
    even.pg = periodogram(even.y, window_len / 2);
    odd.pg = periodogram(odd.y, window_len / 2);
    return {std::move(even), std::move(odd)};
}

// Parameters at twice the sampling interval; omega doubles and is clipped at pi.
inline ModelParams fold_params(const ModelParams& full, std::vector<std::string>* warnings) {
    ModelParams p = full;
    p.delta = 2.0 * full.delta;
    bool clipped = false;
    for (double& w : p.center_freqs) {
        w *= 2.0;
        if (w > M_PI) {
            w = M_PI;
            clipped = true;
        }
    }
    if (clipped && warnings)
        warnings->push_back("cross-validation: a centre frequency exceeds the fold Nyquist and was clipped to pi");
    return p;
}

// Mean held-out Whittle log-likelihood over both fit/score directions.
inline double cv_score(const std::pair<CvFold, CvFold>& folds, const ModelParams& full_params,
                       const LogVarianceField& full_psi, Lambda lambda, const FitConfig& cfg,
                       std::vector<std::string>* warnings) {
    ModelParams p = fold_params(full_params, warnings);
    p.lambda = lambda;
    const LogVarianceField psi0(full_psi.values, full_psi.window_len / 2);
    const CvFold* train[2] = {&folds.first, &folds.second};
    const CvFold* test[2] = {&folds.second, &folds.first};
    double total = 0.0;
    for (int d = 0; d < 2; ++d) {
        ModelParams fitted;
        LogVarianceField psi;
        if (cfg.cv_refit_theta) {
            BlockFitResult bf = block_coordinate_fit(train[d]->pg, p, psi0, cfg.apg, cfg.theta, cfg.outer_iters);
            fitted = std::move(bf.params);
            psi = std::move(bf.psi);
        } else {
            fitted = p;
            psi = apg_fit_psi(train[d]->pg, p, psi0, cfg.apg).psi;
        }
        total += whittle_loglik(test[d]->pg, fitted, psi);
    }
    return 0.5 * total;
}

inline SelectionReport cross_validate_lambda(const Eigen::VectorXd& y, const FitOutcome& unpenalized,
                                             const std::vector<Lambda>& grid, const FitConfig& cfg) {
    require(!grid.empty(), ErrorKind::usage, "empty lambda grid");
    SelectionReport rep;
    rep.sigma_nu2 = unpenalized.params.obs_noise_var;
    rep.init_params = unpenalized.params;
    rep.init_psi = unpenalized.psi;
    const auto folds = even_odd_folds(y, cfg.window_len);
    double best = -std::numeric_limits<double>::infinity();
    bool have = false;
    for (const Lambda& lam : grid) {
        const double s = cv_score(folds, unpenalized.params, unpenalized.psi, lam, cfg, &rep.warnings);
        rep.cv_by_lambda.emplace_back(lam, s);
        if (!std::isfinite(s)) continue;
        // Ties go to the larger lambda.
        if (!have || s > best || (s == best && lam.key() > rep.chosen_lambda.key())) {
            best = s;
            rep.chosen_lambda = lam;
            have = true;
        }
    }
    require(have, ErrorKind::numerical, "no lambda produced a finite cross-validation score");
    std::sort(rep.warnings.begin(), rep.warnings.end());
    rep.warnings.erase(std::unique(rep.warnings.begin(), rep.warnings.end()), rep.warnings.end());
    return rep;
}

// Full pipeline: noise floor, J by AIC (or fixed), lambda by CV (or fixed), final fit.
struct PipelineOptions {
    std::vector<Index> j_candidates;  // one entry means J is fixed
    bool cross_validate = false;
    std::vector<Lambda> lambda_grid = default_lambda_grid();
    Lambda lambda;                    // used when cross_validate is false
};

struct PipelineResult {
    SelectionReport report;
    FitOutcome fit;
};

inline PipelineResult fit_pipeline(const Eigen::VectorXd& y, const FitConfig& cfg, const PipelineOptions& opt) {
    cfg.validate();
    check_divisible(y.size(), cfg.window_len);
    PipelineResult out;
    const double s2 = estimate_obs_noise(y, cfg.delta, cfg.cutoff_hz);
    auto [rep, unpen] = select_j(y, opt.j_candidates, cfg, s2);
    out.report = std::move(rep);
    Lambda lam = opt.lambda;
    if (opt.cross_validate) {
        SelectionReport cv = cross_validate_lambda(y, unpen, opt.lambda_grid, cfg);
        out.report.cv_by_lambda = std::move(cv.cv_by_lambda);
        out.report.chosen_lambda = cv.chosen_lambda;
        for (auto& w : cv.warnings) out.report.warnings.push_back(std::move(w));
        lam = cv.chosen_lambda;
    } else {
        out.report.chosen_lambda = lam;
    }
    if (lam == Lambda(0.0)) {
        out.fit = std::move(unpen);
    } else {
        out.fit = fit_at_lambda(y, unpen, lam, cfg);
        for (auto& w : out.fit.warnings) out.report.warnings.push_back(w);
    }
    out.fit.params.lambda = lam;
    return out;
}

}  // namespace plso
