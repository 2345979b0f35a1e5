#pragma once

// Two amplitude-modulated oscillations in white noise, and the metrics used to score
// decompositions of them.

#include "plso/model.hpp"
#include "plso/selection.hpp"
#include "plso/state_space.hpp"
#include "plso/types.hpp"

#include <Eigen/Dense>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace plso {

struct ExperimentSpec {
    double mod_freq_hz = 0.04;  // omega_0
    double freq1_hz = 1.0;
    double freq2_hz = 10.0;
    double fs = 200.0;
    double duration_s = 100.0;
    double lengthscale1 = 1.0;
    double lengthscale2 = 1.0;
    double noise_var = 25.0;
    double window_s = 2.0;

    double delta() const { return 1.0 / fs; }
    Index n_samples() const { return static_cast<Index>(std::llround(duration_s * fs)); }
    Index window_len() const { return static_cast<Index>(std::llround(window_s * fs)); }
};

struct SimulationBundle {
    Eigen::VectorXd observations;
    Eigen::MatrixXd true_components;   // K x 2, modulated real parts
    Eigen::MatrixXd true_window_vars;  // 2 x M, envelope^2 at window centres
    Eigen::MatrixXd envelopes;         // K x 2
    ExperimentSpec spec;
    std::uint64_t seed = 0;
};

// Envelopes at 1-based sample k: 10 (K - k) / K and 10 cos^4(2 pi f0 k delta).
inline std::array<double, 2> experiment_envelopes(const ExperimentSpec& spec, Index k1) {
    const double kk = static_cast<double>(spec.n_samples());
    const double k = static_cast<double>(k1);
    const double c = std::cos(2.0 * M_PI * spec.mod_freq_hz * k * spec.delta());
    return {10.0 * (kk - k) / kk, 10.0 * c * c * c * c};
}

inline SimulationBundle simulate_paper_experiment(std::uint64_t seed, const ExperimentSpec& spec = {}) {
    const Index n_samples = spec.n_samples();
    const Index n_len = spec.window_len();
    check_divisible(n_samples, n_len);
    const Index n_windows = n_samples / n_len;

    ModelParams p;
    p.delta = spec.delta();
    p.obs_noise_var = 0.0;
    p.lengthscales = {spec.lengthscale1, spec.lengthscale2};
    p.center_freqs = {2.0 * M_PI * spec.freq1_hz * p.delta, 2.0 * M_PI * spec.freq2_hz * p.delta};
    // Unit-power stationary oscillators: one window spanning the whole record.
    const LogVarianceField unit = LogVarianceField::constant(2, 1, n_samples, 0.0);
    const GenerativeSample g = simulate_generative(p, unit, seed);

    SimulationBundle b;
    b.spec = spec;
    b.seed = seed;
    b.true_components.resize(n_samples, 2);
    b.envelopes.resize(n_samples, 2);
    b.observations.resize(n_samples);
    Rng noise = Rng::stream(seed, 0x6e6f697365ULL);
    const double sd = std::sqrt(spec.noise_var);
    for (Index i = 0; i < n_samples; ++i) {
        const auto env = experiment_envelopes(spec, i + 1);
        for (int c = 0; c < 2; ++c) {
            b.envelopes(i, c) = env[static_cast<std::size_t>(c)];
            b.true_components(i, c) = env[static_cast<std::size_t>(c)] * g.latent.states(i, 2 * c);
        }
        b.observations(i) = b.true_components(i, 0) + b.true_components(i, 1) + noise.normal(sd);
    }
    b.true_window_vars.resize(2, n_windows);
    for (Index m = 0; m < n_windows; ++m) {
        // 1-based centre of window m (0-based): m N + (N + 1) / 2
        const double centre = static_cast<double>(m * n_len) + 0.5 * static_cast<double>(n_len + 1);
        const double kk = static_cast<double>(n_samples);
        const double cs = std::cos(2.0 * M_PI * spec.mod_freq_hz * centre * spec.delta());
        const double e1 = 10.0 * (kk - centre) / kk;
        const double e2 = 10.0 * cs * cs * cs * cs;
        b.true_window_vars(0, m) = e1 * e1;
        b.true_window_vars(1, m) = e2 * e2;
    }
    return b;
}

inline ModelParams experiment_true_params(const ExperimentSpec& spec) {
    ModelParams p;
    p.delta = spec.delta();
    p.obs_noise_var = spec.noise_var;
    p.lengthscales = {spec.lengthscale1, spec.lengthscale2};
    p.center_freqs = {2.0 * M_PI * spec.freq1_hz * p.delta, 2.0 * M_PI * spec.freq2_hz * p.delta};
    return p;
}

// Mean absolute change across the M - 1 window boundaries.
inline double jump_metric(const Eigen::Ref<const Eigen::VectorXd>& traj, Index window_len) {
    check_divisible(traj.size(), window_len);
    const Index n_windows = traj.size() / window_len;
    require(n_windows >= 2, ErrorKind::usage, "jump metric needs at least two windows");
    double sum = 0.0;
    for (Index m = 1; m < n_windows; ++m) sum += std::abs(traj(m * window_len) - traj(m * window_len - 1));
    return sum / static_cast<double>(n_windows - 1);
}

inline double mse_metric(const Eigen::Ref<const Eigen::VectorXd>& estimate,
                         const Eigen::Ref<const Eigen::VectorXd>& truth) {
    require(estimate.size() == truth.size(), ErrorKind::usage, "estimate and truth lengths differ");
    require(truth.size() > 0, ErrorKind::usage, "empty trajectories");
    return (estimate - truth).squaredNorm() / static_cast<double>(truth.size());
}

// Mean over cells of t/e - log(t/e) - 1.
inline double is_divergence(const Eigen::MatrixXd& true_spec, const Eigen::MatrixXd& est_spec) {
    require(true_spec.rows() == est_spec.rows() && true_spec.cols() == est_spec.cols(), ErrorKind::usage,
            "spectrogram shapes differ");
    require(true_spec.size() > 0, ErrorKind::usage, "empty spectrograms");
    require(true_spec.minCoeff() > 0.0 && est_spec.minCoeff() > 0.0, ErrorKind::numerical,
            "spectra must be strictly positive");
    const Eigen::ArrayXXd r = true_spec.array() / est_spec.array();
    return (r - r.log() - 1.0).mean();
}

// For each truth frequency in order, the nearest unused estimated component.
inline std::vector<Index> match_components(const std::vector<double>& est_freqs,
                                           const std::vector<double>& true_freqs) {
    require(est_freqs.size() >= true_freqs.size(), ErrorKind::usage, "fewer estimated than true components");
    std::vector<bool> used(est_freqs.size(), false);
    std::vector<Index> out;
    for (double t : true_freqs) {
        Index best = -1;
        for (std::size_t j = 0; j < est_freqs.size(); ++j) {
            if (used[j]) continue;
            if (best < 0 || std::abs(est_freqs[j] - t) < std::abs(est_freqs[static_cast<std::size_t>(best)] - t))
                best = static_cast<Index>(j);
        }
        used[static_cast<std::size_t>(best)] = true;
        out.push_back(best);
    }
    return out;
}

// M x N signal spectrogram sum_j sigma^2_{j,m} S_j(omega_n), without the noise floor.
inline Eigen::MatrixXd signal_spectrogram(const ModelParams& params, const Eigen::MatrixXd& window_vars,
                                          Index window_len) {
    require(window_vars.rows() == static_cast<Index>(params.n_components()), ErrorKind::usage,
            "power rows do not match the components");
    const Eigen::MatrixXd shapes = spectral_shape_table(params, window_len);
    return window_vars.transpose() * shapes;
}

inline Eigen::MatrixXd true_spectrogram(const SimulationBundle& b) {
    return signal_spectrogram(experiment_true_params(b.spec), b.true_window_vars, b.spec.window_len());
}

// ---------------------------------------------------------------------------

enum class LambdaMode { zero, cv, stationary };

inline const char* to_string(LambdaMode m) {
    switch (m) {
        case LambdaMode::zero: return "lambda_0";
        case LambdaMode::cv: return "lambda_cv";
        case LambdaMode::stationary: return "lambda_inf";
    }
    return "?";
}

struct MetricsReport {
    std::array<double, 2> mse{};
    std::array<double, 2> jump{};
    double is_div = 0.0;
    double runtime_seconds = 0.0;
};

struct ModeResult {
    LambdaMode mode = LambdaMode::zero;
    Lambda lambda;
    MetricsReport metrics;
    std::array<double, 2> freqs_hz{};
    std::array<double, 2> coverage{};  // fraction of truth inside the 95% band
};

struct SeedResult {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::array<double, 2> truth_jump{};
    std::array<double, 2> probe_jump{};  // per-window independent smoothing, lambda_cv parameters
    Index aic_choice = 0;
    std::map<Index, double> aic_by_j;
    std::vector<std::pair<Lambda, double>> cv_by_lambda;
    std::vector<ModeResult> modes;
};

struct BenchConfig {
    ExperimentSpec spec;
    double cutoff_hz = 40.0;
    std::vector<Index> aic_candidates{1, 2, 3};  // empty skips AIC
    std::vector<LambdaMode> modes{LambdaMode::zero, LambdaMode::cv, LambdaMode::stationary};
    std::vector<Lambda> lambda_grid = default_lambda_grid();
    ApgConfig apg;
    ThetaConfig theta;
    int outer_iters = 5;

    FitConfig fit_config() const {
        FitConfig c;
        c.delta = spec.delta();
        c.window_len = spec.window_len();
        c.cutoff_hz = cutoff_hz;
        c.apg = apg;
        c.theta = theta;
        c.outer_iters = outer_iters;
        return c;
    }
};

struct BenchmarkTable {
    std::vector<SeedResult> seeds;
    std::vector<LambdaMode> modes;

    // Mean over successful seeds.
    std::optional<MetricsReport> mean(LambdaMode mode) const {
        MetricsReport acc;
        int n = 0;
        for (const auto& s : seeds) {
            if (!s.ok) continue;
            for (const auto& r : s.modes) {
                if (r.mode != mode) continue;
                for (int c = 0; c < 2; ++c) {
                    acc.mse[static_cast<std::size_t>(c)] += r.metrics.mse[static_cast<std::size_t>(c)];
                    acc.jump[static_cast<std::size_t>(c)] += r.metrics.jump[static_cast<std::size_t>(c)];
                }
                acc.is_div += r.metrics.is_div;
                acc.runtime_seconds += r.metrics.runtime_seconds;
                ++n;
            }
        }
        if (n == 0) return std::nullopt;
        for (int c = 0; c < 2; ++c) {
            acc.mse[static_cast<std::size_t>(c)] /= n;
            acc.jump[static_cast<std::size_t>(c)] /= n;
        }
        acc.is_div /= n;
        acc.runtime_seconds /= n;
        return acc;
    }

    std::array<double, 2> mean_truth_jump() const { return mean_pair(&SeedResult::truth_jump); }
    std::array<double, 2> mean_probe_jump() const { return mean_pair(&SeedResult::probe_jump); }
    int n_ok() const {
        int n = 0;
        for (const auto& s : seeds) n += s.ok ? 1 : 0;
        return n;
    }

private:
    std::array<double, 2> mean_pair(std::array<double, 2> SeedResult::*field) const {
        std::array<double, 2> acc{};
        int n = 0;
        for (const auto& s : seeds) {
            if (!s.ok) continue;
            acc[0] += (s.*field)[0];
            acc[1] += (s.*field)[1];
            ++n;
        }
        if (n) {
            acc[0] /= n;
            acc[1] /= n;
        }
        return acc;
    }
};

inline ModeResult score_fit(const SimulationBundle& b, const FitOutcome& fit, LambdaMode mode) {
    const ExperimentSpec& spec = b.spec;
    const PosteriorTrajectories post = kalman_smooth(b.observations, fit.params, fit.psi);
    const ModelParams truth = experiment_true_params(spec);
    const std::vector<Index> match = match_components(fit.params.center_freqs, truth.center_freqs);

    ModeResult r;
    r.mode = mode;
    r.lambda = fit.params.lambda;
    for (int c = 0; c < 2; ++c) {
        const Index j = match[static_cast<std::size_t>(c)];
        const ComponentEstimate est = reconstruct_component(post, j);
        const Eigen::VectorXd tc = b.true_components.col(c);
        r.metrics.mse[static_cast<std::size_t>(c)] = mse_metric(est.mean, tc);
        r.metrics.jump[static_cast<std::size_t>(c)] = jump_metric(est.mean, spec.window_len());
        r.freqs_hz[static_cast<std::size_t>(c)] =
            fit.params.center_freqs[static_cast<std::size_t>(j)] / (2.0 * M_PI * spec.delta());
        const Index inside =
            ((tc.array() >= est.ci_lower.array()) && (tc.array() <= est.ci_upper.array())).count();
        r.coverage[static_cast<std::size_t>(c)] = static_cast<double>(inside) / static_cast<double>(tc.size());
    }
    // The estimated spectrogram sums every fitted component.
    const Eigen::MatrixXd est_spec =
        signal_spectrogram(fit.params, fit.psi.values.array().exp().matrix(), spec.window_len());
    r.metrics.is_div = is_divergence(true_spectrogram(b), est_spec);
    return r;
}

inline SeedResult run_seed(std::uint64_t seed, const BenchConfig& cfg) {
    SeedResult out;
    out.seed = seed;
    try {
        const SimulationBundle b = simulate_paper_experiment(seed, cfg.spec);
        const FitConfig fc = cfg.fit_config();
        const Index n_len = cfg.spec.window_len();
        for (int c = 0; c < 2; ++c)
            out.truth_jump[static_cast<std::size_t>(c)] = jump_metric(b.true_components.col(c), n_len);

        const double s2 = estimate_obs_noise(b.observations, fc.delta, fc.cutoff_hz);
        const Index n_windows = b.observations.size() / n_len;
        std::optional<FitOutcome> unpen;
        double best_aic = std::numeric_limits<double>::infinity();
        for (Index j : cfg.aic_candidates) {
            FitOutcome f = fit_unpenalized(b.observations, j, fc, s2);
            const double a = aic_value(f.loglik, n_windows, j);
            out.aic_by_j[j] = a;
            if (a < best_aic) {
                best_aic = a;
                out.aic_choice = j;
            }
            if (j == 2) unpen = std::move(f);
        }
        if (!unpen) unpen = fit_unpenalized(b.observations, 2, fc, s2);

        std::optional<SelectionReport> cv;
        for (LambdaMode mode : cfg.modes) {
            const auto t0 = std::chrono::steady_clock::now();
            FitOutcome fit;
            if (mode == LambdaMode::zero) {
                fit = *unpen;
            } else if (mode == LambdaMode::stationary) {
                fit = fit_at_lambda(b.observations, *unpen, Lambda::stationary(), fc);
            } else {
                cv = cross_validate_lambda(b.observations, *unpen, cfg.lambda_grid, fc);
                out.cv_by_lambda = cv->cv_by_lambda;
                fit = cv->chosen_lambda == Lambda(0.0) ? *unpen
                                                       : fit_at_lambda(b.observations, *unpen, cv->chosen_lambda, fc);
                fit.params.lambda = cv->chosen_lambda;
                const Eigen::MatrixXd probe = windowed_independent_means(b.observations, fit.params, fit.psi);
                const std::vector<Index> match =
                    match_components(fit.params.center_freqs, experiment_true_params(cfg.spec).center_freqs);
                for (int c = 0; c < 2; ++c)
                    out.probe_jump[static_cast<std::size_t>(c)] =
                        jump_metric(probe.col(2 * match[static_cast<std::size_t>(c)]), n_len);
            }
            ModeResult r = score_fit(b, fit, mode);
            r.metrics.runtime_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            out.modes.push_back(r);
        }
        out.ok = true;
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
    }
    return out;
}

inline BenchmarkTable run_benchmark(const std::vector<std::uint64_t>& seeds, const BenchConfig& cfg) {
    BenchmarkTable t;
    t.modes = cfg.modes;
    for (std::uint64_t s : seeds) t.seeds.push_back(run_seed(s, cfg));
    return t;
}

}  // namespace plso
