#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace plso {

using Index = Eigen::Index;

// Failure categories; the CLI maps them onto exit codes.
enum class ErrorKind { usage, data, numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

// Smoothness weight of the random-walk prior on log window powers.
// The stationary limit (lambda -> infinity) is a distinct state, not a large number.
class Lambda {
public:
    Lambda() = default;
    explicit Lambda(double value) : value_(value) {
        require(std::isfinite(value) && value >= 0.0, ErrorKind::usage,
                "lambda must be finite and nonnegative (use Lambda::stationary() for the limit)");
    }
    static Lambda stationary() {
        Lambda l;
        l.stationary_ = true;
        l.value_ = std::numeric_limits<double>::infinity();
        return l;
    }

    bool is_stationary() const noexcept { return stationary_; }
    // +inf for the stationary limit.
    double value() const noexcept { return value_; }

    // Ordering key where the stationary limit sorts after every finite value.
    double key() const noexcept { return value_; }

    friend bool operator==(const Lambda& a, const Lambda& b) {
        return a.stationary_ == b.stationary_ && (a.stationary_ || a.value_ == b.value_);
    }

    std::string to_string() const;

private:
    double value_ = 0.0;
    bool stationary_ = false;
};

inline std::string Lambda::to_string() const {
    if (stationary_) return "stationary";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value_);
    return buf;
}

// Hyperparameters theta plus the sampling interval.
struct ModelParams {
    double delta = 1.0;                 // seconds per sample
    Lambda lambda;                      // smoothness weight
    double obs_noise_var = 1.0;         // sigma_nu^2
    std::vector<double> lengthscales;   // l_j, seconds
    std::vector<double> center_freqs;   // omega_j, radians per sample in [0, pi]
    double lengthscale_max = std::numeric_limits<double>::infinity();

    std::size_t n_components() const noexcept { return center_freqs.size(); }

    // rho_j = exp(-delta / l_j)
    double decay(std::size_t j) const { return std::exp(-delta / lengthscales.at(j)); }

    void validate() const {
        require(std::isfinite(delta) && delta > 0.0, ErrorKind::usage, "delta must be positive");
        require(std::isfinite(obs_noise_var) && obs_noise_var > 0.0, ErrorKind::usage,
                "observation noise variance must be positive");
        require(lengthscales.size() == center_freqs.size(), ErrorKind::usage,
                "lengthscales and center frequencies must have the same length");
        for (std::size_t j = 0; j < lengthscales.size(); ++j) {
            const double l = lengthscales[j];
            require(std::isfinite(l) && l > 0.0, ErrorKind::usage, "lengthscales must be positive");
            require(l <= lengthscale_max * (1.0 + 1e-12), ErrorKind::usage,
                    "lengthscale exceeds the configured upper bound");
            const double w = center_freqs[j];
            require(std::isfinite(w) && w >= 0.0 && w <= M_PI, ErrorKind::usage,
                    "center frequencies must lie in [0, pi] rad/sample");
        }
    }
};

// J x M matrix of log window powers psi_{j,m} = log sigma^2_{j,m}.
struct LogVarianceField {
    Eigen::MatrixXd values;   // rows: components, cols: windows
    Index window_len = 0;     // N

    LogVarianceField() = default;
    LogVarianceField(Eigen::MatrixXd v, Index n) : values(std::move(v)), window_len(n) {}

    static LogVarianceField constant(Index n_components, Index n_windows, Index window_len,
                                     double log_power) {
        return {Eigen::MatrixXd::Constant(n_components, n_windows, log_power), window_len};
    }

    Index n_components() const noexcept { return values.rows(); }
    Index n_windows() const noexcept { return values.cols(); }
    Index n_samples() const noexcept { return values.cols() * window_len; }

    double power(Index j, Index m) const { return std::exp(values(j, m)); }

    void validate(double log_bound = std::numeric_limits<double>::infinity()) const {
        require(window_len >= 2, ErrorKind::usage, "window length must be at least 2");
        require(values.allFinite(), ErrorKind::numerical, "log-variance field has non-finite entries");
        require(values.size() == 0 || values.cwiseAbs().maxCoeff() <= log_bound * (1.0 + 1e-12),
                ErrorKind::numerical, "log-variance field leaves the box bound");
    }
};

// Real/imaginary latent states, one row per sample; columns (2j, 2j+1) hold component j.
struct LatentTrajectory {
    Eigen::MatrixXd states;
    double delta = 1.0;

    Index n_samples() const noexcept { return states.rows(); }
    Index n_components() const noexcept { return states.cols() / 2; }
    Eigen::VectorXd real_part(Index j) const { return states.col(2 * j); }
    Eigen::VectorXd imag_part(Index j) const { return states.col(2 * j + 1); }
};

// Model spectra on the zero-based DFT grid omega_n = 2 pi n / N.
struct SpectrumGrid {
    Eigen::VectorXd freqs;          // rad/sample
    Eigen::MatrixXd per_component;  // J x N
    Eigen::VectorXd total;          // N, includes the noise floor
};

inline void check_divisible(Index n_samples, Index window_len) {
    require(window_len >= 2, ErrorKind::usage, "window length must be at least 2 samples");
    if (n_samples % window_len != 0) {
        fail(ErrorKind::data, "record length " + std::to_string(n_samples) +
                                  " is not a multiple of the window length " +
                                  std::to_string(window_len) + "; truncate to " +
                                  std::to_string(n_samples - n_samples % window_len) + " samples");
    }
    require(n_samples > 0, ErrorKind::data, "empty record");
}

}  // namespace plso
