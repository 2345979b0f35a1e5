#pragma once

// Stage-1 inference: inexact accelerated proximal gradient on the log window powers,
// conjugate-gradient refinement of (l_j, omega_j), and the block coordinate loop.

#include "plso/prox.hpp"
#include "plso/types.hpp"
#include "plso/whittle.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace plso {

struct ApgConfig {
    int max_iters = 500;              // L
    double sufficient_decrease = 1e-4;  // delta
    double shrink = 0.5;              // backtracking factor (rho in the algorithm)
    int max_backtracks = 60;
    double tol = 1e-8;                // stop when |h_l - h_{l-1}| <= tol (1 + |h_l|)
    double log_psi_bound = 30.0;      // log C_psi
    double initial_step = 1.0;        // first-iteration and BB-fallback step
    bool use_lipschitz_step = false;  // use 1/C from lipschitz_bound instead of initial_step

    void validate() const {
        require(max_iters >= 0, ErrorKind::usage, "max_iters must be nonnegative");
        require(sufficient_decrease > 0.0, ErrorKind::usage, "sufficient-decrease constant must be positive");
        require(shrink > 0.0 && shrink < 1.0, ErrorKind::usage, "shrink must lie in (0, 1)");
        require(max_backtracks > 0, ErrorKind::usage, "max_backtracks must be positive");
        require(tol > 0.0, ErrorKind::usage, "tolerance must be positive");
        require(log_psi_bound > 0.0, ErrorKind::usage, "log box bound must be positive");
        require(initial_step > 0.0, ErrorKind::usage, "initial step must be positive");
    }
};

struct ApgState {
    Eigen::MatrixXd psi, psi_prev, u, w, x;
    double beta_prev = 0.0;
    double beta = 1.0;
    double step_w = 0.0;
    double step_psi = 0.0;
    int iteration = 0;
};

// beta_{l+1} = (1 + sqrt(4 beta_l^2 + 1)) / 2
inline double next_momentum(double beta) { return 0.5 * (1.0 + std::sqrt(4.0 * beta * beta + 1.0)); }

struct ApgStep {
    double h = 0.0;           // objective of the accepted iterate
    double anchor_h = 0.0;    // objective at the anchor it was accepted against
    double dist2 = 0.0;       // squared distance to that anchor
    bool from_u = true;
};

struct ApgResult {
    LogVarianceField psi;
    std::vector<double> trace;  // h(psi0), then h of each accepted iterate
    std::vector<ApgStep> steps;
    int iterations = 0;
    bool converged = false;
    bool backtrack_exhausted = false;
    std::vector<std::string> warnings;
};

// Process-wide tally of every APG run, used by the acceptance suite to check the
// descent property over all runs exercised in a process.
struct ApgAudit {
    std::atomic<long> runs{0};
    std::atomic<long> iterations{0};
    std::atomic<long> monotonicity_violations{0};
    std::atomic<long> decrease_violations{0};
};

inline ApgAudit& apg_audit() {
    static ApgAudit audit;
    return audit;
}

namespace detail {

inline void project_box(Eigen::MatrixXd& psi, double bound) { psi = psi.cwiseMax(-bound).cwiseMin(bound); }

inline double bb_step(const Eigen::MatrixXd& s, const Eigen::MatrixXd& r) {
    const double ss = s.squaredNorm();
    const double sr = (s.array() * r.array()).sum();
    if (!(sr > 0.0) || !(ss > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    const double a = ss / sr;
    return std::isfinite(a) && a > 0.0 ? a : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

// Minimizes h(psi) = -f(psi) - g(psi) from psi0 (lambda taken from params).
inline ApgResult apg_fit_psi(const Periodogram& pg, const ModelParams& params, const LogVarianceField& psi0,
                             const ApgConfig& cfg) {
    cfg.validate();
    detail::check_shapes(pg, params, psi0);
    const Lambda lambda = params.lambda;
    const WhittleModel model(pg, params);

    const auto h_of = [&](const Eigen::MatrixXd& p) { return -model.loglik(p) - log_prior(p, lambda); };
    const auto prox = [&](const Eigen::MatrixXd& anchor, const Eigen::MatrixXd& grad, double step) {
        Eigen::MatrixXd out = prox_smoothness(anchor + step * grad, step, lambda);
        detail::project_box(out, cfg.log_psi_bound);
        return out;
    };
    const double fallback_step =
        cfg.use_lipschitz_step ? 1.0 / lipschitz_bound(pg, params, cfg.log_psi_bound) : cfg.initial_step;

    ApgResult result;
    ApgState st;
    st.psi = psi0.values;
    if (lambda.is_stationary()) st.psi = prox_smoothness(st.psi, 1.0, lambda);
    detail::project_box(st.psi, cfg.log_psi_bound);
    st.psi_prev = st.psi;
    st.u = st.psi;
    st.x = st.psi;

    double h_psi = h_of(st.psi);
    if (!std::isfinite(h_psi)) fail(ErrorKind::numerical, "non-finite objective at the initial point");
    result.trace.push_back(h_psi);

    Eigen::MatrixXd grad_psi = model.gradient(st.psi);
    Eigen::MatrixXd grad_psi_prev = grad_psi;
    Eigen::MatrixXd grad_u = grad_psi;
    Eigen::MatrixXd grad_x = grad_psi;
    Eigen::MatrixXd w_prev, grad_w_prev;

    auto& audit = apg_audit();
    audit.runs.fetch_add(1);

    for (int l = 1; l <= cfg.max_iters; ++l) {
        st.iteration = l;
        st.w = st.psi + (st.beta_prev / st.beta) * (st.u - st.psi) +
               ((st.beta_prev - 1.0) / st.beta) * (st.psi - st.psi_prev);
        detail::project_box(st.w, cfg.log_psi_bound);
        if (lambda.is_stationary()) st.w = prox_smoothness(st.w, 1.0, lambda);
        const double h_w = h_of(st.w);
        const Eigen::MatrixXd grad_w = model.gradient(st.w);

        if (l == 1) {
            st.step_w = fallback_step;
            st.step_psi = fallback_step;
        } else {
            st.step_w = detail::bb_step(st.u - w_prev, -grad_u + grad_w_prev);
            st.step_psi = detail::bb_step(st.x - st.psi_prev, -grad_x + grad_psi_prev);
            if (!std::isfinite(st.step_w)) st.step_w = fallback_step;
            if (!std::isfinite(st.step_psi)) st.step_psi = fallback_step;
        }

        // u candidate, anchored at the extrapolated point w.
        Eigen::MatrixXd u_new;
        double h_u_new = 0.0;
        bool ok_u = false;
        for (int b = 0; b < cfg.max_backtracks; ++b) {
            u_new = prox(st.w, grad_w, st.step_w);
            h_u_new = h_of(u_new);
            if (h_u_new <= h_w - cfg.sufficient_decrease * (u_new - st.w).squaredNorm()) {
                ok_u = true;
                break;
            }
            st.step_w *= cfg.shrink;
        }
        if (!ok_u) {
            u_new = st.w;
            h_u_new = h_w;
        }

        // x candidate, anchored at the current iterate.
        Eigen::MatrixXd x_new;
        double h_x_new = 0.0;
        bool ok_x = false;
        for (int b = 0; b < cfg.max_backtracks; ++b) {
            x_new = prox(st.psi, grad_psi, st.step_psi);
            h_x_new = h_of(x_new);
            if (h_x_new <= h_psi - cfg.sufficient_decrease * (x_new - st.psi).squaredNorm()) {
                ok_x = true;
                break;
            }
            st.step_psi *= cfg.shrink;
        }
        if (!ok_x) {
            x_new = st.psi;
            h_x_new = h_psi;
        }
        if (!ok_u && !ok_x) result.backtrack_exhausted = true;
        if (!std::isfinite(h_u_new) || !std::isfinite(h_x_new))
            fail(ErrorKind::numerical, "non-finite objective during APG iteration " + std::to_string(l));

        st.beta_prev = st.beta;
        st.beta = next_momentum(st.beta);

        const bool take_u = h_u_new <= h_x_new;
        ApgStep step;
        step.from_u = take_u;
        step.h = take_u ? h_u_new : h_x_new;
        step.anchor_h = take_u ? h_w : h_psi;
        step.dist2 = take_u ? (u_new - st.w).squaredNorm() : (x_new - st.psi).squaredNorm();
        if (step.h > step.anchor_h - cfg.sufficient_decrease * step.dist2) audit.decrease_violations.fetch_add(1);
        if (step.h > h_psi) audit.monotonicity_violations.fetch_add(1);

        const Eigen::MatrixXd grad_u_new = model.gradient(u_new);
        const Eigen::MatrixXd grad_x_new = model.gradient(x_new);

        w_prev = st.w;
        grad_w_prev = grad_w;
        st.psi_prev = st.psi;
        grad_psi_prev = grad_psi;
        st.psi = take_u ? u_new : x_new;
        grad_psi = take_u ? grad_u_new : grad_x_new;
        const double h_prev = h_psi;
        h_psi = step.h;
        st.u = std::move(u_new);
        st.x = std::move(x_new);
        grad_u = grad_u_new;
        grad_x = grad_x_new;

        result.trace.push_back(h_psi);
        result.steps.push_back(step);
        result.iterations = l;
        audit.iterations.fetch_add(1);

        if (std::abs(h_psi - h_prev) <= cfg.tol * (1.0 + std::abs(h_psi))) {
            result.converged = true;
            break;
        }
    }
    if (result.backtrack_exhausted) result.warnings.push_back("apg: backtracking exhausted for both candidates");
    result.psi = LogVarianceField(st.psi, psi0.window_len);
    return result;
}

// ---------------------------------------------------------------------------
// Lengthscale / centre-frequency refinement.

struct ThetaConfig {
    int max_iters = 40;
    double fd_rel_step = 1e-6;
    double armijo = 1e-4;
    int max_line_steps = 40;
    double tol = 1e-10;               // relative improvement in f
    double initial_move = 0.05;       // first trial move (inf-norm) in (log l, omega)
    std::vector<bool> freeze_freqs;   // per component; empty means all free
    bool freeze_lengthscales = false;
};

struct ThetaResult {
    ModelParams params;
    double loglik_before = 0.0;
    double loglik_after = 0.0;
    int iterations = 0;
    std::vector<std::string> warnings;
};

namespace detail {

// Free coordinates: log l_j (unless frozen) followed by omega_j (unless frozen).
struct ThetaPacking {
    std::vector<std::size_t> l_index, w_index;

    ThetaPacking(std::size_t n_comp, const ThetaConfig& cfg) {
        for (std::size_t j = 0; j < n_comp; ++j)
            if (!cfg.freeze_lengthscales) l_index.push_back(j);
        for (std::size_t j = 0; j < n_comp; ++j) {
            const bool frozen = j < cfg.freeze_freqs.size() && cfg.freeze_freqs[j];
            if (!frozen) w_index.push_back(j);
        }
    }
    Index size() const { return static_cast<Index>(l_index.size() + w_index.size()); }

    Eigen::VectorXd pack(const ModelParams& p) const {
        Eigen::VectorXd t(size());
        Index i = 0;
        for (auto j : l_index) t(i++) = std::log(p.lengthscales[j]);
        for (auto j : w_index) t(i++) = p.center_freqs[j];
        return t;
    }
    ModelParams unpack(const ModelParams& base, const Eigen::VectorXd& t) const {
        ModelParams p = base;
        Index i = 0;
        const double log_lmax = std::log(base.lengthscale_max);
        for (auto j : l_index) {
            p.lengthscales[j] = t(i) >= log_lmax ? base.lengthscale_max : std::exp(t(i));
            ++i;
        }
        for (auto j : w_index) p.center_freqs[j] = t(i++);
        return p;
    }
    Eigen::VectorXd project(const ModelParams& base, Eigen::VectorXd t) const {
        const double log_lmax = std::log(base.lengthscale_max);
        Index i = 0;
        for (std::size_t k = 0; k < l_index.size(); ++k, ++i) t(i) = std::min(t(i), log_lmax);
        for (std::size_t k = 0; k < w_index.size(); ++k, ++i) t(i) = std::clamp(t(i), 0.0, M_PI);
        return t;
    }
};

}  // namespace detail

// Maximizes the Whittle log-likelihood over {l_j, omega_j} with psi held fixed,
// by projected Polak-Ribiere conjugate gradient on finite-difference gradients.
inline ThetaResult refine_theta(const Periodogram& pg, const ModelParams& params, const LogVarianceField& psi,
                                const ThetaConfig& cfg = {}) {
    detail::check_shapes(pg, params, psi);
    const detail::ThetaPacking pack(params.n_components(), cfg);

    ThetaResult res;
    res.params = params;
    // Lengthscales beyond the bound are pulled onto it before anything else.
    for (auto& l : res.params.lengthscales) l = std::min(l, res.params.lengthscale_max);
    const auto f_of = [&](const Eigen::VectorXd& t) {
        return WhittleModel(pg, pack.unpack(res.params, t)).loglik(psi.values);
    };

    Eigen::VectorXd theta = pack.project(res.params, pack.pack(res.params));
    if (theta.size() > 0) res.params = pack.unpack(res.params, theta);
    double f_cur = WhittleModel(pg, res.params).loglik(psi.values);
    res.loglik_before = f_cur;
    res.loglik_after = f_cur;
    if (pack.size() == 0) return res;

    const auto grad_of = [&](const Eigen::VectorXd& t) {
        Eigen::VectorXd g(t.size());
        for (Index i = 0; i < t.size(); ++i) {
            const double h = cfg.fd_rel_step * std::max(1.0, std::abs(t(i)));
            Eigen::VectorXd tp = t, tm = t;
            tp(i) += h;
            tm(i) -= h;
            g(i) = (f_of(tp) - f_of(tm)) / (2.0 * h);
        }
        return g;  // ascent direction of f
    };

    Eigen::VectorXd g = grad_of(theta);
    Eigen::VectorXd dir = g;
    double scale = cfg.initial_move;
    for (int it = 0; it < cfg.max_iters; ++it) {
        if (dir.dot(g) <= 0.0) dir = g;
        const double dnorm = dir.cwiseAbs().maxCoeff();
        if (!(dnorm > 0.0) || !std::isfinite(dnorm)) break;

        double t = scale / dnorm;
        bool accepted = false;
        Eigen::VectorXd cand;
        double f_cand = f_cur;
        for (int ls = 0; ls < cfg.max_line_steps; ++ls) {
            cand = pack.project(res.params, theta + t * dir);
            f_cand = f_of(cand);
            const double gain = g.dot(cand - theta);
            if (std::isfinite(f_cand) && f_cand > f_cur && f_cand >= f_cur + cfg.armijo * gain) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            if (it == 0) res.warnings.push_back("refine_theta: line search failed; parameters unchanged");
            break;
        }
        // Expand while it keeps paying.
        for (int ex = 0; ex < 10; ++ex) {
            const Eigen::VectorXd bigger = pack.project(res.params, theta + 2.0 * t * dir);
            const double f_big = f_of(bigger);
            if (!(std::isfinite(f_big) && f_big > f_cand)) break;
            t *= 2.0;
            cand = bigger;
            f_cand = f_big;
        }
        scale = std::clamp((cand - theta).cwiseAbs().maxCoeff(), 1e-8, 0.5);
        const double improvement = f_cand - f_cur;
        theta = cand;
        f_cur = f_cand;
        res.iterations = it + 1;

        const Eigen::VectorXd g_new = grad_of(theta);
        const double beta = std::max(0.0, g_new.dot(g_new - g) / std::max(g.squaredNorm(), 1e-300));
        dir = g_new + beta * dir;
        g = g_new;
        if (improvement <= cfg.tol * (1.0 + std::abs(f_cur))) break;
    }
    res.params = pack.unpack(res.params, theta);
    res.loglik_after = f_cur;
    return res;
}

// ---------------------------------------------------------------------------

struct BlockFitResult {
    ModelParams params;
    LogVarianceField psi;
    std::vector<double> trace;  // h after initialization, then after each round
    std::vector<std::string> warnings;
};

inline double penalized_objective(const Periodogram& pg, const ModelParams& params, const LogVarianceField& psi) {
    return -whittle_loglik(pg, params, psi) - log_prior(psi, params.lambda);
}

// Alternates apg_fit_psi and refine_theta for outer_iters rounds; sigma_nu^2 stays fixed.
inline BlockFitResult block_coordinate_fit(const Periodogram& pg, const ModelParams& params0,
                                           const LogVarianceField& psi0, const ApgConfig& apg_cfg,
                                           const ThetaConfig& theta_cfg, int outer_iters) {
    require(outer_iters >= 0, ErrorKind::usage, "outer iteration count must be nonnegative");
    BlockFitResult out;
    out.params = params0;
    out.psi = psi0;
    if (params0.lambda.is_stationary())
        out.psi.values = prox_smoothness(psi0.values, 1.0, params0.lambda);
    if (outer_iters == 0) {
        out.psi = psi0;
        out.trace.push_back(penalized_objective(pg, params0, psi0));
        return out;
    }
    out.trace.push_back(penalized_objective(pg, out.params, out.psi));
    for (int r = 0; r < outer_iters; ++r) {
        ApgResult a = apg_fit_psi(pg, out.params, out.psi, apg_cfg);
        out.psi = std::move(a.psi);
        for (auto& w : a.warnings) out.warnings.push_back(std::move(w));
        ThetaResult t = refine_theta(pg, out.params, out.psi, theta_cfg);
        out.params = std::move(t.params);
        for (auto& w : t.warnings) out.warnings.push_back(std::move(w));
        out.trace.push_back(penalized_objective(pg, out.params, out.psi));
    }
    return out;
}

}  // namespace plso
