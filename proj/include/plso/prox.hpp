#pragma once

#include "plso/types.hpp"

#include <Eigen/Dense>

#include <vector>

namespace plso {

// MAP path of a 1-D random walk x_m = x_{m-1} + eta (var state_var) observed as
// v_m = x_m + e (var obs_var), with a flat prior on x_1. Equivalent to minimizing
// sum (v_m - x_m)^2 / (2 obs_var) + sum_{m>=2} (x_m - x_{m-1})^2 / (2 state_var).
inline Eigen::VectorXd smooth_random_walk(const Eigen::Ref<const Eigen::VectorXd>& v, double obs_var,
                                          double state_var) {
    const Index n = v.size();
    Eigen::VectorXd mean(n), var(n);
    if (n == 0) return mean;
    mean(0) = v(0);
    var(0) = obs_var;
    for (Index m = 1; m < n; ++m) {
        const double pred = var(m - 1) + state_var;
        const double gain = pred / (pred + obs_var);
        mean(m) = mean(m - 1) + gain * (v(m) - mean(m - 1));
        var(m) = (1.0 - gain) * pred;
    }
    for (Index m = n - 2; m >= 0; --m) {
        const double c = var(m) / (var(m) + state_var);
        mean(m) += c * (mean(m + 1) - mean(m));
    }
    return mean;
}

// argmin_psi ||psi - v||^2 / (2 step) + (lambda/2) sum_j sum_{m>=2} (psi_{j,m} - psi_{j,m-1})^2,
// one independent smoother per row.
inline Eigen::MatrixXd prox_smoothness(const Eigen::MatrixXd& v, double step, Lambda lambda) {
    require(step > 0.0, ErrorKind::usage, "proximal step must be positive");
    if (lambda.is_stationary()) {
        Eigen::MatrixXd out(v.rows(), v.cols());
        for (Index j = 0; j < v.rows(); ++j) out.row(j).setConstant(v.row(j).mean());
        return out;
    }
    if (lambda.value() == 0.0 || v.cols() < 2) return v;
    Eigen::MatrixXd out(v.rows(), v.cols());
    const double state_var = 1.0 / lambda.value();
    for (Index j = 0; j < v.rows(); ++j)
        out.row(j) = smooth_random_walk(v.row(j).transpose(), step, state_var).transpose();
    return out;
}

}  // namespace plso
