#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace plso;

namespace {

Periodogram random_periodogram(std::mt19937_64& gen, Index m, Index n) {
    Periodogram pg;
    pg.values = oracle::random_matrix(gen, m, n, 0.0, 5.0);
    return pg;
}

// Golden-section maximizer of a unimodal function on [lo, hi].
double golden_max(const std::function<double(double)>& f, double lo, double hi) {
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < 200 && b - a > 1e-13; ++i) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

TEST(Periodogram, ConstantWindowIsDcOnly) {
    const Index n = 16;
    const double c = 1.7;
    const Periodogram pg = periodogram(Eigen::VectorXd::Constant(3 * n, c), n);
    ASSERT_EQ(pg.n_windows(), 3);
    for (Index m = 0; m < 3; ++m) {
        EXPECT_NEAR(pg.values(m, 0), n * c * c, 1e-12 * n * c * c);
        EXPECT_LT(pg.values.row(m).tail(n - 1).maxCoeff(), 1e-20);
    }
}

TEST(Periodogram, GridCosine) {
    const Index n = 64, n0 = 5;
    const double a = 2.5;
    Eigen::VectorXd y(n);
    for (Index k = 0; k < n; ++k) y(k) = a * std::cos(2.0 * M_PI * n0 * k / static_cast<double>(n));
    const Periodogram pg = periodogram(y, n);
    const double mass = n * a * a / 4.0;
    EXPECT_NEAR(pg.values(0, n0), mass, 1e-10 * mass);
    EXPECT_NEAR(pg.values(0, n - n0), mass, 1e-10 * mass);
    for (Index k = 0; k < n; ++k) {
        if (k != n0 && k != n - n0) {
            EXPECT_LT(pg.values(0, k), 1e-20);
        }
    }
}

TEST(Periodogram, ParsevalAndNaiveDft) {
    std::mt19937_64 gen(31);
    for (Index n : {7, 32, 50, 64}) {
        const Eigen::VectorXd y = oracle::random_matrix(gen, 4 * n, 1, -3.0, 3.0);
        const Periodogram pg = periodogram(y, n);
        for (Index m = 0; m < 4; ++m) {
            const Eigen::VectorXd block = y.segment(m * n, n);
            EXPECT_NEAR(pg.values.row(m).sum(), block.squaredNorm(), 1e-9 * block.squaredNorm());
            const Eigen::VectorXd naive = oracle::naive_power(block);
            EXPECT_LT((pg.values.row(m).transpose() - naive).cwiseAbs().maxCoeff(), 1e-9 * naive.maxCoeff());
        }
        EXPECT_GE(pg.values.minCoeff(), 0.0);
    }
}

TEST(Periodogram, RejectsBadInput) {
    EXPECT_THROW(periodogram(Eigen::VectorXd::Zero(33), 16), Error);
    EXPECT_THROW(periodogram(Eigen::VectorXd::Zero(32), 1), Error);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(32);
    y(3) = std::nan("");
    EXPECT_THROW(periodogram(y, 16), Error);
}

TEST(WhittleLoglik, PerfectFit) {
    std::mt19937_64 gen(4);
    const ModelParams p = oracle::random_params(gen, 2);
    const LogVarianceField psi(oracle::random_matrix(gen, 2, 3, -1.0, 1.0), 16);
    Periodogram pg;
    pg.values.resize(3, 16);
    for (Index m = 0; m < 3; ++m) pg.values.row(m) = psd(p, psi.values.col(m), 16).total.transpose();
    const double expect = -0.5 * (pg.values.array().log() + 1.0).sum();
    EXPECT_NEAR(whittle_loglik(pg, p, psi), expect, 1e-12 * std::abs(expect));
    // Residual factor vanishes at exact fit.
    EXPECT_LT(grad_loglik(pg, p, psi).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(WhittleLoglik, SeparableOverWindowsAndPermutationInvariant) {
    std::mt19937_64 gen(5);
    const ModelParams p = oracle::random_params(gen, 3);
    const Periodogram pg = random_periodogram(gen, 5, 24);
    const LogVarianceField psi(oracle::random_matrix(gen, 3, 5, -2.0, 2.0), 24);
    const double joint = whittle_loglik(pg, p, psi);
    double sum = 0.0;
    for (Index m = 0; m < 5; ++m) {
        Periodogram one;
        one.values = pg.values.row(m);
        sum += whittle_loglik(one, p, LogVarianceField(psi.values.col(m), 24));
    }
    EXPECT_NEAR(joint, sum, 1e-12 * std::abs(joint));

    const std::vector<Index> perm{3, 0, 4, 1, 2};
    Periodogram pg2 = pg;
    LogVarianceField psi2 = psi;
    for (Index m = 0; m < 5; ++m) {
        pg2.values.row(m) = pg.values.row(perm[static_cast<std::size_t>(m)]);
        psi2.values.col(m) = psi.values.col(perm[static_cast<std::size_t>(m)]);
    }
    EXPECT_NEAR(whittle_loglik(pg2, p, psi2), joint, 1e-12 * std::abs(joint));
}

TEST(WhittleLoglik, ShapeMismatchRejected) {
    std::mt19937_64 gen(6);
    const ModelParams p = oracle::random_params(gen, 2);
    const Periodogram pg = random_periodogram(gen, 3, 16);
    EXPECT_THROW(whittle_loglik(pg, p, LogVarianceField::constant(1, 3, 16, 0.0)), Error);
    EXPECT_THROW(whittle_loglik(pg, p, LogVarianceField::constant(2, 4, 16, 0.0)), Error);
}

// One component, one window: the scan maximizer is a stationary point of f, and
// pushing the power past it lowers f.
TEST(WhittleLoglik, ScanOracle) {
    const ModelParams p = [] {
        ModelParams q;
        q.obs_noise_var = 0.5;
        q.lengthscales = {8.0};
        q.center_freqs = {1.0};
        return q;
    }();
    const Index n = 32;
    Periodogram pg;
    pg.values = (0.5 + std::exp(0.7) * spectral_shape_table(p, n).array()).matrix();
    std::mt19937_64 gen(7);
    pg.values.array() *= oracle::random_matrix(gen, 1, n, 0.5, 1.5).array();
    const auto f = [&](double s) { return whittle_loglik(pg, p, LogVarianceField::constant(1, 1, n, s)); };

    double best = -10.0;
    for (double s = -10.0; s <= 10.0; s += 0.01)
        if (f(s) > f(best)) best = s;
    const double s_star = golden_max(f, best - 0.01, best + 0.01);
    const Eigen::MatrixXd g = grad_loglik(pg, p, LogVarianceField::constant(1, 1, n, s_star));
    EXPECT_LE(std::abs(g(0, 0)), 1e-6);
    EXPECT_LT(f(s_star + 0.5), f(s_star));
    EXPECT_LT(f(s_star + 2.0), f(s_star + 0.5));
}

TEST(LogPrior, HandExamples) {
    Eigen::MatrixXd psi(1, 3);
    psi << 0.0, 1.0, 3.0;
    EXPECT_DOUBLE_EQ(log_prior(psi, Lambda(2.0)), -5.0);
    EXPECT_EQ(log_prior(psi, Lambda(0.0)), 0.0);
    EXPECT_EQ(log_prior(Eigen::MatrixXd::Constant(3, 6, 1.3), Lambda(100.0)), 0.0);
    EXPECT_EQ(log_prior(Eigen::MatrixXd::Constant(2, 1, 4.0), Lambda(5.0)), 0.0);
    EXPECT_EQ(log_prior(Eigen::MatrixXd::Constant(2, 6, -0.4), Lambda::stationary()), 0.0);
    EXPECT_EQ(log_prior(psi, Lambda::stationary()), -std::numeric_limits<double>::infinity());
}

TEST(LogPrior, NonpositiveAndZeroOnlyOnFlatRows) {
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> lu(-3.0, 3.0);
    for (int t = 0; t < 200; ++t) {
        Eigen::MatrixXd psi = oracle::random_matrix(gen, 1 + t % 4, 2 + t % 9, -5.0, 5.0);
        const Lambda lam(std::pow(10.0, lu(gen)));
        EXPECT_LT(log_prior(psi, lam), 0.0);
        for (Index j = 0; j < psi.rows(); ++j) psi.row(j).setConstant(psi(j, 0));
        EXPECT_EQ(log_prior(psi, lam), 0.0);
    }
}

TEST(ObjectiveReport, TotalIsSum) {
    std::mt19937_64 gen(9);
    ModelParams p = oracle::random_params(gen, 2);
    p.lambda = Lambda(3.0);
    const Periodogram pg = random_periodogram(gen, 4, 16);
    const LogVarianceField psi(oracle::random_matrix(gen, 2, 4, -1.0, 1.0), 16);
    const ObjectiveReport r = evaluate_objective(pg, p, psi);
    EXPECT_EQ(r.total, r.log_lik + r.log_prior);
    EXPECT_EQ(r.log_lik, whittle_loglik(pg, p, psi));
    EXPECT_EQ(r.log_prior, log_prior(psi, p.lambda));
    EXPECT_EQ(r.grad, grad_loglik(pg, p, psi));
}

TEST(GradLoglik, CentralDifferences) {
    std::mt19937_64 gen(10);
    for (int t = 0; t < 50; ++t) {
        const Index n_comp = 1 + t % 4, n_win = 1 + (t * 3) % 8, n_len = 8 + (t * 7) % 57;
        const ModelParams p = oracle::random_params(gen, n_comp);
        const Periodogram pg = random_periodogram(gen, n_win, n_len);
        const Eigen::MatrixXd psi = oracle::random_matrix(gen, n_comp, n_win, -2.0, 2.0);
        const WhittleModel model(pg, p);
        const Eigen::MatrixXd fd =
            oracle::finite_difference([&](const Eigen::MatrixXd& x) { return model.loglik(x); }, psi, 1e-5);
        const Eigen::MatrixXd an = grad_loglik(pg, p, LogVarianceField(psi, n_len));
        for (Index i = 0; i < an.size(); ++i) {
            const double rel = std::abs(fd(i) - an(i)) / std::max(std::abs(an(i)), 1e-2);
            EXPECT_LE(rel, 1e-5) << "instance " << t << " entry " << i;
        }
    }
}

TEST(Lipschitz, FormulaMonotonicity) {
    std::mt19937_64 gen(11);
    ModelParams p = oracle::random_params(gen, 2);
    Periodogram pg = random_periodogram(gen, 4, 16);
    const double c = lipschitz_bound(pg, p, 2.0);
    EXPECT_GT(lipschitz_bound(pg, p, 3.0), c);
    Periodogram bigger = pg;
    bigger.values(0, 0) = 1e3;
    EXPECT_GT(lipschitz_bound(bigger, p, 2.0), c);
    Periodogram more_windows;
    more_windows.values = oracle::random_matrix(gen, 8, 16, 0.0, 1.0);
    more_windows.values(0, 0) = pg.max_value();
    EXPECT_GT(lipschitz_bound(more_windows, p, 2.0), c);

    // Doubling sigma_nu^2 cuts C by more than 2 once C_I dominates.
    bigger.values(0, 0) = 1e6;
    ModelParams p2 = p;
    p2.obs_noise_var *= 2.0;
    EXPECT_GT(lipschitz_bound(bigger, p, 2.0) / lipschitz_bound(bigger, p2, 2.0), 2.0);
}

TEST(Lipschitz, RandomPairProbe) {
    std::mt19937_64 gen(12);
    const ModelParams p = oracle::random_params(gen, 2);
    const Periodogram pg = random_periodogram(gen, 3, 16);
    const double bound = 2.0;
    const double c = lipschitz_bound(pg, p, bound);
    const WhittleModel model(pg, p);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const Eigen::MatrixXd a = oracle::random_matrix(gen, 2, 3, -bound, bound);
        Eigen::MatrixXd b = a + oracle::random_matrix(gen, 2, 3, -0.1, 0.1);
        b = b.cwiseMax(-bound).cwiseMin(bound);
        if ((a - b).norm() == 0.0) continue;
        worst = std::max(worst, (model.gradient(a) - model.gradient(b)).norm() / (a - b).norm());
    }
    EXPECT_GT(worst, 0.0);
    EXPECT_LE(worst, c);
}
