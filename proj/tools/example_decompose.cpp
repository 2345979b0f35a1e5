// Simulate a short two-tone record, fit it at a fixed lambda, and print the
// recovered centre frequencies and the first few smoothed samples.

#include "plso/plso.hpp"

#include <cstdio>

int main() {
    plso::ExperimentSpec spec;
    spec.duration_s = 20.0;
    const plso::SimulationBundle sim = plso::simulate_paper_experiment(7, spec);

    plso::FitConfig cfg;
    cfg.delta = spec.delta();
    cfg.window_len = spec.window_len();
    cfg.cutoff_hz = 40.0;

    plso::PipelineOptions opt;
    opt.j_candidates = {2};
    opt.lambda = plso::Lambda(1.0);
    const plso::PipelineResult fit = plso::fit_pipeline(sim.observations, cfg, opt);

    for (std::size_t j = 0; j < fit.fit.params.n_components(); ++j)
        std::printf("component %zu: %.3f Hz, lengthscale %.3f s\n", j + 1,
                    fit.fit.params.center_freqs[j] / (2.0 * M_PI * cfg.delta), fit.fit.params.lengthscales[j]);

    const plso::PosteriorTrajectories post = plso::kalman_smooth(sim.observations, fit.fit.params, fit.fit.psi);
    const plso::ComponentEstimate c0 = plso::reconstruct_component(post, 0);
    for (plso::Index k = 0; k < 5; ++k)
        std::printf("k=%ld  mean %.4f  95%% band [%.4f, %.4f]\n", static_cast<long>(k), c0.mean(k), c0.ci_lower(k),
                    c0.ci_upper(k));
    return 0;
}
