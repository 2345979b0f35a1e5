// plso: simulate, fit, decompose, sample and bench from the command line.

#include "plso/io.hpp"
#include "plso/plso.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using plso::ErrorKind;
using plso::Index;
using plso::io::fmt;
using plso::io::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::usage: return kExitUsage;
        case ErrorKind::data: return kExitData;
        case ErrorKind::numerical: return kExitNumerical;
    }
    return kExitNumerical;
}

// Values from a JSON config fill options that were not given on the command line.
void apply_config_file(CLI::App& sub, const std::string& path) {
    if (path.empty()) return;
    ordered_json cfg;
    try {
        cfg = ordered_json::parse(plso::io::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        plso::fail(ErrorKind::usage, "config " + path + ": " + e.what());
    }
    if (!cfg.is_object()) plso::fail(ErrorKind::usage, "config " + path + ": expected a JSON object");
    for (const auto& [key, val] : cfg.items()) {
        CLI::Option* opt = nullptr;
        try {
            opt = sub.get_option("--" + key);
        } catch (const CLI::OptionNotFound&) {
            plso::fail(ErrorKind::usage, "config " + path + ": unknown option '" + key + "'");
        }
        if (opt->count() > 0) continue;
        std::vector<std::string> items;
        const auto as_text = [](const ordered_json& v) {
            if (v.is_string()) return v.get<std::string>();
            if (v.is_boolean()) return std::string(v.get<bool>() ? "true" : "false");
            if (v.is_number_integer()) return std::to_string(v.get<long long>());
            if (v.is_number()) return fmt(v.get<double>());
            plso::fail(ErrorKind::usage, "config: unsupported value type");
        };
        if (val.is_array())
            for (const auto& v : val) items.push_back(as_text(v));
        else
            items.push_back(as_text(val));
        for (const auto& s : items) opt->add_result(s);
        opt->run_callback();
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) plso::fail(ErrorKind::usage, "cannot create output directory " + dir.string());
}

ordered_json doubles_json(const std::vector<double>& v) {
    ordered_json a = ordered_json::array();
    for (double x : v) a.push_back(plso::io::num(x));
    return a;
}

Index window_samples(double fs_hz, double window_s, Index window_n) {
    if (window_n > 0) return window_n;
    plso::require(window_s > 0.0, ErrorKind::usage, "give --window (seconds) or --window-samples");
    const double n = window_s * fs_hz;
    const auto rounded = static_cast<Index>(std::llround(n));
    plso::require(std::abs(n - static_cast<double>(rounded)) < 1e-9 * std::max(1.0, n), ErrorKind::usage,
                  "window length in seconds does not map to a whole number of samples");
    plso::require(rounded >= 2, ErrorKind::usage, "window must span at least 2 samples");
    return rounded;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string mode = "paper";
    std::string out = ".";
    std::uint64_t seed = 1;
    double fs = 200.0;
    double duration = 100.0;
    double noise_var = 25.0;
    double window_s = 2.0;
    double mod_freq = 0.04;
    double freq1 = 1.0;
    double freq2 = 10.0;
    std::vector<double> freqs_hz;
    std::vector<double> lengthscales;
    std::vector<double> powers;
};

int cmd_simulate(const SimulateArgs& a) {
    ensure_dir(a.out);
    const fs::path dir(a.out);
    ordered_json manifest = ordered_json::object();
    manifest["command"] = "simulate";
    manifest["mode"] = a.mode;
    manifest["seed"] = a.seed;

    Eigen::VectorXd y;
    Eigen::MatrixXd truth;
    double delta = 0.0;
    if (a.mode == "paper") {
        plso::ExperimentSpec spec;
        spec.fs = a.fs;
        spec.duration_s = a.duration;
        spec.noise_var = a.noise_var;
        spec.window_s = a.window_s;
        spec.mod_freq_hz = a.mod_freq;
        spec.freq1_hz = a.freq1;
        spec.freq2_hz = a.freq2;
        const plso::SimulationBundle b = plso::simulate_paper_experiment(a.seed, spec);
        y = b.observations;
        truth = b.true_components;
        delta = spec.delta();
        ordered_json s = ordered_json::object();
        s["mod_freq_hz"] = fmt(spec.mod_freq_hz);
        s["freqs_hz"] = doubles_json({spec.freq1_hz, spec.freq2_hz});
        s["lengthscales_s"] = doubles_json({spec.lengthscale1, spec.lengthscale2});
        s["fs"] = fmt(spec.fs);
        s["duration_s"] = fmt(spec.duration_s);
        s["window_s"] = fmt(spec.window_s);
        s["noise_var"] = fmt(spec.noise_var);
        s["n_samples"] = spec.n_samples();
        manifest["spec"] = s;
    } else if (a.mode == "generative") {
        plso::require(!a.freqs_hz.empty(), ErrorKind::usage, "generative mode needs --freqs-hz");
        plso::require(a.lengthscales.size() == a.freqs_hz.size() && a.powers.size() == a.freqs_hz.size(),
                      ErrorKind::usage, "--freqs-hz, --lengthscales and --powers need the same length");
        plso::ModelParams p;
        p.delta = 1.0 / a.fs;
        p.obs_noise_var = a.noise_var;
        p.lengthscales = a.lengthscales;
        for (double f : a.freqs_hz) p.center_freqs.push_back(2.0 * M_PI * f * p.delta);
        const Index n_len = window_samples(a.fs, a.window_s, 0);
        const auto n_total = static_cast<Index>(std::llround(a.duration * a.fs));
        plso::check_divisible(n_total, n_len);
        Eigen::MatrixXd logp(static_cast<Index>(a.powers.size()), n_total / n_len);
        for (std::size_t j = 0; j < a.powers.size(); ++j) {
            plso::require(a.powers[j] > 0.0, ErrorKind::usage, "powers must be positive");
            logp.row(static_cast<Index>(j)).setConstant(std::log(a.powers[j]));
        }
        const plso::GenerativeSample g = plso::simulate_generative(p, plso::LogVarianceField(logp, n_len), a.seed);
        y = g.observations;
        truth.resize(y.size(), logp.rows());
        for (Index j = 0; j < logp.rows(); ++j) truth.col(j) = g.latent.real_part(j);
        delta = p.delta;
        ordered_json s = ordered_json::object();
        s["freqs_hz"] = doubles_json(a.freqs_hz);
        s["lengthscales_s"] = doubles_json(a.lengthscales);
        s["powers"] = doubles_json(a.powers);
        s["fs"] = fmt(a.fs);
        s["duration_s"] = fmt(a.duration);
        s["window_s"] = fmt(a.window_s);
        s["noise_var"] = fmt(a.noise_var);
        s["n_samples"] = n_total;
        manifest["spec"] = s;
    } else {
        plso::fail(ErrorKind::usage, "unknown simulate mode '" + a.mode + "' (use paper or generative)");
    }

    std::vector<std::string> header{"k", "time_s"};
    for (Index j = 0; j < truth.cols(); ++j) header.push_back("z" + std::to_string(j + 1));
    plso::io::CsvTable t(header);
    for (Index k = 0; k < truth.rows(); ++k) {
        std::vector<std::string> row{std::to_string(k), fmt(static_cast<double>(k) * delta)};
        for (Index j = 0; j < truth.cols(); ++j) row.push_back(fmt(truth(k, j)));
        t.add_row(row);
    }
    manifest["files"] = {"observations.csv", "truth.csv"};
    plso::io::write_atomic(dir / "observations.csv", plso::io::value_csv(y));
    plso::io::write_atomic(dir / "truth.csv", t.str());
    plso::io::write_atomic(dir / "manifest.json", plso::io::dump(manifest));
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct FitArgs {
    std::string input;
    std::string out = ".";
    double fs = 0.0;
    double window_s = 0.0;
    Index window_n = 0;
    std::vector<Index> components{1};
    std::string lambda = "cv";
    double cutoff_hz = -1.0;
    std::uint64_t seed = 0;
    int max_iters = 500;
    double tol = 1e-8;
    int outer_iters = 5;
    double prominence = 5.0;
    double lengthscale_max = 0.0;
    std::vector<Index> freeze_freqs;
    bool freeze_fold_theta = false;
    std::vector<double> lambda_grid;
    bool grid_stationary = true;
};

ordered_json selection_json(const plso::SelectionReport& r) {
    ordered_json s = ordered_json::object();
    ordered_json aic = ordered_json::array();
    for (const auto& [j, v] : r.aic_by_j) aic.push_back({{"J", j}, {"aic", plso::io::num(v)}});
    s["aic_by_j"] = aic;
    s["chosen_j"] = r.chosen_j;
    ordered_json cv = ordered_json::array();
    for (const auto& [l, v] : r.cv_by_lambda) cv.push_back({{"lambda", plso::io::lambda_json(l)}, {"score", plso::io::num(v)}});
    s["cv_by_lambda"] = cv;
    s["chosen_lambda"] = plso::io::lambda_json(r.chosen_lambda);
    s["sigma_nu2"] = plso::io::num(r.sigma_nu2);
    return s;
}

int cmd_fit(const FitArgs& a) {
    plso::require(!a.input.empty(), ErrorKind::usage, "--input is required");
    plso::require(a.fs > 0.0, ErrorKind::usage, "--fs must be positive");
    const std::string raw = plso::io::read_file(a.input);
    const Eigen::VectorXd y = plso::io::parse_value_csv(raw, a.input);

    plso::FitConfig cfg;
    cfg.delta = 1.0 / a.fs;
    cfg.window_len = window_samples(a.fs, a.window_s, a.window_n);
    plso::check_divisible(y.size(), cfg.window_len);
    cfg.cutoff_hz = a.cutoff_hz >= 0.0 ? a.cutoff_hz : a.fs / 4.0;
    cfg.prominence = a.prominence;
    cfg.lengthscale_max = a.lengthscale_max;
    cfg.apg.max_iters = a.max_iters;
    cfg.apg.tol = a.tol;
    cfg.outer_iters = a.outer_iters;
    cfg.cv_refit_theta = !a.freeze_fold_theta;
    for (Index j : a.freeze_freqs) {
        plso::require(j >= 0, ErrorKind::usage, "freeze indices must be nonnegative");
        if (static_cast<std::size_t>(j) >= cfg.theta.freeze_freqs.size())
            cfg.theta.freeze_freqs.resize(static_cast<std::size_t>(j) + 1, false);
        cfg.theta.freeze_freqs[static_cast<std::size_t>(j)] = true;
    }

    plso::PipelineOptions opt;
    opt.j_candidates = a.components;
    plso::require(!opt.j_candidates.empty(), ErrorKind::usage, "--components needs at least one value");
    for (Index j : opt.j_candidates) plso::require(j >= 1, ErrorKind::usage, "component counts must be >= 1");
    if (a.lambda == "cv") {
        opt.cross_validate = true;
        if (!a.lambda_grid.empty()) {
            opt.lambda_grid.clear();
            for (double v : a.lambda_grid) opt.lambda_grid.emplace_back(v);
            if (a.grid_stationary) opt.lambda_grid.push_back(plso::Lambda::stationary());
        }
    } else if (a.lambda == "stationary" || a.lambda == "inf") {
        opt.lambda = plso::Lambda::stationary();
    } else {
        double v = 0.0;
        const auto res = std::from_chars(a.lambda.data(), a.lambda.data() + a.lambda.size(), v);
        plso::require(res.ec == std::errc() && res.ptr == a.lambda.data() + a.lambda.size(), ErrorKind::usage,
                      "--lambda must be a number, 'cv' or 'stationary'");
        opt.lambda = plso::Lambda(v);
    }

    const plso::PipelineResult res = plso::fit_pipeline(y, cfg, opt);

    plso::io::FittedModelFile f;
    f.params = res.fit.params;
    f.psi = res.fit.psi;
    f.objective_trace = res.fit.trace;
    f.warnings = res.report.warnings;
    f.input_digest = plso::io::hex64(plso::io::fnv1a(raw));
    f.seed = a.seed;
    ordered_json c = ordered_json::object();
    c["input"] = fs::path(a.input).filename().string();
    c["fs"] = fmt(a.fs);
    c["window_samples"] = cfg.window_len;
    c["components"] = a.components;
    c["lambda"] = a.lambda;
    ordered_json grid = ordered_json::array();
    for (const auto& l : opt.lambda_grid) grid.push_back(l.to_string());
    if (opt.cross_validate) c["lambda_grid"] = grid;
    c["cutoff_hz"] = fmt(cfg.cutoff_hz);
    c["prominence"] = fmt(cfg.prominence);
    c["lengthscale_max"] = fmt(cfg.resolved_lengthscale_max());
    c["max_iters"] = cfg.apg.max_iters;
    c["tol"] = fmt(cfg.apg.tol);
    c["outer_iters"] = cfg.outer_iters;
    c["freeze_freqs"] = a.freeze_freqs;
    c["cv_refit_theta"] = cfg.cv_refit_theta;
    f.config = c;
    f.selection = selection_json(res.report);

    ensure_dir(a.out);
    const fs::path dir(a.out);
    plso::io::write_atomic(dir / "model.json", plso::io::dump(plso::io::to_json(f)));
    plso::io::write_atomic(dir / "selection.json", plso::io::dump(f.selection));
    for (const auto& w : f.warnings) std::cerr << "warning: " << w << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct ModelAndData {
    plso::io::FittedModelFile model;
    Eigen::VectorXd y;
};

ModelAndData load_model_and_data(const std::string& model_path, const std::string& input) {
    plso::require(!model_path.empty(), ErrorKind::usage, "--model is required");
    plso::require(!input.empty(), ErrorKind::usage, "--input is required");
    ModelAndData md;
    md.model = plso::io::read_model(model_path);
    md.y = plso::io::parse_value_csv(plso::io::read_file(input), input);
    plso::require(md.y.size() == md.model.psi.n_samples(), ErrorKind::data,
                  "data length " + std::to_string(md.y.size()) + " does not match the model's " +
                      std::to_string(md.model.psi.n_samples()) + " samples");
    return md;
}

struct DecomposeArgs {
    std::string model;
    std::string input;
    std::string out = ".";
    double z_score = 1.96;
};

int cmd_decompose(const DecomposeArgs& a) {
    const ModelAndData md = load_model_and_data(a.model, a.input);
    const plso::ModelParams& p = md.model.params;
    const plso::LogVarianceField& psi = md.model.psi;
    const plso::PosteriorTrajectories post = plso::kalman_smooth(md.y, p, psi);
    ensure_dir(a.out);
    const fs::path dir(a.out);
    for (Index j = 0; j < post.n_components(); ++j) {
        const plso::ComponentEstimate est = plso::reconstruct_component(post, j, a.z_score);
        plso::io::CsvTable t({"k", "time_s", "mean", "ci_lower", "ci_upper"});
        for (Index k = 0; k < est.mean.size(); ++k)
            t.add_row({std::to_string(k), fmt(static_cast<double>(k) * p.delta), fmt(est.mean(k)),
                       fmt(est.ci_lower(k)), fmt(est.ci_upper(k))});
        plso::io::write_atomic(dir / ("component_" + std::to_string(j + 1) + ".csv"), t.str());
    }
    const Index n_len = psi.window_len;
    std::vector<std::string> header{"window"};
    for (Index n = 0; n < n_len; ++n)
        header.push_back(fmt(static_cast<double>(n) / (static_cast<double>(n_len) * p.delta)));
    plso::io::CsvTable spec(header);
    for (Index m = 0; m < psi.n_windows(); ++m) {
        const plso::SpectrumGrid g = plso::psd(p, psi.values.col(m), n_len);
        std::vector<std::string> row{std::to_string(m)};
        for (Index n = 0; n < n_len; ++n) row.push_back(fmt(10.0 * std::log10(g.total(n))));
        spec.add_row(row);
    }
    plso::io::write_atomic(dir / "spectrogram_db.csv", spec.str());
    ordered_json summary = ordered_json::object();
    summary["command"] = "decompose";
    summary["loglik"] = plso::io::num(post.loglik);
    summary["n_components"] = post.n_components();
    summary["n_samples"] = post.n_samples();
    plso::io::write_atomic(dir / "decompose.json", plso::io::dump(summary));
    return kExitOk;
}

struct SampleArgs {
    std::string model;
    std::string input;
    std::string out = ".";
    Index samples = 200;
    std::uint64_t seed = 1;
    Index max_trajectories = 10;
    double level = 0.95;
    Index phase_min_samples = 50;
};

int cmd_sample(const SampleArgs& a) {
    const ModelAndData md = load_model_and_data(a.model, a.input);
    const plso::ModelParams& p = md.model.params;
    const plso::SampleEnsemble ens = plso::ffbs_sample(md.y, p, md.model.psi, a.samples, a.seed);
    const Index n_samples = md.y.size();
    const Index n_comp = static_cast<Index>(p.n_components());
    ensure_dir(a.out);
    const fs::path dir(a.out);

    std::vector<std::string> header{"k", "time_s"};
    for (Index j = 0; j < n_comp; ++j) {
        header.push_back("mean_" + std::to_string(j + 1));
        header.push_back("var_" + std::to_string(j + 1));
    }
    plso::io::CsvTable summary(header);
    const double s_count = static_cast<double>(ens.size());
    for (Index k = 0; k < n_samples; ++k) {
        std::vector<std::string> row{std::to_string(k), fmt(static_cast<double>(k) * p.delta)};
        for (Index j = 0; j < n_comp; ++j) {
            double sum = 0.0, sq = 0.0;
            for (const auto& s : ens.samples) sum += s(k, 2 * j);
            const double mean = sum / s_count;
            for (const auto& s : ens.samples) sq += (s(k, 2 * j) - mean) * (s(k, 2 * j) - mean);
            const double var = ens.size() > 1 ? sq / (s_count - 1.0) : 0.0;
            row.push_back(fmt(mean));
            row.push_back(fmt(var));
        }
        summary.add_row(row);
    }
    plso::io::write_atomic(dir / "samples_summary.csv", summary.str());

    const Index n_traj = std::min(a.max_trajectories, ens.size());
    std::vector<std::string> th{"k", "time_s"};
    for (Index s = 0; s < n_traj; ++s)
        for (Index j = 0; j < n_comp; ++j) th.push_back("s" + std::to_string(s) + "_z" + std::to_string(j + 1));
    plso::io::CsvTable traj(th);
    for (Index k = 0; k < n_samples; ++k) {
        std::vector<std::string> row{std::to_string(k), fmt(static_cast<double>(k) * p.delta)};
        for (Index s = 0; s < n_traj; ++s)
            for (Index j = 0; j < n_comp; ++j) row.push_back(fmt(ens.samples[static_cast<std::size_t>(s)](k, 2 * j)));
        traj.add_row(row);
    }
    plso::io::write_atomic(dir / "trajectories.csv", traj.str());

    ordered_json manifest = ordered_json::object();
    manifest["command"] = "sample";
    manifest["samples"] = a.samples;
    manifest["seed"] = a.seed;
    manifest["trajectories_written"] = n_traj;
    ordered_json phase_files = ordered_json::array();
    if (ens.size() >= a.phase_min_samples) {
        plso::PhaseOptions po;
        po.level = a.level;
        po.min_samples = a.phase_min_samples;
        for (Index j = 0; j < n_comp; ++j) {
            const plso::PhaseEstimate pe = plso::phase_estimate(ens, j, po);
            plso::io::CsvTable t({"k", "time_s", "mean", "lower", "upper", "degenerate"});
            for (Index k = 0; k < n_samples; ++k)
                t.add_row({std::to_string(k), fmt(static_cast<double>(k) * p.delta), fmt(pe.mean_phase(k)),
                           fmt(pe.lower(k)), fmt(pe.upper(k)), pe.degenerate[static_cast<std::size_t>(k)] ? "1" : "0"});
            const std::string name = "phase_" + std::to_string(j + 1) + ".csv";
            plso::io::write_atomic(dir / name, t.str());
            phase_files.push_back(name);
        }
    } else {
        std::cerr << "warning: phase estimates need at least " << a.phase_min_samples << " samples; skipped\n";
    }
    manifest["phase_files"] = phase_files;
    plso::io::write_atomic(dir / "sample.json", plso::io::dump(manifest));
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
    std::string out = ".";
    Index n_seeds = 20;
    std::uint64_t first_seed = 1;
    bool timing = false;
    bool skip_aic = false;
    double duration = 100.0;
    double cutoff_hz = 40.0;
};

int cmd_bench(const BenchArgs& a) {
    plso::require(a.n_seeds >= 1, ErrorKind::usage, "--seeds must be at least 1");
    plso::BenchConfig cfg;
    cfg.spec.duration_s = a.duration;
    cfg.cutoff_hz = a.cutoff_hz;
    if (a.skip_aic) cfg.aic_candidates.clear();
    std::vector<std::uint64_t> seeds;
    for (Index i = 0; i < a.n_seeds; ++i) seeds.push_back(a.first_seed + static_cast<std::uint64_t>(i));
    const plso::BenchmarkTable table = plso::run_benchmark(seeds, cfg);

    plso::io::CsvTable t({"method", "metric", "z1", "z2"});
    for (plso::LambdaMode mode : table.modes) {
        const auto m = table.mean(mode);
        const std::string name = plso::to_string(mode);
        if (!m) {
            t.add_row({name, "mse", "nan", "nan"});
            t.add_row({name, "jump", "nan", "nan"});
            t.add_row({name, "is_div", "nan", ""});
            continue;
        }
        t.add_row({name, "mse", fmt(m->mse[0]), fmt(m->mse[1])});
        t.add_row({name, "jump", fmt(m->jump[0]), fmt(m->jump[1])});
        t.add_row({name, "is_div", fmt(m->is_div), ""});
    }
    plso::io::CsvTable ref({"method", "metric", "z1", "z2"});
    const auto tj = table.mean_truth_jump();
    const auto pj = table.mean_probe_jump();
    ref.add_row({"truth", "jump", fmt(tj[0]), fmt(tj[1])});
    ref.add_row({"per_window_probe", "jump", fmt(pj[0]), fmt(pj[1])});

    ordered_json doc = ordered_json::object();
    doc["command"] = "bench";
    doc["n_seeds"] = a.n_seeds;
    doc["first_seed"] = a.first_seed;
    doc["n_ok"] = table.n_ok();
    doc["duration_s"] = fmt(a.duration);
    doc["cutoff_hz"] = fmt(a.cutoff_hz);
    ordered_json rows = ordered_json::array();
    for (const auto& s : table.seeds) {
        ordered_json r = ordered_json::object();
        r["seed"] = s.seed;
        r["ok"] = s.ok;
        if (!s.ok) r["error"] = s.error;
        r["truth_jump"] = doubles_json({s.truth_jump[0], s.truth_jump[1]});
        r["probe_jump"] = doubles_json({s.probe_jump[0], s.probe_jump[1]});
        r["aic_choice"] = s.aic_choice;
        ordered_json aic = ordered_json::array();
        for (const auto& [j, v] : s.aic_by_j) aic.push_back({{"J", j}, {"aic", plso::io::num(v)}});
        r["aic_by_j"] = aic;
        ordered_json cv = ordered_json::array();
        for (const auto& [l, v] : s.cv_by_lambda)
            cv.push_back({{"lambda", plso::io::lambda_json(l)}, {"score", plso::io::num(v)}});
        r["cv_by_lambda"] = cv;
        ordered_json modes = ordered_json::array();
        for (const auto& m : s.modes) {
            ordered_json mo = ordered_json::object();
            mo["method"] = plso::to_string(m.mode);
            mo["lambda"] = plso::io::lambda_json(m.lambda);
            mo["mse"] = doubles_json({m.metrics.mse[0], m.metrics.mse[1]});
            mo["jump"] = doubles_json({m.metrics.jump[0], m.metrics.jump[1]});
            mo["is_div"] = plso::io::num(m.metrics.is_div);
            mo["freqs_hz"] = doubles_json({m.freqs_hz[0], m.freqs_hz[1]});
            mo["coverage"] = doubles_json({m.coverage[0], m.coverage[1]});
            if (a.timing) mo["runtime_seconds"] = plso::io::num(m.metrics.runtime_seconds);
            modes.push_back(mo);
        }
        r["modes"] = modes;
        rows.push_back(r);
    }
    doc["seeds"] = rows;

    ensure_dir(a.out);
    const fs::path dir(a.out);
    plso::io::write_atomic(dir / "bench_table.csv", t.str());
    plso::io::write_atomic(dir / "bench_reference.csv", ref.str());
    plso::io::write_atomic(dir / "bench.json", plso::io::dump(doc));
    for (const auto& s : table.seeds)
        if (!s.ok) std::cerr << "warning: seed " << s.seed << " failed: " << s.error << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Piecewise locally stationary oscillation decomposition"};
    app.require_subcommand(1);

    SimulateArgs sim;
    std::string sim_cfg;
    CLI::App* s = app.add_subcommand("simulate", "Generate a synthetic record and its ground truth");
    s->add_option("--config", sim_cfg, "JSON file of option values (flags override)");
    s->add_option("--mode", sim.mode, "paper | generative")->capture_default_str();
    s->add_option("--out", sim.out, "Output directory")->capture_default_str();
    s->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
    s->add_option("--fs", sim.fs, "Sampling rate, Hz")->capture_default_str();
    s->add_option("--duration", sim.duration, "Record length, seconds")->capture_default_str();
    s->add_option("--noise-var", sim.noise_var, "Observation noise variance")->capture_default_str();
    s->add_option("--window", sim.window_s, "Window length, seconds")->capture_default_str();
    s->add_option("--mod-freq", sim.mod_freq, "paper mode: envelope frequency, Hz")->capture_default_str();
    s->add_option("--freq1", sim.freq1, "paper mode: first oscillation, Hz")->capture_default_str();
    s->add_option("--freq2", sim.freq2, "paper mode: second oscillation, Hz")->capture_default_str();
    s->add_option("--freqs-hz", sim.freqs_hz, "generative mode: centre frequencies, Hz")->delimiter(',');
    s->add_option("--lengthscales", sim.lengthscales, "generative mode: lengthscales, seconds")->delimiter(',');
    s->add_option("--powers", sim.powers, "generative mode: component powers")->delimiter(',');

    FitArgs fit;
    std::string fit_cfg;
    CLI::App* f = app.add_subcommand("fit", "Estimate parameters and window powers");
    f->add_option("--config", fit_cfg, "JSON file of option values (flags override)");
    f->add_option("--input", fit.input, "CSV with header 'value'");
    f->add_option("--out", fit.out, "Output directory")->capture_default_str();
    f->add_option("--fs", fit.fs, "Sampling rate, Hz");
    f->add_option("--window", fit.window_s, "Window length, seconds");
    f->add_option("--window-samples", fit.window_n, "Window length, samples (overrides --window)");
    f->add_option("--components", fit.components, "J, or a list of candidates chosen by AIC")->delimiter(',');
    f->add_option("--lambda", fit.lambda, "Smoothness: a number, 'cv' or 'stationary'")->capture_default_str();
    f->add_option("--lambda-grid", fit.lambda_grid, "Finite CV grid values (stationary is appended)")
        ->delimiter(',');
    f->add_flag("!--no-grid-stationary", fit.grid_stationary, "Leave the stationary limit out of the CV grid");
    f->add_option("--cutoff-hz", fit.cutoff_hz, "Noise-floor cutoff, Hz (default fs/4)");
    f->add_option("--seed", fit.seed, "Seed recorded in the model file")->capture_default_str();
    f->add_option("--max-iters", fit.max_iters, "APG iteration cap")->capture_default_str();
    f->add_option("--tol", fit.tol, "APG relative tolerance")->capture_default_str();
    f->add_option("--outer-iters", fit.outer_iters, "Block coordinate rounds")->capture_default_str();
    f->add_option("--prominence", fit.prominence, "Peak threshold over the median power")->capture_default_str();
    f->add_option("--lengthscale-max", fit.lengthscale_max, "Upper bound on lengthscales, s (default N delta/4)");
    f->add_option("--freeze-freqs", fit.freeze_freqs, "Zero-based components whose frequency stays fixed")
        ->delimiter(',');
    f->add_flag("--freeze-fold-theta", fit.freeze_fold_theta, "Cross-validation folds refit psi only");

    DecomposeArgs dec;
    std::string dec_cfg;
    CLI::App* d = app.add_subcommand("decompose", "Smoothed components, credible bands and spectrogram");
    d->add_option("--config", dec_cfg, "JSON file of option values (flags override)");
    d->add_option("--model", dec.model, "Fitted model JSON");
    d->add_option("--input", dec.input, "CSV with header 'value'");
    d->add_option("--out", dec.out, "Output directory")->capture_default_str();
    d->add_option("--z", dec.z_score, "Band half-width in posterior standard deviations")->capture_default_str();

    SampleArgs smp;
    std::string smp_cfg;
    CLI::App* sa = app.add_subcommand("sample", "Posterior trajectories and phase estimates");
    sa->add_option("--config", smp_cfg, "JSON file of option values (flags override)");
    sa->add_option("--model", smp.model, "Fitted model JSON");
    sa->add_option("--input", smp.input, "CSV with header 'value'");
    sa->add_option("--out", smp.out, "Output directory")->capture_default_str();
    sa->add_option("--samples", smp.samples, "Number of posterior draws")->capture_default_str();
    sa->add_option("--seed", smp.seed, "Random seed")->capture_default_str();
    sa->add_option("--max-trajectories", smp.max_trajectories, "Draws written in full")->capture_default_str();
    sa->add_option("--level", smp.level, "Phase credible level")->capture_default_str();
    sa->add_option("--phase-min-samples", smp.phase_min_samples, "Fewest draws for phase output")
        ->capture_default_str();

    BenchArgs bench;
    std::string bench_cfg;
    CLI::App* b = app.add_subcommand("bench", "Repeated simulation study");
    b->add_option("--config", bench_cfg, "JSON file of option values (flags override)");
    b->add_option("--out", bench.out, "Output directory")->capture_default_str();
    b->add_option("--seeds", bench.n_seeds, "Number of realizations")->capture_default_str();
    b->add_option("--first-seed", bench.first_seed, "Seed of the first realization")->capture_default_str();
    b->add_option("--duration", bench.duration, "Record length, seconds")->capture_default_str();
    b->add_option("--cutoff-hz", bench.cutoff_hz, "Noise-floor cutoff, Hz")->capture_default_str();
    b->add_flag("--timing", bench.timing, "Include wall-clock runtimes in bench.json");
    b->add_flag("--no-aic", bench.skip_aic, "Skip AIC selection over J");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (s->parsed()) {
            apply_config_file(*s, sim_cfg);
            return cmd_simulate(sim);
        }
        if (f->parsed()) {
            apply_config_file(*f, fit_cfg);
            return cmd_fit(fit);
        }
        if (d->parsed()) {
            apply_config_file(*d, dec_cfg);
            return cmd_decompose(dec);
        }
        if (sa->parsed()) {
            apply_config_file(*sa, smp_cfg);
            return cmd_sample(smp);
        }
        if (b->parsed()) {
            apply_config_file(*b, bench_cfg);
            return cmd_bench(bench);
        }
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const plso::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitUsage;
}
