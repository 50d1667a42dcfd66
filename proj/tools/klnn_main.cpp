// Command-line front end: bias-table generation, entropy and mutual
// information estimation on CSV samples, synthetic data generation, and
// sweep benchmarks with machine-readable output.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "klnn/klnn.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

std::string default_bias_table() {
    const char* env = std::getenv("KLNN_BIAS_TABLE");
    return env ? env : "";
}

klnn::BiasTable load_table_or_die(const std::string& path) {
    if (path.empty())
        throw klnn::MissingEntry(
            "no bias table given (use --bias-table or KLNN_BIAS_TABLE)");
    return klnn::load_bias_table_file(path);
}

struct BiasArgs {
    int k = 5;
    int d = 1;
    int m = klnn::kDefaultTruncation;
    long long samples = 200000;
    std::uint64_t seed = 0;
    std::string out;
    std::string form = "appendix";
    double clamp = klnn::kDefaultClamp;
};

struct EstArgs {
    std::string input;
    std::string estimator = "klnn";
    int k = 5;
    int m = 0;
    double m_mult = 1.0;
    std::string bias_table = default_bias_table();
    std::optional<double> h;
    std::string h_rule = "rot";
    std::uint64_t seed = 0;
    bool jitter = false;
    int dims_x = 0;  // mi only
};

struct SynthArgs {
    std::string family = "gauss-corr-2d";
    std::string func = "x";
    int xdims = 1;
    int n = 100;
    double r = 0.0;
    double theta = 0.01;
    double noise_halfwidth = klnn::kNoiseHalfwidthLiteral;
    std::uint64_t seed = 0;
    std::string out;
};

struct BenchArgs {
    std::string config;
    std::string out;
    std::optional<int> trials;
    std::optional<unsigned> workers;
    std::optional<std::string> format;
};

int run_bias(const BiasArgs& a) {
    klnn::BiasOptions opts;
    opts.form = a.form == "maintext" ? klnn::ExponentForm::main_text
                                     : klnn::ExponentForm::appendix_scaled;
    opts.clamp = a.clamp;
    const klnn::BiasEstimate est =
        klnn::bias_constant(a.k, a.d, a.m, a.samples, a.seed, opts);
    klnn::BiasTable table;
    table.insert(est);
    klnn::save_bias_table(a.out, table);
    std::printf("B(k=%d, d=%d) = %.6f +- %.6f  (%lld samples, m=%d, %s)\n", est.k,
                est.d, est.mean, est.std_error, est.samples, est.m,
                klnn::to_string(est.form));
    if (est.degenerate_count > 0)
        std::printf("degenerate draws clamped: %lld\n", est.degenerate_count);
    return kExitOk;
}

int run_entropy(const EstArgs& a) {
    klnn::PointCloud cloud = klnn::csv::read_cloud(a.input);
    if (a.jitter) klnn::apply_jitter(cloud, a.seed);
    klnn::EstimatorConfig cfg;
    cfg.k = a.k;
    cfg.m = a.m;
    cfg.m_multiplier = a.m_mult;
    cfg.seed = a.seed;
    klnn::EstimateReport rep;
    if (a.estimator == "kl") {
        rep = klnn::entropy_kl(cloud, a.k, cfg);
    } else if (a.estimator == "kde") {
        klnn::KdeBandwidth bw;
        if (a.h) {
            bw.rule = klnn::BandwidthRule::fixed;
            bw.value = *a.h;
        } else if (a.h_rule == "rot") {
            bw.rule = klnn::BandwidthRule::rot;
        } else if (a.h_rule == "pow-d4") {
            bw.rule = klnn::BandwidthRule::pow_d4;
        } else if (a.h_rule == "pow-d2") {
            bw.rule = klnn::BandwidthRule::pow_d2;
        } else {
            throw klnn::InvalidArgument("unknown --h-rule '" + a.h_rule + "'");
        }
        rep = klnn::entropy_kde(cloud, bw, cfg);
    } else if (a.estimator == "klnn") {
        klnn::BiasTable table;
        if (!a.bias_table.empty()) {
            table = load_table_or_die(a.bias_table);
            cfg.bias_source = klnn::BiasSource::table;
            cfg.bias_table = &table;
        }
        rep = klnn::entropy_klnn(cloud, cfg);
    } else {
        throw klnn::InvalidArgument("unknown estimator '" + a.estimator +
                                    "' (want klnn, kl, kde)");
    }
    std::printf("%.6f\n", rep.value);
    if (rep.skipped || rep.clamped || rep.fallbacks)
        std::fprintf(stderr, "note: skipped=%d clamped=%d fallbacks=%d\n", rep.skipped,
                     rep.clamped, rep.fallbacks);
    return kExitOk;
}

int run_mi(const EstArgs& a) {
    klnn::PointCloud cloud = klnn::csv::read_cloud(a.input);
    if (a.jitter) klnn::apply_jitter(cloud, a.seed);
    if (a.dims_x < 1 || a.dims_x >= cloud.d())
        throw klnn::InvalidArgument("--dims-x must split the columns into two blocks");
    klnn::JointSample js(klnn::slice_cols(cloud, 0, a.dims_x),
                         klnn::slice_cols(cloud, a.dims_x, cloud.d() - a.dims_x));
    klnn::EstimatorConfig cfg;
    cfg.k = a.k;
    cfg.m = a.m;
    cfg.m_multiplier = a.m_mult;
    cfg.seed = a.seed;
    klnn::BiasTable table;
    klnn::EstimateReport rep;
    if (a.estimator == "3kl") {
        rep = klnn::mi_3kl(js, a.k, cfg);
    } else if (a.estimator == "ksg") {
        rep = klnn::mi_ksg(js, a.k, cfg);
    } else if (a.estimator == "3lnn" || a.estimator == "lnn-ksg") {
        if (!a.bias_table.empty()) {
            table = load_table_or_die(a.bias_table);
            cfg.bias_source = klnn::BiasSource::table;
            cfg.bias_table = &table;
        }
        klnn::MiConfig mcfg;
        mcfg.entropy = cfg;
        rep = a.estimator == "3lnn" ? klnn::mi_3lnn(js, mcfg) : klnn::mi_lnn_ksg(js, mcfg);
    } else {
        throw klnn::InvalidArgument("unknown estimator '" + a.estimator +
                                    "' (want 3kl, ksg, 3lnn, lnn-ksg)");
    }
    std::printf("%.6f\n", rep.value);
    return kExitOk;
}

int run_synth(const SynthArgs& a) {
    klnn::ScenarioSpec spec;
    spec.family = klnn::family_from_string(a.family);
    spec.func = klnn::func_from_string(a.func);
    spec.x_dims = a.xdims;
    spec.n = a.n;
    spec.r = a.r;
    spec.theta = a.theta;
    spec.noise_halfwidth = a.noise_halfwidth;
    spec.seed = a.seed;
    const klnn::ScenarioData data = klnn::generate(spec);
    klnn::csv::write_cloud(a.out, data.cloud);
    std::printf("%s: n=%d d=%d dims_x=%d -> %s\n", spec.id().c_str(), data.cloud.n(),
                data.cloud.d(), data.dims_x, a.out.c_str());
    return kExitOk;
}

int run_bench_cmd(const BenchArgs& a) {
    klnn::BenchConfig cfg = klnn::load_bench_config(a.config);
    if (a.trials) cfg.trials = *a.trials;
    if (a.workers) cfg.workers = *a.workers;
    if (a.format) cfg.format = *a.format;
    if (cfg.bias_table_path.empty()) cfg.bias_table_path = default_bias_table();
    std::string out = !a.out.empty() ? a.out : cfg.output;
    if (out.empty()) throw klnn::InvalidArgument("bench: no output path (--out or config)");
    const klnn::BenchSummary summary = klnn::run_bench(cfg, out);
    std::printf("wrote %d rows to %s (errors: %d", summary.rows,
                summary.output_path.c_str(), summary.errors);
    if (summary.bias_entries_computed)
        std::printf(", bias entries computed: %d", summary.bias_entries_computed);
    std::printf(")\n");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"local-likelihood entropy and mutual information estimators"};
    app.require_subcommand(1);
    // --h is a real option (KDE bandwidth); keep help on --help only
    app.set_help_flag("--help", "print usage");

    BiasArgs bias;
    auto* cmd_bias = app.add_subcommand("bias", "compute a universal bias constant");
    cmd_bias->add_option("--k", bias.k, "neighbor order (>= 3)");
    cmd_bias->add_option("--d", bias.d, "dimension");
    cmd_bias->add_option("--m", bias.m, "series truncation");
    cmd_bias->add_option("--samples", bias.samples, "Monte Carlo draws");
    cmd_bias->add_option("--seed", bias.seed, "RNG seed");
    cmd_bias->add_option("--out", bias.out, "output table (JSON)")->required();
    cmd_bias->add_option("--form", bias.form, "exponent form: appendix|maintext")
        ->check(CLI::IsMember({"appendix", "maintext"}));
    cmd_bias->add_option("--clamp", bias.clamp, "h-functional clamp");

    EstArgs ent;
    auto* cmd_ent = app.add_subcommand("entropy", "estimate differential entropy from CSV");
    cmd_ent->set_help_flag("--help", "print usage");
    cmd_ent->add_option("--input", ent.input, "CSV sample file")->required();
    cmd_ent->add_option("--estimator", ent.estimator, "klnn|kl|kde")
        ->check(CLI::IsMember({"klnn", "kl", "kde"}));
    cmd_ent->add_option("--k", ent.k, "neighbor order");
    cmd_ent->add_option("--m", ent.m, "truncation budget (0 = ceil(m-mult * ln n))");
    cmd_ent->add_option("--m-mult", ent.m_mult, "auto-budget multiplier");
    cmd_ent->add_option("--bias-table", ent.bias_table, "bias table JSON (or KLNN_BIAS_TABLE)");
    double h_value = 0.0;
    auto* h_opt = cmd_ent->add_option("--h", h_value, "fixed KDE bandwidth");
    cmd_ent->add_option("--h-rule", ent.h_rule, "KDE bandwidth rule: rot|pow-d4|pow-d2")
        ->check(CLI::IsMember({"rot", "pow-d4", "pow-d2"}));
    cmd_ent->add_option("--seed", ent.seed, "seed echoed in reports / jitter");
    cmd_ent->add_flag("--jitter", ent.jitter, "deterministic duplicate-breaking jitter");

    EstArgs mi;
    auto* cmd_mi = app.add_subcommand("mi", "estimate mutual information from CSV");
    cmd_mi->add_option("--input", mi.input, "CSV sample file")->required();
    cmd_mi->add_option("--dims-x", mi.dims_x, "first P columns form X")->required();
    cmd_mi->add_option("--estimator", mi.estimator, "3kl|ksg|3lnn|lnn-ksg")
        ->check(CLI::IsMember({"3kl", "ksg", "3lnn", "lnn-ksg"}));
    cmd_mi->add_option("--k", mi.k, "neighbor order");
    cmd_mi->add_option("--m", mi.m, "truncation budget");
    cmd_mi->add_option("--m-mult", mi.m_mult, "auto-budget multiplier");
    cmd_mi->add_option("--bias-table", mi.bias_table, "bias table JSON (or KLNN_BIAS_TABLE)");
    cmd_mi->add_option("--seed", mi.seed, "seed echoed in reports / jitter");
    cmd_mi->add_flag("--jitter", mi.jitter, "deterministic duplicate-breaking jitter");

    SynthArgs synth;
    auto* cmd_synth = app.add_subcommand("synth", "generate synthetic benchmark data");
    cmd_synth->add_option("--family", synth.family,
                          "gauss-corr-2d|gauss-block-6d|gauss-mixture|near-functional|"
                          "uniform-additive|multilinear-uniform");
    cmd_synth->add_option("--func", synth.func, "near-functional f: x|x2|x3|exp2|sin4pi|cos5pi");
    cmd_synth->add_option("--xdims", synth.xdims, "multilinear X coordinate count (1 or 4)");
    cmd_synth->add_option("--n", synth.n, "sample count");
    cmd_synth->add_option("--r", synth.r, "Gaussian correlation");
    cmd_synth->add_option("--theta", synth.theta, "additive noise width");
    cmd_synth->add_option("--noise-halfwidth", synth.noise_halfwidth,
                          "multilinear noise half-width");
    cmd_synth->add_option("--seed", synth.seed, "RNG seed");
    cmd_synth->add_option("--out", synth.out, "output CSV")->required();

    BenchArgs bench;
    auto* cmd_bench = app.add_subcommand("bench", "run a sweep benchmark from a config");
    cmd_bench->add_option("--config", bench.config, "flat TOML config")->required();
    cmd_bench->add_option("--out", bench.out, "result file (overrides config)");
    int bench_trials = 0;
    auto* t_opt = cmd_bench->add_option("--trials", bench_trials, "trial count override");
    unsigned bench_workers = 0;
    auto* w_opt = cmd_bench->add_option("--workers", bench_workers, "worker thread count");
    std::string bench_format;
    auto* f_opt = cmd_bench->add_option("--format", bench_format, "csv|json")
                      ->check(CLI::IsMember({"csv", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*cmd_bias) return run_bias(bias);
        if (*cmd_ent) {
            if (*h_opt) ent.h = h_value;
            return run_entropy(ent);
        }
        if (*cmd_mi) return run_mi(mi);
        if (*cmd_synth) return run_synth(synth);
        if (*cmd_bench) {
            if (*t_opt) bench.trials = bench_trials;
            if (*w_opt) bench.workers = bench_workers;
            if (*f_opt) bench.format = bench_format;
            return run_bench_cmd(bench);
        }
    } catch (const klnn::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return kExitUsage;
}
