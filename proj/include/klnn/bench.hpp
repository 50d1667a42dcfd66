#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "klnn/bias.hpp"
#include "klnn/csv.hpp"
#include "klnn/entropy.hpp"
#include "klnn/error.hpp"
#include "klnn/mutual_info.hpp"
#include "klnn/parallel.hpp"
#include "klnn/synth.hpp"

namespace klnn {

// ---------------------------------------------------------------------------
// Flat key-value config (TOML syntax subset: scalars and one-level arrays).

using TomlValue =
    std::variant<std::string, double, bool, std::vector<double>, std::vector<std::string>>;

namespace detail {

inline std::string toml_strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline TomlValue parse_toml_scalar(const std::string& raw, const std::string& where) {
    const std::string v = toml_strip(raw);
    if (v.empty()) throw ParseError(where + ": empty value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"')
            throw ParseError(where + ": unterminated string");
        return v.substr(1, v.size() - 2);
    }
    if (v == "true") return true;
    if (v == "false") return false;
    double num;
    if (csv::parse_double(v, num)) return num;
    throw ParseError(where + ": cannot parse value '" + v + "'");
}

}  // namespace detail

/// Parses a flat TOML document: `key = value` lines, `#` comments, values are
/// strings, numbers, booleans, or one-level arrays thereof.
inline std::map<std::string, TomlValue> parse_flat_toml(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config '" + path + "'");
    std::map<std::string, TomlValue> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = path + ":" + std::to_string(lineno);
        // strip comments outside of strings
        bool in_str = false;
        std::string body;
        for (char c : line) {
            if (c == '"') in_str = !in_str;
            if (c == '#' && !in_str) break;
            body += c;
        }
        body = detail::toml_strip(body);
        if (body.empty()) continue;
        const std::size_t eq = body.find('=');
        if (eq == std::string::npos)
            throw ParseError(where + ": expected 'key = value'");
        const std::string key = detail::toml_strip(body.substr(0, eq));
        const std::string val = detail::toml_strip(body.substr(eq + 1));
        if (key.empty()) throw ParseError(where + ": empty key");
        if (out.count(key)) throw ParseError(where + ": duplicate key '" + key + "'");
        if (!val.empty() && val.front() == '[') {
            if (val.back() != ']') throw ParseError(where + ": unterminated array");
            std::vector<std::string> parts;
            std::string cur;
            bool str = false;
            for (std::size_t i = 1; i + 1 < val.size(); ++i) {
                const char c = val[i];
                if (c == '"') str = !str;
                if (c == ',' && !str) {
                    parts.push_back(cur);
                    cur.clear();
                } else {
                    cur += c;
                }
            }
            if (!detail::toml_strip(cur).empty()) parts.push_back(cur);
            std::vector<double> nums;
            std::vector<std::string> strs;
            bool numeric = true;
            for (const auto& p : parts) {
                const TomlValue v = detail::parse_toml_scalar(p, where);
                if (std::holds_alternative<double>(v) && numeric) {
                    nums.push_back(std::get<double>(v));
                } else if (std::holds_alternative<std::string>(v)) {
                    numeric = false;
                    strs.push_back(std::get<std::string>(v));
                } else {
                    throw ParseError(where + ": arrays hold numbers or strings only");
                }
            }
            if (!numeric && !nums.empty())
                throw ParseError(where + ": mixed array element types");
            if (numeric)
                out.emplace(key, std::move(nums));
            else
                out.emplace(key, std::move(strs));
        } else {
            out.emplace(key, detail::parse_toml_scalar(val, where));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

struct BenchConfig {
    ScenarioSpec scenario;
    std::optional<Quantity> quantity;  // inferred from estimators when absent
    std::vector<std::string> estimators;
    std::string sweep_variable;  // "r" | "n" | "theta"; empty = single run
    std::vector<double> sweep_values;
    int trials = 1;
    std::uint64_t base_seed = 0;
    int k = 5;
    int m = 0;
    double m_multiplier = 7.0;  // the experiments' setting
    std::string bias_table_path;
    int bias_m = 10000;
    long long bias_samples = 200000;
    BandwidthRule kde_rule = BandwidthRule::rot;
    bool jitter = false;
    unsigned workers = 0;
    bool timing = false;
    std::string format = "csv";  // or "json"
    std::string output;
};

namespace detail {

template <typename T>
const T* toml_get(const std::map<std::string, TomlValue>& m, const std::string& key) {
    const auto it = m.find(key);
    if (it == m.end()) return nullptr;
    const T* p = std::get_if<T>(&it->second);
    if (!p) throw ParseError("config key '" + key + "' has the wrong type");
    return p;
}

inline BandwidthRule kde_rule_from_string(const std::string& s) {
    if (s == "rot") return BandwidthRule::rot;
    if (s == "pow-d4") return BandwidthRule::pow_d4;
    if (s == "pow-d2") return BandwidthRule::pow_d2;
    throw ParseError("unknown kde rule '" + s + "' (want rot, pow-d4, pow-d2)");
}

}  // namespace detail

inline BenchConfig load_bench_config(const std::string& path) {
    const auto doc = parse_flat_toml(path);
    static const std::set<std::string> known = {
        "family", "func", "xdims", "r", "theta", "noise_halfwidth", "n",
        "quantity", "estimators", "sweep_variable", "sweep_values", "trials",
        "base_seed", "k", "m", "m_mult", "bias_table", "bias_m", "bias_samples",
        "kde_rule", "jitter", "workers", "timing", "format", "output"};
    for (const auto& [key, _] : doc)
        if (!known.count(key)) throw ParseError("unknown config key '" + key + "'");

    BenchConfig cfg;
    using detail::toml_get;
    if (const auto* s = toml_get<std::string>(doc, "family"))
        cfg.scenario.family = family_from_string(*s);
    if (const auto* s = toml_get<std::string>(doc, "func"))
        cfg.scenario.func = func_from_string(*s);
    if (const auto* v = toml_get<double>(doc, "xdims"))
        cfg.scenario.x_dims = static_cast<int>(*v);
    if (const auto* v = toml_get<double>(doc, "r")) cfg.scenario.r = *v;
    if (const auto* v = toml_get<double>(doc, "theta")) cfg.scenario.theta = *v;
    if (const auto* v = toml_get<double>(doc, "noise_halfwidth"))
        cfg.scenario.noise_halfwidth = *v;
    if (const auto* v = toml_get<double>(doc, "n"))
        cfg.scenario.n = static_cast<int>(*v);
    if (const auto* s = toml_get<std::string>(doc, "quantity")) {
        if (*s == "entropy")
            cfg.quantity = Quantity::entropy;
        else if (*s == "mi")
            cfg.quantity = Quantity::mutual_information;
        else
            throw ParseError("config quantity must be 'entropy' or 'mi'");
    }
    if (const auto* a = toml_get<std::vector<std::string>>(doc, "estimators"))
        cfg.estimators = *a;
    if (const auto* s = toml_get<std::string>(doc, "sweep_variable"))
        cfg.sweep_variable = *s;
    if (const auto* a = toml_get<std::vector<double>>(doc, "sweep_values"))
        cfg.sweep_values = *a;
    if (const auto* v = toml_get<double>(doc, "trials"))
        cfg.trials = static_cast<int>(*v);
    if (const auto* v = toml_get<double>(doc, "base_seed"))
        cfg.base_seed = static_cast<std::uint64_t>(*v);
    if (const auto* v = toml_get<double>(doc, "k")) cfg.k = static_cast<int>(*v);
    if (const auto* v = toml_get<double>(doc, "m")) cfg.m = static_cast<int>(*v);
    if (const auto* v = toml_get<double>(doc, "m_mult")) cfg.m_multiplier = *v;
    if (const auto* s = toml_get<std::string>(doc, "bias_table"))
        cfg.bias_table_path = *s;
    if (const auto* v = toml_get<double>(doc, "bias_m"))
        cfg.bias_m = static_cast<int>(*v);
    if (const auto* v = toml_get<double>(doc, "bias_samples"))
        cfg.bias_samples = static_cast<long long>(*v);
    if (const auto* s = toml_get<std::string>(doc, "kde_rule"))
        cfg.kde_rule = detail::kde_rule_from_string(*s);
    if (const auto* b = toml_get<bool>(doc, "jitter")) cfg.jitter = *b;
    if (const auto* v = toml_get<double>(doc, "workers"))
        cfg.workers = static_cast<unsigned>(*v);
    if (const auto* b = toml_get<bool>(doc, "timing")) cfg.timing = *b;
    if (const auto* s = toml_get<std::string>(doc, "format")) cfg.format = *s;
    if (const auto* s = toml_get<std::string>(doc, "output")) cfg.output = *s;

    if (cfg.estimators.empty())
        throw ParseError("config must list at least one estimator");
    if (cfg.trials < 1) throw ParseError("config trials must be >= 1");
    if (cfg.format != "csv" && cfg.format != "json")
        throw ParseError("config format must be 'csv' or 'json'");
    if (!cfg.sweep_variable.empty() && cfg.sweep_variable != "r" &&
        cfg.sweep_variable != "n" && cfg.sweep_variable != "theta")
        throw ParseError("sweep_variable must be r, n, or theta");
    if (!cfg.sweep_variable.empty() && cfg.sweep_values.empty())
        throw ParseError("sweep_variable set but sweep_values empty");
    return cfg;
}

inline Quantity quantity_for_estimator(const std::string& name) {
    if (name == "kl" || name == "klnn" || name == "kde") return Quantity::entropy;
    if (name == "3kl" || name == "ksg" || name == "3lnn" || name == "lnn-ksg")
        return Quantity::mutual_information;
    throw InvalidArgument("unknown estimator '" + name + "'");
}

struct ResultRow {
    std::string scenario;
    std::string estimator;
    std::optional<double> sweep_value;
    int trial = 0;  // -1 marks aggregate rows (kind set below)
    std::string aggregate_kind;
    bool ok = true;
    double estimate = 0.0;
    std::string error_kind;
    std::optional<double> truth;
    TruthKind truth_kind = TruthKind::exact;
    std::optional<double> squared_error;
    std::optional<double> runtime_ms;
    std::optional<std::uint64_t> seed;
};

inline std::string error_kind_name(const Error& e) {
    if (dynamic_cast<const DegenerateBandwidth*>(&e)) return "degenerate-bandwidth";
    if (dynamic_cast<const EmptyNeighborhood*>(&e)) return "empty-neighborhood";
    if (dynamic_cast<const SingularSigma*>(&e)) return "singular-sigma";
    if (dynamic_cast<const SingularMatrix*>(&e)) return "singular-matrix";
    if (dynamic_cast<const RecoveryFailure*>(&e)) return "recovery-failure";
    if (dynamic_cast<const UnsupportedK*>(&e)) return "unsupported-k";
    if (dynamic_cast<const MissingEntry*>(&e)) return "missing-entry";
    if (dynamic_cast<const FormMismatch*>(&e)) return "form-mismatch";
    if (dynamic_cast<const ParseError*>(&e)) return "parse-error";
    if (dynamic_cast<const EstimationFailure*>(&e)) return "estimation-failure";
    if (dynamic_cast<const Unsupported*>(&e)) return "unsupported";
    if (dynamic_cast<const InvalidArgument*>(&e)) return "invalid-argument";
    return "error";
}

/// Deterministic jitter for duplicate-laden data: magnitude 1e-10 of the
/// coordinate range, seeded independently of the sample draw.
inline void apply_jitter(PointCloud& cloud, std::uint64_t seed) {
    double lo = cloud.data()[0], hi = cloud.data()[0];
    for (double v : cloud.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double scale = std::max(hi - lo, 1e-300) * 1e-10;
    SplitMix64 rng(derive_seed(seed, 0x117));
    for (double& v : cloud.data()) v += (2.0 * rng.uniform() - 1.0) * scale;
}

struct BenchSummary {
    int rows = 0;
    int errors = 0;
    int bias_entries_computed = 0;
    std::string output_path;
};

/// One estimator on one generated instance. Inner entropy parallelism is
/// controlled by inner_workers; bench runs trials as the parallel unit.
inline double run_estimator(const std::string& name, const ScenarioData& data,
                            const BenchConfig& cfg, const BiasTable& table,
                            std::uint64_t seed, unsigned inner_workers = 1) {
    EstimatorConfig ecfg;
    ecfg.k = cfg.k;
    ecfg.m = cfg.m;
    ecfg.m_multiplier = cfg.m_multiplier;
    ecfg.bias_source = BiasSource::table;
    ecfg.bias_table = &table;
    ecfg.seed = seed;
    ecfg.workers = inner_workers;
    if (name == "kl") return entropy_kl(data.cloud, cfg.k, ecfg).value;
    if (name == "klnn") return entropy_klnn(data.cloud, ecfg).value;
    if (name == "kde") {
        KdeBandwidth bw;
        bw.rule = cfg.kde_rule;
        return entropy_kde(data.cloud, bw, ecfg).value;
    }
    const int dx = data.dims_x;
    const int dy = data.cloud.d() - data.dims_x;
    if (dy < 1)
        throw InvalidArgument("run_estimator: scenario has no Y block for MI");
    JointSample js(slice_cols(data.cloud, 0, dx), slice_cols(data.cloud, dx, dy));
    if (name == "3kl") return mi_3kl(js, cfg.k, ecfg).value;
    if (name == "ksg") return mi_ksg(js, cfg.k, ecfg).value;
    MiConfig mcfg;
    mcfg.entropy = ecfg;
    if (name == "3lnn") return mi_3lnn(js, mcfg).value;
    if (name == "lnn-ksg") return mi_lnn_ksg(js, mcfg).value;
    throw InvalidArgument("unknown estimator '" + name + "'");
}

namespace detail {

struct TrialOutcome {
    bool ok = true;
    double estimate = 0.0;
    std::string error_kind;
    double runtime_ms = 0.0;
};

inline ScenarioSpec sweep_apply(const ScenarioSpec& base, const std::string& var,
                                double value) {
    ScenarioSpec s = base;
    if (var == "r")
        s.r = value;
    else if (var == "n")
        s.n = static_cast<int>(value);
    else if (var == "theta")
        s.theta = value;
    return s;
}

inline void write_csv_field(std::ostream& os, const std::optional<double>& v) {
    if (v) os << csv::format_double(*v);
}

}  // namespace detail

inline BenchSummary run_bench(const BenchConfig& cfg, const std::string& out_path) {
    if (cfg.estimators.empty()) throw InvalidArgument("run_bench: no estimators");
    Quantity quantity = cfg.quantity.value_or(quantity_for_estimator(cfg.estimators[0]));
    for (const auto& e : cfg.estimators)
        if (quantity_for_estimator(e) != quantity)
            throw InvalidArgument("run_bench: estimator '" + e +
                                  "' does not match the run's quantity");

    // resolve the bias constants the estimator set needs
    BiasTable table;
    if (!cfg.bias_table_path.empty()) table = load_bias_table_file(cfg.bias_table_path);
    std::set<int> needed_dims;
    const ScenarioSpec probe = cfg.scenario;
    {
        // dimensions depend only on the family, not on sweep values
        ScenarioSpec tmp = probe;
        tmp.n = std::max(tmp.n, 2);
        tmp.validate();
        const ScenarioData sample = generate(tmp);
        const int dx = sample.dims_x;
        const int dy = sample.cloud.d() - sample.dims_x;
        for (const auto& e : cfg.estimators) {
            if (e == "klnn") needed_dims.insert(sample.cloud.d());
            if (e == "3lnn") {
                needed_dims.insert(dx);
                needed_dims.insert(dy);
                needed_dims.insert(dx + dy);
            }
            if (e == "lnn-ksg") needed_dims.insert(dx + dy);
        }
    }
    int computed = 0;
    for (int d : needed_dims) {
        if (table.find(cfg.k, d)) continue;
        BiasOptions opts;
        opts.workers = cfg.workers;
        table.insert(bias_constant(
            cfg.k, d, cfg.bias_m, cfg.bias_samples,
            derive_seed(cfg.base_seed, 0xB1A5C0DEULL + static_cast<std::uint64_t>(d)),
            opts));
        ++computed;
    }

    std::string sweep_var = cfg.sweep_variable;
    std::vector<double> values = cfg.sweep_values;
    if (values.empty()) values.push_back(0.0);

    const std::size_t n_vals = values.size();
    const std::size_t n_trials = static_cast<std::size_t>(cfg.trials);
    const std::size_t n_est = cfg.estimators.size();

    std::vector<detail::TrialOutcome> outcomes(n_vals * n_trials * n_est);
    std::vector<std::uint64_t> seeds(n_vals * n_trials);
    std::vector<std::optional<double>> truths(n_vals);
    std::vector<TruthKind> truth_kinds(n_vals, TruthKind::exact);

    for (std::size_t vi = 0; vi < n_vals; ++vi) {
        const ScenarioSpec spec = detail::sweep_apply(cfg.scenario, sweep_var, values[vi]);
        try {
            const GroundTruth t = ground_truth(spec, quantity);
            truths[vi] = t.value;
            truth_kinds[vi] = t.kind;
        } catch (const Unsupported&) {
        }
    }

    parallel_for(
        n_vals * n_trials,
        [&](std::size_t lo, std::size_t hi) {
            for (std::size_t task = lo; task < hi; ++task) {
                const std::size_t vi = task / n_trials;
                const std::size_t ti = task % n_trials;
                ScenarioSpec spec = detail::sweep_apply(cfg.scenario, sweep_var, values[vi]);
                const std::uint64_t seed =
                    derive_seed(cfg.base_seed, vi * 0x10001ULL + ti);
                spec.seed = seed;
                seeds[task] = seed;
                ScenarioData data = generate(spec);
                if (cfg.jitter) apply_jitter(data.cloud, seed);
                const unsigned inner = n_vals * n_trials == 1 ? cfg.workers : 1;
                for (std::size_t ei = 0; ei < n_est; ++ei) {
                    detail::TrialOutcome& out = outcomes[(ei * n_vals + vi) * n_trials + ti];
                    const auto t0 = std::chrono::steady_clock::now();
                    try {
                        out.estimate =
                            run_estimator(cfg.estimators[ei], data, cfg, table, seed, inner);
                    } catch (const Error& err) {
                        out.ok = false;
                        out.error_kind = error_kind_name(err);
                    }
                    out.runtime_ms =
                        std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
                }
            }
        },
        // trials are the parallel unit; nested estimator parallelism is
        // disabled inside run_estimator when outer workers > 1
        cfg.workers);

    // assemble rows ordered by (estimator, sweep value, trial)
    std::vector<ResultRow> rows;
    std::vector<ResultRow> aggregates;
    int errors = 0;
    const std::string scenario_id = cfg.scenario.id();
    for (std::size_t ei = 0; ei < n_est; ++ei) {
        for (std::size_t vi = 0; vi < n_vals; ++vi) {
            Welford est_acc;
            Welford sq_acc;
            for (std::size_t ti = 0; ti < n_trials; ++ti) {
                const detail::TrialOutcome& o = outcomes[(ei * n_vals + vi) * n_trials + ti];
                ResultRow row;
                row.scenario = scenario_id;
                row.estimator = cfg.estimators[ei];
                if (!sweep_var.empty()) row.sweep_value = values[vi];
                row.trial = static_cast<int>(ti);
                row.ok = o.ok;
                row.estimate = o.estimate;
                row.error_kind = o.error_kind;
                row.truth = truths[vi];
                row.truth_kind = truth_kinds[vi];
                if (o.ok && truths[vi] && truth_kinds[vi] != TruthKind::upper_bound) {
                    const double diff = o.estimate - *truths[vi];
                    row.squared_error = diff * diff;
                    sq_acc.add(diff * diff);
                }
                if (cfg.timing) row.runtime_ms = o.runtime_ms;
                row.seed = seeds[vi * n_trials + ti];
                if (o.ok)
                    est_acc.add(o.estimate);
                else
                    ++errors;
                rows.push_back(std::move(row));
            }
            auto make_agg = [&](const std::string& kind, double value, bool have) {
                ResultRow row;
                row.scenario = scenario_id;
                row.estimator = cfg.estimators[ei];
                if (!sweep_var.empty()) row.sweep_value = values[vi];
                row.trial = -1;
                row.aggregate_kind = kind;
                row.ok = have;
                row.estimate = value;
                row.truth = truths[vi];
                row.truth_kind = truth_kinds[vi];
                return row;
            };
            if (est_acc.count > 0) {
                aggregates.push_back(make_agg("mean", est_acc.mean, true));
                if (sq_acc.count > 0)
                    aggregates.push_back(make_agg("mse", sq_acc.mean, true));
                aggregates.push_back(make_agg("stderr", est_acc.std_error(), true));
            }
        }
    }

    BenchSummary summary;
    summary.rows = static_cast<int>(rows.size());
    summary.errors = errors;
    summary.bias_entries_computed = computed;
    summary.output_path = out_path;

    if (cfg.format == "json") {
        nlohmann::json root;
        root["schema"] = "bench-result/1";
        root["errors"] = errors;
        auto row_json = [](const ResultRow& r) {
            nlohmann::json j;
            j["scenario"] = r.scenario;
            j["estimator"] = r.estimator;
            if (r.sweep_value) j["sweep_value"] = *r.sweep_value;
            if (r.trial >= 0)
                j["trial"] = r.trial;
            else
                j["aggregate"] = r.aggregate_kind;
            if (r.ok)
                j["estimate"] = r.estimate;
            else
                j["error"] = r.error_kind;
            if (r.truth) {
                j["truth"] = *r.truth;
                j["truth_kind"] = r.truth_kind == TruthKind::exact
                                      ? "exact"
                                      : (r.truth_kind == TruthKind::upper_bound
                                             ? "upper-bound"
                                             : "numeric");
            }
            if (r.squared_error) j["squared_error"] = *r.squared_error;
            if (r.runtime_ms) j["runtime_ms"] = *r.runtime_ms;
            if (r.seed) j["seed"] = *r.seed;
            return j;
        };
        root["rows"] = nlohmann::json::array();
        for (const auto& r : rows) root["rows"].push_back(row_json(r));
        root["aggregates"] = nlohmann::json::array();
        for (const auto& r : aggregates) root["aggregates"].push_back(row_json(r));
        std::ofstream out(out_path);
        if (!out) throw ParseError("cannot open '" + out_path + "' for writing");
        out << root.dump(2) << "\n";
        return summary;
    }

    std::ofstream out(out_path);
    if (!out) throw ParseError("cannot open '" + out_path + "' for writing");
    out << "scenario,estimator,sweep_value,trial,estimate,truth,squared_error,runtime_ms,seed\n";
    auto emit = [&](const ResultRow& r) {
        out << r.scenario << ',' << r.estimator << ',';
        detail::write_csv_field(out, r.sweep_value);
        out << ',';
        if (r.trial >= 0)
            out << r.trial;
        else
            out << r.aggregate_kind;
        out << ',';
        if (r.ok)
            out << csv::format_double(r.estimate);
        else
            out << "error:" << r.error_kind;
        out << ',';
        if (r.truth) {
            if (r.truth_kind == TruthKind::upper_bound) out << "<=";
            out << csv::format_double(*r.truth);
        }
        out << ',';
        detail::write_csv_field(out, r.squared_error);
        out << ',';
        detail::write_csv_field(out, r.runtime_ms);
        out << ',';
        if (r.seed) out << *r.seed;
        out << '\n';
    };
    for (const auto& r : rows) emit(r);
    for (const auto& r : aggregates) emit(r);
    return summary;
}

}  // namespace klnn
