#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "klnn/error.hpp"
#include "klnn/linalg.hpp"
#include "klnn/parallel.hpp"
#include "klnn/rng.hpp"
#include "klnn/special.hpp"

namespace klnn {

/// Exponent convention for the order-statistic sums. The sample-side moments
/// use distance ratios rho_j/rho_k, whose limit is (T_j/T_k)^{1/d}; the
/// appendix-scaled form applies that 1/d. The main-text form (exponents taken
/// directly on T_j/T_k) coincides with it only at d = 1 and is kept
/// selectable for diagnosis.
enum class ExponentForm { appendix_scaled, main_text };

inline const char* to_string(ExponentForm f) {
    return f == ExponentForm::appendix_scaled ? "appendix-scaled" : "main-text";
}

inline ExponentForm exponent_form_from_string(const std::string& s) {
    if (s == "appendix-scaled") return ExponentForm::appendix_scaled;
    if (s == "main-text") return ExponentForm::main_text;
    throw ParseError("unknown exponent form: '" + s + "'");
}

inline constexpr double kEarlyStopWeight = 1e-12;
inline constexpr double kDefaultClamp = 1e10;
inline constexpr int kDefaultTruncation = 50000;

/// One draw of the order-statistic sums
///   S_a = sum_j xi_j^{(a)} u_j^a exp(-u_j^2 / 2),  u_j = (T_j/T_k)^{1/d},
/// with T_j the partial sums of i.i.d. Exp(1) and xi_j uniform directions.
struct OrderStatDraw {
    int k = 0;
    int d = 0;
    int m = 0;        // requested truncation
    int terms = 0;    // terms actually summed (early termination)
    double t_k = 0.0; // T_k = E_1 + ... + E_k
    Vec xi_k;
    double s0 = 0.0;
    Vec s1;
    SmallMatrix s2;
};

/// Draws E_1..E_m incrementally and accumulates the sums. Weights decay
/// monotonically past j = k, so accumulation stops once a term's kernel
/// weight drops below kEarlyStopWeight (exact to ~1e-12 against the full
/// sum); pass early_stop = false to force all m terms.
inline OrderStatDraw sample_order_stats(int k, int d, int m, SplitMix64& rng,
                                        ExponentForm form = ExponentForm::appendix_scaled,
                                        bool early_stop = true) {
    if (k < 3)
        throw UnsupportedK("sample_order_stats: k must be >= 3 (variance blows up below)");
    if (d < 1) throw InvalidArgument("sample_order_stats: d must be >= 1");
    if (m <= k) throw InvalidArgument("sample_order_stats: m must exceed k");

    OrderStatDraw out;
    out.k = k;
    out.d = d;
    out.m = m;
    out.xi_k = Vec(d);
    out.s1 = Vec(d);
    out.s2 = SmallMatrix(d);

    // first k terms must be buffered: their weights need T_k
    std::vector<double> prefix(static_cast<std::size_t>(k));
    std::vector<double> dirs(static_cast<std::size_t>(k) * d);
    double t = 0.0;
    for (int j = 0; j < k; ++j) {
        t += rng.exponential();
        prefix[static_cast<std::size_t>(j)] = t;
        rng.unit_sphere(d, dirs.begin() + static_cast<std::size_t>(j) * d);
    }
    out.t_k = t;
    for (int a = 0; a < d; ++a) out.xi_k[a] = dirs[static_cast<std::size_t>(k - 1) * d + a];

    const double inv_d = 1.0 / d;
    std::vector<double> xi(static_cast<std::size_t>(d));
    auto accumulate = [&](double t_j, const double* dir) {
        const double ratio = t_j / out.t_k;
        const double u = form == ExponentForm::appendix_scaled ? std::pow(ratio, inv_d) : ratio;
        const double w = std::exp(-0.5 * u * u);
        out.s0 += w;
        const double uw = u * w;
        const double uuw = u * uw;
        for (int a = 0; a < d; ++a) {
            out.s1[a] += dir[a] * uw;
            for (int b = a; b < d; ++b) out.s2(a, b) += dir[a] * dir[b] * uuw;
        }
        ++out.terms;
        return w;
    };

    for (int j = 0; j < k; ++j)
        accumulate(prefix[static_cast<std::size_t>(j)], dirs.data() + static_cast<std::size_t>(j) * d);

    for (int j = k + 1; j <= m; ++j) {
        t += rng.exponential();
        const double ratio = t / out.t_k;
        const double u = form == ExponentForm::appendix_scaled ? std::pow(ratio, inv_d) : ratio;
        if (early_stop && std::exp(-0.5 * u * u) < kEarlyStopWeight) break;
        rng.unit_sphere(d, xi.begin());
        accumulate(t, xi.data());
    }

    for (int a = 0; a < d; ++a)
        for (int b = 0; b < a; ++b) out.s2(a, b) = out.s2(b, a);
    return out;
}

/// The truncated log-density functional
///   h = d log||t1|| + (d/2) log 2pi - log c_d - log s0
///       + (1/2) log det(Sigma) + s1^T Sigma^{-1} s1 / (2 s0^2),
/// Sigma = s2/s0 - s1 s1^T / s0^2, clamped to [-clamp, clamp]. A singular
/// Sigma clamps to +clamp and reports through *degenerate.
inline double h_functional(const Vec& t1, double s0, const Vec& s1, const SmallMatrix& s2,
                           int d, double clamp = kDefaultClamp,
                           bool* degenerate = nullptr) {
    if (!(s0 > 0.0)) throw InvalidArgument("h_functional: s0 must be positive");
    if (t1.dim() != d || s1.dim() != d || s2.dim() != d)
        throw InvalidArgument("h_functional: dimension mismatch");
    if (degenerate) *degenerate = false;
    SmallMatrix sigma(d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
            sigma(a, b) = s2(a, b) / s0 - s1[a] * s1[b] / (s0 * s0);
    double det;
    SmallMatrix inv(d);
    try {
        std::tie(det, inv) = det_inv_sym(sigma);
    } catch (const SingularMatrix&) {
        if (degenerate) *degenerate = true;
        return clamp;
    }
    if (det <= 0.0) {
        if (degenerate) *degenerate = true;
        return clamp;
    }
    const double h = d * std::log(t1.norm()) + (d / 2.0) * kLog2Pi -
                     log_unit_ball_volume(d) - std::log(s0) + 0.5 * std::log(det) +
                     0.5 * inv.quadratic_form(s1) / (s0 * s0);
    if (h > clamp) return clamp;
    if (h < -clamp) return -clamp;
    return h;
}

/// Monte Carlo estimate of a universal bias constant, persisted in tables.
struct BiasEstimate {
    int k = 0;
    int d = 0;
    int m = 0;
    long long samples = 0;
    double mean = 0.0;
    double std_error = 0.0;
    double second_moment = 0.0;  // E[h^2], the variance-proof byproduct
    double clamp = kDefaultClamp;
    ExponentForm form = ExponentForm::appendix_scaled;
    std::uint64_t seed = 0;
    long long degenerate_count = 0;
};

struct BiasOptions {
    ExponentForm form = ExponentForm::appendix_scaled;
    double clamp = kDefaultClamp;
    unsigned workers = 0;
    int chunk = 8192;
};

/// B_{k,d} = E[ h(xi_k T_k^{1/d}, S0, S1, S2) ]. Draw i uses the stream seed
/// derive_seed(seed, i) and chunks are merged in index order, so the result
/// is bit-identical for any worker count.
inline BiasEstimate bias_constant(int k, int d, int m, long long samples,
                                  std::uint64_t seed, const BiasOptions& opts = {}) {
    if (samples < 1) throw InvalidArgument("bias_constant: samples must be >= 1");
    const int chunk = std::max(1, opts.chunk);
    const std::size_t nchunks =
        static_cast<std::size_t>((samples + chunk - 1) / chunk);
    std::vector<Welford> acc(nchunks);
    std::vector<long long> degen(nchunks, 0);

    parallel_for(
        nchunks,
        [&](std::size_t lo, std::size_t hi) {
            for (std::size_t c = lo; c < hi; ++c) {
                const long long begin = static_cast<long long>(c) * chunk;
                const long long end = std::min<long long>(samples, begin + chunk);
                for (long long i = begin; i < end; ++i) {
                    SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
                    const OrderStatDraw draw =
                        sample_order_stats(k, d, m, rng, opts.form);
                    Vec t1 = draw.xi_k;
                    t1 *= std::pow(draw.t_k, 1.0 / d);
                    bool bad = false;
                    const double h = h_functional(t1, draw.s0, draw.s1, draw.s2, d,
                                                  opts.clamp, &bad);
                    acc[c].add(h);
                    if (bad) ++degen[c];
                }
            }
        },
        opts.workers);

    Welford total;
    long long degenerate = 0;
    for (std::size_t c = 0; c < nchunks; ++c) {
        total.merge(acc[c]);
        degenerate += degen[c];
    }
    BiasEstimate est;
    est.k = k;
    est.d = d;
    est.m = m;
    est.samples = samples;
    est.mean = total.mean;
    est.std_error = total.std_error();
    est.second_moment = total.second_moment();
    est.clamp = opts.clamp;
    est.form = opts.form;
    est.seed = seed;
    est.degenerate_count = degenerate;
    return est;
}

/// Asymptotic bias of the k-NN (step kernel, degree 0) entropy estimator:
/// psi(k) - log k.
inline double kl_bias_constant(int k) {
    if (k < 1) throw InvalidArgument("kl_bias_constant: k must be >= 1");
    return digamma(static_cast<double>(k)) - std::log(static_cast<double>(k));
}

/// Closed-form CDF of R_j = (T_j / T_k)^{1/d} for j >= k:
///   F(t) = 1 - sum_{l=0}^{j-k-1} C(k-1+l, l) t^{-dk} (1 - t^{-d})^l,
/// evaluated in log space so large binomials stay finite. The survival
/// terms are the NB(k, 1 - t^{-d}) mass function: the Gamma integral gives
/// int x^{k-1+l} e^{-x t^d} dx = (k-1+l)! t^{-d(k+l)}, and the sanity case
/// j = k+1 reduces to P(R > t) = E[exp(-(t^d - 1) T_k)] = t^{-dk}.
inline double rj_cdf(int j, int k, int d, double t) {
    if (k < 1 || d < 1) throw InvalidArgument("rj_cdf: k and d must be >= 1");
    if (j < k) throw InvalidArgument("rj_cdf: requires j >= k");
    if (t < 1.0) return 0.0;
    if (j == k) return 1.0;  // R_k is identically 1
    if (t == 1.0) return 0.0;
    const double log_t = std::log(t);
    const double t_pow = std::exp(-d * log_t);          // t^{-d} in (0,1)
    const double log_one_minus = std::log1p(-t_pow);    // log(1 - t^{-d})
    const double base = -static_cast<double>(d) * k * log_t;
    const double lgk = std::lgamma(static_cast<double>(k));
    double sum = 0.0;
    for (int l = 0; l <= j - k - 1; ++l) {
        const double log_binom = std::lgamma(static_cast<double>(k + l)) -
                                 std::lgamma(static_cast<double>(l + 1)) - lgk;
        sum += std::exp(log_binom + base + l * log_one_minus);
    }
    const double f = 1.0 - sum;
    return f < 0.0 ? 0.0 : (f > 1.0 ? 1.0 : f);
}

// ---------------------------------------------------------------------------
// Bias table persistence: JSON, schema "bias-table/1".

class BiasTable {
public:
    void insert(const BiasEstimate& e) {
        for (auto& cur : entries_)
            if (cur.k == e.k && cur.d == e.d && cur.form == e.form) {
                cur = e;
                return;
            }
        entries_.push_back(e);
    }

    const std::vector<BiasEstimate>& entries() const { return entries_; }

    const BiasEstimate* find(int k, int d) const {
        for (const auto& e : entries_)
            if (e.k == k && e.d == d) return &e;
        return nullptr;
    }

    /// Lookup that enforces the exponent form the caller was built for.
    const BiasEstimate& get(int k, int d,
                            std::optional<ExponentForm> required_form =
                                ExponentForm::appendix_scaled) const {
        const BiasEstimate* found = nullptr;
        for (const auto& e : entries_) {
            if (e.k != k || e.d != d) continue;
            found = &e;
            if (!required_form || e.form == *required_form) return e;
        }
        if (found)
            throw FormMismatch("bias table entry (k=" + std::to_string(k) + ", d=" +
                               std::to_string(d) + ") has exponent form '" +
                               to_string(found->form) + "', need '" +
                               to_string(*required_form) + "'");
        throw MissingEntry("bias table has no entry for (k=" + std::to_string(k) +
                           ", d=" + std::to_string(d) + ")");
    }

private:
    std::vector<BiasEstimate> entries_;
};

namespace detail {

inline nlohmann::json to_json(const BiasEstimate& e) {
    return nlohmann::json{{"k", e.k},
                          {"d", e.d},
                          {"m", e.m},
                          {"samples", e.samples},
                          {"mean", e.mean},
                          {"stderr", e.std_error},
                          {"second_moment", e.second_moment},
                          {"clamp", e.clamp},
                          {"exponent_form", to_string(e.form)},
                          {"seed", e.seed},
                          {"degenerate_count", e.degenerate_count}};
}

template <typename T>
T require_field(const nlohmann::json& j, const char* key, std::size_t entry) {
    if (!j.contains(key))
        throw ParseError("bias table entry " + std::to_string(entry) +
                         ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("bias table entry " + std::to_string(entry) + ", field '" +
                         key + "': " + e.what());
    }
}

}  // namespace detail

inline void save_bias_table(const std::string& path, const BiasTable& table) {
    nlohmann::json root;
    root["schema"] = "bias-table/1";
    root["table"] = nlohmann::json::array();
    for (const auto& e : table.entries()) root["table"].push_back(detail::to_json(e));
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out << root.dump(2) << "\n";
}

inline BiasTable load_bias_table_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open bias table '" + path + "'");
    nlohmann::json root;
    try {
        in >> root;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("bias table '" + path + "': " + e.what());
    }
    if (!root.contains("schema") || root["schema"] != "bias-table/1")
        throw ParseError("bias table '" + path + "': missing or unknown schema (want bias-table/1)");
    if (!root.contains("table") || !root["table"].is_array())
        throw ParseError("bias table '" + path + "': missing 'table' array");
    BiasTable table;
    std::size_t idx = 0;
    for (const auto& j : root["table"]) {
        BiasEstimate e;
        e.k = detail::require_field<int>(j, "k", idx);
        e.d = detail::require_field<int>(j, "d", idx);
        e.m = detail::require_field<int>(j, "m", idx);
        e.samples = detail::require_field<long long>(j, "samples", idx);
        e.mean = detail::require_field<double>(j, "mean", idx);
        e.std_error = detail::require_field<double>(j, "stderr", idx);
        e.second_moment = detail::require_field<double>(j, "second_moment", idx);
        e.clamp = detail::require_field<double>(j, "clamp", idx);
        e.form = exponent_form_from_string(
            detail::require_field<std::string>(j, "exponent_form", idx));
        e.seed = detail::require_field<std::uint64_t>(j, "seed", idx);
        e.degenerate_count = detail::require_field<long long>(j, "degenerate_count", idx);
        table.insert(e);
        ++idx;
    }
    return table;
}

/// Load one entry, enforcing presence and (by default) the appendix-scaled
/// exponent form.
inline BiasEstimate load_bias_table(const std::string& path, int k, int d,
                                    std::optional<ExponentForm> required_form =
                                        ExponentForm::appendix_scaled) {
    return load_bias_table_file(path).get(k, d, required_form);
}

}  // namespace klnn
