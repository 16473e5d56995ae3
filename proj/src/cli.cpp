#include "ipsi/cli.hpp"

#include "ipsi/baselines.hpp"
#include "ipsi/longitudinal.hpp"
#include "ipsi/normal.hpp"
#include "ipsi/simulate.hpp"
#include "ipsi/single.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <set>

namespace ipsi::cli {

using nlohmann::json;

namespace {

const std::set<std::string> kCommands = {"simulate", "estimate", "test-null", "compare"};

std::string shortest(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double number(const json& j)
{
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json finite_or_null(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

void write_json(const std::filesystem::path& path, const json& j)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw Error("write failed for " + path.string());
}

json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
}

LearnerSpec resolve_learner(const std::string& text, const RunConfig& config, bool propensity)
{
    if (text != "oracle") return parse_learner(text);
    if (config.preset.empty()) throw ArgumentError("the oracle learner needs --preset to name the true model");
    const OracleLearners oracles = oracle_nuisances(preset(config.preset));
    return propensity ? oracles.pi : oracles.mu;
}

// Loaded sample, either single-time-point or longitudinal.
struct Sample {
    int periods = 1;
    bool point = true;
    PointData points;
    Panel panel;

    Index size() const { return point ? points.size() : panel.size(); }
    double mean_outcome() const { return point ? points.y.mean() : panel.y.mean(); }
};

Sample load_sample(const std::filesystem::path& path)
{
    Sample s;
    const int periods = infer_periods(path);
    if (periods == 0) {
        s.points = load_point_csv(path);
        validate(s.points);
        s.panel = to_panel(s.points);
    } else {
        s.point = false;
        s.periods = periods;
        s.panel = load_panel_csv(path, periods);
        validate(s.panel);
    }
    return s;
}

struct Fit {
    IFMatrix influence;
    Vector ipw;
    Vector ipw_se;
    Matrix pi_hat;   // n x T
    std::optional<NuisanceFit> point_nuisances;
    int fallbacks = 0;
};

Fit fit_incremental(const Sample& s, const DeltaGrid& grid, const FoldAssignment& folds, const LearnerSpec& spec_pi,
                    const LearnerSpec& spec_mu)
{
    Fit fit;
    const Index n = s.size();
    if (s.point) {
        OneStepResult r = estimate_onestep_crossfit(s.points, folds, spec_pi, spec_mu, grid);
        fit.influence = std::move(r.influence);
        fit.pi_hat = r.nuisances.pi_hat;
        fit.ipw = estimate_ipw(r.nuisances, s.points, grid);
        fit.fallbacks = static_cast<int>(r.nuisances.diagnostics.empty_treated_folds.size() +
                                         r.nuisances.diagnostics.empty_control_folds.size());
        fit.point_nuisances = std::move(r.nuisances);
    } else {
        EIFResult r = estimate_eif_crossfit_tv(s.panel, folds, spec_pi, spec_mu, grid);
        fit.influence = std::move(r.influence);
        fit.pi_hat = r.nuisances.pi_hat;
        fit.ipw = estimate_ipw_tv(s.panel, fit.pi_hat, grid);
        fit.fallbacks = r.nuisances.fallback_count;
    }
    fit.ipw_se.resize(grid.size());
    const int T = s.panel.periods();
    for (Index j = 0; j < grid.size(); ++j) {
        Vector terms(n);
        for (Index i = 0; i < n; ++i) {
            double w = 1.0;
            for (int t = 0; t < T; ++t)
                w *= ipw_factor(static_cast<int>(s.panel.a(i, t)), fit.pi_hat(i, t), grid[j]);
            terms(i) = w * s.panel.y(i);
        }
        const double sd = std::sqrt((terms.array() - terms.mean()).square().sum() / (n - 1.0));
        fit.ipw_se(j) = sd / std::sqrt(static_cast<double>(n));
    }
    return fit;
}

struct Truth {
    DeltaGrid grid;
    Vector psi;
    std::optional<double> treated;
    std::optional<double> control;

    std::optional<double> psi_at(double delta) const
    {
        const Index j = grid.find(delta);
        if (j < 0) return std::nullopt;
        return psi(j);
    }
};

json oracle_json(const OracleResult& r)
{
    json j = {{"value", finite_or_null(r.value)}, {"method", to_string(r.method)}, {"defined", r.defined}};
    if (r.method == OracleMethod::monte_carlo) {
        j["draws"] = r.draws;
        j["se"] = r.se;
    }
    return j;
}

OracleMethod preferred_method(const DGPSpec& dgp)
{
    if (dgp.discrete() && dgp.discrete_model().enumeration_terms() <= kEnumerationGuard) return OracleMethod::exact;
    return OracleMethod::monte_carlo;
}

json truth_json(const DGPSpec& dgp, const DeltaGrid& grid, std::uint64_t seed, std::ostream& log)
{
    const OracleMethod method = preferred_method(dgp);
    log << "[simulate] oracle psi on " << grid.size() << " grid points (" << to_string(method) << ")\n";
    json records = json::array();
    for (double delta : grid.values()) {
        json r = oracle_json(oracle_psi(dgp, delta, method, kDefaultOracleDraws, seed));
        r["delta"] = delta;
        records.push_back(std::move(r));
    }
    return {{"preset", dgp.name},
            {"periods", dgp.periods},
            {"psi", records},
            {"treated_mean", oracle_json(oracle_static_mean(dgp, 1, method, kDefaultOracleDraws, seed))},
            {"control_mean", oracle_json(oracle_static_mean(dgp, 0, method, kDefaultOracleDraws, seed))}};
}

Truth parse_truth(const json& j)
{
    Truth truth;
    std::vector<double> deltas;
    std::vector<double> values;
    for (const auto& r : j.at("psi")) {
        deltas.push_back(r.at("delta").get<double>());
        values.push_back(number(r.at("value")));
    }
    truth.grid = DeltaGrid(deltas);
    truth.psi = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
    auto endpoint = [&](const char* key) -> std::optional<double> {
        const auto& e = j.at(key);
        if (!e.at("defined").get<bool>()) return std::nullopt;
        return number(e.at("value"));
    };
    truth.treated = endpoint("treated_mean");
    truth.control = endpoint("control_mean");
    return truth;
}

Truth truth_from_dgp(const DGPSpec& dgp, const DeltaGrid& grid, std::uint64_t seed)
{
    const OracleMethod method = preferred_method(dgp);
    Truth truth;
    truth.grid = grid;
    truth.psi.resize(grid.size());
    for (Index j = 0; j < grid.size(); ++j)
        truth.psi(j) = oracle_psi(dgp, grid[j], method, kDefaultOracleDraws, seed).value;
    const OracleResult y1 = oracle_static_mean(dgp, 1, method, kDefaultOracleDraws, seed);
    const OracleResult y0 = oracle_static_mean(dgp, 0, method, kDefaultOracleDraws, seed);
    if (y1.defined) truth.treated = y1.value;
    if (y0.defined) truth.control = y0.value;
    return truth;
}

struct Row {
    std::string estimator;
    std::optional<double> delta;
    double estimate = 0.0;
    double se = 0.0;
    std::optional<double> truth;
    int clipped = 0;
    bool defined = true;
};

std::vector<Row> compare_rows(const Sample& s, const DeltaGrid& grid, const RunConfig& config,
                              const std::optional<Truth>& truth, std::ostream& log)
{
    const LearnerSpec spec_pi = resolve_learner(config.learner_pi, config, true);
    const LearnerSpec spec_mu = resolve_learner(config.learner_mu, config, false);
    const FoldAssignment folds = assign_folds(s.size(), config.k_folds, config.seed);
    const Fit fit = fit_incremental(s, grid, folds, spec_pi, spec_mu);
    const Vector psi = fit.influence.column_means();
    const Vector sigma = variance_estimate(fit.influence);
    const double root_n = std::sqrt(static_cast<double>(s.size()));

    std::vector<Row> rows;
    for (Index j = 0; j < grid.size(); ++j) {
        const std::optional<double> t = truth ? truth->psi_at(grid[j]) : std::nullopt;
        rows.push_back({"incremental_onestep", grid[j], psi(j), sigma(j) / root_n, t, 0, true});
        rows.push_back({"incremental_ipw", grid[j], fit.ipw(j), fit.ipw_se(j), t, 0, true});
    }

    std::optional<double> contrast;
    if (truth && truth->treated && truth->control) contrast = *truth->treated - *truth->control;
    const int T = s.panel.periods();
    for (const auto& [name, kind] : {std::pair{"msm_standard", MSMWeightKind::standard},
                                     std::pair{"msm_stabilized", MSMWeightKind::stabilized}}) {
        const MSMWeights w = msm_weights(s.panel, fit.pi_hat, kind);
        Row row{name, std::nullopt, 0.0, 0.0, contrast, w.clipped, true};
        try {
            const MSMFit msm = fit_msm(s.panel, w.weights);
            row.estimate = T * msm.beta(1);
            row.se = T * msm.se(1);
        } catch (const SingularityError& e) {
            log << "[compare] " << name << ": " << e.what() << '\n';
            row.estimate = row.se = std::numeric_limits<double>::quiet_NaN();
        }
        rows.push_back(row);
    }

    if (s.point) {
        const ATEEstimate ate = ate_aipw(*fit.point_nuisances, s.points, config.alpha);
        const bool undefined = truth && !contrast;
        rows.push_back({"ate_aipw", std::nullopt, ate.estimate, ate.se, contrast, ate.clipped, !undefined});
    }
    return rows;
}

json row_json(const Row& r)
{
    json j = {{"estimator", r.estimator}, {"clipped", r.clipped}};
    if (r.delta) j["delta"] = *r.delta;
    if (!r.defined) {
        j["status"] = "undefined";
        j["estimate"] = nullptr;
        return j;
    }
    j["status"] = "ok";
    j["estimate"] = finite_or_null(r.estimate);
    j["se"] = finite_or_null(r.se);
    if (r.truth) {
        j["oracle"] = finite_or_null(*r.truth);
        j["bias"] = finite_or_null(r.estimate - *r.truth);
    }
    return j;
}

// Grid point closest to delta on the log scale.
Index nearest(const DeltaGrid& grid, double delta)
{
    Index best = 0;
    for (Index j = 1; j < grid.size(); ++j)
        if (std::abs(std::log(grid[j] / delta)) < std::abs(std::log(grid[best] / delta))) best = j;
    return best;
}

json replication_report(const RunConfig& config, const DeltaGrid& grid, std::ostream& log)
{
    const DGPSpec dgp = preset(config.preset);
    log << "[compare] computing oracle values for " << dgp.name << '\n';
    const Truth truth = truth_from_dgp(dgp, grid, config.seed);
    std::vector<std::vector<Row>> runs;
    for (int r = 0; r < config.replications; ++r) {
        Sample s;
        const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(r);
        s.periods = dgp.periods;
        s.panel = generate_panel(dgp, config.n, seed);
        if (dgp.periods == 1) s.points = to_point_data(s.panel);
        else s.point = false;
        RunConfig rc = config;
        rc.seed = seed;
        runs.push_back(compare_rows(s, grid, rc, truth, log));
        if ((r + 1) % 10 == 0 || r + 1 == config.replications)
            log << "[compare] replication " << r + 1 << "/" << config.replications << '\n';
    }

    json table = json::array();
    const std::size_t count = runs.front().size();
    std::vector<double> sds(count, 0.0);
    for (std::size_t k = 0; k < count; ++k) {
        const Row& first = runs.front()[k];
        Vector est(config.replications), se(config.replications);
        int clipped = 0;
        for (int r = 0; r < config.replications; ++r) {
            est(r) = runs[static_cast<std::size_t>(r)][k].estimate;
            se(r) = runs[static_cast<std::size_t>(r)][k].se;
            clipped += runs[static_cast<std::size_t>(r)][k].clipped;
        }
        json j = {{"estimator", first.estimator}, {"clipped", clipped}, {"replications", config.replications}};
        if (first.delta) j["delta"] = *first.delta;
        if (!first.defined) {
            j["status"] = "undefined";
            table.push_back(std::move(j));
            continue;
        }
        const double mean = est.mean();
        sds[k] = config.replications > 1
                     ? std::sqrt((est.array() - mean).square().sum() / (config.replications - 1.0))
                     : std::numeric_limits<double>::quiet_NaN();
        j["status"] = "ok";
        j["mean_estimate"] = finite_or_null(mean);
        j["mc_sd"] = finite_or_null(sds[k]);
        j["mean_se"] = finite_or_null(se.mean());
        if (first.truth) {
            j["oracle"] = finite_or_null(*first.truth);
            j["bias"] = finite_or_null(mean - *first.truth);
        }
        table.push_back(std::move(j));
    }

    const Index ref = nearest(grid, 2.0);
    double incremental_sd = std::numeric_limits<double>::quiet_NaN(), msm_sd = incremental_sd, stab_sd = incremental_sd;
    for (std::size_t k = 0; k < count; ++k) {
        const Row& row = runs.front()[k];
        if (row.estimator == "incremental_onestep" && row.delta && *row.delta == grid[ref]) incremental_sd = sds[k];
        if (row.estimator == "msm_standard") msm_sd = sds[k];
        if (row.estimator == "msm_stabilized") stab_sd = sds[k];
    }
    return {{"command", "compare"},
            {"preset", dgp.name},
            {"n", config.n},
            {"seed", config.seed},
            {"K", config.k_folds},
            {"replications", config.replications},
            {"estimators", table},
            {"reference_delta", grid[ref]},
            {"msm_standard_to_incremental_sd_ratio", finite_or_null(msm_sd / incremental_sd)},
            {"msm_stabilized_to_incremental_sd_ratio", finite_or_null(stab_sd / incremental_sd)}};
}

CurveEstimate estimate_curve(const RunConfig& config, json& meta, std::ostream& log, const char* stage)
{
    const DeltaGrid grid = config.grid.build();
    const LearnerSpec spec_pi = resolve_learner(config.learner_pi, config, true);
    const LearnerSpec spec_mu = resolve_learner(config.learner_mu, config, false);
    const Sample s = load_sample(config.input);
    log << "[" << stage << "] loaded " << s.size() << " subjects, T=" << s.periods << '\n';
    const FoldAssignment folds = assign_folds(s.size(), config.k_folds, config.seed);
    log << "[" << stage << "] cross-fitting nuisances (K=" << config.k_folds << ")\n";
    const Fit fit = fit_incremental(s, grid, folds, spec_pi, spec_mu);
    log << "[" << stage << "] multiplier bootstrap (B=" << config.bootstrap_b << ")\n";
    CurveEstimate curve = build_curve(fit.influence, config.alpha, config.bootstrap_b, config.seed);
    meta = {{"input", config.input.string()},
            {"periods", s.periods},
            {"K", config.k_folds},
            {"seed", config.seed},
            {"bootstrap_b", config.bootstrap_b},
            {"learner_pi", spec_pi.describe()},
            {"learner_mu", spec_mu.describe()},
            {"nuisance_fallbacks", fit.fallbacks}};
    return curve;
}

} // namespace

DeltaGrid GridSpec::build() const
{
    return log ? DeltaGrid::log_spaced(min, max, points) : DeltaGrid::linear_spaced(min, max, points);
}

void RunConfig::validate() const
{
    if (!kCommands.contains(command)) throw ArgumentError("unknown command '" + command + "'");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("--alpha must lie in (0, 1)");
    if (bootstrap_b < 1) throw ArgumentError("--bootstrap-b must be positive");
    if (k_folds < 2) throw ArgumentError("--k-folds must be at least 2");
    if (n < 1) throw ArgumentError("--n must be positive");
    if (replications < 0) throw ArgumentError("--replications must be non-negative");
    grid.build();
    if (command != "simulate") {
        resolve_learner(learner_pi, *this, true);
        resolve_learner(learner_mu, *this, false);
    }
    if (command == "simulate") {
        if (preset.empty()) throw ArgumentError("simulate requires --preset");
        ipsi::preset(preset);
        if (output.empty()) throw ArgumentError("simulate requires --output");
    } else if (command == "compare" && replications > 0) {
        if (preset.empty()) throw ArgumentError("compare --replications requires --preset");
        ipsi::preset(preset);
    } else if (input.empty()) {
        throw ArgumentError(command + " requires --input");
    }
}

json curve_to_json(const CurveEstimate& curve)
{
    json records = json::array();
    for (Index j = 0; j < curve.grid.size(); ++j) {
        const auto& p = curve.pointwise[static_cast<std::size_t>(j)];
        const auto& u = curve.uniform[static_cast<std::size_t>(j)];
        records.push_back({{"delta", curve.grid[j]},
                           {"psi_hat", curve.psi(j)},
                           {"sigma_hat", curve.sigma(j)},
                           {"ci_lo", p.lo},
                           {"ci_hi", p.hi},
                           {"band_lo", u.lo},
                           {"band_hi", u.hi}});
    }
    return {{"records", records},
            {"c_alpha", curve.c_alpha},
            {"alpha", curve.alpha},
            {"p_value", curve.p_value},
            {"n", curve.n},
            {"bootstrap_sup", curve.bootstrap_sup}};
}

CurveEstimate curve_from_json(const json& j)
{
    CurveEstimate curve;
    try {
        const auto& records = j.at("records");
        const auto m = static_cast<Index>(records.size());
        std::vector<double> deltas;
        curve.psi.resize(m);
        curve.sigma.resize(m);
        for (Index k = 0; k < m; ++k) {
            const auto& r = records[static_cast<std::size_t>(k)];
            deltas.push_back(r.at("delta").get<double>());
            curve.psi(k) = number(r.at("psi_hat"));
            curve.sigma(k) = number(r.at("sigma_hat"));
            curve.pointwise.push_back({number(r.at("ci_lo")), number(r.at("ci_hi"))});
            curve.uniform.push_back({number(r.at("band_lo")), number(r.at("band_hi"))});
        }
        curve.grid = DeltaGrid(deltas);
        curve.c_alpha = number(j.at("c_alpha"));
        curve.alpha = j.at("alpha").get<double>();
        curve.p_value = number(j.at("p_value"));
        curve.n = j.at("n").get<Index>();
        curve.bootstrap_sup = j.at("bootstrap_sup").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("curve JSON: ") + e.what());
    }
    return curve;
}

std::filesystem::path truth_sidecar_path(const std::filesystem::path& data_path)
{
    return std::filesystem::path(data_path.string() + ".truth.json");
}

std::filesystem::path plot_csv_path(const std::filesystem::path& output_path)
{
    std::filesystem::path p = output_path;
    return p.replace_extension(".plot.csv");
}

void cmd_simulate(const RunConfig& config, std::ostream& log)
{
    config.validate();
    const DGPSpec dgp = preset(config.preset);
    const DeltaGrid grid = config.grid.build();
    log << "[simulate] generating " << config.n << " subjects from " << dgp.name << '\n';
    if (dgp.periods == 1) write_point_csv(config.output, generate_points(dgp, config.n, config.seed));
    else write_panel_csv(config.output, generate_panel(dgp, config.n, config.seed));
    json truth = truth_json(dgp, grid, config.seed, log);
    truth["n"] = config.n;
    truth["seed"] = config.seed;
    write_json(truth_sidecar_path(config.output), truth);
    log << "[simulate] wrote " << config.output.string() << " and " << truth_sidecar_path(config.output).string()
        << '\n';
}

json cmd_estimate(const RunConfig& config, std::ostream& log)
{
    config.validate();
    json meta;
    const CurveEstimate curve = estimate_curve(config, meta, log, "estimate");
    json out = curve_to_json(curve);
    out["command"] = "estimate";
    out.update(meta);
    if (!config.output.empty()) {
        write_json(config.output, out);
        const auto plot = plot_csv_path(config.output);
        std::ofstream csv(plot);
        if (!csv) throw Error("cannot write " + plot.string());
        csv << "delta,psi_hat,ci_lo,ci_hi,band_lo,band_hi\n";
        for (Index j = 0; j < curve.grid.size(); ++j) {
            const auto& p = curve.pointwise[static_cast<std::size_t>(j)];
            const auto& u = curve.uniform[static_cast<std::size_t>(j)];
            csv << shortest(curve.grid[j]) << ',' << shortest(curve.psi(j)) << ',' << shortest(p.lo) << ','
                << shortest(p.hi) << ',' << shortest(u.lo) << ',' << shortest(u.hi) << '\n';
        }
        if (!csv) throw Error("write failed for " + plot.string());
        log << "[estimate] wrote " << config.output.string() << " and " << plot.string() << '\n';
    }
    return out;
}

json cmd_test_null(const RunConfig& config, std::ostream& log)
{
    config.validate();
    json meta;
    const CurveEstimate curve = estimate_curve(config, meta, log, "test-null");
    json out = {{"command", "test-null"},
                {"p_value", curve.p_value},
                {"alpha", curve.alpha},
                {"reject", curve.p_value < curve.alpha},
                {"c_alpha", curve.c_alpha},
                {"threshold", finite_or_null(horizontal_line_threshold(curve))},
                {"n", curve.n},
                {"grid_points", curve.grid.size()}};
    out.update(meta);
    if (!config.output.empty()) write_json(config.output, out);
    return out;
}

json cmd_compare(const RunConfig& config, std::ostream& log)
{
    config.validate();
    const DeltaGrid grid = config.grid.build();
    json out;
    if (config.replications > 0) {
        out = replication_report(config, grid, log);
    } else {
        const Sample s = load_sample(config.input);
        log << "[compare] loaded " << s.size() << " subjects, T=" << s.periods << '\n';
        const auto truth_path = config.truth.empty() ? truth_sidecar_path(config.input) : config.truth;
        std::optional<Truth> truth;
        if (std::filesystem::exists(truth_path)) {
            truth = parse_truth(read_json(truth_path));
        } else {
            log << "[compare] no truth sidecar at " << truth_path.string()
                << "; reporting estimates without oracle comparisons\n";
        }
        json rows = json::array();
        for (const Row& r : compare_rows(s, grid, config, truth, log)) rows.push_back(row_json(r));
        out = {{"command", "compare"},
               {"input", config.input.string()},
               {"periods", s.periods},
               {"n", s.size()},
               {"K", config.k_folds},
               {"seed", config.seed},
               {"truth", truth ? json(truth_path.string()) : json(nullptr)},
               {"estimators", rows}};
    }
    if (!config.output.empty()) write_json(config.output, out);
    return out;
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err)
{
    try {
        json result;
        if (config.command == "simulate") {
            cmd_simulate(config, err);
            return 0;
        }
        if (config.command == "estimate") result = cmd_estimate(config, err);
        else if (config.command == "test-null") result = cmd_test_null(config, err);
        else if (config.command == "compare") result = cmd_compare(config, err);
        else throw ArgumentError("unknown command '" + config.command + "'");
        if (config.output.empty()) out << result.dump(2) << '\n';
        return 0;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    }
}

} // namespace ipsi::cli
