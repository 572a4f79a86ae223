#include "cli.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <filesystem>
#include <fmt/format.h>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "structcox/error.hpp"
#include "structcox/grouping.hpp"
#include "structcox/model_select.hpp"
#include "structcox/optimizer.hpp"
#include "structcox/parallel.hpp"
#include "structcox/simulate.hpp"
#include "structcox/survival.hpp"
#include "structcox/survival_io.hpp"
#include "structcox/text_io.hpp"

namespace structcox::cli {

namespace {

constexpr const char* kTool = "structcox";
constexpr const char* kVersion = "1.0.0";

// Every option of every command; each command reads the ones it declares.
struct Options {
    std::string command;
    std::string data;
    std::string groups;
    std::string out_dir;
    std::string manifest;
    std::string scenario;
    std::string rule = "1se";
    double lambda = 0.0;
    FitConfig fit;
    bool standardize = false;
    bool debias = false;
    bool quiet = false;
    int threads = 0;
    int nlambda = 30;
    double min_ratio = 0.01;
    int folds = 10;
    std::uint64_t seed = 0;
    int n = 100;
    int p_main = 20;
    double censoring = 0.5;
    int replications = 1;
};

// Option values recorded in the manifest, as they would be typed.
using Resolved = std::map<std::string, std::string>;

// Flags that take no value on the command line.
bool is_flag(const std::string& name) { return name == "standardize" || name == "debias"; }

std::string sha256_file(const std::string& path)
{
    const std::string bytes = read_file(path);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        throw InputError(fmt::format("cannot hash '{}'", path));
    }
    std::string hex;
    for (unsigned int i = 0; i < length; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

struct Outputs {
    std::filesystem::path dir;

    void write(const std::string& name, std::string_view contents) const
    {
        write_file((dir / name).string(), contents);
    }
};

Outputs prepare_out_dir(const std::string& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw InputError(fmt::format("cannot create output directory '{}': {}", dir, ec.message()));
    return {dir};
}

std::string manifest_text(const Options& o, const Resolved& resolved, const nlohmann::json& metadata)
{
    nlohmann::json m;
    m["tool"] = kTool;
    m["version"] = kVersion;
    m["command"] = o.command;
    m["options"] = resolved;
    nlohmann::json inputs = nlohmann::json::object();
    if (!o.data.empty()) inputs["data"] = {{"path", o.data}, {"sha256", sha256_file(o.data)}};
    if (!o.groups.empty()) inputs["groups"] = {{"path", o.groups}, {"sha256", sha256_file(o.groups)}};
    m["inputs"] = inputs;
    if (!metadata.is_null()) m["metadata"] = metadata;
    return m.dump(2) + "\n";
}

void record_fit_config(const Options& o, Resolved& r)
{
    r["tol"] = format_double(o.fit.tol);
    r["alpha"] = format_double(o.fit.alpha);
    r["q0"] = format_double(o.fit.q0);
    r["max-iter"] = std::to_string(o.fit.max_iter);
    r["max-backtracks"] = std::to_string(o.fit.max_backtracks);
}

struct Problem {
    SurvivalDataset data;
    GroupingStructure structure;
    // Column scales when fitting on standardized data, else ones.
    Vector scale;
};

Problem load_problem(const Options& o)
{
    Problem p;
    p.data = read_dataset(o.data);
    auto structure = read_grouping(o.groups, p.data.covariate_names);
    if (!structure.variables.empty()) {
        structure = bind_to_names(structure, p.data.covariate_names);
    } else if (structure.p != p.data.num_covariates()) {
        throw InputError(fmt::format("grouping declares {} covariates but the data has {}", structure.p,
                                     p.data.num_covariates()));
    }
    require_valid(structure);
    p.structure = std::move(structure);
    p.scale = Vector::Ones(p.data.num_covariates());
    if (o.standardize) {
        auto st = standardize_columns(p.data);
        p.data = std::move(st.data);
        p.scale = st.scale;
    }
    return p;
}

std::string coefficient_table(const std::vector<std::string>& names, const Vector& beta)
{
    std::string out = "variable,beta,selected\n";
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        out += fmt::format("{},{},{}\n", names[j], format_double(beta[j]), beta[j] != 0.0 ? "true" : "false");
    }
    return out;
}

std::string fit_summary(double lambda, const FitResult& r)
{
    std::string out = "key,value\n";
    out += fmt::format("lambda,{}\n", format_double(lambda));
    out += fmt::format("objective,{}\n", format_double(r.objective()));
    out += fmt::format("penalty,{}\n", format_double(r.penalty_value));
    out += fmt::format("iterations,{}\n", r.iterations);
    out += fmt::format("converged,{}\n", r.converged ? "true" : "false");
    out += fmt::format("final_step,{}\n", format_double(r.final_step));
    out += fmt::format("fixed_point_residual,{}\n", format_double(r.fixed_point_residual));
    return out;
}

std::vector<double> path_lambdas(const RiskIndex& index, const Problem& p, const Options& o)
{
    return log_spaced(lambda_max(index, p.structure), o.nlambda, o.min_ratio);
}

int cmd_fit(const Options& o, const Resolved& resolved, std::ostream& out)
{
    const auto p = load_problem(o);
    FitConfig config = o.fit;
    config.lambda = o.lambda;
    check_config(config);
    const auto index = build_risk_index(p.data);
    const auto result = fit(index, ProxSolver(p.structure), config);
    const Vector beta = unscale(result.beta, p.scale);

    const auto dir = prepare_out_dir(o.out_dir);
    dir.write("coefficients.csv", coefficient_table(p.data.covariate_names, beta));
    dir.write("summary.csv", fit_summary(o.lambda, result));
    dir.write("manifest.json", manifest_text(o, resolved, nullptr));
    if (!o.quiet) {
        out << fmt::format("fit: {} selected, {} iterations, {}\n", selection_support(beta, 0.0).size(),
                           result.iterations, result.converged ? "converged" : "not converged");
    }
    return result.converged ? kExitOk : kExitNotConverged;
}

int cmd_path(const Options& o, const Resolved& resolved, std::ostream& out)
{
    const auto p = load_problem(o);
    check_config(o.fit);
    const auto index = build_risk_index(p.data);
    const auto lambdas = path_lambdas(index, p, o);
    const auto path = solution_path(index, ProxSolver(p.structure), lambdas, o.fit);

    std::string table = "lambda,variable,beta\n";
    std::string summary = "lambda,nonzero,objective,iterations,converged\n";
    bool all_converged = true;
    for (std::size_t l = 0; l < lambdas.size(); ++l) {
        const auto& r = path.fits[l];
        const Vector beta = unscale(r.beta, p.scale);
        const auto lam = format_double(lambdas[l]);
        for (Eigen::Index j = 0; j < beta.size(); ++j) {
            table += fmt::format("{},{},{}\n", lam, p.data.covariate_names[j], format_double(beta[j]));
        }
        summary += fmt::format("{},{},{},{},{}\n", lam, selection_support(beta, 0.0).size(),
                               format_double(r.objective()), r.iterations, r.converged ? "true" : "false");
        all_converged = all_converged && r.converged;
    }
    const auto dir = prepare_out_dir(o.out_dir);
    dir.write("path.csv", table);
    dir.write("path_summary.csv", summary);
    dir.write("manifest.json", manifest_text(o, resolved, nullptr));
    if (!o.quiet) out << fmt::format("path: {} lambdas\n", lambdas.size());
    return all_converged ? kExitOk : kExitNotConverged;
}

int cmd_cv(const Options& o, const Resolved& resolved, std::ostream& out)
{
    const auto p = load_problem(o);
    check_config(o.fit);
    const auto index = build_risk_index(p.data);
    const auto lambdas = path_lambdas(index, p, o);
    CvOptions options;
    options.folds = o.folds;
    options.seed = o.seed;
    options.threads = o.threads;
    const auto cv = cross_validate(p.data, p.structure, lambdas, options, o.fit);
    const int chosen = o.rule == "min" ? cv.index_min : cv.index_1se;

    std::string table = "lambda,mean_cve,se_cve,nonzero,is_min,is_1se\n";
    for (std::size_t l = 0; l < cv.lambdas.size(); ++l) {
        table += fmt::format("{},{},{},{},{},{}\n", format_double(cv.lambdas[l]), format_double(cv.mean_cve[l]),
                             format_double(cv.se_cve[l]), cv.nonzero[l],
                             static_cast<int>(l) == cv.index_min ? "true" : "false",
                             static_cast<int>(l) == cv.index_1se ? "true" : "false");
    }
    std::string folds = "id,fold\n";
    for (int s = 0; s < p.data.num_subjects(); ++s) {
        folds += fmt::format("{},{}\n", p.data.subject_ids[s], cv.fold_of_subject[s] + 1);
    }
    const auto& chosen_fit = cv.full_path.fits[chosen];
    const Vector beta = unscale(chosen_fit.beta, p.scale);

    const auto dir = prepare_out_dir(o.out_dir);
    dir.write("cv.csv", table);
    dir.write("folds.csv", folds);
    dir.write("coefficients.csv", coefficient_table(p.data.covariate_names, beta));
    std::string summary = fit_summary(cv.lambdas[chosen], chosen_fit);
    summary += fmt::format("rule,{}\n", o.rule);
    summary += fmt::format("lambda_min,{}\n", format_double(cv.lambda_min));
    summary += fmt::format("lambda_1se,{}\n", format_double(cv.lambda_1se));
    dir.write("summary.csv", summary);
    dir.write("manifest.json", manifest_text(o, resolved, nullptr));
    if (!o.quiet) {
        out << fmt::format("cv: rule {} picks lambda {} with {} selected\n", o.rule,
                           format_double(cv.lambdas[chosen]), cv.nonzero[chosen]);
    }
    return chosen_fit.converged ? kExitOk : kExitNotConverged;
}

int cmd_simulate(const Options& o, const Resolved& resolved, std::ostream& out)
{
    ScenarioSpec spec;
    set_scenario(spec, o.scenario);
    spec.n = o.n;
    spec.p_main = o.p_main;
    spec.seed = o.seed;
    spec.censoring = o.censoring;
    check_spec(spec);
    if (o.replications < 0) throw InputError("replications must be non-negative");
    check_config(o.fit);

    const auto truth = scenario_truth(spec);
    const auto cal = calibrate(spec, truth.beta);
    const auto data = generate_dataset(spec, cal, 0);
    const auto names = covariate_names(spec);
    auto structure = truth.structure;
    structure.variables = names;

    std::string truth_table = "variable,beta_true\n";
    for (std::size_t j = 0; j < names.size(); ++j) {
        truth_table += fmt::format("{},{}\n", names[j], format_double(truth.beta[static_cast<Eigen::Index>(j)]));
    }

    bool all_converged = true;
    std::optional<std::string> metrics;
    if (o.replications > 0) {
        ExperimentConfig config;
        config.replications = o.replications;
        config.folds = o.folds;
        config.n_lambda = o.nlambda;
        config.min_ratio = o.min_ratio;
        config.fit = o.fit;
        config.debias = o.debias;
        config.threads = o.threads;
        const auto result = run_experiment(spec, config);
        for (const auto& row : result.rows) all_converged = all_converged && row.converged;
        metrics = format_metrics(result);
    }

    nlohmann::json metadata;
    metadata["calibration"] = {{"baseline_hazard", cal.baseline_hazard},
                               {"censoring_max", cal.censoring_max},
                               {"realized_censoring", cal.realized_censoring},
                               {"median_event_time", cal.median_event_time},
                               {"draws", cal.draws},
                               {"seed", cal.seed}};
    const auto dir = prepare_out_dir(o.out_dir);
    dir.write("data.csv", write_dataset(data));
    dir.write("groups.json", write_grouping(structure));
    dir.write("truth.csv", truth_table);
    if (metrics) dir.write("metrics.csv", *metrics);
    dir.write("manifest.json", manifest_text(o, resolved, metadata));
    if (!o.quiet) {
        out << fmt::format("simulate: {} subjects, {} covariates, {} replications\n", spec.n, names.size(),
                           o.replications);
    }
    return all_converged ? kExitOk : kExitNotConverged;
}

void add_data_options(CLI::App* cmd, Options& o)
{
    cmd->add_option("--data", o.data, "Counting-process data file")->required();
    cmd->add_option("--groups", o.groups, "Grouping file")->required();
    cmd->add_flag("--standardize", o.standardize, "Fit on unit-variance columns, report original scale");
}

void add_solver_options(CLI::App* cmd, Options& o)
{
    cmd->add_option("--tol", o.fit.tol, "Convergence threshold on the l1 change")->capture_default_str();
    cmd->add_option("--alpha", o.fit.alpha, "Step shrinkage factor")->capture_default_str();
    cmd->add_option("--q0", o.fit.q0, "Initial step size")->capture_default_str();
    cmd->add_option("--max-iter", o.fit.max_iter, "Iteration cap")->capture_default_str();
    cmd->add_option("--max-backtracks", o.fit.max_backtracks, "Line-search cap per iteration")
        ->capture_default_str();
}

void add_path_options(CLI::App* cmd, Options& o)
{
    cmd->add_option("--nlambda", o.nlambda, "Number of lambda values")->capture_default_str();
    cmd->add_option("--lambda-min-ratio", o.min_ratio, "Smallest lambda as a fraction of the largest")
        ->capture_default_str();
}

Resolved resolve(const Options& o)
{
    Resolved r;
    const auto data_options = [&] {
        r["data"] = o.data;
        r["groups"] = o.groups;
        r["standardize"] = o.standardize ? "true" : "false";
    };
    const auto path_options = [&] {
        r["nlambda"] = std::to_string(o.nlambda);
        r["lambda-min-ratio"] = format_double(o.min_ratio);
    };
    if (o.command == "fit") {
        data_options();
        r["lambda"] = format_double(o.lambda);
    } else if (o.command == "path") {
        data_options();
        path_options();
    } else if (o.command == "cv") {
        data_options();
        path_options();
        r["folds"] = std::to_string(o.folds);
        r["rule"] = o.rule;
        r["seed"] = std::to_string(o.seed);
    } else if (o.command == "simulate") {
        path_options();
        r["scenario"] = o.scenario;
        r["n"] = std::to_string(o.n);
        r["p-main"] = std::to_string(o.p_main);
        r["seed"] = std::to_string(o.seed);
        r["censoring"] = format_double(o.censoring);
        r["replications"] = std::to_string(o.replications);
        r["folds"] = std::to_string(o.folds);
        r["debias"] = o.debias ? "true" : "false";
    }
    record_fit_config(o, r);
    return r;
}

int run_replay(const Options& o, const char* program, std::ostream& out, std::ostream& err)
{
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(read_file(o.manifest));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(fmt::format("{}: not a manifest: {}", o.manifest, e.what()));
    }
    if (!m.is_object() || m.value("tool", "") != kTool || !m.contains("command") || !m.contains("options")) {
        throw InputError(fmt::format("{}: not a {} manifest", o.manifest, kTool));
    }
    if (m.contains("inputs")) {
        for (const auto& [role, input] : m["inputs"].items()) {
            const std::string path = input.at("path");
            if (sha256_file(path) != input.at("sha256").get<std::string>()) {
                throw InputError(fmt::format("{} file '{}' changed since the manifest was written", role, path));
            }
        }
    }
    std::vector<std::string> args{program, m["command"].get<std::string>()};
    for (const auto& [name, value] : m["options"].items()) {
        const std::string v = value.get<std::string>();
        if (is_flag(name)) {
            if (v == "true") args.push_back("--" + name);
        } else {
            args.push_back("--" + name);
            args.push_back(v);
        }
    }
    const std::string dir =
        o.out_dir.empty() ? std::filesystem::path(o.manifest).parent_path().string() : o.out_dir;
    args.push_back("--out-dir");
    args.push_back(dir.empty() ? "." : dir);
    args.push_back("--threads");
    args.push_back(std::to_string(o.threads));
    if (o.quiet) args.push_back("--quiet");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

void report(std::ostream& err, const std::string& message)
{
    std::istringstream lines(message);
    std::string line;
    while (std::getline(lines, line)) {
        const auto start = line.find_first_not_of(' ');
        if (start != std::string::npos) err << "error: " << line.substr(start) << "\n";
    }
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    Options o;
    o.threads = default_threads();
    CLI::App app{"Structured sparse Cox regression with overlapping groups", kTool};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--threads", o.threads, "Worker threads for cross-validation folds")->check(CLI::PositiveNumber);
    app.add_flag("--quiet", o.quiet, "Suppress the progress line");

    auto* fit_cmd = app.add_subcommand("fit", "Fit at one lambda");
    add_data_options(fit_cmd, o);
    fit_cmd->add_option("--lambda", o.lambda, "Penalty level")->required();
    add_solver_options(fit_cmd, o);
    fit_cmd->add_option("--out-dir", o.out_dir, "Output directory")->required();

    auto* path_cmd = app.add_subcommand("path", "Regularization path with warm starts");
    add_data_options(path_cmd, o);
    add_path_options(path_cmd, o);
    add_solver_options(path_cmd, o);
    path_cmd->add_option("--out-dir", o.out_dir, "Output directory")->required();

    auto* cv_cmd = app.add_subcommand("cv", "K-fold cross-validation and model choice");
    add_data_options(cv_cmd, o);
    add_path_options(cv_cmd, o);
    add_solver_options(cv_cmd, o);
    cv_cmd->add_option("--folds", o.folds, "Number of folds")->capture_default_str();
    cv_cmd->add_option("--rule", o.rule, "Lambda choice")->check(CLI::IsMember({"min", "1se"}))->capture_default_str();
    cv_cmd->add_option("--seed", o.seed, "Fold assignment seed")->required();
    cv_cmd->add_option("--out-dir", o.out_dir, "Output directory")->required();

    auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic design and run replications");
    sim_cmd->add_option("--scenario", o.scenario,
                        "categorical_s1, categorical_s2, interactions or sparse_group_case1..3")
        ->required();
    sim_cmd->add_option("--n", o.n, "Subjects")->capture_default_str();
    sim_cmd->add_option("--p-main", o.p_main, "Main terms of the interactions design")->capture_default_str();
    sim_cmd->add_option("--seed", o.seed, "Master seed")->required();
    sim_cmd->add_option("--censoring", o.censoring, "Target censored fraction")->capture_default_str();
    sim_cmd->add_option("--replications", o.replications, "Replications for the metrics table (0 skips it)")
        ->capture_default_str();
    sim_cmd->add_option("--folds", o.folds, "Folds per replication")->capture_default_str();
    sim_cmd->add_flag("--debias", o.debias, "Also refit with adaptive weights");
    add_path_options(sim_cmd, o);
    add_solver_options(sim_cmd, o);
    sim_cmd->add_option("--out-dir", o.out_dir, "Output directory")->required();

    auto* replay_cmd = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
    replay_cmd->add_option("--manifest", o.manifest, "manifest.json written by an earlier run")->required();
    replay_cmd->add_option("--out-dir", o.out_dir, "Output directory (default: the manifest's)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return kExitOk;
        }
        report(err, e.what());
        return kExitError;
    }

    try {
        o.command = app.get_subcommands().front()->get_name();
        if (o.command == "replay") return run_replay(o, argc > 0 ? argv[0] : kTool, out, err);
        const auto resolved = resolve(o);
        if (o.command == "fit") return cmd_fit(o, resolved, out);
        if (o.command == "path") return cmd_path(o, resolved, out);
        if (o.command == "cv") return cmd_cv(o, resolved, out);
        return cmd_simulate(o, resolved, out);
    } catch (const InputError& e) {
        report(err, e.what());
    } catch (const NumericalError& e) {
        report(err, e.what());
    } catch (const std::exception& e) {
        report(err, fmt::format("internal: {}", e.what()));
    }
    return kExitError;
}

} // namespace structcox::cli
