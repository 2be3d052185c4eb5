// opident: generate identification problems, run the Newton and continuation
// solvers, check the identifiability conditions, validate the local inverse.
//
// Exit codes: 0 success, 2 solver did not converge, 1 usage or I/O error.
//
// Every subcommand accepts --config <file.json>; keys are the long flag names
// with '-' replaced by '_'. Flags given on the command line win over the file.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "opident/opident.hpp"

namespace {

using namespace opident;
using io::json;

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kNotConverged = 2;

// Resolves each setting from flag, then config file, then default, and keeps
// the resolved values for provenance.
class Settings
{
public:
    explicit Settings(CLI::App* app) : app_(app) {}

    void load_file(const std::string& path)
    {
        if (path.empty()) return;
        file_ = io::read_json_file(path);
        if (!file_.is_object()) throw io::FormatError("config '" + path + "' must be a JSON object");
    }

    template <typename T>
    void resolve(const std::string& flag, T& value)
    {
        const std::string key = key_of(flag);
        const CLI::Option* opt = app_->get_option_no_throw("--" + flag);
        if ((opt == nullptr || opt->count() == 0) && file_.contains(key)) {
            try {
                value = read<T>(file_.at(key));
            } catch (const json::exception& e) {
                throw io::FormatError("config key '" + key + "': " + e.what());
            }
        }
        resolved_[key] = value;
    }

    const json& resolved() const { return resolved_; }

private:
    static std::string key_of(std::string flag)
    {
        for (char& c : flag)
            if (c == '-') c = '_';
        return flag;
    }

    template <typename T>
    static T read(const json& j)
    {
        if constexpr (std::is_same_v<T, std::string>) {
            if (j.is_object()) return j.dump();  // inline field specs
        }
        return j.get<T>();
    }

    CLI::App* app_;
    json file_ = json::object();
    json resolved_ = json::object();
};

std::string join(const std::string& dir, const std::string& name)
{
    return (std::filesystem::path(dir) / name).string();
}

void ensure_dir(const std::string& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io::FormatError("cannot create output directory '" + dir + "': " + ec.message());
}

json with_config(json body, const json& config)
{
    body["config"] = config;
    return body;
}

// ---------------------------------------------------------------------------

struct GenerateArgs
{
    std::string config;
    std::uint64_t seed = 0;
    Index dim = 5;
    Index nt = 100;
    double t0 = 10.0;
    std::string field = "sin";
    std::string out = ".";
};

int run_generate(CLI::App* app, GenerateArgs a)
{
    Settings s(app);
    s.load_file(a.config);
    s.resolve("seed", a.seed);
    s.resolve("dim", a.dim);
    s.resolve("nt", a.nt);
    s.resolve("t0", a.t0);
    s.resolve("field", a.field);
    s.resolve("out", a.out);
    if (a.dim < 1) throw ArgumentError("--dim must be at least 1");

    const Preset preset{a.dim, a.t0, a.nt, "sin"};
    const TimeGrid grid = preset.grid();
    const GeneratedProblem p = generate_problem(a.seed, a.dim, grid, io::parse_field_spec(a.field, grid));
    ensure_dir(a.out);
    io::write_json_file(join(a.out, "instance.json"), with_config(io::instance_to_json(p.instance), s.resolved()));
    io::write_json_file(join(a.out, "truth.json"), with_config(io::pair_to_json(p.truth), s.resolved()));
    std::printf("wrote %s and %s\n", join(a.out, "instance.json").c_str(), join(a.out, "truth.json").c_str());
    return kOk;
}

// ---------------------------------------------------------------------------

struct IdentifyArgs
{
    std::string config;
    std::string instance;
    std::string truth;
    std::string init;
    bool init_zero = false;
    std::uint64_t seed = 0;
    double rho = 0.1;
    std::string residual = "log";
    bool frozen = false;
    int max_iters = NewtonOptions{}.max_iters;
    std::string out = ".";
};

int run_identify(CLI::App* app, IdentifyArgs a)
{
    Settings s(app);
    s.load_file(a.config);
    s.resolve("instance", a.instance);
    s.resolve("truth", a.truth);
    s.resolve("init", a.init);
    s.resolve("init-zero", a.init_zero);
    s.resolve("seed", a.seed);
    s.resolve("rho", a.rho);
    s.resolve("residual", a.residual);
    s.resolve("frozen", a.frozen);
    s.resolve("max-iters", a.max_iters);
    s.resolve("out", a.out);
    if (a.instance.empty()) throw ArgumentError("--instance is required");

    const ProblemInstance inst = io::instance_from_json(io::read_json_file(a.instance));
    std::optional<OperatorPair> truth;
    if (!a.truth.empty()) truth = io::pair_from_json(io::read_json_file(a.truth));

    OperatorPair init{RealSymmetric::zero(inst.dim()), RealSymmetricZeroDiag::zero(inst.dim())};
    if (!a.init.empty()) {
        init = io::pair_from_json(io::read_json_file(a.init));
    } else if (!a.init_zero) {
        if (!truth) throw ArgumentError("a perturbed initial guess needs --truth (or pass --init / --init-zero)");
        if (!(a.rho >= 0.0)) throw ArgumentError("--rho must be non-negative");
        Rng rng(perturbation_seed(a.seed));
        init = perturbed_pair(*truth, a.rho, rng);
    }
    if (init.dim() != inst.dim()) throw ArgumentError("initial pair dimension does not match the instance");

    NewtonOptions opts;
    opts.residual_kind = io::residual_kind_from_string(a.residual);
    opts.max_iters = a.max_iters;
    opts = io::options_from_json(io::options_to_json(opts));
    const SolveReport report =
        a.frozen ? frozen_newton_solve(inst, init, init, opts, truth) : newton_solve(inst, init, opts, truth);

    ensure_dir(a.out);
    json body = io::report_to_json(report);
    body["options"] = io::options_to_json(opts);
    io::write_json_file(join(a.out, "report.json"), with_config(std::move(body), s.resolved()));
    io::write_text_file(join(a.out, "report.csv"), io::report_to_csv(report));
    std::printf("%s after %d step(s), residual %s\n", to_string(report.status), report.steps(),
                io::format_double(report.final_residual()).c_str());
    return report.converged ? kOk : kNotConverged;
}

// ---------------------------------------------------------------------------

struct CheckArgs
{
    std::string config;
    std::string h0;
    std::string field = "sin";
    Index nt = 100;
    double t0 = 10.0;
    double tol_gap = -1.0;
    double tol_eps = -1.0;
    std::string out = ".";
};

int run_check(CLI::App* app, CheckArgs a)
{
    Settings s(app);
    s.load_file(a.config);
    s.resolve("h0", a.h0);
    s.resolve("field", a.field);
    s.resolve("nt", a.nt);
    s.resolve("t0", a.t0);
    s.resolve("tol-gap", a.tol_gap);
    s.resolve("tol-eps", a.tol_eps);
    s.resolve("out", a.out);
    if (a.h0.empty()) throw ArgumentError("--h0 is required");

    const json h0_file = io::read_json_file(a.h0);
    const RealSymmetric h0(io::real_matrix_from_json(h0_file.contains("h0") ? h0_file.at("h0") : h0_file));
    const TimeGrid grid = Preset{h0.dim(), a.t0, a.nt, "sin"}.grid();
    const LaserField field = io::parse_field_spec(a.field, grid);
    const SpectralData spec = spectral_decompose(h0, grid, field);
    ConditionTolerances tol = default_condition_tolerances(spec, field);
    if (a.tol_gap >= 0.0) tol.gap = a.tol_gap;
    if (a.tol_eps >= 0.0) tol.eps = a.tol_eps;
    const ConditionReport report = check_identifiability(spec, tol);

    json body = io::condition_report_to_json(report);
    body["tol_gap"] = tol.gap;
    body["tol_eps"] = tol.eps;
    body["lambda"] = std::vector<double>(spec.lambda.data(), spec.lambda.data() + spec.lambda.size());
    ensure_dir(a.out);
    io::write_json_file(join(a.out, "conditions.json"), with_config(std::move(body), s.resolved()));
    std::printf("cond1 %s (min gap %s), cond2 %s (min |Im eps_hat| %s), %zu offending pair(s)\n",
                report.cond1_ok ? "ok" : "violated", io::format_double(report.min_gap).c_str(),
                report.cond2_ok ? "ok" : "violated", io::format_double(report.min_eps_hat_i).c_str(),
                report.offending_pairs.size());
    return kOk;
}

// ---------------------------------------------------------------------------

struct ContinueArgs
{
    std::string config;
    std::string plan;
    std::string instance;
    std::string anchor;
    std::string residual;
    bool frozen = false;
    bool compare_direct = false;
    std::string out = ".";
};

int run_continue(CLI::App* app, ContinueArgs a)
{
    Settings s(app);
    s.load_file(a.config);
    s.resolve("plan", a.plan);
    s.resolve("instance", a.instance);
    s.resolve("anchor", a.anchor);
    s.resolve("residual", a.residual);
    s.resolve("frozen", a.frozen);
    s.resolve("compare-direct", a.compare_direct);
    s.resolve("out", a.out);
    if (a.plan.empty() || a.instance.empty() || a.anchor.empty())
        throw ArgumentError("--plan, --instance and --anchor are required");

    const ProblemInstance inst = io::instance_from_json(io::read_json_file(a.instance));
    ContinuationPlan plan = io::plan_from_json(io::read_json_file(a.plan), inst.grid);
    if (!a.residual.empty()) plan.inner.residual_kind = io::residual_kind_from_string(a.residual);
    if (a.frozen) plan.solver = SolverKind::kFrozen;
    const OperatorPair anchor = io::pair_from_json(io::read_json_file(a.anchor));

    const ContinuationResult result = continuation_solve(inst, anchor, plan);
    const ProblemInstance at_target = inst.with_field(plan.field1);
    const double final_residual =
        (phi(result.final_pair.h0, result.final_pair.mu, at_target).matrix() - inst.u_target.matrix()).norm();

    ensure_dir(a.out);
    json steps = json::array();
    for (std::size_t i = 0; i < result.steps.size(); ++i) {
        const ContinuationStep& st = result.steps[i];
        steps.push_back({{"theta_from", st.theta_from},
                         {"theta", st.theta},
                         {"depth", st.depth},
                         {"report", io::report_to_json(st.report)}});
        char name[32];
        std::snprintf(name, sizeof name, "step_%02zu.csv", i + 1);
        io::write_text_file(join(a.out, name), io::report_to_csv(st.report));
    }
    json body = {{"converged", result.converged},
                 {"anchor_residual", result.anchor_residual},
                 {"halvings_used", result.halvings_used},
                 {"failed_theta", result.failed_theta ? json(*result.failed_theta) : json(nullptr)},
                 {"final_residual", final_residual},
                 {"plan", io::plan_to_json(plan)},
                 {"steps", steps},
                 {"final_pair", io::pair_to_json(result.final_pair)}};
    if (a.compare_direct) {
        const SolveReport direct = newton_solve(at_target, anchor, plan.inner);
        body["direct"] = io::report_to_json(direct);
        std::printf("direct Newton on the target field: %s\n", to_string(direct.status));
    }
    io::write_json_file(join(a.out, "continuation.json"), with_config(std::move(body), s.resolved()));
    io::write_json_file(join(a.out, "final_pair.json"), with_config(io::pair_to_json(result.final_pair), s.resolved()));
    if (result.converged)
        std::printf("continuation converged in %zu step(s), residual %s\n", result.steps.size(),
                    io::format_double(final_residual).c_str());
    else
        std::printf("continuation stopped at theta = %s\n", io::format_double(*result.failed_theta).c_str());
    return result.converged ? kOk : kNotConverged;
}

// ---------------------------------------------------------------------------

struct RoundTripArgs
{
    std::string config;
    std::uint64_t seed = 0;
    Index dim = 5;
    Index nt = 4000;
    double t0 = 10.0;
    std::string field = "two-tone";
    std::string out = ".";
};

int run_roundtrip(CLI::App* app, RoundTripArgs a)
{
    Settings s(app);
    s.load_file(a.config);
    s.resolve("seed", a.seed);
    s.resolve("dim", a.dim);
    s.resolve("nt", a.nt);
    s.resolve("t0", a.t0);
    s.resolve("field", a.field);
    s.resolve("out", a.out);

    Rng rng(a.seed);
    const RealSymmetric h0 = random_symmetric(rng, a.dim);
    const TimeGrid grid = Preset{a.dim, a.t0, a.nt, "sin"}.grid();
    const TimeGrid fine = Preset{a.dim, a.t0, 2 * a.nt, "sin"}.grid();
    const LaserField field = io::parse_field_spec(a.field);
    const RoundTripResult coarse = roundtrip(h0, field, grid, a.seed);
    const RoundTripResult refined = roundtrip(h0, field, fine, a.seed);
    const double ratio = coarse.relative_error / refined.relative_error;

    json body = {{"h0", io::matrix_to_json(h0.matrix())},
                 {"relative_error", coarse.relative_error},
                 {"relative_error_refined", refined.relative_error},
                 {"ratio", ratio},
                 {"structure_defect", coarse.structure_defect},
                 {"conditions", io::condition_report_to_json(coarse.conditions)}};
    ensure_dir(a.out);
    io::write_json_file(join(a.out, "roundtrip.json"), with_config(std::move(body), s.resolved()));
    std::printf("relative round-trip error %s at N_T = %lld, %s at N_T = %lld (ratio %s)\n",
                io::format_double(coarse.relative_error).c_str(), static_cast<long long>(a.nt),
                io::format_double(refined.relative_error).c_str(), static_cast<long long>(2 * a.nt),
                io::format_double(ratio).c_str());
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Identify H0 and mu from a laser field and a target propagator"};
    app.require_subcommand(1);

    GenerateArgs gen;
    CLI::App* g = app.add_subcommand("generate", "Draw a random pair and write instance.json and truth.json");
    g->add_option("--config", gen.config, "JSON config file");
    g->add_option("--seed", gen.seed, "Random seed");
    g->add_option("--dim", gen.dim, "Dimension N_d");
    g->add_option("--nt", gen.nt, "Number of time steps N_T");
    g->add_option("--t0", gen.t0, "Final time is T = 2 pi t0");
    g->add_option("--field", gen.field, "Preset name (sin, cos3, two-tone, zero) or field JSON");
    g->add_option("--out", gen.out, "Output directory");

    IdentifyArgs idf;
    CLI::App* i = app.add_subcommand("identify", "Run Newton on an instance and write report.json and report.csv");
    i->add_option("--config", idf.config, "JSON config file");
    i->add_option("--instance", idf.instance, "Instance JSON");
    i->add_option("--truth", idf.truth, "Ground-truth pair JSON");
    i->add_option("--init", idf.init, "Explicit initial pair JSON");
    i->add_flag("--init-zero", idf.init_zero, "Start from H0 = 0, mu = 0");
    i->add_option("--seed", idf.seed, "Seed of the perturbation direction");
    i->add_option("--rho", idf.rho, "Relative size of the perturbation of the truth");
    i->add_option("--residual", idf.residual, "Residual target: log or skew")->check(CLI::IsMember({"log", "skew"}));
    i->add_flag("--frozen", idf.frozen, "Freeze the system at the initial guess");
    i->add_option("--max-iters", idf.max_iters, "Iteration limit");
    i->add_option("--out", idf.out, "Output directory");

    CheckArgs chk;
    CLI::App* c = app.add_subcommand("check-conditions", "Evaluate the identifiability conditions for H0 and a field");
    c->add_option("--config", chk.config, "JSON config file");
    c->add_option("--h0", chk.h0, "Matrix JSON, or a pair JSON with key h0");
    c->add_option("--field", chk.field, "Preset name or field JSON");
    c->add_option("--nt", chk.nt, "Number of time steps N_T");
    c->add_option("--t0", chk.t0, "Final time is T = 2 pi t0");
    c->add_option("--tol-gap", chk.tol_gap, "Gap tolerance (default 1e-8 max|lambda|)");
    c->add_option("--tol-eps", chk.tol_eps, "Field-integral tolerance (default 1e-8 ||eps||_L1)");
    c->add_option("--out", chk.out, "Output directory");

    ContinueArgs con;
    CLI::App* k = app.add_subcommand("continue", "Continuation from field0 to field1");
    k->add_option("--config", con.config, "JSON config file");
    k->add_option("--plan", con.plan, "Plan JSON");
    k->add_option("--instance", con.instance, "Instance JSON (its field is ignored)");
    k->add_option("--anchor", con.anchor, "Pair JSON solving the problem under field0");
    k->add_option("--residual", con.residual, "Residual target: log or skew")->check(CLI::IsMember({"log", "skew"}));
    k->add_flag("--frozen", con.frozen, "Use the frozen Newton variant in the inner loop");
    k->add_flag("--compare-direct", con.compare_direct, "Also run Newton directly on field1");
    k->add_option("--out", con.out, "Output directory");

    RoundTripArgs rt;
    CLI::App* r = app.add_subcommand("theorem2-roundtrip", "Check dphi(psi(V')) = V' on a field-free trajectory");
    r->add_option("--config", rt.config, "JSON config file");
    r->add_option("--seed", rt.seed, "Seed for H0 and V'");
    r->add_option("--dim", rt.dim, "Dimension N_d");
    r->add_option("--nt", rt.nt, "Number of time steps N_T (also run at 2 N_T)");
    r->add_option("--t0", rt.t0, "Final time is T = 2 pi t0");
    r->add_option("--field", rt.field, "Preset name or field JSON");
    r->add_option("--out", rt.out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (g->parsed()) return run_generate(g, gen);
        if (i->parsed()) return run_identify(i, idf);
        if (c->parsed()) return run_check(c, chk);
        if (k->parsed()) return run_continue(k, con);
        if (r->parsed()) return run_roundtrip(r, rt);
    } catch (const AnchorError& e) {
        std::cerr << "error: " << e.what() << " (residual " << io::format_double(e.residual()) << ")\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
