#pragma once

// JSON and CSV encodings.
//
//   matrix    {"dim": n, "re": [[...]], "im": [[...]]}   ("im" omitted for real matrices)
//   field     {"kind": "sinusoid_sum", "terms": [{"amp", "omega", "phase", "fn": "sin"|"cos"}]}
//             {"kind": "sampled", "values": [...]}        (grid comes from the enclosing instance)
//   instance  {"dim", "T", "n_t", "field", "u_init", "u_target"[, "sampling"]}
//   pair      {"h0": matrix, "mu": matrix}
//   plan      {"field0", "field1", "delta_theta", "inner": {...}, "solver": "full"|"frozen"}

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "opident/continuation.hpp"
#include "opident/fields.hpp"
#include "opident/inverse_local.hpp"
#include "opident/linalg.hpp"
#include "opident/newton.hpp"
#include "opident/propagator.hpp"

namespace opident::io {

using nlohmann::json;

class FormatError : public Error
{
public:
    using Error::Error;
};

/// 17 significant digits: enough for an exact round trip of any double.
inline std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

template <typename T>
T required(const json& j, const char* key)
{
    if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("missing key '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad value for '") + key + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Matrices.

inline json rows_of(const RealMatrix& m)
{
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json matrix_to_json(const RealMatrix& m) { return {{"dim", m.rows()}, {"re", rows_of(m)}}; }

inline json matrix_to_json(const ComplexMatrix& m)
{
    return {{"dim", m.rows()}, {"re", rows_of(m.real())}, {"im", rows_of(m.imag())}};
}

namespace detail {

inline RealMatrix read_rows(const json& rows, Index n, const char* key)
{
    if (!rows.is_array() || static_cast<Index>(rows.size()) != n)
        throw FormatError(std::string("matrix '") + key + "' must have dim rows");
    RealMatrix m(n, n);
    for (Index i = 0; i < n; ++i) {
        const json& row = rows[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Index>(row.size()) != n)
            throw FormatError(std::string("matrix '") + key + "' row has wrong length");
        for (Index j = 0; j < n; ++j) m(i, j) = row[static_cast<std::size_t>(j)].get<double>();
    }
    return m;
}

} // namespace detail

inline ComplexMatrix complex_matrix_from_json(const json& j)
{
    const auto n = required<Index>(j, "dim");
    if (n < 1) throw FormatError("matrix dim must be positive");
    ComplexMatrix m(n, n);
    m.real() = detail::read_rows(j.at("re"), n, "re");
    m.imag() = j.contains("im") ? detail::read_rows(j.at("im"), n, "im") : RealMatrix::Zero(n, n);
    return m;
}

inline RealMatrix real_matrix_from_json(const json& j)
{
    if (j.contains("im")) {
        const ComplexMatrix c = complex_matrix_from_json(j);
        if (c.imag().cwiseAbs().maxCoeff() != 0.0) throw FormatError("expected a real matrix");
        return c.real();
    }
    const auto n = required<Index>(j, "dim");
    if (n < 1) throw FormatError("matrix dim must be positive");
    return detail::read_rows(j.at("re"), n, "re");
}

// ---------------------------------------------------------------------------
// Fields.

inline json field_to_json(const LaserField& f)
{
    if (!f.is_sinusoid_sum()) return {{"kind", "sampled"}, {"values", f.sampled().values}};
    json terms = json::array();
    for (const auto& t : f.sinusoid_sum().terms)
        terms.push_back({{"amp", t.amplitude}, {"omega", t.omega}, {"phase", t.phase},
                         {"fn", t.wave == Wave::kSin ? "sin" : "cos"}});
    return {{"kind", "sinusoid_sum"}, {"terms", terms}};
}

/// `grid` is required for sampled fields.
inline LaserField field_from_json(const json& j, const std::optional<TimeGrid>& grid = std::nullopt)
{
    const auto kind = required<std::string>(j, "kind");
    if (kind == "sampled") {
        if (!grid) throw FormatError("sampled field needs a time grid");
        return SampledField(required<std::vector<double>>(j, "values"), *grid);
    }
    if (kind != "sinusoid_sum") throw FormatError("unknown field kind '" + kind + "'");
    SinusoidSum s;
    for (const json& t : required<json>(j, "terms")) {
        SinusoidTerm term;
        term.amplitude = t.value("amp", 1.0);
        term.omega = t.value("omega", 1.0);
        term.phase = t.value("phase", 0.0);
        const std::string fn = t.value("fn", std::string("sin"));
        if (fn != "sin" && fn != "cos") throw FormatError("field term fn must be 'sin' or 'cos'");
        term.wave = fn == "sin" ? Wave::kSin : Wave::kCos;
        s.terms.push_back(term);
    }
    return s;
}

/// A preset name or an inline JSON object.
inline LaserField parse_field_spec(const std::string& spec, const std::optional<TimeGrid>& grid = std::nullopt)
{
    if (!spec.empty() && spec.front() == '{') {
        try {
            return field_from_json(json::parse(spec), grid);
        } catch (const json::exception& e) {
            throw FormatError(std::string("bad field JSON: ") + e.what());
        }
    }
    return field_preset(spec);
}

// ---------------------------------------------------------------------------
// Instances and pairs.

inline const char* to_string(FieldSampling s) { return s == FieldSampling::kLeft ? "left" : "midpoint"; }

inline FieldSampling sampling_from_string(const std::string& s)
{
    if (s == "left") return FieldSampling::kLeft;
    if (s == "midpoint") return FieldSampling::kMidpoint;
    throw FormatError("sampling must be 'left' or 'midpoint'");
}

inline json instance_to_json(const ProblemInstance& inst)
{
    json j = {{"dim", inst.dim()},
              {"T", inst.grid.final_time()},
              {"n_t", inst.grid.steps()},
              {"field", field_to_json(inst.field)},
              {"u_init", matrix_to_json(inst.u_init.matrix())},
              {"u_target", matrix_to_json(inst.u_target.matrix())}};
    if (inst.sampling != FieldSampling::kLeft) j["sampling"] = to_string(inst.sampling);
    return j;
}

inline ProblemInstance instance_from_json(const json& j)
{
    const TimeGrid grid(required<double>(j, "T"), required<Index>(j, "n_t"));
    const auto dim = required<Index>(j, "dim");
    UnitaryMatrix init(complex_matrix_from_json(required<json>(j, "u_init")));
    UnitaryMatrix target(complex_matrix_from_json(required<json>(j, "u_target")));
    if (init.dim() != dim || target.dim() != dim) throw FormatError("instance matrices do not match 'dim'");
    const FieldSampling sampling = j.contains("sampling") ? sampling_from_string(j.at("sampling").get<std::string>())
                                                          : FieldSampling::kLeft;
    return ProblemInstance(grid, field_from_json(required<json>(j, "field"), grid), std::move(init), std::move(target),
                           sampling);
}

inline json pair_to_json(const OperatorPair& p)
{
    return {{"h0", matrix_to_json(p.h0.matrix())}, {"mu", matrix_to_json(p.mu.matrix())}};
}

inline OperatorPair pair_from_json(const json& j)
{
    try {
        OperatorPair p{RealSymmetric(real_matrix_from_json(required<json>(j, "h0"))),
                       RealSymmetricZeroDiag(real_matrix_from_json(required<json>(j, "mu")))};
        if (p.h0.dim() != p.mu.dim()) throw FormatError("h0 and mu dimensions differ");
        return p;
    } catch (const StructureError& e) {
        throw FormatError(std::string("pair: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Options and plans.

inline const char* to_string(ResidualKind k) { return k == ResidualKind::kLog ? "log" : "skew"; }

inline ResidualKind residual_kind_from_string(const std::string& s)
{
    if (s == "log") return ResidualKind::kLog;
    if (s == "skew") return ResidualKind::kSkew;
    throw FormatError("residual kind must be 'log' or 'skew'");
}

inline json options_to_json(const NewtonOptions& o)
{
    return {{"max_iters", o.max_iters},           {"residual_tol", o.residual_tol},
            {"step_tol", o.step_tol},             {"residual", to_string(o.residual_kind)},
            {"condition_warn", o.condition_warn}, {"singular_rcond", o.singular_rcond},
            {"divergence_window", o.divergence_window}};
}

inline NewtonOptions options_from_json(const json& j, NewtonOptions o = {})
{
    o.max_iters = j.value("max_iters", o.max_iters);
    o.residual_tol = j.value("residual_tol", o.residual_tol);
    o.step_tol = j.value("step_tol", o.step_tol);
    if (j.contains("residual")) o.residual_kind = residual_kind_from_string(j.at("residual").get<std::string>());
    o.condition_warn = j.value("condition_warn", o.condition_warn);
    o.singular_rcond = j.value("singular_rcond", o.singular_rcond);
    o.divergence_window = j.value("divergence_window", o.divergence_window);
    if (o.max_iters < 1 || !(o.residual_tol > 0) || !(o.step_tol > 0) || !(o.condition_warn > 0))
        throw FormatError("solver options: iteration count and tolerances must be positive");
    return o;
}

inline json plan_to_json(const ContinuationPlan& p)
{
    return {{"field0", field_to_json(p.field0)},
            {"field1", field_to_json(p.field1)},
            {"delta_theta", p.delta_theta},
            {"inner", options_to_json(p.inner)},
            {"solver", p.solver == SolverKind::kFull ? "full" : "frozen"},
            {"max_halvings", p.max_halvings},
            {"anchor_factor", p.anchor_factor}};
}

inline ContinuationPlan plan_from_json(const json& j, const std::optional<TimeGrid>& grid = std::nullopt)
{
    ContinuationPlan p{field_from_json(required<json>(j, "field0"), grid),
                       field_from_json(required<json>(j, "field1"), grid)};
    p.delta_theta = j.value("delta_theta", p.delta_theta);
    if (j.contains("inner")) p.inner = options_from_json(j.at("inner"), p.inner);
    const std::string solver = j.value("solver", std::string("full"));
    if (solver != "full" && solver != "frozen") throw FormatError("plan solver must be 'full' or 'frozen'");
    p.solver = solver == "full" ? SolverKind::kFull : SolverKind::kFrozen;
    p.max_halvings = j.value("max_halvings", p.max_halvings);
    p.anchor_factor = j.value("anchor_factor", p.anchor_factor);
    (void)p.steps();
    return p;
}

// ---------------------------------------------------------------------------
// Reports.

inline json report_to_json(const SolveReport& r)
{
    json iters = json::array();
    for (const auto& it : r.iterations) {
        json rec = {{"iter", it.iter},
                    {"residual", it.residual},
                    {"step_h0", it.step_h0},
                    {"step_mu", it.step_mu},
                    {"least_squares", it.least_squares},
                    {"skew_fallback", it.skew_fallback}};
        rec["condition"] = it.condition ? finite_or_null(*it.condition) : json(nullptr);
        if (it.error_h0) rec["error_h0"] = *it.error_h0;
        if (it.error_mu) rec["error_mu"] = *it.error_mu;
        iters.push_back(std::move(rec));
    }
    return {{"converged", r.converged},
            {"status", to_string(r.status)},
            {"diagnosis", r.diagnosis},
            {"solver", r.solver},
            {"residual", to_string(r.residual_kind)},
            {"steps", r.steps()},
            {"iterations", iters},
            {"final_pair", pair_to_json(r.final_pair)}};
}

/// Table-style CSV. With ground truth the columns are (iter, log10_errH,
/// log10_errMu); otherwise (iter, log10_resid).
inline std::string report_to_csv(const SolveReport& r)
{
    const bool truth = !r.iterations.empty() && r.iterations.front().error_h0.has_value();
    std::ostringstream out;
    out << (truth ? "iter,log10_errH,log10_errMu\n" : "iter,log10_resid\n");
    for (const auto& it : r.iterations) {
        out << it.iter;
        if (truth)
            out << ',' << format_double(std::log10(*it.error_h0)) << ',' << format_double(std::log10(*it.error_mu));
        else
            out << ',' << format_double(std::log10(it.residual));
        out << '\n';
    }
    return out.str();
}

inline json condition_report_to_json(const ConditionReport& c)
{
    json pairs = json::array();
    for (const auto& p : c.offending_pairs)
        pairs.push_back({{"a", p.a}, {"b", p.b}, {"cond1", p.gap}, {"cond2", p.field}});
    return {{"cond1_ok", c.cond1_ok},
            {"min_gap", finite_or_null(c.min_gap)},
            {"cond2_ok", c.cond2_ok},
            {"min_eps_hat_i", finite_or_null(c.min_eps_hat_i)},
            {"offending_pairs", pairs}};
}

// ---------------------------------------------------------------------------
// Files.

inline json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
}

inline void write_text_file(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write '" + path + "'");
    out << text;
    if (!out) throw FormatError("write failed for '" + path + "'");
}

inline void write_json_file(const std::string& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

} // namespace opident::io
