#pragma once

// Run configuration for the command-line front end: a flat, namespaced JSON key
// set ("sim.nx", "reservoir.rho", ...), presets, validation and a provenance hash.

#include "../barkley.hpp"
#include "../error.hpp"
#include "../experiment.hpp"
#include "../hybrid.hpp"
#include "../local_states.hpp"
#include "../metrics.hpp"
#include "../reservoir.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace bkrc::cli {

using json = nlohmann::json;

enum class preset { desk, paper };

inline preset parse_preset(std::string_view name)
{
    if (name == "desk") return preset::desk;
    if (name == "paper") return preset::paper;
    throw invalid_argument{"unknown preset '" + std::string{name} + "' (expected desk or paper)"};
}

struct run_config {
    // Simulation
    barkley_params sim;
    std::size_t transient = 2000;

    // Model, reservoir, wiring
    double model_error = 0.1;
    reservoir_spec reservoir{100, 3, 0.5, 1e-6, 0};
    singular_policy singular = singular_policy::min_norm;
    hybrid_mode mode = hybrid_mode::output_hybrid;
    hybrid_options hybrid;
    std::size_t sigma = 3;
    matrix_sharing sharing = matrix_sharing::shared;

    // Noise
    double alpha = 1e-6;
    bool prediction_sync_noise = false;

    // Evaluation
    double e_max = 0.2;
    contribution_metric metric = contribution_metric::weight_mass;
    double lyapunov_max = 0.0;  ///< > 0 adds a Lyapunov-time column

    // Ensemble grid
    ensemble_config ensemble{2, 3, 0, 200, 5000, 0, 200, 2000};
    std::vector<hybrid_mode> ensemble_modes{hybrid_mode::none, hybrid_mode::input_hybrid, hybrid_mode::output_hybrid,
                                            hybrid_mode::full_hybrid};
    std::vector<std::size_t> ensemble_r_dims{100};
    std::vector<double> ensemble_model_errors{0.0, 0.1, 1.0, 5.0, 10.0, 100.0};

    // Hyperparameter sweep
    sweep_config sweep;

    // Readout contribution study
    wout_study wout;

    // Single run
    std::string trajectory;               ///< input trajectory file; empty = simulate on demand
    std::vector<std::size_t> snapshots;   ///< prediction steps rendered as heatmaps
    bool write_prediction = false;

    // Rendering
    std::string render_input;
    std::vector<std::size_t> render_steps{0};
    double u_lo = 0.0, u_hi = 1.0, v_lo = 0.0, v_hi = 1.0;

    // Provenance and execution (the last two are excluded from the hash)
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string out = "out";

    void validate() const
    {
        sim.validate();
        reservoir.validate();
        patch_spec{sigma}.validate();
        ensemble.validate();
        if (!(alpha >= 0)) throw invalid_argument{"config: noise.alpha must be non-negative"};
        if (!(e_max > 0)) throw invalid_argument{"config: metrics.e_max must be positive"};
        if (!(lyapunov_max >= 0)) throw invalid_argument{"config: metrics.lyapunov_max must be non-negative"};
        if (!std::isfinite(model_error) || model_error == -1.0)
            throw invalid_argument{"config: kbm.model_error must be finite and != -1"};
        if (ensemble_modes.empty() || ensemble_r_dims.empty() || ensemble_model_errors.empty())
            throw invalid_argument{"config: ensemble grids must be non-empty"};
        if (sweep.values.empty()) throw invalid_argument{"config: sweep.values must be non-empty"};
        if (wout.model_errors.empty() || wout.n_a < 1 || wout.n_t < 1)
            throw invalid_argument{"config: wout needs model errors, n_a >= 1 and n_t >= 1"};
        if (!(u_lo < u_hi) || !(v_lo < v_hi)) throw invalid_argument{"config: render ranges need lo < hi"};
    }

    /// Time steps a simulation has to provide: transient plus the ensemble layout.
    std::size_t simulation_steps() const { return transient + ensemble.required_length(); }

    run_settings settings() const
    {
        run_settings s;
        s.truth = sim;
        s.model_error = model_error;
        s.reservoir = reservoir;
        s.reservoir.seed = seed;
        s.local.patch = patch_spec{sigma};
        s.local.mode = mode;
        s.local.hybrid = hybrid;
        s.local.sharing = sharing;
        s.local.singular = singular;
        s.local.threads = threads;
        s.alpha = alpha;
        s.prediction_sync_noise = prediction_sync_noise;
        s.e_max = e_max;
        s.seed = seed;
        s.ensemble = ensemble;
        s.metric = metric;
        return s;
    }
};

inline run_config make_preset(preset p)
{
    run_config c;
    if (p == preset::paper) {
        c.sim.nx = c.sim.ny = 80;
        c.reservoir.r_dim = 400;
        c.ensemble = {1, 1, 0, 200, 30000, 0, 200, 8000};
        c.ensemble_r_dims = {100, 500};
    } else {
        c.sim.nx = c.sim.ny = 40;
        c.reservoir.r_dim = 100;
        c.ensemble = {2, 3, 0, 200, 5000, 0, 200, 2000};
        c.ensemble_r_dims = {100};
    }
    return c;
}

// ---------------------------------------------------------------------------
// Enum names

namespace detail {

template <class E>
struct enum_names;

template <>
struct enum_names<singular_policy> {
    static constexpr std::pair<singular_policy, std::string_view> items[] = {{singular_policy::min_norm, "min-norm"},
                                                                             {singular_policy::raise, "error"}};
};
template <>
struct enum_names<readout_state> {
    static constexpr std::pair<readout_state, std::string_view> items[] = {{readout_state::augmented, "augmented"},
                                                                           {readout_state::raw, "raw"}};
};
template <>
struct enum_names<kbm_readout> {
    static constexpr std::pair<kbm_readout, std::string_view> items[] = {{kbm_readout::patch, "patch"},
                                                                         {kbm_readout::center, "center"}};
};
template <>
struct enum_names<matrix_sharing> {
    static constexpr std::pair<matrix_sharing, std::string_view> items[] = {{matrix_sharing::shared, "shared"},
                                                                            {matrix_sharing::per_point, "per-point"}};
};
template <>
struct enum_names<contribution_metric> {
    static constexpr std::pair<contribution_metric, std::string_view> items[] = {
        {contribution_metric::weight_mass, "weight-mass"}, {contribution_metric::activity_weighted, "activity-weighted"}};
};

template <class E>
std::string_view name_of(E e)
{
    for (const auto& [v, n] : enum_names<E>::items)
        if (v == e) return n;
    return enum_names<E>::items[0].second;
}

template <class E>
E parse_enum(std::string_view key, const std::string& s)
{
    for (const auto& [v, n] : enum_names<E>::items)
        if (n == s) return v;
    std::string allowed;
    for (const auto& [v, n] : enum_names<E>::items) allowed += (allowed.empty() ? "" : ", ") + std::string{n};
    throw invalid_argument{"config: " + std::string{key} + " = '" + s + "' (expected one of " + allowed + ")"};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// JSON mapping

/// Every key with its current value. Keys are flat and namespaced.
inline json to_json(const run_config& c)
{
    json j = json::object();
    j["sim.nx"] = c.sim.nx;
    j["sim.ny"] = c.sim.ny;
    j["sim.d"] = c.sim.d;
    j["sim.a"] = c.sim.a;
    j["sim.b"] = c.sim.b;
    j["sim.eps"] = c.sim.eps;
    j["sim.dt"] = c.sim.dt;
    j["sim.dx"] = c.sim.dx;
    j["sim.transient"] = c.transient;

    j["kbm.model_error"] = c.model_error;

    j["reservoir.r_dim"] = c.reservoir.r_dim;
    j["reservoir.kappa"] = c.reservoir.kappa;
    j["reservoir.rho"] = c.reservoir.rho;
    j["reservoir.beta"] = c.reservoir.beta;
    j["reservoir.singular"] = detail::name_of(c.singular);

    j["hybrid.mode"] = to_string(c.mode);
    j["hybrid.readout_state"] = detail::name_of(c.hybrid.state);
    j["hybrid.kbm_readout"] = detail::name_of(c.hybrid.kbm);

    j["local.sigma"] = c.sigma;
    j["local.matrix_sharing"] = detail::name_of(c.sharing);

    j["noise.alpha"] = c.alpha;
    j["noise.prediction_sync"] = c.prediction_sync_noise;

    j["metrics.e_max"] = c.e_max;
    j["metrics.contribution"] = detail::name_of(c.metric);
    j["metrics.lyapunov_max"] = c.lyapunov_max;

    j["ensemble.n_t"] = c.ensemble.n_t;
    j["ensemble.n_p"] = c.ensemble.n_p;
    j["ensemble.n_td"] = c.ensemble.n_td;
    j["ensemble.n_ts"] = c.ensemble.n_ts;
    j["ensemble.n_tr"] = c.ensemble.n_tr;
    j["ensemble.n_pd"] = c.ensemble.n_pd;
    j["ensemble.n_ps"] = c.ensemble.n_ps;
    j["ensemble.n_pr"] = c.ensemble.n_pr;
    std::vector<std::string> modes;
    for (auto m : c.ensemble_modes) modes.emplace_back(to_string(m));
    j["ensemble.modes"] = modes;
    j["ensemble.r_dims"] = c.ensemble_r_dims;
    j["ensemble.model_errors"] = c.ensemble_model_errors;

    j["sweep.parameter"] = to_string(c.sweep.parameter);
    j["sweep.values"] = c.sweep.values;
    j["sweep.r_dim"] = c.sweep.fixed.r_dim;
    j["sweep.rho"] = c.sweep.fixed.rho;
    j["sweep.sigma"] = c.sweep.fixed.sigma;
    j["sweep.alpha"] = c.sweep.fixed.alpha;
    j["sweep.beta"] = c.sweep.fixed.beta;

    j["wout.model_errors"] = c.wout.model_errors;
    j["wout.n_a"] = c.wout.n_a;
    j["wout.n_t"] = c.wout.n_t;
    j["wout.exact_at_zero_error"] = c.wout.exact_at_zero_error;

    j["run.seed"] = c.seed;
    j["run.threads"] = c.threads;
    j["run.out"] = c.out;
    j["run.trajectory"] = c.trajectory;
    j["run.snapshots"] = c.snapshots;
    j["run.write_prediction"] = c.write_prediction;

    j["render.input"] = c.render_input;
    j["render.steps"] = c.render_steps;
    j["render.u_lo"] = c.u_lo;
    j["render.u_hi"] = c.u_hi;
    j["render.v_lo"] = c.v_lo;
    j["render.v_hi"] = c.v_hi;
    return j;
}

namespace detail {

template <class T>
T get_as(const json& v, std::string_view key)
{
    try {
        if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
            if (!v.is_number_unsigned()) throw invalid_argument{""};
        } else if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw invalid_argument{""};
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw invalid_argument{""};
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw invalid_argument{""};
        }
        return v.get<T>();
    } catch (const std::exception&) {
        throw invalid_argument{"config: key '" + std::string{key} + "' has a value of the wrong type: " + v.dump()};
    }
}

template <class T>
std::vector<T> get_list(const json& v, std::string_view key)
{
    if (!v.is_array()) throw invalid_argument{"config: key '" + std::string{key} + "' must be an array"};
    std::vector<T> out;
    for (const auto& e : v) out.push_back(get_as<T>(e, key));
    return out;
}

}  // namespace detail

/// Applies the keys of `j` on top of `c`. Unknown keys are rejected.
inline void apply_json(run_config& c, const json& j)
{
    using detail::get_as;
    using detail::get_list;
    if (!j.is_object()) throw invalid_argument{"config: top level must be a JSON object"};

    for (const auto& [key, v] : j.items()) {
        const std::string_view k = key;
        if (k == "sim.nx") c.sim.nx = get_as<std::size_t>(v, k);
        else if (k == "sim.ny") c.sim.ny = get_as<std::size_t>(v, k);
        else if (k == "sim.d") c.sim.d = get_as<double>(v, k);
        else if (k == "sim.a") c.sim.a = get_as<double>(v, k);
        else if (k == "sim.b") c.sim.b = get_as<double>(v, k);
        else if (k == "sim.eps") c.sim.eps = get_as<double>(v, k);
        else if (k == "sim.dt") c.sim.dt = get_as<double>(v, k);
        else if (k == "sim.dx") c.sim.dx = get_as<double>(v, k);
        else if (k == "sim.transient") c.transient = get_as<std::size_t>(v, k);
        else if (k == "kbm.model_error") c.model_error = get_as<double>(v, k);
        else if (k == "reservoir.r_dim") c.reservoir.r_dim = get_as<std::size_t>(v, k);
        else if (k == "reservoir.kappa") c.reservoir.kappa = get_as<double>(v, k);
        else if (k == "reservoir.rho") c.reservoir.rho = get_as<double>(v, k);
        else if (k == "reservoir.beta") c.reservoir.beta = get_as<double>(v, k);
        else if (k == "reservoir.singular") c.singular = detail::parse_enum<singular_policy>(k, get_as<std::string>(v, k));
        else if (k == "hybrid.mode") c.mode = parse_hybrid_mode(get_as<std::string>(v, k));
        else if (k == "hybrid.readout_state") c.hybrid.state = detail::parse_enum<readout_state>(k, get_as<std::string>(v, k));
        else if (k == "hybrid.kbm_readout") c.hybrid.kbm = detail::parse_enum<kbm_readout>(k, get_as<std::string>(v, k));
        else if (k == "local.sigma") c.sigma = get_as<std::size_t>(v, k);
        else if (k == "local.matrix_sharing") c.sharing = detail::parse_enum<matrix_sharing>(k, get_as<std::string>(v, k));
        else if (k == "noise.alpha") c.alpha = get_as<double>(v, k);
        else if (k == "noise.prediction_sync") c.prediction_sync_noise = get_as<bool>(v, k);
        else if (k == "metrics.e_max") c.e_max = get_as<double>(v, k);
        else if (k == "metrics.contribution") c.metric = detail::parse_enum<contribution_metric>(k, get_as<std::string>(v, k));
        else if (k == "metrics.lyapunov_max") c.lyapunov_max = get_as<double>(v, k);
        else if (k == "ensemble.n_t") c.ensemble.n_t = get_as<std::size_t>(v, k);
        else if (k == "ensemble.n_p") c.ensemble.n_p = get_as<std::size_t>(v, k);
        else if (k == "ensemble.n_td") c.ensemble.n_td = get_as<std::size_t>(v, k);
        else if (k == "ensemble.n_ts") c.ensemble.n_ts = get_as<std::size_t>(v, k);
        else if (k == "ensemble.n_tr") c.ensemble.n_tr = get_as<std::size_t>(v, k);
        else if (k == "ensemble.n_pd") c.ensemble.n_pd = get_as<std::size_t>(v, k);
        else if (k == "ensemble.n_ps") c.ensemble.n_ps = get_as<std::size_t>(v, k);
        else if (k == "ensemble.n_pr") c.ensemble.n_pr = get_as<std::size_t>(v, k);
        else if (k == "ensemble.modes") {
            c.ensemble_modes.clear();
            for (const auto& m : get_list<std::string>(v, k)) c.ensemble_modes.push_back(parse_hybrid_mode(m));
        }
        else if (k == "ensemble.r_dims") c.ensemble_r_dims = get_list<std::size_t>(v, k);
        else if (k == "ensemble.model_errors") c.ensemble_model_errors = get_list<double>(v, k);
        else if (k == "sweep.parameter") {
            c.sweep.parameter = parse_sweep_parameter(get_as<std::string>(v, k));
            if (!j.contains("sweep.values")) c.sweep.values = default_sweep_values(c.sweep.parameter);
        }
        else if (k == "sweep.values") c.sweep.values = get_list<double>(v, k);
        else if (k == "sweep.r_dim") c.sweep.fixed.r_dim = get_as<std::size_t>(v, k);
        else if (k == "sweep.rho") c.sweep.fixed.rho = get_as<double>(v, k);
        else if (k == "sweep.sigma") c.sweep.fixed.sigma = get_as<std::size_t>(v, k);
        else if (k == "sweep.alpha") c.sweep.fixed.alpha = get_as<double>(v, k);
        else if (k == "sweep.beta") c.sweep.fixed.beta = get_as<double>(v, k);
        else if (k == "wout.model_errors") c.wout.model_errors = get_list<double>(v, k);
        else if (k == "wout.n_a") c.wout.n_a = get_as<std::size_t>(v, k);
        else if (k == "wout.n_t") c.wout.n_t = get_as<std::size_t>(v, k);
        else if (k == "wout.exact_at_zero_error") c.wout.exact_at_zero_error = get_as<bool>(v, k);
        else if (k == "run.seed") c.seed = get_as<std::uint64_t>(v, k);
        else if (k == "run.threads") c.threads = get_as<std::size_t>(v, k);
        else if (k == "run.out") c.out = get_as<std::string>(v, k);
        else if (k == "run.trajectory") c.trajectory = get_as<std::string>(v, k);
        else if (k == "run.snapshots") c.snapshots = get_list<std::size_t>(v, k);
        else if (k == "run.write_prediction") c.write_prediction = get_as<bool>(v, k);
        else if (k == "render.input") c.render_input = get_as<std::string>(v, k);
        else if (k == "render.steps") c.render_steps = get_list<std::size_t>(v, k);
        else if (k == "render.u_lo") c.u_lo = get_as<double>(v, k);
        else if (k == "render.u_hi") c.u_hi = get_as<double>(v, k);
        else if (k == "render.v_lo") c.v_lo = get_as<double>(v, k);
        else if (k == "render.v_hi") c.v_hi = get_as<double>(v, k);
        else throw invalid_argument{"config: unknown key '" + key + "'"};
    }
}

inline run_config from_json(const json& j, preset base = preset::desk)
{
    run_config c = make_preset(base);
    apply_json(c, j);
    return c;
}

inline json read_json_file(const std::string& path)
{
    std::ifstream in{path};
    if (!in) throw io_error{"cannot open config file '" + path + "'"};
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw invalid_argument{"config file '" + path + "': " + e.what()};
    }
}

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view bytes) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Hash of the canonical (sorted-key) serialization, excluding execution-only
/// keys (thread count, output directory).
inline std::uint64_t config_hash(const run_config& c)
{
    json j = to_json(c);
    j.erase("run.threads");
    j.erase("run.out");
    return fnv1a(j.dump());
}

inline std::string hash_hex(std::uint64_t h)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace bkrc::cli
