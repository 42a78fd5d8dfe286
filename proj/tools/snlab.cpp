#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <omp.h>
#include <openssl/sha.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "snlab/ensemble.hpp"
#include "snlab/evolve.hpp"
#include "snlab/gaussian.hpp"
#include "snlab/mastereq.hpp"
#include "snlab/params.hpp"
#include "snlab/phasevar.hpp"

using nlohmann::json;
using namespace snlab;

namespace {

constexpr const char* kVersion = "snlab 1.0.0";

// Defaults for every subcommand section. Keys not listed here are rejected.
json default_config() {
    json d;
    d["params"] = params_to_map(SimParams{});
    d["scales"] = {{"radius", 1.0}, {"mass_sweep", json::array()}, {"si_length", 1.0}, {"si_mass", 1.0},
                   {"si_time", 1.0}};
    d["phasevar"] = {{"r1", 8.0}, {"r2", 16.0}, {"t_min", 0.1}, {"t_max", 1.0}, {"n_times", 10},
                     {"method", "all"}};
    d["evolve"] = {{"mode", "free"},     {"dt", 1e-2},         {"n_steps", 300},     {"r_max", 60.0},
                   {"n_points", 2048},   {"record_every", 10}, {"snapshot_every", 0}, {"temporal", "white"},
                   {"correlation_time", 1.0}, {"seed", 0},    {"noise_scale", 1.0}, {"mean_scale", 1.0}};
    d["ensemble"] = {{"n_trajectories", 400}, {"t_final", 64.0},  {"n_records", 129},   {"r1", 8.0},
                     {"r2", 16.0},            {"temporal", "static"}, {"correlation_time", 1.0},
                     {"seed", 0},             {"noise_scale", 1.0}, {"mean_scale", 1.0}, {"n_points", 160},
                     {"xi_max", 10.0},        {"max_dtau", 2e-3}};
    d["master"] = {{"n_points", 10},     {"extent_widths", 6.0}, {"n_k", 16},         {"t_final", 10.0},
                   {"dt", 1e-2},         {"record_every", 100},  {"temporal", "white"}, {"correlation_time", 1.0},
                   {"gamma_scale", 1.0}, {"n_trajectories", 0},  {"seed", 0},         {"trace_abort", 0.9}};
    d["sweep"] = {{"masses", {0.5, 1.0, 2.0}}, {"n_trajectories", 400}, {"r1", 8.0}, {"r2", 16.0},
                  {"horizon", 4.0},            {"n_records", 129},      {"seed", 0}, {"temporal", "static"}};
    return d;
}

void merge_section(json& target, const json& src, const std::string& where) {
    for (const auto& [key, v] : src.items()) {
        if (!target.contains(key)) throw std::invalid_argument("unknown config key '" + where + key + "'");
        const auto& old = target[key];
        if (old.is_number() && !v.is_number())
            throw std::invalid_argument("config key '" + where + key + "' must be a number");
        if (old.is_string() && !v.is_string())
            throw std::invalid_argument("config key '" + where + key + "' must be a string");
        if (old.is_array() && !v.is_array())
            throw std::invalid_argument("config key '" + where + key + "' must be an array");
        target[key] = v;
    }
}

json parse_scalar(const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    if (!s.empty() && s.front() == '[') return json::parse(s);
    return s;
}

json resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
    json cfg = default_config();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
        json file;
        try {
            in >> file;
        } catch (const json::parse_error& e) {
            throw std::invalid_argument("config '" + path + "': " + e.what());
        }
        if (!file.is_object()) throw std::invalid_argument("config '" + path + "' must be a JSON object");
        for (const auto& [key, v] : file.items()) {
            if (cfg.contains(key) && v.is_object()) {
                merge_section(cfg[key], v, key + ".");
            } else if (cfg["params"].contains(key)) {
                merge_section(cfg["params"], json{{key, v}}, "");
            } else {
                throw std::invalid_argument("unknown config key '" + key + "'");
            }
        }
    }
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("override '" + kv + "' is not key=value");
        std::string key = kv.substr(0, eq);
        std::string section = "params";
        if (const auto dot = key.find('.'); dot != std::string::npos) {
            section = key.substr(0, dot);
            key = key.substr(dot + 1);
        }
        if (!cfg.contains(section)) throw std::invalid_argument("unknown config section '" + section + "'");
        json v;
        try {
            v = parse_scalar(kv.substr(eq + 1));
        } catch (const json::parse_error& e) {
            throw std::invalid_argument("override '" + kv + "': " + e.what());
        }
        merge_section(cfg[section], json{{key, v}}, section == "params" ? "" : section + ".");
    }
    return cfg;
}

SimParams params_of(const json& cfg) {
    std::map<std::string, double> m;
    for (const auto& [k, v] : cfg.at("params").items()) m[k] = v.get<double>();
    return params_from_map(m);
}

std::size_t count_of(const json& s, const char* key) {
    const double v = s.at(key).get<double>();
    if (!(v >= 0.0) || v != std::floor(v) || v > 1e12)
        throw std::invalid_argument(std::string("config key '") + key + "' must be a non-negative integer");
    return static_cast<std::size_t>(v);
}

TemporalModel temporal_of(const json& s) {
    const auto name = s.at("temporal").get<std::string>();
    if (name == "white") return {TemporalMode::white, std::numeric_limits<double>::infinity()};
    if (name == "static") return {TemporalMode::exponential_memory, std::numeric_limits<double>::infinity()};
    if (name == "exponential") {
        const double tc = s.at("correlation_time").get<double>();
        if (!(tc > 0.0)) throw std::invalid_argument("config key 'correlation_time' must be > 0");
        return {TemporalMode::exponential_memory, tc};
    }
    throw std::invalid_argument("config key 'temporal' must be white, static or exponential, got '" + name + "'");
}

// Git blob hash of the canonical input document.
std::string content_hash(const std::string& text) {
    const std::string blob = "blob " + std::to_string(text.size()) + '\0' + text;
    unsigned char md[SHA_DIGEST_LENGTH];
    SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), md);
    char hex[2 * SHA_DIGEST_LENGTH + 1];
    for (int i = 0; i < SHA_DIGEST_LENGTH; ++i) std::snprintf(hex + 2 * i, 3, "%02x", md[i]);
    return hex;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class Run {
public:
    Run(std::string command, json config, std::filesystem::path out_dir)
        : command_(std::move(command)), config_(std::move(config)), out_dir_(std::move(out_dir)),
          start_(std::chrono::steady_clock::now()) {
        json inputs{{"command", command_}, {"config", config_}, {"version", kVersion}};
        hash_ = content_hash(inputs.dump());
        std::filesystem::create_directories(out_dir_);
    }
    const std::string& hash() const { return hash_; }
    std::string header() const { return "manifest " + hash_ + " command " + command_; }
    std::string path(const std::string& name) {
        outputs_.push_back(name);
        return (out_dir_ / name).string();
    }
    void finish(const json& summary) {
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        json m{{"command", command_},     {"config", config_},   {"version", kVersion},
               {"hash", hash_},           {"wall_clock_s", wall}, {"threads", omp_get_max_threads()},
               {"outputs", outputs_},     {"summary", summary}};
        std::ofstream out(out_dir_ / (command_ + "_manifest.json"));
        out << m.dump(2) << '\n';
        std::cout << summary.dump(2) << '\n';
    }

private:
    std::string command_;
    json config_;
    std::filesystem::path out_dir_;
    std::chrono::steady_clock::time_point start_;
    std::string hash_;
    std::vector<std::string> outputs_;
};

void cmd_scales(const json& cfg, Run& run) {
    const auto p = params_of(cfg);
    const auto& s = cfg.at("scales");
    const double radius = s.at("radius").get<double>();
    const SiUnits si{s.at("si_length").get<double>(), s.at("si_mass").get<double>(), s.at("si_time").get<double>()};
    std::vector<double> masses = s.at("mass_sweep").get<std::vector<double>>();
    if (masses.empty()) masses.push_back(p.mass);
    std::ofstream out(run.path("scales.csv"));
    out << "# " << run.header() << '\n';
    out << "mass,critical_length,threshold_mass,tau_spread,decoherence_energy,regime,extended_critical_length,"
           "critical_length_si,tau_spread_si\n";
    json rows = json::array();
    for (double m : masses) {
        SimParams q = p;
        q.mass = m;
        const auto d = derive_scales(q);
        const auto ext = critical_length_extended(q, radius);
        out << fmt(m) << ',' << fmt(d.critical_length) << ',' << fmt(d.threshold_mass) << ',' << fmt(d.tau_spread)
            << ',' << fmt(d.decoherence_energy) << ',' << to_string(classify_regime(q, radius)) << ','
            << fmt(ext.value) << ',' << fmt(d.critical_length * si.length) << ',' << fmt(d.tau_spread * si.time)
            << '\n';
        rows.push_back({{"mass", m}, {"critical_length", d.critical_length}, {"threshold_mass", d.threshold_mass},
                        {"regime", to_string(classify_regime(q, radius))}});
    }
    run.finish({{"rows", rows}});
}

void cmd_phasevar(const json& cfg, Run& run) {
    const auto p = params_of(cfg);
    const auto& s = cfg.at("phasevar");
    const double r1 = s.at("r1").get<double>(), r2 = s.at("r2").get<double>();
    const double t0 = s.at("t_min").get<double>(), t1 = s.at("t_max").get<double>();
    const std::size_t n = count_of(s, "n_times");
    if (n == 0 || !(t0 > 0.0) || !(t1 >= t0)) throw std::invalid_argument("phasevar: need n_times >= 1, 0 < t_min <= t_max");
    const auto method = s.at("method").get<std::string>();
    std::vector<PhaseMethod> methods;
    if (method == "all" || method == "quadrature") methods.push_back(PhaseMethod::quadrature);
    if (method == "all" || method == "closed_form") methods.push_back(PhaseMethod::closed_form);
    if (method == "all" || method == "asymptote") methods.push_back(PhaseMethod::asymptote);
    if (methods.empty()) throw std::invalid_argument("phasevar.method must be all, quadrature, closed_form or asymptote");
    std::ofstream out(run.path("phasevar.csv"));
    out << "# " << run.header() << '\n';
    out << "method,T,dphi2,error,small_time_ok,deterministic_part,stochastic_part\n";
    for (std::size_t i = 0; i < n; ++i) {
        const double T = n == 1 ? t0 : t0 + (t1 - t0) * double(i) / double(n - 1);
        for (auto m : methods) {
            const auto r = m == PhaseMethod::quadrature    ? phase_variance_quadrature(p, r1, r2, T)
                           : m == PhaseMethod::closed_form ? phase_variance_closed_form(p, r1, r2, T)
                                                           : phase_variance_asymptote(p, r1, r2, T);
            out << to_string(m) << ',' << fmt(T) << ',' << fmt(r.dphi2) << ',' << fmt(r.error) << ','
                << (r.small_time_ok ? 1 : 0) << ',' << fmt(r.deterministic_part) << ',' << fmt(r.stochastic_part)
                << '\n';
        }
    }
    const auto dt = decoherence_time(p, r1, r2);
    run.finish({{"decoherence_time", dt.infinite ? json("inf") : json(dt.time)},
                {"small_time_bound", small_time_bound(p, r1)}});
}

void cmd_evolve(const json& cfg, Run& run) {
    const auto p = params_of(cfg);
    const auto& s = cfg.at("evolve");
    EvolveConfig ec;
    ec.mode = parse_evolve_mode(s.at("mode").get<std::string>());
    ec.dt = s.at("dt").get<double>();
    ec.n_steps = count_of(s, "n_steps");
    ec.grid = RadialGrid::with_extent(s.at("r_max").get<double>(), count_of(s, "n_points"));
    ec.record_every = count_of(s, "record_every");
    ec.snapshot_every = count_of(s, "snapshot_every");
    ec.temporal = temporal_of(s);
    ec.seed = static_cast<std::uint64_t>(count_of(s, "seed"));
    ec.noise_scale = s.at("noise_scale").get<double>();
    ec.mean_scale = s.at("mean_scale").get<double>();
    ec.validate();
    auto init = RadialState::gaussian(ec.grid, GaussianPacket::from_params(p));
    init.normalize();
    const auto sum = evolve_run(p, init, ec);
    write_trajectory_csv(run.path("trajectory.csv"), sum, run.header());
    if (!sum.snapshots.empty())
        write_snapshots_binary(run.path("snapshots.bin"), ec.grid, sum.snapshots, ec.dt * double(ec.snapshot_every),
                               ec.seed);
    const auto osc = detect_oscillation(sum.samples, derive_scales(p).critical_length);
    const auto& last = sum.samples.back();
    run.finish({{"mode", std::string(to_string(ec.mode))},
                {"final_peak_radius", last.peak_radius},
                {"initial_peak_radius", sum.samples.front().peak_radius},
                {"max_step_norm_drift", sum.max_step_norm_drift},
                {"kernel_rebuilds", sum.kernel_rebuilds},
                {"turning_points", osc.maxima.size() + osc.minima.size()},
                {"full_oscillation", osc.full_oscillation}});
}

EnsembleConfig ensemble_config(const json& s) {
    EnsembleConfig ec;
    ec.n_trajectories = count_of(s, "n_trajectories");
    ec.t_final = s.at("t_final").get<double>();
    ec.n_records = count_of(s, "n_records");
    ec.pairs = {{s.at("r1").get<double>(), s.at("r2").get<double>()}};
    ec.temporal = temporal_of(s);
    ec.seed = static_cast<std::uint64_t>(count_of(s, "seed"));
    ec.noise_scale = s.at("noise_scale").get<double>();
    ec.mean_scale = s.at("mean_scale").get<double>();
    ec.n_points = count_of(s, "n_points");
    ec.xi_max = s.at("xi_max").get<double>();
    ec.max_dtau = s.at("max_dtau").get<double>();
    ec.validate();
    return ec;
}

json estimate_json(const DecoherenceEstimate& e) {
    return {{"threshold", e.threshold},       {"crossing_time", e.crossing_time}, {"crossed", e.crossed},
            {"initially_below", e.initially_below}, {"fit_time", e.fit_time}, {"fit_residual", e.fit_residual},
            {"points_used", e.points_used}};
}

void cmd_ensemble(const json& cfg, Run& run) {
    const auto p = params_of(cfg);
    const auto ec = ensemble_config(cfg.at("ensemble"));
    const auto res = run_ensemble(p, ec);
    const auto& d = res.decays.front();
    write_decay_csv(run.path("decay.csv"), d, run.header());
    const auto est = extract_decoherence_time(d, p.criterion_constant);
    const auto pred = decoherence_time(p, d.r1, d.r2);
    run.finish({{"estimate", estimate_json(est)},
                {"predicted_time", pred.time},
                {"n_samples", res.n_samples},
                {"n_failed", res.n_failed},
                {"max_norm_rate", res.max_norm_rate}});
}

void cmd_master(const json& cfg, Run& run) {
    const auto p = params_of(cfg);
    const auto& s = cfg.at("master");
    const auto sys = ToySystem::gaussian(p, count_of(s, "n_points"), s.at("extent_widths").get<double>());
    const auto kg = KGrid::for_grid(sys.grid, count_of(s, "n_k"));
    auto d = build_dkernel(p, GaussianPacket::from_params(p), kg, temporal_of(s));
    const double gs = s.at("gamma_scale").get<double>();
    if (!(gs >= 0.0)) throw std::invalid_argument("master.gamma_scale must be >= 0");
    d.gamma *= gs;
    MasterConfig mc;
    mc.t_final = s.at("t_final").get<double>();
    mc.dt = s.at("dt").get<double>();
    mc.record_every = count_of(s, "record_every");
    mc.trace_abort = s.at("trace_abort").get<double>();
    mc.validate();
    const auto rho0 = sys.initial_density();
    const auto res = evolve_master(sys, d, rho0, mc);
    write_master_csv(run.path("master.csv"), res, run.header());
    const double unitary_err = (res.rho.back() - unitary_reference(sys, rho0, res.samples.back().t, p.hbar))
                                   .cwiseAbs()
                                   .maxCoeff();
    json summary{{"max_trace_drift", res.max_trace_drift},
                 {"max_raw_asymmetry", res.max_raw_asymmetry},
                 {"min_eigenvalue", res.min_eigenvalue},
                 {"distance_from_free_evolution", unitary_err}};
    const std::size_t n_traj = count_of(s, "n_trajectories");
    if (n_traj > 0) {
        const auto en = toy_ensemble(sys, d, mc, n_traj, static_cast<std::uint64_t>(count_of(s, "seed")));
        std::ofstream out(run.path("master_ensemble.csv"));
        out << "# " << run.header() << '\n' << "t";
        const std::size_t N = sys.size();
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < N; ++j) out << ",re_" << i << '_' << j << ",im_" << i << '_' << j;
        out << '\n';
        for (std::size_t r = 0; r < en.t.size(); ++r) {
            out << fmt(en.t[r]);
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t j = 0; j < N; ++j)
                    out << ',' << fmt(en.rho[r](i, j).real()) << ',' << fmt(en.rho[r](i, j).imag());
            out << '\n';
        }
        summary["ensemble_trajectories"] = n_traj;
    }
    run.finish(summary);
}

void cmd_sweep(const json& cfg, Run& run) {
    const auto base = params_of(cfg);
    const auto& s = cfg.at("sweep");
    const auto masses = s.at("masses").get<std::vector<double>>();
    if (masses.size() < 2) throw std::invalid_argument("sweep.masses needs at least two values");
    std::ofstream out(run.path("sweep.csv"));
    out << "# " << run.header() << '\n' << "mass,predicted_time,crossing_time,crossed,initially_below,fit_time\n";
    std::vector<double> lx, ly;
    for (double m : masses) {
        SimParams p = base;
        p.mass = m;
        p.validate();
        json e = cfg.at("ensemble");
        e["n_trajectories"] = s.at("n_trajectories");
        e["r1"] = s.at("r1");
        e["r2"] = s.at("r2");
        e["seed"] = s.at("seed");
        e["temporal"] = s.at("temporal");
        e["n_records"] = s.at("n_records");
        const double pred = decoherence_time(p, e["r1"], e["r2"]).time;
        e["t_final"] = s.at("horizon").get<double>() * pred;
        const auto res = run_ensemble(p, ensemble_config(e));
        const auto est = extract_decoherence_time(res.decays.front(), p.criterion_constant);
        out << fmt(m) << ',' << fmt(pred) << ',' << fmt(est.crossing_time) << ',' << est.crossed << ','
            << est.initially_below << ',' << fmt(est.fit_time) << '\n';
        if (est.crossed) {
            lx.push_back(std::log(m));
            ly.push_back(std::log(est.crossing_time));
        }
    }
    json summary{{"masses", masses}};
    if (lx.size() >= 2) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
        mx /= double(lx.size());
        my /= double(lx.size());
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) sxy += (lx[i] - mx) * (ly[i] - my), sxx += (lx[i] - mx) * (lx[i] - mx);
        summary["mass_exponent"] = sxy / sxx;
    }
    run.finish(summary);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic Schrodinger-Newton lab"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    std::string config_path, out_dir = ".";
    std::vector<std::string> overrides;
    long long seed = -1;
    int threads = 0;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed, "Seed for every stochastic section");
    app.add_option("--out-dir", out_dir, "Output directory");
    app.add_option("--threads", threads, "Worker thread cap")->check(CLI::NonNegativeNumber);
    app.add_option("--set", overrides, "Override, key=value or section.key=value")->take_all();
    app.fallthrough();

    const std::map<std::string, void (*)(const json&, Run&)> commands{
        {"scales", cmd_scales}, {"phasevar", cmd_phasevar}, {"evolve", cmd_evolve},
        {"ensemble", cmd_ensemble}, {"master", cmd_master}, {"sweep", cmd_sweep}};
    const std::map<std::string, std::string> help{
        {"scales", "Derived scales and regime table"},
        {"phasevar", "Phase variance by quadrature, closed form and asymptote"},
        {"evolve", "Single trajectory of the radial solver"},
        {"ensemble", "Coherence decay from stochastic trajectories"},
        {"master", "Master-equation toy model"},
        {"sweep", "Decoherence time across masses"}};
    for (const auto& [name, _] : commands) app.add_subcommand(name, help.at(name));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (threads > 0) omp_set_num_threads(threads);
        json cfg = resolve_config(config_path, overrides);
        if (seed >= 0)
            for (auto* sec : {"evolve", "ensemble", "master", "sweep"}) cfg[sec]["seed"] = seed;
        const std::string name = app.get_subcommands().front()->get_name();
        cfg["params"] = params_to_map(params_of(cfg));
        Run run(name, cfg, out_dir);
        commands.at(name)(cfg, run);
        return 0;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
