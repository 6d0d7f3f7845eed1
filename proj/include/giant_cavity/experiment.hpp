#pragma once

#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <exception>
#include <fstream>
#include <map>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "covariance.hpp"
#include "filter.hpp"
#include "io.hpp"
#include "model.hpp"
#include "oracle.hpp"
#include "sde_sim.hpp"
#include "wigner.hpp"

namespace giant_cavity {

enum class WignerMode { none, coherent, cat };

inline std::string to_string(WignerMode m) {
    switch (m) {
        case WignerMode::none: return "none";
        case WignerMode::coherent: return "coherent";
        case WignerMode::cat: return "cat";
    }
    return "none";
}

struct ExperimentConfig {
    PhysicalParams physical;

    struct Sim {
        double horizon = 0.0;
        std::optional<double> step;
        std::optional<double> step_divisor;
        std::uint64_t seed = 1;
        std::size_t trajectories = 1;
        Prehistory prehistory = Prehistory::zero;
        double noise_scale = 1.0;
        Vec2 x0 = Vec2::Zero();
    } sim;

    struct Filter {
        Vec2 xhat0 = Vec2::Zero();
        Mat2 P0 = Mat2::Identity();
        Integrator integrator = Integrator::euler;
    } filter;

    struct Wigner {
        WignerMode mode = WignerMode::none;
        double beta = 0.8;
        double sigma = 0.2;
        double half_width = 4.0;
        std::optional<std::size_t> n_q, n_p;
        std::vector<double> snapshots{0.0, 0.01, 0.5, 1.0};
    } wigner;

    struct Oracle {
        bool audit = true;
    } oracle;

    struct Output {
        std::filesystem::path directory = "out";
        std::string format = "csv";
    } output;
};

namespace detail {

inline double parse_double(const std::string& text, const std::string& field) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        while (used < text.size() && std::isspace(static_cast<unsigned char>(text[used]))) ++used;
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("'" + text + "' is not a number", field);
    }
}

inline std::vector<double> parse_list(const std::string& text, const std::string& field) {
    std::vector<double> out;
    for (const auto& part : io::split(text, ',')) out.push_back(parse_double(part, field));
    return out;
}

inline Vec2 parse_vec2(const std::string& text, const std::string& field) {
    const auto v = parse_list(text, field);
    if (v.size() != 2) throw ConfigError("expected two comma-separated values", field);
    return {v[0], v[1]};
}

inline std::uint64_t parse_count(const std::string& text, const std::string& field) {
    const double v = parse_double(text, field);
    if (v < 0.0 || v != std::floor(v) || v > 9.0e15) throw ConfigError("expected a non-negative integer", field);
    return static_cast<std::uint64_t>(v);
}

}  // namespace detail

/// Parse a plain-text INI config. Unknown sections or keys are rejected.
inline ExperimentConfig parse_config(std::istream& in) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(e.message() + " (line " + std::to_string(e.line()) + ")", "config");
    }

    const std::map<std::string, std::set<std::string>> allowed{
        {"physical", {"omega_c", "gamma", "V_q", "v_g", "L"}},
        {"sim", {"horizon", "step", "step_divisor", "seed", "trajectories", "prehistory", "noise_scale", "x0"}},
        {"filter", {"xhat0", "P0", "integrator"}},
        {"wigner", {"mode", "beta", "sigma", "half_width", "n_q", "n_p", "snapshots"}},
        {"oracle", {"audit"}},
        {"output", {"directory", "format"}},
    };
    for (const auto& [section, body] : tree) {
        const auto it = allowed.find(section);
        if (it == allowed.end()) throw ConfigError("unknown section", section);
        for (const auto& [key, _] : body)
            if (!it->second.count(key)) throw ConfigError("unknown key", section + "." + key);
    }

    auto get = [&](const std::string& path) -> std::optional<std::string> {
        if (auto v = tree.get_optional<std::string>(path)) return *v;
        return std::nullopt;
    };
    auto require = [&](const std::string& path) {
        auto v = get(path);
        if (!v) throw ConfigError("required setting is missing", path);
        return *v;
    };
    using detail::parse_double;

    ExperimentConfig c;
    c.physical.omega_c = parse_double(require("physical.omega_c"), "physical.omega_c");
    c.physical.v_g = parse_double(require("physical.v_g"), "physical.v_g");
    c.physical.L = parse_double(require("physical.L"), "physical.L");
    if (auto v = get("physical.gamma")) c.physical.gamma = parse_double(*v, "physical.gamma");
    if (auto v = get("physical.V_q")) c.physical.coupling_strength = parse_double(*v, "physical.V_q");

    c.sim.horizon = parse_double(require("sim.horizon"), "sim.horizon");
    if (auto v = get("sim.step")) c.sim.step = parse_double(*v, "sim.step");
    if (auto v = get("sim.step_divisor")) c.sim.step_divisor = parse_double(*v, "sim.step_divisor");
    if (auto v = get("sim.seed")) c.sim.seed = detail::parse_count(*v, "sim.seed");
    if (auto v = get("sim.trajectories")) c.sim.trajectories = detail::parse_count(*v, "sim.trajectories");
    if (auto v = get("sim.prehistory")) {
        try {
            c.sim.prehistory = prehistory_from_string(*v);
        } catch (const ConfigError& e) {
            throw ConfigError(e.message(), "sim.prehistory");
        }
    }
    if (auto v = get("sim.noise_scale")) c.sim.noise_scale = parse_double(*v, "sim.noise_scale");
    if (auto v = get("sim.x0")) c.sim.x0 = detail::parse_vec2(*v, "sim.x0");

    if (auto v = get("filter.xhat0")) c.filter.xhat0 = detail::parse_vec2(*v, "filter.xhat0");
    if (auto v = get("filter.P0")) {
        const auto e = detail::parse_list(*v, "filter.P0");
        if (e.size() == 3)
            c.filter.P0 << e[0], e[1], e[1], e[2];
        else if (e.size() == 4)
            c.filter.P0 << e[0], e[1], e[2], e[3];
        else
            throw ConfigError("expected p11, p12, p22 or four row-major entries", "filter.P0");
    }
    if (auto v = get("filter.integrator")) {
        try {
            c.filter.integrator = integrator_from_string(*v);
        } catch (const ConfigError& e) {
            throw ConfigError(e.message(), "filter.integrator");
        }
    }

    if (auto v = get("wigner.mode")) {
        if (*v == "none")
            c.wigner.mode = WignerMode::none;
        else if (*v == "coherent")
            c.wigner.mode = WignerMode::coherent;
        else if (*v == "cat")
            c.wigner.mode = WignerMode::cat;
        else
            throw ConfigError("expected none, coherent or cat", "wigner.mode");
    }
    if (auto v = get("wigner.beta")) c.wigner.beta = parse_double(*v, "wigner.beta");
    if (auto v = get("wigner.sigma")) c.wigner.sigma = parse_double(*v, "wigner.sigma");
    if (auto v = get("wigner.half_width")) c.wigner.half_width = parse_double(*v, "wigner.half_width");
    if (auto v = get("wigner.n_q")) c.wigner.n_q = detail::parse_count(*v, "wigner.n_q");
    if (auto v = get("wigner.n_p")) c.wigner.n_p = detail::parse_count(*v, "wigner.n_p");
    if (auto v = get("wigner.snapshots")) c.wigner.snapshots = detail::parse_list(*v, "wigner.snapshots");

    if (auto v = get("oracle.audit")) {
        if (*v == "true")
            c.oracle.audit = true;
        else if (*v == "false")
            c.oracle.audit = false;
        else
            throw ConfigError("expected true or false", "oracle.audit");
    }

    if (auto v = get("output.directory")) c.output.directory = *v;
    if (auto v = get("output.format")) c.output.format = *v;
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string(), "--config");
    return parse_config(in);
}

/// Everything derived from a config, validated before any run starts.
struct ResolvedExperiment {
    ExperimentConfig config;
    double gamma = 0.0;
    StateSpaceModel model;
    TimeGrid grid;
    double snap_error = 0.0;
    std::size_t wigner_n_q = 0, wigner_n_p = 0;
};

inline ResolvedExperiment resolve(const ExperimentConfig& c) {
    ResolvedExperiment r;
    r.config = c;

    auto prefixed = [](const ConfigError& e, const std::string& section) {
        return ConfigError(e.message(), e.field().empty() ? section : section + "." + e.field());
    };
    try {
        validate(c.physical);
        r.gamma = resolved_gamma(c.physical);
        r.model = build_model(c.physical);
    } catch (const ConfigError& e) {
        throw prefixed(e, "physical");
    }

    if (c.sim.step && c.sim.step_divisor)
        throw ConfigError("set either step or step_divisor, not both", "sim.step_divisor");
    double h = 0.0;
    const char* step_field = "sim.step";
    if (c.sim.step) {
        h = *c.sim.step;
    } else {
        const double divisor = c.sim.step_divisor.value_or(100.0);
        step_field = "sim.step_divisor";
        if (!(divisor >= 1.0) || divisor != std::floor(divisor))
            throw ConfigError("T/h must be a positive integer (got " + std::to_string(divisor) + ")", step_field);
        if (r.model.T == 0.0) throw ConfigError("zero delay: give sim.step instead", step_field);
        h = r.model.T / divisor;
    }
    try {
        r.grid = make_grid(r.model.T, h, c.sim.horizon, &r.snap_error);
    } catch (const ConfigError& e) {
        throw ConfigError(e.message(), e.field() == "horizon" ? "sim.horizon" : step_field);
    }
    if (c.sim.trajectories < 1) throw ConfigError("need at least one trajectory", "sim.trajectories");
    if (!(c.sim.noise_scale >= 0.0) || !std::isfinite(c.sim.noise_scale))
        throw ConfigError("noise scale must be non-negative", "sim.noise_scale");
    if (!c.sim.x0.allFinite()) throw ConfigError("must be finite", "sim.x0");

    if (!c.filter.xhat0.allFinite()) throw ConfigError("must be finite", "filter.xhat0");
    try {
        require_symmetric_psd(c.filter.P0, "P0");
        (void)measurement_precision(r.model);
    } catch (const ConfigError& e) {
        throw prefixed(e, "filter");
    }

    if (c.wigner.mode != WignerMode::none) {
        if (!(c.wigner.half_width > 0.0)) throw ConfigError("must be positive", "wigner.half_width");
        for (double f : c.wigner.snapshots)
            if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("snapshot fractions must lie in [0, 1]", "wigner.snapshots");
        std::size_t n_default = 201;
        if (c.wigner.mode == WignerMode::cat) {
            if (!(c.wigner.sigma > 0.0)) throw ConfigError("must be positive", "wigner.sigma");
            const CatParams cp{0.0, 0.0, c.wigner.beta, c.wigner.sigma};
            const std::size_t need = min_cat_points(cp, 2.0 * c.wigner.half_width);
            n_default = std::max(n_default, need);
            if (c.wigner.n_q && *c.wigner.n_q < need)
                throw ConfigError("too coarse to resolve the cat fringes; need at least " + std::to_string(need),
                                  "wigner.n_q");
        }
        r.wigner_n_q = c.wigner.n_q.value_or(n_default);
        r.wigner_n_p = c.wigner.n_p.value_or(n_default);
        if (r.wigner_n_q < 2) throw ConfigError("need at least 2 points", "wigner.n_q");
        if (r.wigner_n_p < 2) throw ConfigError("need at least 2 points", "wigner.n_p");
    }

    if (c.output.format != "csv") throw ConfigError("only csv is supported", "output.format");
    if (c.output.directory.empty()) throw ConfigError("must not be empty", "output.directory");
    return r;
}

struct RunSummary {
    nlohmann::json metadata;
    std::vector<std::filesystem::path> files;
};

namespace detail {

struct SeedRun {
    std::uint64_t seed = 0;
    Trajectory truth;
    EstimateTrajectory estimate;
};

inline io::Table trajectory_table(const TimeGrid& grid, const std::vector<Vec2>& x, const std::vector<Vec2>& xhat,
                                  const std::vector<Vec2>& dnu) {
    io::Table t;
    t.columns = {"t", "q_true", "p_true", "q_hat", "p_hat", "dnu_q", "dnu_p"};
    t.rows.reserve(grid.steps + 1);
    const double nan = std::nan("");
    for (std::size_t k = 0; k <= grid.steps; ++k) {
        const bool has_nu = k < dnu.size();
        t.rows.push_back({grid.time(k), x[k].x(), x[k].y(), xhat[k].x(), xhat[k].y(), has_nu ? dnu[k].x() : nan,
                          has_nu ? dnu[k].y() : nan});
    }
    return t;
}

inline io::Table covariance_table(const CovarianceLattice& lat) {
    io::Table t;
    t.columns = {"t"};
    for (std::size_t j = 0; j <= lat.j_max; ++j)
        for (const char* e : {"11", "12", "21", "22"}) t.columns.push_back("P" + std::to_string(j) + "_" + e);
    for (const char* e : {"11", "12", "21", "22"}) t.columns.push_back(std::string("K_") + e);
    for (std::size_t k = 0; k <= lat.grid.steps; ++k) {
        std::vector<double> row{lat.grid.time(k)};
        auto push = [&](const Mat2& m) {
            row.insert(row.end(), {m(0, 0), m(0, 1), m(1, 0), m(1, 1)});
        };
        for (std::size_t j = 0; j <= lat.j_max; ++j) push(lat.P[j][k]);
        push(lat.gain[k]);
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline nlohmann::json to_json(const Vec2& v) { return {v.x(), v.y()}; }
inline nlohmann::json to_json(const Mat2& m) { return {{m(0, 0), m(0, 1)}, {m(1, 0), m(1, 1)}}; }

}  // namespace detail

/// Simulate, filter and serialize one experiment. Seeds run concurrently;
/// every output file is written by exactly one worker.
inline RunSummary run(const ResolvedExperiment& r, std::ostream* log = nullptr) {
    namespace fs = std::filesystem;
    using nlohmann::json;
    const auto wall_start = std::chrono::steady_clock::now();
    const auto& c = r.config;
    const fs::path dir = c.output.directory;

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create " + dir.string(), "output.directory");

    RunSummary summary;
    std::mutex files_mutex;
    auto note_file = [&](const fs::path& p) {
        std::lock_guard lock(files_mutex);
        summary.files.push_back(p);
    };

    const CovarianceLattice lattice = propagate(r.model, c.filter.P0, c.sim.horizon, r.grid.h, c.filter.integrator);

    std::vector<detail::SeedRun> runs(c.sim.trajectories);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < runs.size(); i = next++) {
            try {
                auto& sr = runs[i];
                sr.seed = c.sim.seed + i;
                SimConfig sc{c.sim.horizon, r.grid.h, sr.seed, c.sim.x0, c.sim.prehistory, c.sim.noise_scale};
                sr.truth = simulate(r.model, sc);
                sr.estimate = run_filter(r.model, lattice, measurements(sr.truth), c.filter.xhat0, c.sim.prehistory);
                const fs::path p = dir / ("trajectory_seed_" + std::to_string(sr.seed) + ".csv");
                io::write_table(p, detail::trajectory_table(r.grid, sr.truth.x, sr.estimate.xhat, sr.estimate.dnu));
                note_file(p);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const std::size_t n_threads =
        std::max<std::size_t>(1, std::min<std::size_t>(runs.size(), std::thread::hardware_concurrency()));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    const std::size_t steps = r.grid.steps;
    std::vector<Vec2> mean_x(steps + 1, Vec2::Zero()), mean_xhat(steps + 1, Vec2::Zero()),
        mean_dnu(steps, Vec2::Zero());
    const double inv = 1.0 / static_cast<double>(runs.size());
    for (const auto& sr : runs) {
        for (std::size_t k = 0; k <= steps; ++k) {
            mean_x[k] += inv * sr.truth.x[k];
            mean_xhat[k] += inv * sr.estimate.xhat[k];
        }
        for (std::size_t k = 0; k < steps; ++k) mean_dnu[k] += inv * sr.estimate.dnu[k];
    }
    const fs::path mean_path = dir / "ensemble_mean.csv";
    io::write_table(mean_path, detail::trajectory_table(r.grid, mean_x, mean_xhat, mean_dnu));
    note_file(mean_path);

    const fs::path cov_path = dir / "covariance.csv";
    io::write_table(cov_path, detail::covariance_table(lattice));
    note_file(cov_path);

    json wigner_meta = {{"mode", to_string(c.wigner.mode)}};
    if (c.wigner.mode != WignerMode::none) {
        wigner_meta["half_width"] = c.wigner.half_width;
        wigner_meta["n_q"] = r.wigner_n_q;
        wigner_meta["n_p"] = r.wigner_n_p;
        wigner_meta["centers"] = "ensemble mean";
        if (c.wigner.mode == WignerMode::cat) {
            wigner_meta["beta"] = c.wigner.beta;
            wigner_meta["sigma"] = c.wigner.sigma;
        }
        json snaps = json::array();
        for (std::size_t s = 0; s < c.wigner.snapshots.size(); ++s) {
            const double frac = c.wigner.snapshots[s];
            const auto k = static_cast<std::size_t>(std::llround(frac * static_cast<double>(steps)));
            for (const auto& [kind, center] : {std::pair{"true", mean_x[k]}, std::pair{"filter", mean_xhat[k]}}) {
                GridSpec spec = GridSpec::centered(center, c.wigner.half_width, r.wigner_n_q);
                spec.n_p = r.wigner_n_p;
                std::map<std::string, std::string> header{{"kind", kind},
                                                          {"mode", to_string(c.wigner.mode)},
                                                          {"t", io::format_number(r.grid.time(k))},
                                                          {"k", std::to_string(k)},
                                                          {"fraction", io::format_number(frac)}};
                WignerGrid g;
                if (c.wigner.mode == WignerMode::coherent) {
                    g = coherent_wigner(center, spec);
                } else {
                    g = cat_wigner({center.x(), center.y(), c.wigner.beta, c.wigner.sigma}, spec);
                    header["beta"] = io::format_number(c.wigner.beta);
                    header["sigma"] = io::format_number(c.wigner.sigma);
                }
                const fs::path p = dir / ("wigner_" + std::string(kind) + "_" + std::to_string(s) + ".txt");
                io::write_wigner(p, g, header);
                note_file(p);
            }
            snaps.push_back({{"fraction", frac}, {"k", k}, {"t", r.grid.time(k)}});
        }
        wigner_meta["snapshots"] = snaps;
    }

    json audit = {{"enabled", c.oracle.audit}};
    if (c.oracle.audit && r.grid.delay_steps > 0 && steps >= r.grid.delay_steps) {
        const auto am = build_augmented(r.model, r.grid.h);
        const auto ae = augmented_kalman(am, measurements(runs.front().truth), c.filter.xhat0, c.filter.P0,
                                         c.sim.prehistory);
        const std::size_t n = r.grid.delay_steps;
        const double cross = ae.cross_delay[n].norm();
        audit["seed"] = runs.front().seed;
        audit["t"] = r.grid.time(n);
        audit["exact_cross_norm"] = cross;
        audit["lattice_P0_norm"] = lattice.P[0][n].norm();
        audit["relative_to_lattice_P0"] = cross / lattice.P[0][n].norm();
        audit["relative_to_oracle_P0"] = cross / ae.P_top[n].norm();
        audit["norm"] = "Frobenius";
    }

    json seeds = json::array();
    for (const auto& sr : runs) seeds.push_back(sr.seed);

    json physical = {{"omega_c", c.physical.omega_c}, {"gamma", r.gamma},   {"v_g", c.physical.v_g},
                     {"L", c.physical.L},             {"T", r.model.T}};
    if (c.physical.coupling_strength) physical["V_q"] = *c.physical.coupling_strength;

    summary.metadata = {
        {"physical", physical},
        {"sim",
         {{"horizon", c.sim.horizon},
          {"h", r.grid.h},
          {"step_divisor", r.grid.delay_steps},
          {"delay_steps", r.grid.delay_steps},
          {"steps", steps},
          {"seed", c.sim.seed},
          {"trajectories", c.sim.trajectories},
          {"prehistory", to_string(c.sim.prehistory)},
          {"noise_scale", c.sim.noise_scale},
          {"x0", detail::to_json(c.sim.x0)}}},
        {"filter",
         {{"xhat0", detail::to_json(c.filter.xhat0)},
          {"P0", detail::to_json(c.filter.P0)},
          {"integrator", to_string(c.filter.integrator)}}},
        {"lattice", {{"j_max", lattice.j_max}, {"max_relative_asymmetry", lattice.max_relative_asymmetry}}},
        {"wigner", wigner_meta},
        {"oracle", {{"audit", c.oracle.audit}}},
        {"cross_covariance_audit", audit},
        {"output", {{"directory", dir.string()}, {"format", c.output.format}}},
        {"delay_snap_error", r.snap_error},
        {"seeds", seeds},
    };

    const fs::path meta_path = dir / "metadata.json";
    summary.files.push_back(meta_path);
    json files = json::array();
    for (const auto& p : summary.files) files.push_back(p.filename().string());
    summary.metadata["output"]["files"] = files;
    summary.metadata["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    {
        auto out = io::open_for_write(meta_path);
        out << summary.metadata.dump(2) << '\n';
    }
    if (log)
        *log << "wrote " << summary.files.size() << " files to " << dir.string() << " ("
             << summary.metadata["wall_time_s"].get<double>() << " s)\n";
    return summary;
}

}  // namespace giant_cavity
