#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dcs/common.hpp"
#include "dcs/thermal.hpp"

namespace dcs {

// Time series of ambient temperature and per-building internal heat loads.
struct ScenarioProfile {
    double dt = 60.0; // s
    double horizon = 86400.0; // s
    std::uint64_t seed = 0;
    std::vector<double> t_out_series; // degC
    std::vector<std::vector<double>> zeta_series; // [building][step], kW

    std::size_t n_steps() const { return t_out_series.size(); }
    std::size_t n_buildings() const { return zeta_series.size(); }

    ScenarioSample at(double time_s) const {
        const std::size_t k = std::min<std::size_t>(
            n_steps() - 1, std::size_t(std::max(0.0, time_s) / dt));
        ScenarioSample sc;
        sc.t_out = t_out_series[k];
        sc.zeta.resize(n_buildings());
        for (std::size_t i = 0; i < n_buildings(); ++i) sc.zeta[i] = zeta_series[i][k];
        return sc;
    }

    void validate() const {
        if (t_out_series.empty()) throw ConfigError("ScenarioProfile: empty series");
        for (const auto& z : zeta_series) {
            if (z.size() != n_steps())
                throw ConfigError("ScenarioProfile: zeta series length mismatch");
            for (double v : z)
                if (!(v >= 0.0)) throw ConfigError("ScenarioProfile: negative or NaN heat load");
        }
        if (n_steps() * dt < horizon)
            throw ConfigError("ScenarioProfile: series shorter than horizon");
    }
};

struct ScenarioConfig {
    double dt = 60.0;
    double horizon = 86400.0;
    double t_out_min = 26.0;   // degC
    double t_out_max = 35.0;
    double peak_hour = 14.0;   // hour of day of the diurnal peak
    double t_noise_sigma = 0.1;   // degC per step innovation
    double t_noise_rho = 0.95;    // mean-reversion of the AR(1) noise
    double zeta_rel_amplitude = 0.25; // occupancy swing around the base load
    double zeta_noise_rel = 0.01;     // innovation scale relative to base
    std::vector<double> zeta_base;    // kW per building

    void validate() const {
        if (dt <= 0.0 || horizon <= 0.0) throw ConfigError("ScenarioConfig: dt/horizon must be > 0");
        if (t_out_min >= t_out_max) throw ConfigError("ScenarioConfig: t_out_min must be < t_out_max");
        if (peak_hour < 0.0 || peak_hour >= 24.0) throw ConfigError("ScenarioConfig: peak_hour out of range");
        if (t_noise_sigma < 0.0 || zeta_noise_rel < 0.0)
            throw ConfigError("ScenarioConfig: noise scales must be >= 0");
        if (t_noise_rho < 0.0 || t_noise_rho >= 1.0)
            throw ConfigError("ScenarioConfig: t_noise_rho must be in [0,1)");
        if (zeta_base.empty()) throw ConfigError("ScenarioConfig: zeta_base must name each building");
        for (double z : zeta_base)
            if (z <= 0.0) throw ConfigError("ScenarioConfig: zeta_base entries must be > 0");
    }
};

// Diurnal sinusoid plus clipped mean-reverting noise; bit-reproducible from
// the seed.
inline ScenarioProfile generate(std::uint64_t seed, const ScenarioConfig& cfg) {
    cfg.validate();
    const std::size_t steps = std::size_t(std::ceil(cfg.horizon / cfg.dt)) + 1;
    const std::size_t n = cfg.zeta_base.size();

    ScenarioProfile out;
    out.dt = cfg.dt;
    out.horizon = cfg.horizon;
    out.seed = seed;
    out.t_out_series.resize(steps);
    out.zeta_series.assign(n, std::vector<double>(steps));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const double mean = 0.5 * (cfg.t_out_min + cfg.t_out_max);
    const double amp = 0.5 * (cfg.t_out_max - cfg.t_out_min);
    double noise_t = 0.0;
    std::vector<double> noise_z(n, 0.0);
    for (std::size_t k = 0; k < steps; ++k) {
        const double hour = std::fmod(k * cfg.dt / 3600.0, 24.0);
        const double phase = 2.0 * M_PI * (hour - cfg.peak_hour) / 24.0;
        if (cfg.t_noise_sigma > 0.0)
            noise_t = cfg.t_noise_rho * noise_t + cfg.t_noise_sigma * gauss(rng);
        out.t_out_series[k] = std::clamp(mean + amp * std::cos(phase) + noise_t,
                                         cfg.t_out_min, cfg.t_out_max);
        for (std::size_t i = 0; i < n; ++i) {
            const double base = cfg.zeta_base[i];
            if (cfg.zeta_noise_rel > 0.0)
                noise_z[i] = cfg.t_noise_rho * noise_z[i]
                           + cfg.zeta_noise_rel * base * gauss(rng);
            const double occ = base * (1.0 + cfg.zeta_rel_amplitude * std::cos(phase));
            out.zeta_series[i][k] = std::max(0.0, occ + noise_z[i]);
        }
    }
    out.validate();
    return out;
}

// CSV schema: time_s,t_out_c,zeta_b01_kw,...  one row per dt, UTF-8.
inline void save_csv(const ScenarioProfile& prof, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ConfigError("save_csv: cannot open " + path);
    f << "time_s,t_out_c";
    for (std::size_t i = 0; i < prof.n_buildings(); ++i) {
        char col[32];
        std::snprintf(col, sizeof(col), ",zeta_b%02zu_kw", i + 1);
        f << col;
    }
    f << "\n";
    char buf[64];
    for (std::size_t k = 0; k < prof.n_steps(); ++k) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g", k * prof.dt, prof.t_out_series[k]);
        f << buf;
        for (std::size_t i = 0; i < prof.n_buildings(); ++i) {
            std::snprintf(buf, sizeof(buf), ",%.17g", prof.zeta_series[i][k]);
            f << buf;
        }
        f << "\n";
    }
}

inline ScenarioProfile load_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("load_csv: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw ConfigError("load_csv: empty file " + path);

    std::vector<std::string> cols;
    {
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cols.push_back(c);
    }
    if (cols.size() < 3 || cols[0] != "time_s" || cols[1] != "t_out_c")
        throw ConfigError("load_csv: header must start with time_s,t_out_c");
    const std::size_t n = cols.size() - 2;
    for (std::size_t i = 0; i < n; ++i) {
        char want[32];
        std::snprintf(want, sizeof(want), "zeta_b%02zu_kw", i + 1);
        if (cols[i + 2] != want)
            throw ConfigError("load_csv: unexpected column '" + cols[i + 2]
                              + "', expected '" + want + "'");
    }

    ScenarioProfile out;
    out.zeta_series.assign(n, {});
    std::size_t row = 0;
    double prev_t = 0.0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        ++row;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0' || std::isnan(v))
                throw ConfigError("load_csv: bad numeric value '" + cell + "' at row "
                                  + std::to_string(row));
            vals.push_back(v);
        }
        if (vals.size() != n + 2)
            throw ConfigError("load_csv: wrong column count at row " + std::to_string(row));
        if (row == 2) out.dt = vals[0] - prev_t;
        if (row >= 2) {
            const double gap = vals[0] - prev_t;
            if (std::abs(gap - out.dt) > 1e-6 * std::max(1.0, out.dt) || gap <= 0.0)
                throw ConfigError("load_csv: non-uniform or non-monotonic timestamp at row "
                                  + std::to_string(row));
        }
        prev_t = vals[0];
        out.t_out_series.push_back(vals[1]);
        for (std::size_t i = 0; i < n; ++i) {
            if (vals[i + 2] < 0.0)
                throw ConfigError("load_csv: negative heat load at row " + std::to_string(row));
            out.zeta_series[i].push_back(vals[i + 2]);
        }
    }
    if (out.t_out_series.empty()) throw ConfigError("load_csv: no data rows in " + path);
    out.horizon = (out.n_steps() - 1) * out.dt;
    out.validate();
    return out;
}

} // namespace dcs
