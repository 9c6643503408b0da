#pragma once

#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcs/agent.hpp"
#include "dcs/baselines.hpp"
#include "dcs/env.hpp"
#include "dcs/params.hpp"
#include "dcs/scenario.hpp"

namespace dcs {

// A complete test-system description. "desk" (4 buildings) runs the whole
// suite in minutes; "campus" is the 12-building system.
struct SystemProfile {
    std::string name;
    PlantParams plant;
    std::vector<BuildingParams> buildings;
    ScenarioConfig scenario;
    double cap_fraction = 0.82;    // P_cap as a fraction of the pre-event power
    double reduction_min = 15.0;
    double recovery_min = 45.0;
    EpisodeConfig episode_template() const {
        EpisodeConfig e;
        e.t0 = 14.0 * 3600.0;
        e.t1 = e.t0 + reduction_min * 60.0;
        e.t2 = e.t1 + recovery_min * 60.0;
        e.steps_reduction = int(std::lround(reduction_min));
        return e;
    }
};

inline SystemProfile make_profile(const std::string& name) {
    SystemProfile prof;
    prof.name = name;
    std::size_t n = 0;
    if (name == "desk") n = 4;
    else if (name == "campus") n = 12;
    else throw ConfigError("make_profile: unknown profile '" + name + "'");
    prof.plant.n_buildings = n;
    prof.plant.validate();
    prof.buildings = make_buildings(n, prof.plant);
    // base loads chosen so the 14:00 nominal condition (occupancy peak, ambient
    // peak) sits exactly on the deliverable design load
    DesignPoint peak;
    peak.t_out = prof.scenario.t_out_max;
    prof.scenario.zeta_base.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        prof.scenario.zeta_base[i] = design_zeta(prof.buildings[i], prof.plant, peak)
                                   / (1.0 + prof.scenario.zeta_rel_amplitude);
    return prof;
}

// Everything fixed before controllers differ: the pre-rolled start state, the
// caps, and the no-regulation baseline trace over the event window.
struct EventSetup {
    EpisodeConfig episode;
    PlantState start;           // quasi-equilibrium at t0
    double p_t0 = 0.0;          // kW, pre-event operating power
    double baseline_peak = 0.0; // kW, peak power with no regulation over [t0,t2]
};

// The noise-free scenario used to pre-roll the plant.
inline ScenarioConfig nominal_scenario(const SystemProfile& prof) {
    ScenarioConfig cfg = prof.scenario;
    cfg.t_noise_sigma = 0.0;
    cfg.zeta_noise_rel = 0.0;
    return cfg;
}

inline EventSetup setup_event(const SystemProfile& prof) {
    EventSetup ev;
    ev.episode = prof.episode_template();

    const ScenarioProfile nominal = generate(0, nominal_scenario(prof));
    PlantState s = init_state(prof.plant, prof.buildings);
    s.time = ev.episode.t0;
    s = settle(std::move(s), nominal.at(ev.episode.t0), prof.plant, prof.buildings);
    s.time = ev.episode.t0;
    ev.start = s;
    ev.p_t0 = s.p_chiller;

    // no-regulation run over the whole event window
    double peak = s.p_chiller;
    PlantState b = s;
    for (double t = ev.episode.t0; t < ev.episode.t2; t += ev.episode.dt_control) {
        b = plant_step(b, b.m_primary, nominal.at(t), prof.plant, prof.buildings,
                       ev.episode.dt_control);
        peak = std::max(peak, b.p_chiller);
    }
    ev.baseline_peak = peak;

    ev.episode.p_cap = prof.cap_fraction * ev.p_t0;
    ev.episode.p_bar = ev.baseline_peak;
    ev.episode.validate();
    return ev;
}

// ---- trace and summary output --------------------------------------------

inline void write_trace_csv(const EpisodeTrace& trace, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ConfigError("write_trace_csv: cannot open " + path);
    const std::size_t n = trace.records.empty() ? 0 : trace.records.front().delta_t.size();
    f << "step,time_s,p_ch_kw,p_cap_kw,reward";
    char col[32];
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(col, sizeof(col), ",dt_b%02zu", i + 1);
        f << col;
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(col, sizeof(col), ",m_b%02zu", i + 1);
        f << col;
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(col, sizeof(col), ",mw_b%02zu", i + 1);
        f << col;
    }
    f << "\n";
    char buf[160];
    for (const auto& r : trace.records) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g",
                      r.step, r.time_s, r.p_exec_kw, r.p_cap_kw, r.reward);
        f << buf;
        for (double v : r.delta_t) { std::snprintf(buf, sizeof(buf), ",%.17g", v); f << buf; }
        for (double v : r.m_primary) { std::snprintf(buf, sizeof(buf), ",%.17g", v); f << buf; }
        for (double v : r.m_wind) { std::snprintf(buf, sizeof(buf), ",%.17g", v); f << buf; }
        f << "\n";
    }
}

inline nlohmann::ordered_json trace_summary(const EpisodeTrace& trace) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["stage"] = trace.stage == Stage::Reduction ? "reduction" : "recovery";
    j["steps"] = trace.records.size();
    j["max_deviation_c"] = trace.max_abs_deviation();
    j["uncomfortable_buildings"] = trace.uncomfortable_count();
    j["mean_deviation_c"] = trace.mean_abs_deviation();
    j["peak_power_kw"] = trace.peak_power();
    j["total_reward"] = trace.total_reward();
    bool infeasible = false;
    for (const auto& r : trace.records) infeasible = infeasible || r.infeasible;
    j["infeasible"] = infeasible;
    return j;
}

inline void write_json(const nlohmann::ordered_json& j, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ConfigError("write_json: cannot open " + path);
    f << j.dump(2) << "\n";
}

inline void write_curve_csv(const std::vector<double>& curve, const std::string& header,
                            const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ConfigError("write_curve_csv: cannot open " + path);
    f << "episode," << header << "\n";
    char buf[64];
    for (std::size_t i = 0; i < curve.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i + 1, curve[i]);
        f << buf;
    }
}

// ---- end-to-end controller evaluation ------------------------------------

struct EvalResult {
    EpisodeTrace reduction;
    EpisodeTrace recovery;

    double max_deviation() const {
        return std::max(reduction.max_abs_deviation(), recovery.max_abs_deviation());
    }
    int uncomfortable() const {
        return std::max(reduction.uncomfortable_count(), recovery.uncomfortable_count());
    }
    double recovery_peak() const { return recovery.peak_power(); }
};

// Runs reduction then recovery with per-stage policies; the recovery episode
// starts from the end-of-reduction plant state.
inline EvalResult run_event(Env& env, const Policy& reduction_policy,
                            const Policy& recovery_policy, const ScenarioProfile& scenario,
                            const EventSetup& ev, bool use_safe_layer) {
    EvalResult out;
    RolloutOptions opt{use_safe_layer};
    out.reduction = rollout(env, reduction_policy, Stage::Reduction, scenario, ev.start, opt);
    out.recovery = rollout(env, recovery_policy, Stage::Recovery, scenario, env.state(), opt);
    return out;
}

// PI evaluation: a fresh controller per stage, no safe layer.
inline EvalResult run_event_pi(Env& env, const ScenarioProfile& scenario,
                               const EventSetup& ev, const PiConfig& pi_cfg) {
    std::vector<double> t_set(env.n_buildings());
    for (std::size_t i = 0; i < env.n_buildings(); ++i) t_set[i] = env.buildings()[i].t_set;

    EvalResult out;
    auto ctl_red = std::make_shared<PiController>(pi_cfg, ev.episode.p_cap, t_set);
    out.reduction = rollout(env, make_pi_policy(ctl_red, Stage::Reduction, env),
                            Stage::Reduction, scenario, ev.start, RolloutOptions{false});
    auto ctl_rec = std::make_shared<PiController>(pi_cfg, ev.episode.p_cap, t_set);
    out.recovery = rollout(env, make_pi_policy(ctl_rec, Stage::Recovery, env),
                           Stage::Recovery, scenario, env.state(), RolloutOptions{false});
    return out;
}

} // namespace dcs
