#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "dcs/common.hpp"
#include "dcs/safelayer.hpp"
#include "dcs/scenario.hpp"
#include "dcs/thermal.hpp"

namespace dcs {

enum class Stage { Reduction, Recovery };

// CMDP state vector, dimension 3|I|+1.
struct Observation {
    double delta_p = 0.0;            // P_ch - P_cap, kW
    std::vector<double> m_primary;   // kg/s
    std::vector<double> t_i_return;  // degC
    std::vector<double> delta_t;     // indoor deviation from set point, degC

    std::size_t dim() const { return 3 * m_primary.size() + 1; }

    std::vector<double> flatten() const {
        std::vector<double> v;
        v.reserve(dim());
        v.push_back(delta_p);
        v.insert(v.end(), m_primary.begin(), m_primary.end());
        v.insert(v.end(), t_i_return.begin(), t_i_return.end());
        v.insert(v.end(), delta_t.begin(), delta_t.end());
        return v;
    }
};

// Per-building mass-flow change, kg/s.
struct ControlAction {
    std::vector<double> delta_m;
};

struct EpisodeConfig {
    double t0 = 50400.0;  // 14:00, s of day
    double t1 = 51300.0;  // reduction end
    double t2 = 54000.0;  // recovery end
    double p_cap = 0.0;   // kW, reduction-stage cap
    double p_bar = 0.0;   // kW, recovery-stage cap
    double lambda = 6.0;
    double theta_r = 1.0;
    double gamma = 0.9;
    int steps_reduction = 15;
    double dt_control = 60.0; // s

    int steps_recovery() const { return int(std::lround((t2 - t1) / dt_control)); }

    void validate() const {
        if (!(t0 < t1 && t1 < t2)) throw ConfigError("EpisodeConfig: need t0 < t1 < t2");
        if (p_cap <= 0.0) throw ConfigError("EpisodeConfig: p_cap must be > 0");
        if (gamma < 0.0 || gamma > 1.0) throw ConfigError("EpisodeConfig: gamma must be in [0,1]");
        if (lambda <= 0.0) throw ConfigError("EpisodeConfig: lambda must be > 0");
        if (dt_control <= 0.0) throw ConfigError("EpisodeConfig: dt_control must be > 0");
    }
};

// Average-plus-variance comfort penalty of the reduction stage (population
// variance over buildings).
inline double reward_reduction(const std::vector<double>& next_delta_t, double theta_r) {
    const std::size_t n = next_delta_t.size();
    double mean_abs = 0.0, mean = 0.0;
    for (double d : next_delta_t) {
        mean_abs += std::abs(d);
        mean += d;
    }
    mean_abs /= double(n);
    mean /= double(n);
    double var = 0.0;
    for (double d : next_delta_t) var += (d - mean) * (d - mean);
    var /= double(n);
    return -theta_r * mean_abs - var;
}

// Logistic recovery target: the deviation the building is *supposed* to still
// carry at time t of the recovery stage.
inline double adaptive_factor(double delta_t_at_t1, double t, const EpisodeConfig& cfg) {
    const double x = (t - cfg.t1) / (cfg.t2 - cfg.t1) - 0.5;
    return delta_t_at_t1 / (1.0 + std::exp(cfg.lambda * x));
}

inline double reward_recovery(const std::vector<double>& next_delta_t,
                              const std::vector<double>& phi) {
    if (next_delta_t.size() != phi.size())
        throw DomainError("reward_recovery: array length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i)
        acc += std::abs(next_delta_t[i] - phi[i]);
    return -acc / double(phi.size());
}

struct Transition {
    Observation obs;
    ControlAction action; // executed (post-safe-layer) action
    double reward = 0.0;
    Observation next_obs;
    bool done = false;
};

struct StepRecord {
    int step = 0;
    double time_s = 0.0;
    double p_exec_kw = 0.0; // power of the executed flows at execution-time theta
    double p_sim_kw = 0.0;  // simulated chiller power at interval end
    double p_cap_kw = 0.0;
    double reward = 0.0;
    bool infeasible = false;
    std::vector<double> delta_t;
    std::vector<double> m_primary;
    std::vector<double> m_wind;
};

struct EpisodeTrace {
    Stage stage = Stage::Reduction;
    std::vector<StepRecord> records;

    double max_abs_deviation() const {
        double m = 0.0;
        for (const auto& r : records)
            for (double d : r.delta_t) m = std::max(m, std::abs(d));
        return m;
    }
    // Buildings whose deviation ever exceeds the +-1 degC comfort band.
    int uncomfortable_count(double band = 1.0) const {
        if (records.empty()) return 0;
        const std::size_t n = records.front().delta_t.size();
        int count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (const auto& r : records)
                if (std::abs(r.delta_t[i]) > band) { ++count; break; }
        }
        return count;
    }
    double mean_abs_deviation() const {
        double acc = 0.0;
        std::size_t cnt = 0;
        for (const auto& r : records)
            for (double d : r.delta_t) { acc += std::abs(d); ++cnt; }
        return cnt ? acc / double(cnt) : 0.0;
    }
    double peak_power() const {
        double m = 0.0;
        for (const auto& r : records) m = std::max(m, r.p_exec_kw);
        return m;
    }
    double total_reward() const {
        double acc = 0.0;
        for (const auto& r : records) acc += r.reward;
        return acc;
    }
    double discounted_return(double gamma) const {
        double g = 0.0;
        for (std::size_t k = records.size(); k-- > 0;) g = records[k].reward + gamma * g;
        return g;
    }
};

// One reserve-event episode over the plant simulator.
class Env {
public:
    Env(PlantParams plant, std::vector<BuildingParams> buildings, EpisodeConfig cfg)
        : plant_(std::move(plant)), buildings_(std::move(buildings)), cfg_(cfg) {
        cfg_.validate();
        plant_.validate();
        for (const auto& b : buildings_) b.validate();
    }

    const EpisodeConfig& config() const { return cfg_; }
    const PlantParams& plant_params() const { return plant_; }
    const std::vector<BuildingParams>& buildings() const { return buildings_; }
    const PlantState& state() const { return state_; }
    std::size_t n_buildings() const { return buildings_.size(); }

    // Reduction episodes start from the pre-rolled baseline state at t0;
    // recovery episodes from the end-of-reduction state with its deviations
    // frozen as the recovery targets' anchors.
    Observation reset(Stage stage, const ScenarioProfile& scenario, PlantState start) {
        stage_ = stage;
        scenario_ = &scenario;
        state_ = std::move(start);
        state_.time = (stage == Stage::Reduction) ? cfg_.t0 : cfg_.t1;
        step_count_ = 0;
        done_ = false;
        if (stage == Stage::Recovery) {
            dt_at_t1_.resize(n_buildings());
            for (std::size_t i = 0; i < n_buildings(); ++i)
                dt_at_t1_[i] = state_.t_indoor[i] - buildings_[i].t_set;
        }
        return observe();
    }

    Observation observe() const {
        Observation o;
        o.delta_p = state_.p_chiller - active_cap();
        o.m_primary = state_.m_primary;
        o.t_i_return = state_.t_i_return;
        o.delta_t.resize(n_buildings());
        for (std::size_t i = 0; i < n_buildings(); ++i)
            o.delta_t[i] = state_.t_indoor[i] - buildings_[i].t_set;
        return o;
    }

    double active_cap() const {
        return stage_ == Stage::Reduction ? cfg_.p_cap : cfg_.p_bar;
    }

    int horizon() const {
        return stage_ == Stage::Reduction ? cfg_.steps_reduction : cfg_.steps_recovery();
    }

    SafeContext safe_context() const {
        std::vector<double> lo(n_buildings()), hi(n_buildings());
        for (std::size_t i = 0; i < n_buildings(); ++i) {
            lo[i] = buildings_[i].m_min;
            hi[i] = buildings_[i].m_max;
        }
        return make_context(plant_.cop, plant_.c_water, state_.t_ch_return,
                            plant_.t_ch_supply, active_cap(), state_.m_primary, lo, hi);
    }

    // Applies the action (already safe-layer processed when the caller uses
    // one), advances one control interval, and scores the NEXT state.
    Transition step(const ControlAction& action) {
        if (done_) throw DomainError("Env::step: episode already finished");
        if (action.delta_m.size() != n_buildings())
            throw DomainError("Env::step: action dimension mismatch");

        Transition tr;
        tr.obs = observe();
        tr.action = action;

        std::vector<double> m_next(n_buildings());
        for (std::size_t i = 0; i < n_buildings(); ++i)
            m_next[i] = std::clamp(state_.m_primary[i] + action.delta_m[i],
                                   buildings_[i].m_min, buildings_[i].m_max);

        const double theta = plant_.c_water * (state_.t_ch_return - plant_.t_ch_supply)
                           / plant_.cop;
        last_exec_power_ = sum(m_next) * theta;

        const ScenarioSample sc = scenario_->at(state_.time);
        state_ = plant_step(state_, m_next, sc, plant_, buildings_, cfg_.dt_control);
        ++step_count_;
        done_ = step_count_ >= horizon();

        tr.next_obs = observe();
        if (stage_ == Stage::Reduction) {
            tr.reward = reward_reduction(tr.next_obs.delta_t, cfg_.theta_r);
        } else {
            std::vector<double> phi(n_buildings());
            for (std::size_t i = 0; i < n_buildings(); ++i)
                phi[i] = adaptive_factor(dt_at_t1_[i], state_.time, cfg_);
            tr.reward = reward_recovery(tr.next_obs.delta_t, phi);
        }
        tr.done = done_;
        return tr;
    }

    bool done() const { return done_; }
    int step_count() const { return step_count_; }
    Stage stage() const { return stage_; }
    double last_exec_power() const { return last_exec_power_; }
    const std::vector<double>& dt_at_t1() const { return dt_at_t1_; }

private:
    PlantParams plant_;
    std::vector<BuildingParams> buildings_;
    EpisodeConfig cfg_;
    const ScenarioProfile* scenario_ = nullptr;
    PlantState state_;
    Stage stage_ = Stage::Reduction;
    std::vector<double> dt_at_t1_;
    int step_count_ = 0;
    bool done_ = true;
    double last_exec_power_ = 0.0;
};

using Policy = std::function<ControlAction(const Observation&)>;

// Physical actuator limits, applied to every proposal before any projection
// so the safe layer's pass-through branch sees realizable flows.
inline void clamp_action_to_box(std::vector<double>& delta_m,
                                const std::vector<double>& m_now,
                                const std::vector<BuildingParams>& bs) {
    for (std::size_t i = 0; i < delta_m.size(); ++i)
        delta_m[i] = std::clamp(delta_m[i], bs[i].m_min - m_now[i], bs[i].m_max - m_now[i]);
}

struct RolloutOptions {
    bool use_safe_layer = true;
};

// Runs one full episode under a policy; per-step physical records for the
// trace outputs.
inline EpisodeTrace rollout(Env& env, const Policy& policy, Stage stage,
                            const ScenarioProfile& scenario, PlantState start,
                            const RolloutOptions& opt = {}) {
    EpisodeTrace trace;
    trace.stage = stage;
    Observation obs = env.reset(stage, scenario, std::move(start));
    while (!env.done()) {
        ControlAction act = policy(obs);
        clamp_action_to_box(act.delta_m, env.state().m_primary, env.buildings());
        bool infeasible = false;
        if (opt.use_safe_layer) {
            const SafeContext ctx = env.safe_context();
            ProjectionResult pr = project(act.delta_m, ctx);
            if (pr.infeasible) {
                infeasible = true;
                for (std::size_t i = 0; i < act.delta_m.size(); ++i)
                    act.delta_m[i] = ctx.m_min[i] - ctx.m_now[i];
            } else {
                act.delta_m = pr.delta_m_safe;
            }
        }
        Transition tr = env.step(act);
        StepRecord rec;
        rec.step = env.step_count();
        rec.time_s = env.state().time;
        rec.p_exec_kw = env.last_exec_power();
        rec.p_sim_kw = env.state().p_chiller;
        rec.p_cap_kw = env.active_cap();
        rec.reward = tr.reward;
        rec.infeasible = infeasible;
        rec.delta_t = tr.next_obs.delta_t;
        rec.m_primary = env.state().m_primary;
        rec.m_wind = env.state().m_wind;
        trace.records.push_back(std::move(rec));
        obs = tr.next_obs;
    }
    return trace;
}

} // namespace dcs
