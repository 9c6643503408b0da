#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <vector>

#include "dcs/common.hpp"
#include "dcs/env.hpp"
#include "dcs/thermal.hpp"

namespace dcs {

// Gains of the reference PI scheme: one plant-level loop tracking the power
// cap, one loop per building tracking its set temperature. The plant-level
// gains are zeroed in the recovery stage.
struct PiConfig {
    double p_ch_gain = 0.05; // on the power trend P_t - P_{t-1}, (kg/s)/kW
    double i_ch_gain = 0.22; // on the cap error P_t - P_cap, (kg/s)/kW
    std::vector<double> p_building; // (kg/s)/degC, per building
    std::vector<double> i_building;

    static PiConfig defaults(const std::vector<BuildingParams>& bs) {
        PiConfig cfg;
        cfg.p_building.resize(bs.size());
        cfg.i_building.resize(bs.size());
        for (std::size_t i = 0; i < bs.size(); ++i) {
            // tuned once at the nominal operating point
            cfg.p_building[i] = 0.1 * bs[i].m_max;
            cfg.i_building[i] = 0.02 * bs[i].m_max;
        }
        return cfg;
    }
};

// Stateful controller; one instance per episode. The flow itself integrates
// the increments, so the I-gains act on instantaneous errors.
class PiController {
public:
    PiController(PiConfig cfg, double p_cap, std::vector<double> t_set)
        : cfg_(std::move(cfg)), p_cap_(p_cap), t_set_ref_(std::move(t_set)) {}

    // Plant-level correction from the power trend and cap error, distributed
    // proportionally to current flows; building corrections from temperature
    // feedback. The plant term pushes flows DOWN when power exceeds the cap.
    ControlAction step(const PlantState& state, Stage stage) {
        const std::size_t n = state.m_primary.size();
        ControlAction act;
        act.delta_m.assign(n, 0.0);

        const double p = state.p_chiller;
        double dm_ch = 0.0;
        if (stage == Stage::Reduction) {
            const double trend = primed_ ? (p - prev_p_) : 0.0;
            dm_ch = -(cfg_.p_ch_gain * trend + cfg_.i_ch_gain * (p - p_cap_));
        }
        const double m_sum = sum(state.m_primary);

        for (std::size_t i = 0; i < n; ++i) {
            const double t = state.t_indoor[i];
            const double trend = primed_ ? (t - prev_t_[i]) : 0.0;
            act.delta_m[i] = cfg_.p_building[i] * trend
                           + cfg_.i_building[i] * (t - t_set_ref_[i])
                           + state.m_primary[i] * dm_ch / m_sum;
        }
        prev_p_ = p;
        prev_t_ = state.t_indoor;
        primed_ = true;
        return act;
    }

private:
    PiConfig cfg_;
    double p_cap_;
    double prev_p_ = 0.0;
    std::vector<double> prev_t_;
    std::vector<double> t_set_ref_;
    bool primed_ = false;
};

// Penalty-variant reward: the reduction comfort terms plus a symmetric
// power-gap penalty (all raw units).
inline double penalty_reward(const std::vector<double>& next_delta_t, double p_next,
                             double p_cap, double theta_r, double theta_p) {
    return reward_reduction(next_delta_t, theta_r) - theta_p * std::abs(p_next - p_cap);
}

// A PI policy over the environment, for trace generation alongside the
// learned controllers.
inline Policy make_pi_policy(std::shared_ptr<PiController> ctl, Stage stage,
                             const Env& env) {
    return [ctl, stage, &env](const Observation&) {
        return ctl->step(env.state(), stage);
    };
}

} // namespace dcs
