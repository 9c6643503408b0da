#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "dcs/common.hpp"
#include "dcs/params.hpp"

namespace dcs {

// Exogenous drivers at one instant.
struct ScenarioSample {
    double t_out = 33.0;           // ambient temperature, degC
    std::vector<double> zeta;      // internal heat load per building, kW
};

// Every thermodynamic variable of the three loops at one instant.
struct PlantState {
    double time = 0.0; // s
    std::vector<double> m_primary;   // kg/s per building
    std::vector<double> m_secondary; // kg/s per building
    std::vector<double> m_wind;      // kg/s per building
    std::vector<double> t_i_supply;  // degC per building
    std::vector<double> t_i_return;
    std::vector<double> t_ii_supply;
    std::vector<double> t_ii_return;
    std::vector<double> t_wind;
    std::vector<double> t_indoor;
    std::vector<double> q_he;        // kW per building
    std::vector<double> q_dcs;
    std::vector<double> q_loss;
    std::vector<double> ahu_err_prev; // AHU PI controller memory, degC
    double m_decoupler = 0.0; // kg/s
    double m_chiller = 0.0;
    double t_ch_return = 12.0; // degC
    double t_decoupler = 3.0;
    double q_chiller = 0.0; // kW
    double p_chiller = 0.0;
};

// ---- elemental operations -------------------------------------------------

// Chiller cooling power from mass flow and return temperature; electrical
// power via the COP.
inline std::pair<double, double> chiller_power(double m_chiller, double t_ch_return,
                                               const PlantParams& p) {
    if (m_chiller < 0.0) throw DomainError("chiller_power: negative mass flow");
    if (t_ch_return < p.t_ch_supply - 1e-12)
        throw DomainError("chiller_power: return temperature below supply set point");
    const double q = m_chiller * p.c_water * (t_ch_return - p.t_ch_supply);
    return {q, q / p.cop};
}

// Mass-weighted mixing of building return streams with the decoupler stream.
inline std::pair<double, double> mix_return(const std::vector<double>& m_primary,
                                            const std::vector<double>& t_i_return,
                                            double m_decoupler, double t_decoupler) {
    double m_total = m_decoupler;
    double h_total = m_decoupler * t_decoupler;
    for (std::size_t i = 0; i < m_primary.size(); ++i) {
        if (m_primary[i] < 0.0) throw DomainError("mix_return: negative stream flow");
        m_total += m_primary[i];
        h_total += m_primary[i] * t_i_return[i];
    }
    if (m_decoupler < 0.0) throw DomainError("mix_return: negative decoupler flow");
    if (m_total <= 0.0) throw DomainError("mix_return: zero total flow, mixing temperature undefined");
    return {m_total, h_total / m_total};
}

// Supply temperature at the building side of the pipeline.
inline double pipeline_supply_temp(double t_out, const PlantParams& p) {
    return t_out + p.eta_pipe * (p.t_ch_supply - t_out);
}

// Log-mean temperature difference with the equal-approach analytic limit.
inline double lmtd(double dt_hot_end, double dt_cold_end) {
    if (dt_hot_end <= 0.0 || dt_cold_end <= 0.0)
        throw DomainError("lmtd: non-positive approach temperature (pinch violated)");
    const double big = std::max(dt_hot_end, dt_cold_end);
    if (std::abs(dt_hot_end - dt_cold_end) / big < 1e-6)
        return 0.5 * (dt_hot_end + dt_cold_end);
    return (dt_hot_end - dt_cold_end) / std::log(dt_hot_end / dt_cold_end);
}

struct HeSolution {
    double q_he = 0.0;       // kW
    double t_i_return = 0.0; // degC
    double t_ii_supply = 0.0;
    double residual = 0.0;   // kW, transfer-equation residual at the solution
    bool pinched = false;
};

// Upper bound on transferable heat: the point where the outlet-side approach
// closes to zero.
inline double he_pinch_bound(double m_primary, double m_secondary, double t_i_supply,
                             double t_ii_return, const BuildingParams& b, double c_w) {
    const double inv = 1.0 / (m_secondary * c_w) + 1.0 / (b.eta1 * m_primary * c_w);
    return (t_ii_return - t_i_supply) / inv;
}

// Solves the exchanger closure {two energy balances, transfer equation} by
// bisection on Q. The transfer residual kF*LMTD(Q) - Q is strictly decreasing
// in Q, so the root in [0, pinch bound] is unique.
inline HeSolution heat_exchanger_solve(double m_primary, double m_secondary,
                                       double t_i_supply, double t_ii_return,
                                       const BuildingParams& b, double c_w) {
    if (m_primary <= 0.0 || m_secondary <= 0.0)
        throw DomainError("heat_exchanger_solve: non-positive mass flow");
    if (t_ii_return <= t_i_supply)
        throw DomainError("heat_exchanger_solve: second-loop return must exceed first-loop supply");

    HeSolution out;
    const double kf = b.k_he * b.f_he;
    if (kf == 0.0) {
        out.t_i_return = t_i_supply;
        out.t_ii_supply = t_ii_return;
        return out;
    }

    const double q_max = he_pinch_bound(m_primary, m_secondary, t_i_supply, t_ii_return, b, c_w);
    const double d1 = t_ii_return - t_i_supply; // inlet-side difference, constant in Q
    auto d2_of = [&](double q) {
        return (t_ii_return - q / (m_secondary * c_w)) -
               (t_i_supply + q / (b.eta1 * m_primary * c_w));
    };
    auto resid = [&](double q) {
        const double d2 = d2_of(q);
        if (d2 <= 0.0) return -q; // past the pinch, force the bracket down
        return kf * lmtd(d1, d2) - q;
    };

    double lo = 0.0, hi = q_max;
    if (resid(0.0) <= 0.0) { // degenerate: no driving difference
        out.t_i_return = t_i_supply;
        out.t_ii_supply = t_ii_return;
        return out;
    }
    // the root is bracketed; near the pinch the residual slope is unbounded,
    // so convergence is judged on the bracket width, not the residual
    const double width_tol = 1e-13 * std::max(1.0, q_max);
    for (int it = 0; it < 200 && hi - lo > width_tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        (resid(mid) > 0.0 ? lo : hi) = mid;
    }
    if (hi - lo > width_tol)
        throw SolverError("heat_exchanger_solve: bisection did not converge", hi - lo);
    const double q = 0.5 * (lo + hi);
    out.q_he = q;
    out.t_i_return = t_i_supply + q / (b.eta1 * m_primary * c_w);
    out.t_ii_supply = t_ii_return - q / (m_secondary * c_w);
    out.residual = std::abs(resid(q));
    if (out.t_ii_supply <= t_i_supply) { // numerically past the pinch
        out.t_ii_supply = t_i_supply + 1e-9;
        out.pinched = true;
    }
    return out;
}

// AHU outlet wind temperature: coil mean water temperature mixed with fresh air.
inline double ahu_mix(double t_ii_supply, double t_ii_return, double t_out, double alpha) {
    return 0.5 * (1.0 - alpha) * (t_ii_supply + t_ii_return) + alpha * t_out;
}

// Secondary-loop flow demanded by the AHU energy balance.
inline double ahu_energy_balance(double m_wind, double t_indoor, double t_wind,
                                 double t_ii_supply, double t_ii_return,
                                 const BuildingParams& b, const PlantParams& p) {
    const double dt = t_ii_return - t_ii_supply;
    if (dt <= 0.0)
        throw DomainError("ahu_energy_balance: zero or inverted second-loop temperature difference");
    return m_wind * p.c_air * (t_indoor - t_wind) / (b.eta2 * p.c_water * dt);
}

// Explicit-Euler update of the indoor thermal balance.
inline double building_step(double t_indoor, double q_dcs, const ScenarioSample& sc,
                            std::size_t i, const BuildingParams& b, const PlantParams& p,
                            double dt) {
    if (dt <= 0.0) throw DomainError("building_step: dt must be > 0");
    const double q_loss = b.u_oa * b.a_surf * (sc.t_out - t_indoor) + sc.zeta.at(i);
    const double cap = p.c_air * p.rho_air * b.volume; // kJ/degC
    return t_indoor + dt * (q_loss - q_dcs) / cap;
}

// Incremental (velocity-form) PI for the AHU wind flow; losing the clamped
// part of the increment is the anti-windup.
struct AhuPi {
    double kp = 0.0; // kg/s per degC
    double ki = 0.0; // kg/s per (degC*s)

    static AhuPi defaults(const BuildingParams& b) {
        return {0.15 * b.m_wind_max, 8.0e-4 * b.m_wind_max};
    }

    double step(double t_indoor, double t_set, double m_wind_prev, double& err_prev,
                const BuildingParams& b, double dt) const {
        const double e = t_indoor - t_set;
        const double dm = kp * (e - err_prev) + ki * dt * e;
        err_prev = e;
        return std::clamp(m_wind_prev + dm, 0.0, b.m_wind_max);
    }
};

// ---- whole-plant stepping -------------------------------------------------

inline double sum(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0);
}

// A fresh state at the design operating point.
inline PlantState init_state(const PlantParams& p, const std::vector<BuildingParams>& bs,
                             const DesignPoint& d = {}) {
    const std::size_t n = bs.size();
    PlantState s;
    s.m_primary.resize(n);
    s.m_secondary.resize(n);
    s.m_wind.resize(n);
    s.t_i_supply.assign(n, d.t_i_supply);
    s.t_i_return.assign(n, d.t_i_return);
    s.t_ii_supply.assign(n, d.t_ii_supply);
    s.t_ii_return.assign(n, d.t_ii_return);
    s.t_wind.resize(n);
    s.t_indoor.resize(n);
    s.q_he.assign(n, 0.0);
    s.q_dcs.assign(n, 0.0);
    s.q_loss.assign(n, 0.0);
    s.ahu_err_prev.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const BuildingParams& b = bs[i];
        s.m_primary[i] = d.flow_fraction * b.m_max;
        const double q_des = b.eta1 * s.m_primary[i] * p.c_water * (d.t_i_return - d.t_i_supply);
        s.m_secondary[i] = q_des / (p.c_water * (d.t_ii_return - d.t_ii_supply));
        s.t_wind[i] = ahu_mix(d.t_ii_supply, d.t_ii_return, d.t_out, b.alpha);
        s.t_indoor[i] = b.t_set;
        s.m_wind[i] = b.eta2 * q_des / (p.c_air * (b.t_set - s.t_wind[i]));
        s.q_he[i] = q_des;
        s.q_dcs[i] = b.eta2 * q_des;
    }
    const double m_sum = sum(s.m_primary);
    s.m_decoupler = p.pump_margin * m_sum;
    s.m_chiller = s.m_decoupler + m_sum;
    s.t_decoupler = p.t_ch_supply;
    s.t_ch_return = d.t_i_return;
    auto [q, pw] = chiller_power(s.m_chiller, s.t_ch_return, p);
    s.q_chiller = q;
    s.p_chiller = pw;
    return s;
}

// Advances the plant one control interval. The new primary flows take effect
// at the start of the interval; sequencing per sub-step is
//   pipeline -> exchanger -> AHU mix/balance -> building ODE -> AHU control
//   -> return mixing -> chiller power.
inline PlantState plant_step(const PlantState& state, const std::vector<double>& m_primary_next,
                             const ScenarioSample& sc, const PlantParams& p,
                             const std::vector<BuildingParams>& bs,
                             double dt_control, double dt_sub = 1.0,
                             const std::vector<AhuPi>* controllers = nullptr) {
    const std::size_t n = bs.size();
    if (m_primary_next.size() != n)
        throw DomainError("plant_step: action dimension mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if (m_primary_next[i] < bs[i].m_min - 1e-9 || m_primary_next[i] > bs[i].m_max + 1e-9)
            throw DomainError("plant_step: primary flow outside [m_min, m_max] for building "
                              + std::to_string(i));
    }

    PlantState s = state;
    s.m_primary = m_primary_next;
    const int n_sub = std::max(1, int(std::lround(dt_control / dt_sub)));
    const double supply_t = pipeline_supply_temp(sc.t_out, p);

    for (int k = 0; k < n_sub; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            const BuildingParams& b = bs[i];
            s.t_i_supply[i] = supply_t;
            HeSolution he;
            try {
                he = heat_exchanger_solve(s.m_primary[i], s.m_secondary[i], supply_t,
                                          s.t_ii_return[i], b, p.c_water);
            } catch (const DomainError& e) {
                throw DomainError(std::string(e.what()) + " [sub-step " + std::to_string(k)
                                  + ", building " + std::to_string(i) + "]");
            }
            s.q_he[i] = he.q_he;
            s.t_i_return[i] = he.t_i_return;
            s.t_ii_supply[i] = he.t_ii_supply;
            s.t_wind[i] = ahu_mix(s.t_ii_supply[i], s.t_ii_return[i], sc.t_out, b.alpha);
            // air-side draw cannot exceed what the exchanger delivers
            s.q_dcs[i] = std::min(s.m_wind[i] * p.c_air * (s.t_indoor[i] - s.t_wind[i]),
                                  b.eta2 * s.q_he[i]);
            s.q_loss[i] = b.u_oa * b.a_surf * (sc.t_out - s.t_indoor[i]) + sc.zeta.at(i);
            s.t_indoor[i] = building_step(s.t_indoor[i], s.q_dcs[i], sc, i, b, p, dt_sub);

            const AhuPi pi = controllers ? (*controllers)[i] : AhuPi::defaults(b);
            s.m_wind[i] = pi.step(s.t_indoor[i], b.t_set, s.m_wind[i], s.ahu_err_prev[i], b, dt_sub);

            // secondary pump follows the AHU demand (Eq. 9 closure), saturated
            const double dt_ii = s.t_ii_return[i] - s.t_ii_supply[i];
            if (dt_ii > 1e-9) {
                double m2 = s.m_wind[i] * p.c_air * (s.t_indoor[i] - s.t_wind[i])
                          / (b.eta2 * p.c_water * dt_ii);
                s.m_secondary[i] = std::clamp(m2, 1.0, 1.5 * b.m_max);
            }
        }
        s.time += dt_sub;
    }

    const double m_sum = sum(s.m_primary);
    s.m_decoupler = p.pump_margin * m_sum;
    s.t_decoupler = p.t_ch_supply;
    auto [m_ch, t_ret] = mix_return(s.m_primary, s.t_i_return, s.m_decoupler, s.t_decoupler);
    s.m_chiller = m_ch;
    s.t_ch_return = t_ret;
    auto [q, pw] = chiller_power(s.m_chiller, s.t_ch_return, p);
    s.q_chiller = q;
    s.p_chiller = pw;
    return s;
}

// Pipeline heat pickup between station and buildings, kW.
inline double pipeline_gain(const PlantState& s, const PlantParams& p) {
    double q = 0.0;
    for (std::size_t i = 0; i < s.m_primary.size(); ++i)
        q += s.m_primary[i] * p.c_water * (s.t_i_supply[i] - p.t_ch_supply);
    return q;
}

// Station-side energy audit: chiller cooling power against the sum of
// exchanger loads referred to the first loop plus pipeline pickup. Exact up
// to mixing arithmetic.
inline double energy_audit_residual(const PlantState& s, const PlantParams& p,
                                    const std::vector<BuildingParams>& bs) {
    double q_buildings = 0.0;
    for (std::size_t i = 0; i < s.m_primary.size(); ++i)
        q_buildings += s.q_he[i] / bs[i].eta1;
    return std::abs(s.q_chiller - q_buildings - pipeline_gain(s, p));
}

// Runs the plant at frozen flows and scenario until the indoor temperatures
// stop moving (baseline quasi-equilibrium).
inline PlantState settle(PlantState s, const ScenarioSample& sc, const PlantParams& p,
                         const std::vector<BuildingParams>& bs, double max_time = 14400.0,
                         double tol = 1e-5) {
    const double dt = 60.0;
    for (double t = 0.0; t < max_time; t += dt) {
        PlantState next = plant_step(s, s.m_primary, sc, p, bs, dt);
        double dmax = 0.0;
        for (std::size_t i = 0; i < s.t_indoor.size(); ++i)
            dmax = std::max(dmax, std::abs(next.t_indoor[i] - s.t_indoor[i]));
        s = std::move(next);
        if (dmax < tol) break;
    }
    return s;
}

} // namespace dcs
