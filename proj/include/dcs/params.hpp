#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "dcs/common.hpp"

namespace dcs {

// Physical constants of the energy station. Units: kW, kJ, kg/s, degC, s.
struct PlantParams {
    double cop = 5.5;          // chiller coefficient of performance
    double t_ch_supply = 3.0;  // set chilled-water supply temperature, degC
    double c_water = 4.2;      // kJ/(kg*degC)
    double c_air = 1.005;      // kJ/(kg*degC)
    double rho_air = 1.205;    // kg/m^3
    double eta_pipe = 0.95;    // pipeline heat-transfer coefficient
    std::size_t n_buildings = 12;
    double pump_margin = 0.02; // primary pump flow margin above sum of building flows

    void validate() const {
        if (cop <= 0.0) throw ConfigError("PlantParams: cop must be > 0");
        if (eta_pipe <= 0.0 || eta_pipe > 1.0)
            throw ConfigError("PlantParams: eta_pipe must be in (0,1]");
        if (n_buildings < 1) throw ConfigError("PlantParams: n_buildings must be >= 1");
        if (c_water <= 0.0 || c_air <= 0.0 || rho_air <= 0.0)
            throw ConfigError("PlantParams: heat capacities and density must be > 0");
        if (pump_margin < 0.0) throw ConfigError("PlantParams: pump_margin must be >= 0");
    }
};

// Immutable physical constants of a single served building.
struct BuildingParams {
    double m_max = 900.0;      // upper primary mass-flow limit, kg/s
    double m_min = 27.0;       // lower limit (3% of m_max), kg/s
    double k_he = 4.5;         // heat-exchanger transfer coefficient, kW/(m^2*degC)
    double f_he = 1000.0;      // heat-exchanger surface, m^2
    double eta1 = 0.9;         // first-loop transfer efficiency
    double eta2 = 0.9;         // second-loop transfer efficiency
    double alpha = 0.1;        // fresh-air mixing proportion
    double u_oa = 0.0036;      // envelope coefficient, kW/(m^2*degC)
    double a_surf = 200000.0;  // surface (floor) area, m^2
    double volume = 800000.0;  // m^3
    double t_set = 22.0;       // set indoor temperature, degC
    double m_wind_max = 6000.0; // AHU wind-flow bound, kg/s

    void validate() const {
        if (!(0.0 < m_min && m_min < m_max))
            throw ConfigError("BuildingParams: need 0 < m_min < m_max");
        if (alpha < 0.0 || alpha >= 1.0)
            throw ConfigError("BuildingParams: alpha must be in [0,1)");
        if (eta1 <= 0.0 || eta1 > 1.0 || eta2 <= 0.0 || eta2 > 1.0)
            throw ConfigError("BuildingParams: loop efficiencies must be in (0,1]");
        if (volume <= 0.0) throw ConfigError("BuildingParams: volume must be > 0");
        if (k_he <= 0.0 || f_he <= 0.0 || u_oa <= 0.0 || a_surf <= 0.0)
            throw ConfigError("BuildingParams: k_he, f_he, u_oa, a_surf must be > 0");
        if (m_wind_max <= 0.0) throw ConfigError("BuildingParams: m_wind_max must be > 0");
    }
};

// Design (nominal) operating temperatures used for sizing unspecified hardware.
struct DesignPoint {
    double t_i_supply = 4.5;   // degC, ambient 33 degC through the pipeline
    double t_i_return = 12.0;
    double t_ii_supply = 13.0;
    double t_ii_return = 18.0;
    double t_out = 33.0;
    double flow_fraction = 0.5; // design primary flow as a fraction of m_max
};

inline double lmtd_nominal(const DesignPoint& d) {
    const double d1 = d.t_ii_return - d.t_i_supply;
    const double d2 = d.t_ii_supply - d.t_i_return;
    return (d1 - d2) / std::log(d1 / d2);
}

// Sizes the exchanger surface so the design load transfers at nominal temperatures,
// and the AHU wind bound so the design load can be delivered with headroom.
inline void size_building(BuildingParams& b, const PlantParams& p,
                          const DesignPoint& d = {}) {
    const double m_des = d.flow_fraction * b.m_max;
    const double q_des = b.eta1 * m_des * p.c_water * (d.t_i_return - d.t_i_supply);
    b.f_he = q_des / (b.k_he * lmtd_nominal(d));
    const double t_wind = 0.5 * (1.0 - b.alpha) * (d.t_ii_supply + d.t_ii_return)
                        + b.alpha * d.t_out;
    const double q_dcs = b.eta2 * q_des;
    b.m_wind_max = 2.5 * q_dcs / (p.c_air * (b.t_set - t_wind));
}

// Design internal heat load that puts the building in balance at the design point.
inline double design_zeta(const BuildingParams& b, const PlantParams& p,
                          const DesignPoint& d = {}) {
    const double m_des = d.flow_fraction * b.m_max;
    const double q_des = b.eta1 * m_des * p.c_water * (d.t_i_return - d.t_i_supply);
    const double q_dcs = b.eta2 * q_des;
    const double envelope = b.u_oa * b.a_surf * (d.t_out - b.t_set);
    return std::max(100.0, q_dcs - envelope);
}

// The shipped 12-building profile mirrors the published test-system ranges;
// the 4-building desk profile keeps the full test suite fast.
inline std::vector<BuildingParams> make_buildings(std::size_t n, const PlantParams& p,
                                                  double h_eff = 4.0) {
    std::vector<BuildingParams> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        BuildingParams& b = out[i];
        const double frac = (n == 1) ? 0.5 : double(i) / double(n - 1);
        b.m_max = 600.0 + 600.0 * frac;
        b.m_min = 0.03 * b.m_max;
        b.a_surf = 100000.0 + 200000.0 * frac;
        b.volume = b.a_surf * h_eff;
        b.t_set = 20.0 + 3.0 * double(i % 4) / 3.0;
        size_building(b, p);
        b.validate();
    }
    return out;
}

} // namespace dcs
