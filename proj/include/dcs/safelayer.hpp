#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "dcs/common.hpp"

namespace dcs {

// Halfplane a*mu + b*upsilon <= c.
struct LpConstraint {
    double a = 0.0, b = 0.0, c = 0.0;
};

struct Lp2Result {
    bool feasible = false;
    double mu = 0.0;
    double upsilon = 0.0;
    double objective = -std::numeric_limits<double>::infinity();
    int binding = -1; // index of a violated constraint when infeasible
};

namespace detail {

inline bool lp2_feasible(double mu, double up, const std::vector<LpConstraint>& cs,
                         int* violated = nullptr) {
    for (std::size_t j = 0; j < cs.size(); ++j) {
        const double scale = std::max({1.0, std::abs(cs[j].c),
                                       std::abs(cs[j].a * mu), std::abs(cs[j].b * up)});
        if (cs[j].a * mu + cs[j].b * up > cs[j].c + 1e-9 * scale) {
            if (violated) *violated = int(j);
            return false;
        }
    }
    return true;
}

} // namespace detail

// Exact maximizer of w_mu*mu + w_up*upsilon over an intersection of
// halfplanes, by enumerating all constraint-pair intersection vertices. The
// feasible set always lies in the closed third quadrant here (callers append
// mu<=0, upsilon<=0), so it is pointed and an optimal vertex exists whenever
// the set is nonempty. Ties are broken toward larger mu.
inline Lp2Result solve_lp2(const std::vector<LpConstraint>& constraints,
                           double w_mu = 1.0, double w_up = 1.0) {
    Lp2Result best;
    int violated = -1;
    const std::size_t m = constraints.size();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            const LpConstraint& p = constraints[i];
            const LpConstraint& q = constraints[j];
            const double det = p.a * q.b - p.b * q.a;
            const double scale = std::max({std::abs(p.a * q.b), std::abs(p.b * q.a), 1e-300});
            if (std::abs(det) <= 1e-12 * scale) continue; // parallel boundaries
            const double mu = (p.c * q.b - p.b * q.c) / det;
            const double up = (p.a * q.c - p.c * q.a) / det;
            if (!std::isfinite(mu) || !std::isfinite(up)) continue;
            if (!detail::lp2_feasible(mu, up, constraints, &violated)) continue;
            const double obj = w_mu * mu + w_up * up;
            const double tol = 1e-12 * std::max(1.0, std::abs(obj));
            if (!best.feasible || obj > best.objective + tol ||
                (obj > best.objective - tol && mu > best.mu)) {
                best.feasible = true;
                best.mu = mu;
                best.upsilon = up;
                best.objective = obj;
            }
        }
    }
    if (!best.feasible) best.binding = violated;
    return best;
}

// Everything the projection needs to know about the plant at one step.
struct SafeContext {
    double theta = 0.0;        // kW*s/kg, (1/COP)*c_w*(T_ch_return - T_ch_supply)
    double p_cap_active = 0.0; // kW
    std::vector<double> m_now;
    std::vector<double> m_min;
    std::vector<double> m_max;

    std::size_t size() const { return m_now.size(); }
};

inline SafeContext make_context(double cop, double c_water, double t_ch_return,
                                double t_ch_supply, double p_cap,
                                std::vector<double> m_now, std::vector<double> m_min,
                                std::vector<double> m_max) {
    SafeContext ctx;
    ctx.theta = c_water * (t_ch_return - t_ch_supply) / cop;
    ctx.p_cap_active = p_cap;
    ctx.m_now = std::move(m_now);
    ctx.m_min = std::move(m_min);
    ctx.m_max = std::move(m_max);
    return ctx;
}

// Next-step electrical power for candidate flows, linear in the flows.
inline double predict_power(const std::vector<double>& m_next, const SafeContext& ctx) {
    double p = 0.0;
    for (double m : m_next) p += m * ctx.theta;
    return p;
}

struct ProjectionResult {
    std::vector<double> delta_m_safe;
    double mu = 0.0;
    double upsilon = 0.0;
    bool corrected = false;
    bool infeasible = false;
    double min_power = 0.0; // kW, achievable minimum when infeasible
};

namespace detail {

// Constraint system of the two-coefficient correction. The corrected action is
//   dm_safe = (1+mu)*dm + upsilon*m_now,
// the cap applies to the full next-step power and the box to the resulting
// flows.
inline std::vector<LpConstraint> projection_constraints(const std::vector<double>& dm,
                                                        const SafeContext& ctx) {
    const std::size_t n = ctx.size();
    std::vector<LpConstraint> cs;
    cs.reserve(2 * n + 3);
    double a_cap = 0.0, b_cap = 0.0, base_power = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        a_cap += dm[i] * ctx.theta;
        b_cap += ctx.m_now[i] * ctx.theta;
        base_power += (ctx.m_now[i] + dm[i]) * ctx.theta;
    }
    cs.push_back({a_cap, b_cap, ctx.p_cap_active - base_power});
    for (std::size_t i = 0; i < n; ++i) {
        const double base = ctx.m_now[i] + dm[i];
        cs.push_back({dm[i], ctx.m_now[i], ctx.m_max[i] - base});
        cs.push_back({-dm[i], -ctx.m_now[i], base - ctx.m_min[i]});
    }
    cs.push_back({1.0, 0.0, 0.0});  // mu <= 0
    cs.push_back({0.0, 1.0, 0.0});  // upsilon <= 0
    return cs;
}

} // namespace detail

// Projects a proposed flow change onto the power-feasible set. A safe action
// passes through untouched; otherwise the least correction (max mu+upsilon)
// satisfying cap and box is applied. Infeasible caps are reported with the
// minimum achievable power; the caller clamps to m_min and flags the episode.
inline ProjectionResult project(const std::vector<double>& delta_m, const SafeContext& ctx) {
    const std::size_t n = ctx.size();
    if (delta_m.size() != n) throw DomainError("project: action dimension mismatch");

    ProjectionResult out;
    out.delta_m_safe = delta_m;
    std::vector<double> m_next(n);
    for (std::size_t i = 0; i < n; ++i) m_next[i] = ctx.m_now[i] + delta_m[i];
    if (predict_power(m_next, ctx) <= ctx.p_cap_active) return out;

    const auto cs = detail::projection_constraints(delta_m, ctx);
    const Lp2Result lp = solve_lp2(cs);
    if (!lp.feasible) {
        // Least power reachable by the correction family within the box:
        // minimize power subject to the box constraints only.
        std::vector<LpConstraint> box(cs.begin() + 1, cs.end());
        double a_cap = cs[0].a, b_cap = cs[0].b;
        const double base_power = ctx.p_cap_active - cs[0].c;
        const Lp2Result low = solve_lp2(box, -a_cap, -b_cap);
        out.infeasible = true;
        out.min_power = low.feasible
            ? base_power + a_cap * low.mu + b_cap * low.upsilon
            : base_power;
        return out;
    }
    out.corrected = true;
    out.mu = lp.mu;
    out.upsilon = lp.upsilon;
    for (std::size_t i = 0; i < n; ++i)
        out.delta_m_safe[i] = (1.0 + lp.mu) * delta_m[i] + lp.upsilon * ctx.m_now[i];
    return out;
}

} // namespace dcs
