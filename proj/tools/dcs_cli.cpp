// Command-line driver: train / eval / sweep / validate / scenario gen.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dcs/agent.hpp"
#include "dcs/baselines.hpp"
#include "dcs/experiment.hpp"

using namespace dcs;
namespace fs = std::filesystem;

namespace {

struct CliConfig {
    std::string profile = "desk";
    double cap_fraction = 0.82;
    std::string controller = "safe-drl"; // safe-drl | drl | pi
    std::uint64_t seed = 1;
    std::uint64_t scenario_seed = 0;
    std::string scenario_csv;            // optional, overrides generation
    TrainConfig train;
    std::string checkpoint_reduction;
    std::string checkpoint_recovery;
    std::string sweep_axis = "duration"; // duration | power_cap
    std::vector<double> sweep_values;
};

CliConfig load_config(const std::string& path) {
    CliConfig c;
    if (path.empty()) return c;
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    auto get = [&](const char* key, auto& slot) {
        if (j.contains(key)) slot = j.at(key).template get<std::decay_t<decltype(slot)>>();
    };
    get("profile", c.profile);
    get("cap_fraction", c.cap_fraction);
    get("controller", c.controller);
    get("seed", c.seed);
    get("scenario_seed", c.scenario_seed);
    get("scenario_csv", c.scenario_csv);
    get("episodes", c.train.episodes);
    get("batch", c.train.batch);
    get("hidden", c.train.hidden);
    get("gamma", c.train.gamma);
    get("tau", c.train.tau);
    get("noise_sigma", c.train.noise_sigma);
    get("lr_critic", c.train.lr_critic);
    get("lr_actor", c.train.lr_actor);
    get("buffer_capacity", c.train.buffer_capacity);
    get("updates_per_step", c.train.updates_per_step);
    get("grad_clip", c.train.grad_clip);
    get("weight_decay_critic", c.train.weight_decay_critic);
    get("weight_decay_actor", c.train.weight_decay_actor);
    get("noise_decay", c.train.noise_decay);
    get("theta_p", c.train.theta_p);
    get("p_base", c.train.p_base);
    get("checkpoint_reduction", c.checkpoint_reduction);
    get("checkpoint_recovery", c.checkpoint_recovery);
    get("sweep_axis", c.sweep_axis);
    get("sweep_values", c.sweep_values);
    if (c.controller != "safe-drl" && c.controller != "drl" && c.controller != "pi")
        throw ConfigError("controller must be safe-drl, drl or pi");
    if (!(c.cap_fraction > 0.0 && c.cap_fraction <= 1.0))
        throw ConfigError("cap_fraction must be in (0, 1]");
    return c;
}

ScenarioProfile evaluation_scenario(const CliConfig& c, const SystemProfile& prof) {
    if (!c.scenario_csv.empty()) return load_csv(c.scenario_csv);
    return generate(c.scenario_seed, prof.scenario);
}

std::string stage_name(Stage s) {
    return s == Stage::Reduction ? "reduction" : "recovery";
}

Checkpoint make_ck(const DdpgAgent& agent, const ObsScaler& scaler,
                   const std::vector<BuildingParams>& bs, std::uint64_t seed, Stage stage) {
    Checkpoint ck;
    ck.actor = agent.actor();
    ck.critic = agent.critic();
    ck.scaler = scaler;
    ck.action_scale = action_scale(bs);
    ck.seed = seed;
    ck.stage = stage_name(stage);
    return ck;
}

int cmd_train(const CliConfig& cfg, const fs::path& out) {
    SystemProfile prof = make_profile(cfg.profile);
    prof.cap_fraction = cfg.cap_fraction;
    EventSetup ev = setup_event(prof);
    Env env(prof.plant, prof.buildings, ev.episode);
    const ObsScaler scaler = make_scaler(prof.buildings, ev.episode.p_cap);
    const bool safe = cfg.controller == "safe-drl";

    TrainConfig tc = cfg.train;
    tc.penalty_mode = !safe;

    nlohmann::ordered_json summary;
    summary["schema_version"] = 1;
    summary["controller"] = cfg.controller;
    summary["profile"] = cfg.profile;
    summary["seed"] = cfg.seed;
    summary["episodes"] = tc.episodes;
    summary["p_cap_kw"] = ev.episode.p_cap;
    summary["p_bar_kw"] = ev.episode.p_bar;

    PlantState start = ev.start;
    for (Stage stage : {Stage::Reduction, Stage::Recovery}) {
        const std::string name = stage_name(stage);
        std::cout << "training " << cfg.controller << " " << name << " agent, "
                  << tc.episodes << " episodes\n";
        DdpgAgent agent(int(3 * prof.buildings.size() + 1), int(prof.buildings.size()),
                        tc, cfg.seed * 2 + (stage == Stage::Recovery ? 1 : 0));
        TrainResult res = train(env, agent, stage, prof.scenario, start, scaler,
                                cfg.seed, safe);
        const std::string suffix = stage == Stage::Reduction ? "" : "_recovery";
        write_curve_csv(res.reward_curve, "reward", (out / ("reward_curve" + suffix + ".csv")).string());
        write_curve_csv(res.violation_curve, "violation_kw",
                        (out / ("violation_curve" + suffix + ".csv")).string());
        save_checkpoint(make_ck(agent, scaler, prof.buildings, cfg.seed, stage),
                        (out / ("checkpoint_" + name + ".json")).string());
        summary["convergence_episode_" + name] = convergence_episode(res.reward_curve);
        double final_mean = 0.0;
        const int fw = std::min<int>(100, int(res.reward_curve.size()));
        for (int i = int(res.reward_curve.size()) - fw; i < int(res.reward_curve.size()); ++i)
            final_mean += res.reward_curve[std::size_t(i)];
        summary["final_reward_" + name] = final_mean / double(fw);
        double max_viol = 0.0;
        for (double v : res.violation_curve) max_viol = std::max(max_viol, v);
        summary["max_violation_kw_" + name] = max_viol;

        if (stage == Stage::Reduction) {
            // recovery training starts from a reduced plant: run the freshly
            // trained reduction policy once
            Checkpoint ck = make_ck(agent, scaler, prof.buildings, cfg.seed, stage);
            const ScenarioProfile nominal = generate(0, nominal_scenario(prof));
            rollout(env, make_policy(ck), Stage::Reduction, nominal, ev.start,
                    RolloutOptions{safe});
            start = env.state();
        }
    }
    write_json(summary, (out / "summary.json").string());
    std::cout << "wrote " << (out / "summary.json").string() << "\n";
    return 0;
}

int cmd_eval(const CliConfig& cfg, const fs::path& out) {
    SystemProfile prof = make_profile(cfg.profile);
    prof.cap_fraction = cfg.cap_fraction;
    EventSetup ev = setup_event(prof);
    Env env(prof.plant, prof.buildings, ev.episode);
    const ScenarioProfile scenario = evaluation_scenario(cfg, prof);

    EvalResult res;
    if (cfg.controller == "pi") {
        res = run_event_pi(env, scenario, ev, PiConfig::defaults(prof.buildings));
    } else {
        if (cfg.checkpoint_reduction.empty() || cfg.checkpoint_recovery.empty())
            throw ConfigError("eval of " + cfg.controller
                              + " needs checkpoint_reduction and checkpoint_recovery");
        const Checkpoint red = load_checkpoint(cfg.checkpoint_reduction);
        const Checkpoint rec = load_checkpoint(cfg.checkpoint_recovery);
        if (red.actor.out_dim() != int(prof.buildings.size()))
            throw ConfigError("checkpoint does not match the profile's building count");
        const bool safe = cfg.controller == "safe-drl";
        res = run_event(env, make_policy(red), make_policy(rec), scenario, ev, safe);
    }

    write_trace_csv(res.reduction, (out / "trace_reduction.csv").string());
    write_trace_csv(res.recovery, (out / "trace_recovery.csv").string());

    nlohmann::ordered_json summary;
    summary["schema_version"] = 1;
    summary["controller"] = cfg.controller;
    summary["profile"] = cfg.profile;
    summary["p_cap_kw"] = ev.episode.p_cap;
    summary["p_bar_kw"] = ev.episode.p_bar;
    summary["baseline_peak_kw"] = ev.baseline_peak;
    summary["max_deviation_c"] = res.max_deviation();
    summary["uncomfortable_buildings"] = res.uncomfortable();
    summary["mean_deviation_c"] =
        0.5 * (res.reduction.mean_abs_deviation() + res.recovery.mean_abs_deviation());
    summary["recovery_peak_kw"] = res.recovery_peak();
    summary["reduction"] = trace_summary(res.reduction);
    summary["recovery"] = trace_summary(res.recovery);
    write_json(summary, (out / "summary.json").string());
    std::cout << "wrote " << (out / "summary.json").string() << "\n";
    return 0;
}

// Cap-holding reference controller for sensitivity sweeps: propose no change,
// let the safe layer curtail to the active cap.
int cmd_sweep(const CliConfig& cfg, const fs::path& out) {
    SystemProfile prof = make_profile(cfg.profile);
    prof.cap_fraction = cfg.cap_fraction;
    if (cfg.sweep_values.empty())
        throw ConfigError("sweep needs sweep_values in the config");
    if (cfg.sweep_axis != "duration" && cfg.sweep_axis != "power_cap")
        throw ConfigError("sweep_axis must be duration or power_cap");

    Policy hold = [&](const Observation&) {
        ControlAction a;
        a.delta_m.assign(prof.buildings.size(), 0.0);
        return a;
    };

    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    std::ofstream csv(out / "sweep.csv");
    if (!csv) throw ConfigError("cannot open sweep.csv for writing");
    csv << "value,max_deviation_c,mean_deviation_c,max_power_kw,infeasible,cap_violation_kw\n";

    for (double value : cfg.sweep_values) {
        SystemProfile p = prof;
        if (cfg.sweep_axis == "duration") p.reduction_min = value;
        EventSetup ev = setup_event(p);
        if (cfg.sweep_axis == "power_cap") ev.episode.p_cap = value;
        Env env(p.plant, p.buildings, ev.episode);
        const ScenarioProfile scenario = evaluation_scenario(cfg, p);

        EpisodeTrace trace = rollout(env, hold, Stage::Reduction, scenario, ev.start,
                                     RolloutOptions{true});
        bool infeasible = false;
        double violation = 0.0, max_p = 0.0;
        for (const auto& r : trace.records) {
            infeasible = infeasible || r.infeasible;
            violation = std::max(violation, r.p_exec_kw - r.p_cap_kw);
            max_p = std::max(max_p, r.p_exec_kw);
        }
        nlohmann::ordered_json row;
        row["value"] = value;
        row["max_deviation_c"] = trace.max_abs_deviation();
        row["mean_deviation_c"] = trace.mean_abs_deviation();
        row["max_power_kw"] = max_p;
        row["infeasible"] = infeasible;
        row["cap_violation_kw"] = std::max(0.0, violation);
        rows.push_back(row);
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%d,%.17g\n",
                      value, trace.max_abs_deviation(), trace.mean_abs_deviation(),
                      max_p, infeasible ? 1 : 0, std::max(0.0, violation));
        csv << buf;
    }
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["axis"] = cfg.sweep_axis;
    j["rows"] = rows;
    write_json(j, (out / "sweep.json").string());
    std::cout << "wrote " << (out / "sweep.json").string() << "\n";
    return 0;
}

struct CheckReport {
    int failures = 0;
    void line(const std::string& name, bool ok, const std::string& detail) {
        std::cout << (ok ? "PASS  " : "FAIL  ") << name << "  (" << detail << ")\n";
        if (!ok) ++failures;
    }
};

int cmd_validate(const CliConfig& cfg) {
    CheckReport rep;
    SystemProfile prof = make_profile(cfg.profile);
    prof.cap_fraction = cfg.cap_fraction;
    const PlantParams& p = prof.plant;
    const auto& bs = prof.buildings;

    // mass balance and energy audit on a stepped plant
    {
        const ScenarioProfile nominal = generate(0, nominal_scenario(prof));
        EventSetup ev = setup_event(prof);
        PlantState s = ev.start;
        bool mass_ok = true, energy_ok = true;
        std::vector<double> flows = s.m_primary;
        for (int k = 0; k < 20; ++k) {
            for (std::size_t i = 0; i < bs.size(); ++i)
                flows[i] = std::max(bs[i].m_min, flows[i] * 0.96);
            s = plant_step(s, flows, nominal.at(s.time), p, bs, 60.0);
            mass_ok = mass_ok &&
                std::abs(s.m_chiller - s.m_decoupler - sum(s.m_primary)) <= 1e-12 * s.m_chiller;
            energy_ok = energy_ok && energy_audit_residual(s, p, bs) <= 0.005 * s.q_chiller;
        }
        rep.line("mass balance", mass_ok, "tolerance 1e-12 relative");
        rep.line("energy audit", energy_ok, "residual < 0.5% of chiller load");
    }

    // LMTD bounds
    {
        std::mt19937_64 rng(cfg.seed);
        std::uniform_real_distribution<double> u(1e-3, 40.0);
        bool ok = true;
        for (int it = 0; it < 100000 && ok; ++it) {
            const double a = u(rng), b = u(rng);
            const double v = lmtd(a, b);
            ok = v >= std::min(a, b) - 1e-9 && v <= std::max(a, b) + 1e-9 &&
                 v <= 0.5 * (a + b) + 1e-9;
        }
        rep.line("lmtd bounds", ok, "min <= lmtd <= arithmetic mean, 1e5 samples");
    }

    // inertia time constant of the building response
    {
        bool ok = true;
        ScenarioSample sc;
        sc.t_out = 33.0;
        sc.zeta.assign(bs.size(), 0.0);
        for (std::size_t i = 0; i < bs.size(); ++i) sc.zeta[i] = design_zeta(bs[i], p);
        for (std::size_t i = 0; i < bs.size(); ++i) {
            const double m_wind = 2000.0, t_wind = 17.25;
            const double k1 = p.c_air * p.rho_air * bs[i].volume;
            const double k2 = m_wind * p.c_air;
            const double k4 = bs[i].u_oa * bs[i].a_surf;
            const double tau = k1 / (k2 + k4);
            const double t_eq = (k4 * sc.t_out + sc.zeta[i] + k2 * t_wind) / (k2 + k4);
            ScenarioSample kicked = sc;
            kicked.zeta[i] += 2500.0;
            const double t_eq2 = (k4 * sc.t_out + kicked.zeta[i] + k2 * t_wind) / (k2 + k4);
            double t = t_eq;
            for (int k = 0; k < int(std::lround(tau)); ++k)
                t = building_step(t, m_wind * p.c_air * (t - t_wind), kicked, i, bs[i], p, 1.0);
            const double frac = (t - t_eq) / (t_eq2 - t_eq);
            ok = ok && std::abs(frac - (1.0 - std::exp(-1.0))) < 0.05;
        }
        rep.line("inertia constant", ok, "step response within 5% of K1/(K2+K4)");
    }

    // safe-layer LP against a vertex-enumeration oracle
    {
        std::mt19937_64 rng(cfg.seed + 1);
        std::uniform_real_distribution<double> umax(300.0, 1200.0), uf(0.1, 1.0),
            udm(-0.3, 0.3), ucap(0.5, 1.1);
        bool ok = true;
        for (int it = 0; it < 2000 && ok; ++it) {
            const std::size_t n = 1 + (rng() % 12);
            SafeContext ctx;
            ctx.theta = 4.2 * (6.0 + 8.0 * uf(rng)) / 5.5;
            ctx.m_now.resize(n);
            ctx.m_min.resize(n);
            ctx.m_max.resize(n);
            std::vector<double> dm(n);
            double p_now = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                ctx.m_max[i] = umax(rng);
                ctx.m_min[i] = 0.03 * ctx.m_max[i];
                ctx.m_now[i] = ctx.m_min[i] + (ctx.m_max[i] - ctx.m_min[i]) * uf(rng);
                dm[i] = udm(rng) * ctx.m_max[i];
                p_now += ctx.m_now[i] * ctx.theta;
            }
            ctx.p_cap_active = p_now * ucap(rng);
            ProjectionResult r = project(dm, ctx);
            if (r.infeasible) continue;
            double pw = 0.0;
            for (std::size_t i = 0; i < n; ++i) pw += (ctx.m_now[i] + r.delta_m_safe[i]) * ctx.theta;
            ok = pw <= ctx.p_cap_active * (1.0 + 1e-9) + 1e-9;
            if (!ok || !r.corrected) continue;
            const auto cs = detail::projection_constraints(dm, ctx);
            const double lp_obj = r.mu + r.upsilon;
            for (std::size_t i = 0; i < cs.size() && ok; ++i)
                for (std::size_t j = 0; j < i && ok; ++j) {
                    const double det = cs[j].a * cs[i].b - cs[j].b * cs[i].a;
                    if (std::abs(det) < 1e-12) continue;
                    const double mu = (cs[j].c * cs[i].b - cs[j].b * cs[i].c) / det;
                    const double up = (cs[j].a * cs[i].c - cs[j].c * cs[i].a) / det;
                    bool feas = true;
                    for (const auto& con : cs)
                        if (con.a * mu + con.b * up > con.c + 1e-9 * std::max(1.0, std::abs(con.c)))
                            { feas = false; break; }
                    if (feas) ok = mu + up <= lp_obj + 1e-9 * std::max(1.0, std::abs(lp_obj));
                }
        }
        rep.line("safe-layer lp vs vertex oracle", ok,
                 "2000 randomized instances, objective within 1e-9");
    }

    std::cout << (rep.failures == 0 ? "all checks passed\n"
                                    : std::to_string(rep.failures) + " check(s) failed\n");
    return rep.failures == 0 ? 0 : 1;
}

int cmd_scenario_gen(const CliConfig& cfg, const fs::path& out) {
    SystemProfile prof = make_profile(cfg.profile);
    prof.cap_fraction = cfg.cap_fraction;
    const ScenarioProfile scenario = generate(cfg.scenario_seed, prof.scenario);
    const fs::path path = out / "scenario.csv";
    save_csv(scenario, path.string());
    std::cout << "wrote " << path.string() << " (" << scenario.n_steps() << " rows, "
              << scenario.n_buildings() << " buildings)\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"district cooling reserve simulator and controller toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out";
    std::int64_t seed_override = -1;
    app.add_option("--config", config_path, "JSON experiment config")->expected(1);
    app.add_option("--seed", seed_override, "override the config seed");
    app.add_option("--out", out_dir, "output directory");

    auto* sub_train = app.add_subcommand("train", "train a DRL controller, write checkpoints and curves");
    auto* sub_eval = app.add_subcommand("eval", "run a reserve event under a controller, write traces");
    auto* sub_sweep = app.add_subcommand("sweep", "sensitivity sweep over duration or power cap");
    auto* sub_validate = app.add_subcommand("validate", "run physics and solver invariant checks");
    auto* sub_scenario = app.add_subcommand("scenario", "scenario utilities");
    auto* sub_gen = sub_scenario->add_subcommand("gen", "generate a scenario CSV");
    sub_scenario->require_subcommand(1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        CliConfig cfg = load_config(config_path);
        if (seed_override >= 0) cfg.seed = std::uint64_t(seed_override);
        fs::path out(out_dir);
        fs::create_directories(out);

        if (sub_train->parsed()) return cmd_train(cfg, out);
        if (sub_eval->parsed()) return cmd_eval(cfg, out);
        if (sub_sweep->parsed()) return cmd_sweep(cfg, out);
        if (sub_validate->parsed()) return cmd_validate(cfg);
        if (sub_scenario->parsed() && sub_gen->parsed()) return cmd_scenario_gen(cfg, out);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
