#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcs/common.hpp"
#include "dcs/env.hpp"
#include "dcs/nn.hpp"

namespace dcs {

// Affine scaling of each observation field to roughly [-1,1]; raw kW and
// kg/s magnitudes do not train stably through 128-unit layers.
struct ObsScaler {
    std::vector<double> center;
    std::vector<double> half;

    Eigen::VectorXd normalize(const Observation& obs) const {
        const std::vector<double> raw = obs.flatten();
        if (raw.size() != center.size()) throw ConfigError("ObsScaler: dimension mismatch");
        Eigen::VectorXd v(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i)
            v[int(i)] = (raw[i] - center[i]) / half[i];
        return v;
    }
};

inline ObsScaler make_scaler(const std::vector<BuildingParams>& bs, double p_scale) {
    ObsScaler sc;
    sc.center.push_back(0.0);            // delta_p
    sc.half.push_back(std::max(1.0, p_scale));
    for (const auto& b : bs) {           // m_primary
        sc.center.push_back(0.5 * (b.m_min + b.m_max));
        sc.half.push_back(0.5 * (b.m_max - b.m_min));
    }
    for (std::size_t i = 0; i < bs.size(); ++i) { // t_i_return, degC
        sc.center.push_back(12.0);
        sc.half.push_back(8.0);
    }
    for (std::size_t i = 0; i < bs.size(); ++i) { // delta_t, degC
        sc.center.push_back(0.0);
        sc.half.push_back(3.0);
    }
    return sc;
}

struct TrainConfig {
    double gamma = 0.9;
    double tau = 0.005;
    double noise_sigma = 0.3;   // in normalized action units
    double noise_decay = 0.995; // per-episode multiplier on sigma
    int episodes = 2500;
    int batch = 200;
    std::size_t buffer_capacity = 10000;
    double lr_critic = 1e-3;
    double lr_actor = 1e-4;
    int hidden = 128;
    int updates_per_step = 1;   // gradient updates per environment step
    double grad_clip = 1.0;     // global l2 norm cap per update, <= 0 disables
    double weight_decay_critic = 1e-2; // l2 regularization, per classic DDPG
    double weight_decay_actor = 1e-4;  // keeps tanh pre-activations from saturating
    // penalty-DRL variant (no safe layer): reward carries theta_p*|P-cap|/p_base.
    bool penalty_mode = false;
    double theta_p = 0.5;
    double p_base = 1000.0; // kW; the penalty gap is expressed in MW
};

// Uniform-experience ring buffer holding normalized transitions.
class ReplayBuffer {
public:
    struct Item {
        Eigen::VectorXd s;
        Eigen::VectorXd a; // normalized executed action
        double r = 0.0;
        Eigen::VectorXd s_next;
        bool done = false;
    };

    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

    void push(Item item) {
        if (items_.size() < capacity_) {
            items_.push_back(std::move(item));
        } else {
            items_[cursor_] = std::move(item);
        }
        cursor_ = (cursor_ + 1) % capacity_;
    }

    std::size_t size() const { return items_.size(); }

    // K distinct indices, uniform over the buffer.
    std::vector<std::size_t> sample_indices(std::size_t k, std::mt19937_64& rng) const {
        if (k > items_.size()) throw DomainError("ReplayBuffer: batch larger than buffer");
        // Floyd's algorithm
        std::vector<std::size_t> out;
        out.reserve(k);
        std::vector<bool> seen(items_.size(), false);
        for (std::size_t j = items_.size() - k; j < items_.size(); ++j) {
            std::uniform_int_distribution<std::size_t> u(0, j);
            std::size_t t = u(rng);
            if (seen[t]) t = j;
            seen[t] = true;
            out.push_back(t);
        }
        return out;
    }

    const Item& operator[](std::size_t i) const { return items_[i]; }

private:
    std::size_t capacity_;
    std::size_t cursor_ = 0;
    std::vector<Item> items_;
};

// Zero-mean Gaussian exploration noise per component, clamped to the
// normalized action box [-1,1].
inline Eigen::VectorXd explore(const Eigen::VectorXd& action, double sigma,
                               std::mt19937_64& rng) {
    if (sigma < 0.0) throw DomainError("explore: sigma must be >= 0");
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd out = action;
    for (int i = 0; i < out.size(); ++i)
        out[i] = std::clamp(out[i] + sigma * gauss(rng), -1.0, 1.0);
    return out;
}

// Deterministic-policy-gradient learner: actor/critic with slow target copies.
class DdpgAgent {
public:
    DdpgAgent(int obs_dim, int act_dim, const TrainConfig& cfg, std::uint64_t seed)
        : cfg_(cfg), rng_(seed),
          actor_(Mlp::make({obs_dim, cfg.hidden, cfg.hidden, act_dim}, Mlp::Output::Tanh,
                           rng_, 1e-3)),
          critic_(Mlp::make({obs_dim + act_dim, cfg.hidden, cfg.hidden, 1},
                            Mlp::Output::Linear, rng_)),
          actor_target_(actor_), critic_target_(critic_),
          opt_actor_(actor_, cfg.lr_actor), opt_critic_(critic_, cfg.lr_critic) {}

    Mlp& actor() { return actor_; }
    Mlp& critic() { return critic_; }
    const Mlp& actor() const { return actor_; }
    const Mlp& critic() const { return critic_; }
    std::mt19937_64& rng() { return rng_; }

    Eigen::VectorXd act(const Eigen::VectorXd& s) const { return actor_.forward(s); }

    double critic_value(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const {
        Eigen::VectorXd in(s.size() + a.size());
        in << s, a;
        return critic_.forward(in)(0, 0);
    }

    // One mean-squared Bellman-error descent step; returns the pre-step loss.
    double critic_update(const ReplayBuffer& buf, const std::vector<std::size_t>& idx) {
        const int k = int(idx.size());
        const int sd = int(buf[idx[0]].s.size());
        const int ad = int(buf[idx[0]].a.size());
        Eigen::MatrixXd s(sd, k), a(ad, k), sn(sd, k);
        Eigen::VectorXd r(k);
        std::vector<bool> done(k);
        for (int c = 0; c < k; ++c) {
            const auto& it = buf[idx[c]];
            s.col(c) = it.s;
            a.col(c) = it.a;
            sn.col(c) = it.s_next;
            r[c] = it.r;
            done[c] = it.done;
        }
        // y = r + gamma * Q'(s', pi'(s')); finite-horizon episodes end without
        // bootstrapping.
        const Eigen::MatrixXd an = actor_target_.forward(sn);
        Eigen::MatrixXd qin_next(sd + ad, k);
        qin_next << sn, an;
        const Eigen::MatrixXd qn = critic_target_.forward(qin_next);
        Eigen::VectorXd y(k);
        for (int c = 0; c < k; ++c)
            y[c] = r[c] + (done[c] ? 0.0 : cfg_.gamma * qn(0, c));

        Eigen::MatrixXd qin(sd + ad, k);
        qin << s, a;
        Mlp::Cache cache;
        const Eigen::MatrixXd q = critic_.forward(qin, &cache);
        const Eigen::VectorXd err = q.row(0).transpose() - y;
        const double loss = err.squaredNorm() / double(k);

        Eigen::MatrixXd dy(1, k);
        dy.row(0) = (2.0 / double(k)) * err.transpose();
        Mlp::Grads g = Mlp::Grads::zeros_like(critic_);
        critic_.backward(cache, dy, g);
        for (std::size_t l = 0; l < g.w.size(); ++l)
            g.w[l] += cfg_.weight_decay_critic * critic_.w[l];
        if (cfg_.grad_clip > 0.0) g.clip_global_norm(cfg_.grad_clip);
        opt_critic_.apply(critic_, g, -1.0);
        return loss;
    }

    // Ascends mean_k Q(s_k, pi(s_k)) through the frozen critic; returns the
    // sampled objective.
    double actor_update(const ReplayBuffer& buf, const std::vector<std::size_t>& idx) {
        const int k = int(idx.size());
        const int sd = int(buf[idx[0]].s.size());
        Eigen::MatrixXd s(sd, k);
        for (int c = 0; c < k; ++c) s.col(c) = buf[idx[c]].s;

        Mlp::Cache actor_cache;
        const Eigen::MatrixXd a = actor_.forward(s, &actor_cache);
        Eigen::MatrixXd qin(sd + a.rows(), k);
        qin << s, a;
        Mlp::Cache critic_cache;
        const Eigen::MatrixXd q = critic_.forward(qin, &critic_cache);
        const double objective = q.row(0).mean();

        Eigen::MatrixXd dq(1, k);
        dq.setConstant(1.0 / double(k));
        Mlp::Grads critic_scratch = Mlp::Grads::zeros_like(critic_);
        const Eigen::MatrixXd din = critic_.backward(critic_cache, dq, critic_scratch);
        const Eigen::MatrixXd da = din.bottomRows(a.rows()); // dQ/da only

        Mlp::Grads g = Mlp::Grads::zeros_like(actor_);
        actor_.backward(actor_cache, da, g);
        // the update ascends, so decay enters with opposite sign
        for (std::size_t l = 0; l < g.w.size(); ++l)
            g.w[l] -= cfg_.weight_decay_actor * actor_.w[l];
        if (cfg_.grad_clip > 0.0) g.clip_global_norm(cfg_.grad_clip);
        opt_actor_.apply(actor_, g, +1.0);
        return objective;
    }

    void soft_update(double tau) {
        actor_target_.soft_update_from(actor_, tau);
        critic_target_.soft_update_from(critic_, tau);
    }

    bool finite() const {
        return actor_.finite() && critic_.finite() &&
               actor_target_.finite() && critic_target_.finite();
    }

    const TrainConfig& config() const { return cfg_; }

private:
    TrainConfig cfg_;
    std::mt19937_64 rng_;
    Mlp actor_;
    Mlp critic_;
    Mlp actor_target_;
    Mlp critic_target_;
    Adam opt_actor_;
    Adam opt_critic_;
};

struct TrainResult {
    std::vector<double> reward_curve;    // per-episode cumulative reward
    std::vector<double> violation_curve; // per-episode max(0, P_exec - cap), kW
};

// First episode after which the trailing-50 mean stays within 5% of the
// final-100 mean.
inline int convergence_episode(const std::vector<double>& curve,
                               int trail = 50, int final_window = 100) {
    const int n = int(curve.size());
    if (n < trail + 1) return n;
    double final_mean = 0.0;
    const int fw = std::min(final_window, n);
    for (int i = n - fw; i < n; ++i) final_mean += curve[i];
    final_mean /= double(fw);
    const double tol = 0.05 * std::abs(final_mean);

    std::vector<double> trail_mean(n, 0.0);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += curve[i];
        if (i >= trail) acc -= curve[i - trail];
        trail_mean[i] = acc / double(std::min(i + 1, trail));
    }
    int first = n - 1;
    for (int i = n - 1; i >= trail - 1; --i) {
        if (std::abs(trail_mean[i] - final_mean) <= tol) first = i;
        else break;
    }
    return first + 1; // 1-based episode count
}

// The Table-I loop: act with exploration noise, fine-tune through the safe
// layer (safe mode), execute, store the executed transition, update networks.
// Scenarios are regenerated per episode from the run seed.
// Per-building action range in kg/s: the actor commands at most a 30% swing
// of the maximum flow per control interval (pump slew limit).
inline std::vector<double> action_scale(const std::vector<BuildingParams>& bs) {
    std::vector<double> s(bs.size());
    for (std::size_t i = 0; i < bs.size(); ++i) s[i] = 0.3 * bs[i].m_max;
    return s;
}

inline TrainResult train(Env& env, DdpgAgent& agent, Stage stage,
                         const ScenarioConfig& scenario_cfg, const PlantState& start,
                         const ObsScaler& scaler, std::uint64_t seed,
                         bool use_safe_layer) {
    const TrainConfig& cfg = agent.config();
    const std::size_t n = env.n_buildings();
    const std::vector<double> act_scale = action_scale(env.buildings());

    ReplayBuffer buffer(cfg.buffer_capacity);
    TrainResult result;
    double sigma = cfg.noise_sigma;

    for (int ep = 0; ep < cfg.episodes; ++ep) {
        const ScenarioProfile scenario = generate(seed * 1000003ULL + std::uint64_t(ep),
                                                  scenario_cfg);
        Observation obs = env.reset(stage, scenario, start);
        double ep_reward = 0.0, ep_violation = 0.0;

        while (!env.done()) {
            const Eigen::VectorXd s = scaler.normalize(obs);
            Eigen::VectorXd a_norm = explore(agent.act(s), sigma, agent.rng());

            ControlAction action;
            action.delta_m.resize(n);
            for (std::size_t i = 0; i < n; ++i) action.delta_m[i] = a_norm[int(i)] * act_scale[i];
            clamp_action_to_box(action.delta_m, env.state().m_primary, env.buildings());

            if (use_safe_layer) {
                const SafeContext ctx = env.safe_context();
                ProjectionResult pr = project(action.delta_m, ctx);
                if (pr.infeasible) {
                    for (std::size_t i = 0; i < n; ++i)
                        action.delta_m[i] = ctx.m_min[i] - ctx.m_now[i];
                } else {
                    action.delta_m = pr.delta_m_safe;
                }
            }

            Transition tr = env.step(action);
            double reward = tr.reward;
            const double exec_gap = env.last_exec_power() - env.active_cap();
            if (cfg.penalty_mode)
                reward -= cfg.theta_p * std::abs(exec_gap) / cfg.p_base;
            ep_violation = std::max(ep_violation, std::max(0.0, exec_gap));
            ep_reward += reward;

            ReplayBuffer::Item item;
            item.s = s;
            item.a.resize(int(n));
            for (std::size_t i = 0; i < n; ++i)
                item.a[int(i)] = tr.action.delta_m[i] / act_scale[i]; // executed action
            item.r = reward;
            item.s_next = scaler.normalize(tr.next_obs);
            item.done = tr.done;
            buffer.push(std::move(item));

            if (buffer.size() >= std::size_t(cfg.batch)) {
                for (int u = 0; u < cfg.updates_per_step; ++u) {
                    const auto idx = buffer.sample_indices(std::size_t(cfg.batch), agent.rng());
                    agent.critic_update(buffer, idx);
                    agent.actor_update(buffer, idx);
                    agent.soft_update(cfg.tau);
                }
            }
            obs = tr.next_obs;
        }
        if (!agent.finite())
            throw SolverError("train: non-finite network parameters at episode "
                              + std::to_string(ep), 0.0);
        result.reward_curve.push_back(ep_reward);
        result.violation_curve.push_back(ep_violation);
        sigma *= cfg.noise_decay;
    }
    return result;
}

// ---- checkpoints ----------------------------------------------------------

namespace detail {

inline nlohmann::json mlp_to_json(const Mlp& net) {
    nlohmann::json j;
    j["output"] = (net.output == Mlp::Output::Tanh) ? "tanh" : "linear";
    for (std::size_t l = 0; l < net.w.size(); ++l) {
        nlohmann::json layer;
        layer["rows"] = net.w[l].rows();
        layer["cols"] = net.w[l].cols();
        std::vector<double> wv(net.w[l].data(), net.w[l].data() + net.w[l].size());
        std::vector<double> bv(net.b[l].data(), net.b[l].data() + net.b[l].size());
        layer["w"] = wv;
        layer["b"] = bv;
        j["layers"].push_back(layer);
    }
    return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
    Mlp net;
    net.output = (j.at("output") == "tanh") ? Mlp::Output::Tanh : Mlp::Output::Linear;
    for (const auto& layer : j.at("layers")) {
        const long rows = layer.at("rows");
        const long cols = layer.at("cols");
        const std::vector<double> wv = layer.at("w");
        const std::vector<double> bv = layer.at("b");
        if (long(wv.size()) != rows * cols || long(bv.size()) != rows)
            throw ConfigError("checkpoint: layer shape does not match stored data");
        Eigen::MatrixXd w = Eigen::Map<const Eigen::MatrixXd>(wv.data(), rows, cols);
        Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(bv.data(), rows);
        net.w.push_back(std::move(w));
        net.b.push_back(std::move(b));
    }
    if (net.w.empty()) throw ConfigError("checkpoint: no layers");
    return net;
}

} // namespace detail

struct Checkpoint {
    int schema_version = 1;
    Mlp actor;
    Mlp critic;
    ObsScaler scaler;
    std::vector<double> action_scale;
    std::uint64_t seed = 0;
    std::string stage = "reduction";
};

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    nlohmann::ordered_json j;
    j["schema_version"] = ck.schema_version;
    j["stage"] = ck.stage;
    j["seed"] = ck.seed;
    j["action_scale"] = ck.action_scale;
    j["obs_center"] = ck.scaler.center;
    j["obs_half"] = ck.scaler.half;
    j["actor"] = detail::mlp_to_json(ck.actor);
    j["critic"] = detail::mlp_to_json(ck.critic);
    std::ofstream f(path);
    if (!f) throw ConfigError("save_checkpoint: cannot open " + path);
    f << j.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    f >> j;
    Checkpoint ck;
    ck.schema_version = j.at("schema_version");
    if (ck.schema_version != 1)
        throw ConfigError("load_checkpoint: unsupported schema version");
    ck.stage = j.at("stage");
    ck.seed = j.at("seed");
    ck.action_scale = j.at("action_scale").get<std::vector<double>>();
    ck.scaler.center = j.at("obs_center").get<std::vector<double>>();
    ck.scaler.half = j.at("obs_half").get<std::vector<double>>();
    ck.actor = detail::mlp_from_json(j.at("actor"));
    ck.critic = detail::mlp_from_json(j.at("critic"));
    if (ck.actor.in_dim() != int(ck.scaler.center.size()))
        throw ConfigError("load_checkpoint: actor input does not match observation size");
    if (ck.actor.out_dim() != int(ck.action_scale.size()))
        throw ConfigError("load_checkpoint: actor output does not match action size");
    return ck;
}

// A trained actor as an evaluation policy (no exploration noise).
inline Policy make_policy(const Checkpoint& ck) {
    return [ck](const Observation& obs) {
        const Eigen::VectorXd a = ck.actor.forward(ck.scaler.normalize(obs));
        ControlAction act;
        act.delta_m.resize(ck.action_scale.size());
        for (std::size_t i = 0; i < ck.action_scale.size(); ++i)
            act.delta_m[i] = a[int(i)] * ck.action_scale[i];
        return act;
    };
}

} // namespace dcs
