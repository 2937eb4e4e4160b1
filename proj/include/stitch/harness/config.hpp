#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "stitch/diffusion/denoiser.hpp"
#include "stitch/diffusion/sampler.hpp"
#include "stitch/diffusion/schedule.hpp"
#include "stitch/envs/environment.hpp"
#include "stitch/envs/mixture_policy.hpp"
#include "stitch/envs/policy.hpp"
#include "stitch/error.hpp"
#include "stitch/estimator/stitch.hpp"
#include "stitch/kvtext.hpp"

namespace stitch {

inline constexpr int kConfigVersion = 1;

inline const std::vector<std::string>& known_estimators() {
    static const std::vector<std::string> k{"stitch", "pgd", "is", "mb", "fqe", "dr"};
    return k;
}

/// Everything a run needs. Parsed from flat `key = value` text; the resolved
/// values are echoed back by to_kv() in a fixed order, and parsing that echo
/// gives the same config.
struct RunConfig {
    std::uint64_t seed = 1;

    std::string env = "gaussian_world";
    int T = 128;
    double gamma = 0.99;
    // gaussian_world
    double gw_noise_std = 0.2;
    double gw_step_size = 0.02;
    std::string gw_reward = "descend";
    // linear_gaussian (1-D)
    double lg_a = 0.9, lg_b = 0.3, lg_noise_std = 0.1, lg_init_mean = 1.0, lg_init_std = 0.2;

    int episodes = 100;

    // policy family: mu(s) = gain * s + bias, bias interpolated lo..hi over levels
    int policy_levels = 10;
    double policy_lo = -0.5, policy_hi = 0.5;
    double policy_gain = 0.0;
    double policy_std = 0.25;
    std::vector<int> targets; // level indices; empty = all

    // behavior: a family level (middle by default) or an explicit bias
    int behavior_level = -1;
    bool behavior_has_bias = false;
    double behavior_bias = 0.0;
    double behavior2_fraction = 0.0; // share of episodes from a second behavior policy
    double behavior2_bias = 0.0;

    std::string difficulty = "hard";
    int w = 8;
    int K = 64;
    ScheduleKind schedule = ScheduleKind::linear;
    WindowFrame frame = WindowFrame::relative;
    GuidanceWeight guidance_weight = GuidanceWeight::marginal;
    bool clip_denoised = false;
    std::vector<int> hidden{128, 128};
    int embed_width = 16;
    std::int64_t train_steps = 20000;
    int batch_size = 128;
    double learning_rate = 1e-3;

    double alpha = 0.5;
    double lambda_ratio = 0.5;
    bool normalize = true;

    int n_rollouts = 50;
    int gt_rollouts = 300;
    int chunk = 10;
    int trace_rollouts = 4;
    std::vector<std::string> estimators{"stitch", "is", "mb", "fqe", "dr"};
    bool true_reward = false;

    std::vector<int> reward_hidden{32, 32};
    std::int64_t reward_steps = 5000;
    std::vector<int> dynamics_hidden{64, 64};
    std::int64_t dynamics_steps = 10000;
    std::vector<int> fqe_hidden{64, 64};
    std::int64_t fqe_steps = 5000;

    std::vector<double> sweep_alpha, sweep_lambda_ratio;
    std::vector<int> sweep_w;

    double lambda() const { return alpha * lambda_ratio; }
    bool uses(const std::string& est) const {
        for (const auto& e : estimators)
            if (e == est) return true;
        return false;
    }
    int resolved_behavior_level() const { return behavior_level >= 0 ? behavior_level : (policy_levels - 1) / 2; }

    /// Target level indices after applying the default.
    std::vector<int> target_levels() const {
        if (!targets.empty()) return targets;
        std::vector<int> all;
        for (int i = 0; i < policy_levels; ++i) all.push_back(i);
        return all;
    }

    /// Window lengths that need a denoiser.
    std::vector<int> window_lengths() const {
        std::set<int> ws;
        if (uses("stitch")) ws.insert(w);
        if (uses("pgd")) ws.insert(T);
        for (int x : sweep_w) ws.insert(x);
        return {ws.begin(), ws.end()};
    }

    KvText to_kv() const;
    std::string echo() const { return to_kv().to_string(); }
    void validate() const;
};

namespace detail {

inline std::string join_ints(const std::vector<int>& xs) { return join_exact(xs); }

inline std::string join_strings(const std::vector<std::string>& xs) {
    std::string out;
    for (const auto& x : xs) out += (out.empty() ? "" : ",") + x;
    return out;
}

inline std::vector<std::string> split_names(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto c = s.find(',', start);
        if (c == std::string::npos) c = s.size();
        auto item = KvText::trim(s.substr(start, c - start));
        if (!item.empty()) out.push_back(item);
        start = c + 1;
    }
    return out;
}

} // namespace detail

inline KvText RunConfig::to_kv() const {
    KvText kv;
    kv.append("config_version", std::to_string(kConfigVersion));
    kv.append("seed", std::to_string(seed));
    kv.append("env", env);
    kv.append("T", std::to_string(T));
    kv.append("gamma", format_exact(gamma));
    if (env == "gaussian_world") {
        kv.append("gw.noise_std", format_exact(gw_noise_std));
        kv.append("gw.step_size", format_exact(gw_step_size));
        kv.append("gw.reward", gw_reward);
    } else {
        kv.append("lg.a", format_exact(lg_a));
        kv.append("lg.b", format_exact(lg_b));
        kv.append("lg.noise_std", format_exact(lg_noise_std));
        kv.append("lg.init_mean", format_exact(lg_init_mean));
        kv.append("lg.init_std", format_exact(lg_init_std));
    }
    kv.append("episodes", std::to_string(episodes));
    kv.append("policy.levels", std::to_string(policy_levels));
    kv.append("policy.lo", format_exact(policy_lo));
    kv.append("policy.hi", format_exact(policy_hi));
    kv.append("policy.gain", format_exact(policy_gain));
    kv.append("policy.std", format_exact(policy_std));
    kv.append("targets", detail::join_ints(target_levels()));
    if (behavior_has_bias) kv.append("behavior.bias", format_exact(behavior_bias));
    else kv.append("behavior.level", std::to_string(resolved_behavior_level()));
    kv.append("behavior2.fraction", format_exact(behavior2_fraction));
    if (behavior2_fraction > 0.0) kv.append("behavior2.bias", format_exact(behavior2_bias));
    kv.append("difficulty", difficulty);
    kv.append("w", std::to_string(w));
    kv.append("K", std::to_string(K));
    kv.append("schedule", std::string(to_string(schedule)));
    kv.append("frame", to_string(frame));
    kv.append("guidance_weight", to_string(guidance_weight));
    kv.append("clip_denoised", clip_denoised ? "true" : "false");
    kv.append("hidden", detail::join_ints(hidden));
    kv.append("embed_width", std::to_string(embed_width));
    kv.append("train_steps", std::to_string(train_steps));
    kv.append("batch_size", std::to_string(batch_size));
    kv.append("learning_rate", format_exact(learning_rate));
    kv.append("alpha", format_exact(alpha));
    kv.append("lambda_ratio", format_exact(lambda_ratio));
    kv.append("normalize", normalize ? "true" : "false");
    kv.append("n_rollouts", std::to_string(n_rollouts));
    kv.append("gt_rollouts", std::to_string(gt_rollouts));
    kv.append("chunk", std::to_string(chunk));
    kv.append("trace_rollouts", std::to_string(trace_rollouts));
    kv.append("estimators", detail::join_strings(estimators));
    kv.append("true_reward", true_reward ? "true" : "false");
    kv.append("reward.hidden", detail::join_ints(reward_hidden));
    kv.append("reward.steps", std::to_string(reward_steps));
    kv.append("dynamics.hidden", detail::join_ints(dynamics_hidden));
    kv.append("dynamics.steps", std::to_string(dynamics_steps));
    kv.append("fqe.hidden", detail::join_ints(fqe_hidden));
    kv.append("fqe.steps", std::to_string(fqe_steps));
    if (!sweep_alpha.empty()) kv.append("sweep.alpha", join_exact(sweep_alpha));
    if (!sweep_lambda_ratio.empty()) kv.append("sweep.lambda_ratio", join_exact(sweep_lambda_ratio));
    if (!sweep_w.empty()) kv.append("sweep.w", detail::join_ints(sweep_w));
    return kv;
}

inline void RunConfig::validate() const {
    auto bad = [](const std::string& m) { throw ConfigError(m); };
    if (env != "gaussian_world" && env != "linear_gaussian") bad("unknown env '" + env + "'");
    if (T < 1) bad("T must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) bad("gamma must lie in [0, 1)");
    if (gw_reward != "descend" && gw_reward != "goal" && gw_reward != "zero") bad("unknown gw.reward '" + gw_reward + "'");
    if (episodes < 1) bad("episodes must be positive");
    if (policy_levels < 1) bad("policy.levels must be positive");
    if (!(policy_std > 0.0)) bad("policy.std must be positive");
    if (env == "gaussian_world" && policy_gain != 0.0) bad("policy.gain must be 0 on gaussian_world");
    for (int t : target_levels())
        if (t < 0 || t >= policy_levels) bad("target level " + std::to_string(t) + " outside the family");
    if (!behavior_has_bias && resolved_behavior_level() >= policy_levels) bad("behavior.level outside the family");
    if (!(behavior2_fraction >= 0.0 && behavior2_fraction < 1.0)) bad("behavior2.fraction must lie in [0, 1)");
    if (difficulty != "hard" && difficulty != "easy") bad("difficulty must be hard or easy");
    for (int x : window_lengths())
        if (x < 1 || T % x != 0) bad("window length " + std::to_string(x) + " must divide T");
    if (w < 1) bad("w must be positive");
    if (K < 1) bad("K must be positive");
    if (embed_width < 2 || embed_width % 2) bad("embed_width must be even and >= 2");
    if (train_steps < 1 || batch_size < 1 || !(learning_rate > 0.0)) bad("training settings must be positive");
    if (!(alpha >= 0.0) || !(lambda_ratio >= 0.0)) bad("alpha and lambda_ratio must be >= 0");
    for (double a : sweep_alpha)
        if (!(a >= 0.0)) bad("sweep.alpha values must be >= 0");
    for (double r : sweep_lambda_ratio)
        if (!(r >= 0.0)) bad("sweep.lambda_ratio values must be >= 0");
    if (n_rollouts < 1 || gt_rollouts < 1 || chunk < 1 || trace_rollouts < 0) bad("rollout counts must be positive");
    if (estimators.empty()) bad("estimators must not be empty");
    for (const auto& e : estimators) {
        bool ok = false;
        for (const auto& k : known_estimators()) ok |= e == k;
        if (!ok) bad("unknown estimator '" + e + "'");
    }
    if (reward_steps < 1 || dynamics_steps < 1 || fqe_steps < 1) bad("model step counts must be positive");
}

/// Parse config text. Unknown keys, duplicate keys, a missing or wrong
/// config_version, and unparsable values are all ConfigError.
inline RunConfig parse_run_config(const std::string& text) {
    KvText kv;
    try {
        kv = KvText::parse_string(text);
    } catch (const FormatError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    std::map<std::string, std::string> m;
    for (const auto& [k, v] : kv.entries())
        if (!m.emplace(k, v).second) throw ConfigError("config: duplicate key '" + k + "'");

    auto take = [&](const std::string& k) -> std::optional<std::string> {
        auto it = m.find(k);
        if (it == m.end()) return std::nullopt;
        std::string v = it->second;
        m.erase(it);
        return v;
    };
    auto ver = take("config_version");
    if (!ver) throw ConfigError("config: missing config_version");

    RunConfig c;
    try {
        if (parse_number<int>(*ver, "config_version") != kConfigVersion)
            throw ConfigError("config: unsupported config_version " + *ver);
        if (auto v = take("env")) c.env = *v;
        // environment defaults first, explicit keys below override them
        if (c.env == "linear_gaussian") {
            c.T = 16;
            c.gamma = 0.95;
            c.frame = WindowFrame::absolute;
            c.policy_lo = -1.0;
            c.policy_hi = 1.0;
            c.policy_gain = -0.5;
            c.policy_std = 0.3;
            c.w = 4;
            c.K = 32;
            c.hidden = {64, 64};
            c.train_steps = 4000;
        }
        if (auto v = take("difficulty")) c.difficulty = *v;
        if (c.difficulty == "easy") {
            if (c.env != "linear_gaussian") c.w = 16;
            c.alpha = 0.1;
            c.lambda_ratio = 1.0;
        }

        auto num = [&](const std::string& k, auto& field) {
            if (auto v = take(k)) field = parse_number<std::decay_t<decltype(field)>>(*v, k);
        };
        auto flag = [&](const std::string& k, bool& field) {
            if (auto v = take(k)) field = parse_bool(*v);
        };
        auto ints = [&](const std::string& k, std::vector<int>& field) {
            if (auto v = take(k)) field = parse_list<int>(*v, k);
        };
        auto reals = [&](const std::string& k, std::vector<double>& field) {
            if (auto v = take(k)) field = parse_list<double>(*v, k);
        };

        num("seed", c.seed);
        num("T", c.T);
        num("gamma", c.gamma);
        num("gw.noise_std", c.gw_noise_std);
        num("gw.step_size", c.gw_step_size);
        if (auto v = take("gw.reward")) c.gw_reward = *v;
        num("lg.a", c.lg_a);
        num("lg.b", c.lg_b);
        num("lg.noise_std", c.lg_noise_std);
        num("lg.init_mean", c.lg_init_mean);
        num("lg.init_std", c.lg_init_std);
        num("episodes", c.episodes);
        num("policy.levels", c.policy_levels);
        num("policy.lo", c.policy_lo);
        num("policy.hi", c.policy_hi);
        num("policy.gain", c.policy_gain);
        num("policy.std", c.policy_std);
        ints("targets", c.targets);
        num("behavior.level", c.behavior_level);
        if (auto v = take("behavior.bias")) {
            c.behavior_has_bias = true;
            c.behavior_bias = parse_number<double>(*v, "behavior.bias");
        }
        num("behavior2.fraction", c.behavior2_fraction);
        num("behavior2.bias", c.behavior2_bias);
        num("w", c.w);
        num("K", c.K);
        if (auto v = take("schedule")) c.schedule = schedule_kind_from_string(*v);
        if (auto v = take("frame")) c.frame = window_frame_from_string(*v);
        if (auto v = take("guidance_weight")) c.guidance_weight = guidance_weight_from_string(*v);
        flag("clip_denoised", c.clip_denoised);
        ints("hidden", c.hidden);
        num("embed_width", c.embed_width);
        num("train_steps", c.train_steps);
        num("batch_size", c.batch_size);
        num("learning_rate", c.learning_rate);
        num("alpha", c.alpha);
        num("lambda_ratio", c.lambda_ratio);
        flag("normalize", c.normalize);
        num("n_rollouts", c.n_rollouts);
        num("gt_rollouts", c.gt_rollouts);
        num("chunk", c.chunk);
        num("trace_rollouts", c.trace_rollouts);
        if (auto v = take("estimators")) c.estimators = detail::split_names(*v);
        flag("true_reward", c.true_reward);
        ints("reward.hidden", c.reward_hidden);
        num("reward.steps", c.reward_steps);
        ints("dynamics.hidden", c.dynamics_hidden);
        num("dynamics.steps", c.dynamics_steps);
        ints("fqe.hidden", c.fqe_hidden);
        num("fqe.steps", c.fqe_steps);
        reals("sweep.alpha", c.sweep_alpha);
        reals("sweep.lambda_ratio", c.sweep_lambda_ratio);
        ints("sweep.w", c.sweep_w);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (!m.empty()) throw ConfigError("config: unknown key '" + m.begin()->first + "'");
    c.validate();
    return c;
}

inline RunConfig read_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

// ---- objects built from a config ----

inline EnvPtr make_env(const RunConfig& c) {
    if (c.env == "gaussian_world") {
        GaussianWorld::Params p;
        p.noise_std = c.gw_noise_std;
        p.step_size = c.gw_step_size;
        p.horizon = c.T;
        p.gamma = c.gamma;
        p.reward = c.gw_reward == "goal"   ? GaussianWorld::RewardKind::goal
                   : c.gw_reward == "zero" ? GaussianWorld::RewardKind::zero
                                           : GaussianWorld::RewardKind::descend;
        return std::make_shared<GaussianWorld>(p);
    }
    LinearGaussianEnv::Params p;
    p.A = Mat::Constant(1, 1, c.lg_a);
    p.B = Mat::Constant(1, 1, c.lg_b);
    p.noise_std = c.lg_noise_std;
    p.init_mean = Vec::Constant(1, c.lg_init_mean);
    p.init_std = c.lg_init_std;
    p.horizon = c.T;
    p.gamma = c.gamma;
    return std::make_shared<LinearGaussianEnv>(p);
}

inline PolicyPtr family_policy(const RunConfig& c, const Environment& env, double bias) {
    const Mat W = Mat::Constant(env.action_dim(), env.state_dim(), c.policy_gain);
    return make_linear_gaussian_policy(W, Vec::Constant(env.action_dim(), bias), Vec::Constant(env.action_dim(), c.policy_std));
}

inline double level_bias(const RunConfig& c, int level) {
    if (c.policy_levels == 1) return c.policy_lo;
    return c.policy_lo + (c.policy_hi - c.policy_lo) * level / (c.policy_levels - 1);
}

inline std::vector<NamedPolicy> make_targets(const RunConfig& c, const Environment& env) {
    std::vector<NamedPolicy> out;
    for (int l : c.target_levels()) out.push_back({"level_" + std::to_string(l), family_policy(c, env, level_bias(c, l))});
    return out;
}

inline PolicyPtr primary_behavior(const RunConfig& c, const Environment& env) {
    return family_policy(c, env, c.behavior_has_bias ? c.behavior_bias : level_bias(c, c.resolved_behavior_level()));
}

inline PolicyPtr secondary_behavior(const RunConfig& c, const Environment& env) {
    return family_policy(c, env, c.behavior2_bias);
}

struct BehaviorSplit {
    int first = 0, second = 0;
};

inline BehaviorSplit behavior_split(const RunConfig& c) {
    const int second = static_cast<int>(std::lround(c.behavior2_fraction * c.episodes));
    return {c.episodes - second, second};
}

/// Behavior density seen by guidance and importance weights: the primary
/// policy, or the per-step mixture weighted by episode counts.
inline PolicyPtr behavior_density(const RunConfig& c, const Environment& env) {
    const auto split = behavior_split(c);
    if (split.second == 0) return primary_behavior(c, env);
    return std::make_shared<MixturePolicy>(std::vector<PolicyPtr>{primary_behavior(c, env), secondary_behavior(c, env)},
                                           std::vector<double>{double(split.first), double(split.second)});
}

inline StitchConfig stitch_config(const RunConfig& c, int w, double alpha, double lambda, int workers) {
    StitchConfig s;
    s.w = w;
    s.T = c.T;
    s.gamma = c.gamma;
    s.n_rollouts = c.n_rollouts;
    s.guidance.alpha = alpha;
    s.guidance.lambda = lambda;
    s.guidance.normalize = c.normalize;
    s.sample.clip_denoised = c.clip_denoised;
    s.sample.guidance_weight = c.guidance_weight;
    s.chunk = c.chunk;
    s.workers = workers;
    return s;
}

} // namespace stitch
