#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "stitch/baselines/doubly_robust.hpp"
#include "stitch/baselines/fqe.hpp"
#include "stitch/baselines/importance.hpp"
#include "stitch/baselines/model_based.hpp"
#include "stitch/dataset/io.hpp"
#include "stitch/estimator/reward_model.hpp"
#include "stitch/estimator/stitch.hpp"
#include "stitch/harness/config.hpp"
#include "stitch/io/checkpoint.hpp"
#include "stitch/metrics/metrics.hpp"

namespace stitch {

namespace fs = std::filesystem;

// Stream ids under the run seed. Ground truth uses its own fixed seed so every
// seed of a sweep scores against the same J(pi).
enum Stream : std::uint64_t {
    kStreamData = 1,
    kStreamDenoiser,
    kStreamReward,
    kStreamDynamics,
    kStreamFqe,
    kStreamStitch,
    kStreamPgd,
    kStreamMb,
    kStreamDr,
    kStreamSweep,
    kStreamTraces,
    kStreamVerify,
    kStreamTruth,
};
inline constexpr std::uint64_t kTruthSeed = 0x7a7;

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + p.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const fs::path& p, const std::string& s) {
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
        if (ec) throw FormatError("cannot create '" + p.parent_path().string() + "': " + ec.message());
    }
    std::ofstream out(p, std::ios::binary);
    if (!out) throw FormatError("cannot write '" + p.string() + "'");
    out << s;
    if (!out) throw FormatError("write failure on '" + p.string() + "'");
}

inline std::string file_hash(const fs::path& p) { return hex64(fnv1a(read_text(p))); }

/// Manifest: verb-specific entries followed by the config echo under `config.`.
inline void write_manifest(const fs::path& p, const std::string& verb, const RunConfig& c, const KvText& body) {
    KvText m;
    m.append("verb", verb);
    m.append("seed", std::to_string(c.seed));
    for (const auto& [k, v] : body.entries()) m.append(k, v);
    const KvText echo = c.to_kv();
    for (const auto& [k, v] : echo.entries()) m.append("config." + k, v);
    write_text(p, m.to_string());
}

inline std::string denoiser_file(int w) { return "denoiser_w" + std::to_string(w) + ".ckpt"; }

// ---- gen-data ----

inline Dataset generate_dataset(const RunConfig& c) {
    const EnvPtr env = make_env(c);
    const auto split = behavior_split(c);
    const PolicyPtr b1 = primary_behavior(c, *env), b2 = secondary_behavior(c, *env);
    Dataset ds;
    ds.meta.env = env->name();
    ds.meta.state_dim = env->state_dim();
    ds.meta.action_dim = env->action_dim();
    ds.meta.horizon = c.T;
    ds.meta.gamma = c.gamma;
    const RngStream root(c.seed, kStreamData);
    for (int i = 0; i < c.episodes; ++i)
        ds.episodes.push_back(rollout(*env, i < split.first ? *b1 : *b2, root.substream(static_cast<std::uint64_t>(i)), c.T));
    ds.meta.extra = {{"seed", std::to_string(c.seed)},
                     {"behavior1_episodes", std::to_string(split.first)},
                     {"behavior2_episodes", std::to_string(split.second)}};
    quantize_float32(ds);
    return ds;
}

inline void gen_data(const RunConfig& c, const fs::path& out) {
    if (c.episodes < 1) throw ConfigError("gen-data: episodes must be positive");
    const Dataset ds = generate_dataset(c);
    write_dataset(ds, out / "dataset");
    write_text(out / "config.txt", c.echo());
    const auto split = behavior_split(c);
    KvText b;
    b.append("episodes", std::to_string(ds.episodes.size()));
    b.append("behavior1_episodes", std::to_string(split.first));
    b.append("behavior2_episodes", std::to_string(split.second));
    b.append("transitions", std::to_string(ds.num_transitions()));
    b.append("hash.meta", file_hash(out / "dataset" / "meta"));
    b.append("hash.trajectories", file_hash(out / "dataset" / "trajectories.csv"));
    write_manifest(out / "gen-data.manifest", "gen-data", c, b);
}

inline Dataset load_run_dataset(const RunConfig& c, const fs::path& data_dir) {
    Dataset ds = read_dataset(data_dir);
    const EnvPtr env = make_env(c);
    if (ds.meta.env != env->name() || ds.meta.state_dim != env->state_dim() || ds.meta.action_dim != env->action_dim())
        throw ConfigError("dataset at '" + data_dir.string() + "' does not match the configured env");
    if (ds.episodes.empty()) throw ConfigError("dataset has no episodes");
    return ds;
}

// ---- train ----

inline FqeConfig fqe_config(const RunConfig& c) {
    FqeConfig f;
    f.hidden = c.fqe_hidden;
    f.steps = c.fqe_steps;
    return f;
}

inline void train_models(const RunConfig& c, const fs::path& out, const fs::path& data_dir) {
    const Dataset ds = load_run_dataset(c, data_dir);
    const EnvPtr env = make_env(c);
    const fs::path models = out / "models";
    fs::create_directories(models);
    KvText b;
    b.append("hash.dataset", file_hash(data_dir / "trajectories.csv"));

    for (int w : c.window_lengths()) {
        const WindowBatch wb = slice_windows(ds.episodes, w, 1);
        DenoiserModel m(wb.layout, make_schedule(c.schedule, c.K), fit_window_norm(wb, c.frame), c.hidden, c.embed_width,
                        Activation::relu, c.frame);
        DenoiserTrainConfig tc;
        tc.steps = c.train_steps;
        tc.batch_size = c.batch_size;
        tc.adam.learning_rate = c.learning_rate;
        const auto res = train_denoiser(m, wb, tc, RngStream(c.seed, kStreamDenoiser).substream(static_cast<std::uint64_t>(w)));
        save_denoiser(models / denoiser_file(w), m);
        b.append("denoiser_w" + std::to_string(w) + ".final_loss", format_exact(res.final_loss));
        b.append("denoiser_w" + std::to_string(w) + ".windows", std::to_string(wb.size()));
    }

    RewardTrainConfig rc;
    rc.hidden = c.reward_hidden;
    rc.fit.steps = c.reward_steps;
    const auto rf = train_reward(ds.episodes, rc, RngStream(c.seed, kStreamReward));
    save_reward(models / "reward.ckpt", rf.model);
    b.append("reward.final_loss", format_exact(rf.curve.final_loss));

    if (c.uses("mb")) {
        DynamicsTrainConfig dc;
        dc.hidden = c.dynamics_hidden;
        dc.fit.steps = c.dynamics_steps;
        const auto df = train_dynamics(ds.episodes, dc, RngStream(c.seed, kStreamDynamics));
        save_dynamics(models / "dynamics.ckpt", df.model);
        b.append("dynamics.final_loss", format_exact(df.curve.final_loss));
    }
    if (c.uses("fqe") || c.uses("dr")) {
        const NormStats norm = NormStats::fit(ds.episodes);
        for (const auto& t : make_targets(c, *env)) {
            const auto level = static_cast<std::uint64_t>(std::stoi(t.id.substr(6)));
            const auto fr = fqe_estimate(ds.episodes, *t.policy, c.gamma, QFeatures::normalized(norm, c.T), fqe_config(c),
                                         RngStream(c.seed, kStreamFqe).substream(level));
            save_q(models / ("q_" + t.id + ".ckpt"), fr.model);
            b.append("q_" + t.id + ".final_loss", format_exact(fr.loss_curve.empty() ? 0.0 : fr.loss_curve.back()));
        }
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(models)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) b.append("hash." + f.filename().string(), file_hash(f));
    write_text(out / "config.txt", c.echo());
    write_manifest(out / "train.manifest", "train", c, b);
}

// ---- evaluate ----

struct EvalRow {
    std::string policy_id;
    double estimate = 0.0, std_error = 0.0, ground_truth = 0.0;
    std::size_t n_rollouts = 0;
};

inline void write_eval_csv(const fs::path& p, const std::vector<EvalRow>& rows) {
    std::string s = "policy_id,estimate,stderr,ground_truth,n_rollouts\n";
    for (const auto& r : rows)
        s += r.policy_id + "," + format_exact(r.estimate) + "," + format_exact(r.std_error) + "," +
             format_exact(r.ground_truth) + "," + std::to_string(r.n_rollouts) + "\n";
    write_text(p, s);
}

inline std::vector<EvalRow> read_eval_csv(const fs::path& p) {
    std::istringstream in(read_text(p));
    std::string line;
    std::getline(in, line);
    if (line != "policy_id,estimate,stderr,ground_truth,n_rollouts") throw FormatError("'" + p.string() + "': bad header");
    std::vector<EvalRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != 5) throw FormatError("'" + p.string() + "': wrong column count");
        rows.push_back({cells[0], parse_number<double>(cells[1]), parse_number<double>(cells[2]),
                        parse_number<double>(cells[3]), parse_number<std::size_t>(cells[4])});
    }
    return rows;
}

/// J(pi) for every target, from a seed-independent stream.
inline std::vector<ValueEstimate> ground_truths(const RunConfig& c, const Environment& env, const std::vector<NamedPolicy>& targets) {
    std::vector<ValueEstimate> out;
    for (const auto& t : targets) {
        const auto level = static_cast<std::uint64_t>(std::stoi(t.id.substr(6)));
        out.push_back(ground_truth_value(env, *t.policy, static_cast<std::size_t>(c.gt_rollouts),
                                         RngStream(kTruthSeed, kStreamTruth).substream(level)));
    }
    return out;
}

inline void append_trace(std::string& s, const std::string& source, const std::string& id, int r, const Trajectory& tr) {
    for (Eigen::Index t = 0; t <= tr.length(); ++t) {
        s += source + "," + id + "," + std::to_string(r) + "," + std::to_string(t);
        for (Eigen::Index i = 0; i < tr.state_dim(); ++i) s += "," + format_exact(tr.states(i, t));
        for (Eigen::Index i = 0; i < tr.action_dim(); ++i) s += "," + (t < tr.length() ? format_exact(tr.actions(i, t)) : "");
        s += "," + (t < tr.length() ? format_exact(tr.rewards(t)) : "") + "\n";
    }
}

inline void evaluate_run(const RunConfig& c, const fs::path& out, const fs::path& models, const fs::path& data_dir, int workers) {
    const Dataset ds = load_run_dataset(c, data_dir);
    const EnvPtr env = make_env(c);
    const auto targets = make_targets(c, *env);
    const PolicyPtr beta = behavior_density(c, *env);
    const auto truth = ground_truths(c, *env, targets);
    KvText b;
    b.append("hash.dataset", file_hash(data_dir / "trajectories.csv"));

    RewardModel rmodel;
    if (!c.true_reward || c.uses("mb")) {
        rmodel = load_reward(models / "reward.ckpt");
        b.append("hash.reward.ckpt", file_hash(models / "reward.ckpt"));
    }
    const BatchReward reward = c.true_reward ? env_reward(*env) : learned_reward(rmodel);

    auto finish = [&](const std::string& name, std::vector<EvalRow> rows) {
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i].ground_truth = truth[i].value;
        write_eval_csv(out / ("eval_" + name + ".csv"), rows);
        b.append("hash.eval_" + name + ".csv", file_hash(out / ("eval_" + name + ".csv")));
    };

    auto diffusion_rows = [&](int w, std::uint64_t stream, const std::string& name) {
        const DenoiserModel m = load_denoiser(models / denoiser_file(w));
        b.append("hash." + denoiser_file(w), file_hash(models / denoiser_file(w)));
        const auto est = evaluate_policies(m, reward, stitch_config(c, w, c.alpha, c.lambda(), workers), *env, targets, beta,
                                           RngStream(c.seed, stream));
        std::vector<EvalRow> rows;
        std::size_t failed = 0;
        for (const auto& e : est) {
            rows.push_back({e.policy_id, e.estimate, e.std_error, 0.0, e.n_rollouts});
            failed += e.n_failed;
        }
        b.append(name + ".failed_rollouts", std::to_string(failed));
        finish(name, rows);
    };
    if (c.uses("stitch")) diffusion_rows(c.w, kStreamStitch, "stitch");
    if (c.uses("pgd")) diffusion_rows(c.T, kStreamPgd, "pgd");

    if (c.uses("is")) {
        std::vector<EvalRow> rows;
        std::size_t clipped = 0;
        for (const auto& t : targets) {
            const auto e = pdis_estimate(ds.episodes, *t.policy, *beta, c.gamma);
            rows.push_back({t.id, e.estimate, e.std_error, 0.0, ds.episodes.size()});
            clipped += e.n_clipped;
        }
        b.append("is.clipped_ratios", std::to_string(clipped));
        finish("is", rows);
    }
    if (c.uses("mb")) {
        const DynamicsModel dyn = load_dynamics(models / "dynamics.ckpt");
        b.append("hash.dynamics.ckpt", file_hash(models / "dynamics.ckpt"));
        const RewardFn r = c.true_reward ? RewardFn([&](const Vec& s, const Vec& a) { return env->reward(s, a); })
                                         : RewardFn([&](const Vec& s, const Vec& a) { return rmodel.predict(s, a); });
        MbConfig mc;
        mc.T = c.T;
        mc.gamma = c.gamma;
        mc.n_rollouts = c.n_rollouts;
        std::vector<EvalRow> rows;
        std::size_t clipped = 0;
        for (const auto& t : targets) {
            const auto level = static_cast<std::uint64_t>(std::stoi(t.id.substr(6)));
            const auto e = mb_estimate(dyn.as_transition(), r, *t.policy, *env, mc, RngStream(c.seed, kStreamMb).substream(level));
            rows.push_back({t.id, e.estimate, e.std_error, 0.0, e.returns.size()});
            clipped += e.n_clipped;
        }
        b.append("mb.clipped_states", std::to_string(clipped));
        finish("mb", rows);
    }
    if (c.uses("fqe") || c.uses("dr")) {
        std::vector<EvalRow> fq, dr;
        for (const auto& t : targets) {
            const auto level = static_cast<std::uint64_t>(std::stoi(t.id.substr(6)));
            const fs::path qp = models / ("q_" + t.id + ".ckpt");
            const QModel q = load_q(qp);
            b.append("hash.q_" + t.id + ".ckpt", file_hash(qp));
            if (c.uses("fqe")) {
                RngStream rr = RngStream(c.seed, kStreamFqe).substream(level).substream(0x7e);
                std::vector<double> v0;
                for (const auto& ep : ds.episodes) v0.push_back(q.value(0, ep.states.col(0), *t.policy, rr));
                const auto v = mean_and_stderr(v0);
                fq.push_back({t.id, v.value, v.std_error, 0.0, v0.size()});
            }
            if (c.uses("dr")) {
                const auto e = dr_estimate(ds.episodes, *t.policy, *beta, c.gamma, q_of(q), v_of(q, *t.policy),
                                           RngStream(c.seed, kStreamDr).substream(level));
                dr.push_back({t.id, e.estimate, e.std_error, 0.0, ds.episodes.size()});
            }
        }
        if (c.uses("fqe")) finish("fqe", fq);
        if (c.uses("dr")) finish("dr", dr);
    }

    // Stitched traces share streams with the estimate's first rollouts; env traces are true rollouts.
    if (c.trace_rollouts > 0 && (c.uses("stitch") || c.uses("pgd"))) {
        const int w = c.uses("stitch") ? c.w : c.T;
        const DenoiserModel m = load_denoiser(models / denoiser_file(w));
        std::string s = "source,policy_id,rollout,t";
        for (int i = 0; i < env->state_dim(); ++i) s += ",s_" + std::to_string(i);
        for (int i = 0; i < env->action_dim(); ++i) s += ",a_" + std::to_string(i);
        s += ",reward\n";
        const RngStream root(c.seed, c.uses("stitch") ? kStreamStitch : kStreamPgd);
        for (const auto& t : targets) {
            StitchConfig sc = stitch_config(c, w, c.alpha, c.lambda(), 1);
            sc.guidance.target = t.policy;
            sc.guidance.behavior = beta;
            std::vector<RngStream> rngs;
            for (int i = 0; i < c.trace_rollouts; ++i) rngs.push_back(root.substream(static_cast<std::uint64_t>(i)));
            const auto batch = stitch_rollouts(m, reward, sc, *env, rngs);
            for (int i = 0; i < c.trace_rollouts; ++i) append_trace(s, "stitch", t.id, i, batch.trajectories[static_cast<std::size_t>(i)]);
            const RngStream er = RngStream(c.seed, kStreamTraces).substream(static_cast<std::uint64_t>(std::stoi(t.id.substr(6))));
            for (int i = 0; i < c.trace_rollouts; ++i)
                append_trace(s, "env", t.id, i, rollout(*env, *t.policy, er.substream(static_cast<std::uint64_t>(i)), c.T));
        }
        write_text(out / "traces.csv", s);
    }

    if (!c.sweep_alpha.empty() || !c.sweep_lambda_ratio.empty() || !c.sweep_w.empty()) {
        const auto ws = c.sweep_w.empty() ? std::vector<int>{c.w} : c.sweep_w;
        const auto as = c.sweep_alpha.empty() ? std::vector<double>{c.alpha} : c.sweep_alpha;
        const auto rs = c.sweep_lambda_ratio.empty() ? std::vector<double>{c.lambda_ratio} : c.sweep_lambda_ratio;
        std::string s = "alpha,lambda_ratio,w,policy_id,estimate,stderr,ground_truth,n_rollouts\n";
        for (int w : ws) {
            const DenoiserModel m = load_denoiser(models / denoiser_file(w));
            for (double a : as)
                for (double r : rs) {
                    const auto est = evaluate_policies(m, reward, stitch_config(c, w, a, a * r, workers), *env, targets, beta,
                                                       RngStream(c.seed, kStreamSweep));
                    for (std::size_t i = 0; i < est.size(); ++i)
                        s += format_exact(a) + "," + format_exact(r) + "," + std::to_string(w) + "," + est[i].policy_id + "," +
                             format_exact(est[i].estimate) + "," + format_exact(est[i].std_error) + "," +
                             format_exact(truth[i].value) + "," + std::to_string(est[i].n_rollouts) + "\n";
                }
        }
        write_text(out / "sweep.csv", s);
        b.append("hash.sweep.csv", file_hash(out / "sweep.csv"));
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
        b.append("truth." + targets[i].id, format_exact(truth[i].value));
        b.append("truth_stderr." + targets[i].id, format_exact(truth[i].std_error));
    }
    write_text(out / "config.txt", c.echo());
    write_manifest(out / "evaluate.manifest", "evaluate", c, b);
}

// ---- report ----

struct ReportSummary {
    std::vector<MetricRow> rows;
    std::size_t runs = 0;
};

/// Metrics across run directories (one seed each). Every run must share the
/// env and the target set.
inline ReportSummary report_runs(const std::vector<fs::path>& runs, const fs::path& out) {
    if (runs.empty()) throw ConfigError("report: no run directories given");
    std::map<std::string, std::vector<std::vector<EvalRow>>> by_est;
    std::string env_name;
    std::vector<RunConfig> cfgs;
    for (const auto& r : runs) {
        const RunConfig c = parse_run_config(read_text(r / "config.txt"));
        if (!env_name.empty() && c.env != env_name) throw ConfigError("report: runs mix environments");
        env_name = c.env;
        cfgs.push_back(c);
        for (const auto& e : known_estimators())
            if (fs::exists(r / ("eval_" + e + ".csv"))) by_est[e].push_back(read_eval_csv(r / ("eval_" + e + ".csv")));
    }
    ReportSummary rep;
    rep.runs = runs.size();
    std::string plot = "estimator,policy_id,ground_truth,estimate_mean,estimate_stderr,seeds\n";
    for (const auto& e : known_estimators()) {
        auto it = by_est.find(e);
        if (it == by_est.end()) continue;
        const auto& per_run = it->second;
        const auto& first = per_run.front();
        std::vector<double> truth;
        for (const auto& row : first) truth.push_back(row.ground_truth);
        std::vector<std::vector<double>> est;
        for (const auto& rows : per_run) {
            if (rows.size() != first.size()) throw FormatError("report: runs disagree on the target set");
            std::vector<double> x;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (rows[i].policy_id != first[i].policy_id) throw FormatError("report: runs disagree on the target set");
                x.push_back(rows[i].estimate);
            }
            est.push_back(x);
        }
        const auto s = summarize(env_name, e, est, truth);
        rep.rows.insert(rep.rows.end(), s.rows.begin(), s.rows.end());
        for (std::size_t i = 0; i < truth.size(); ++i) {
            std::vector<double> xs;
            for (const auto& row : est) xs.push_back(row[i]);
            plot += e + "," + first[i].policy_id + "," + format_exact(truth[i]) + "," + format_exact(mean_of(xs)) + "," +
                    format_exact(stderr_across(xs)) + "," + std::to_string(xs.size()) + "\n";
        }
    }
    std::ostringstream m;
    write_metrics_csv(m, rep.rows);
    write_text(out / "metrics.csv", m.str());
    write_text(out / "plot_data.csv", plot);

    // Ablation surfaces: per (alpha, lambda_ratio, w), metrics across runs.
    std::map<std::tuple<double, double, int>, std::vector<std::pair<std::vector<double>, std::vector<double>>>> grid;
    for (const auto& r : runs) {
        if (!fs::exists(r / "sweep.csv")) continue;
        std::istringstream in(read_text(r / "sweep.csv"));
        std::string line;
        std::getline(in, line);
        std::map<std::tuple<double, double, int>, std::pair<std::vector<double>, std::vector<double>>> cell;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto v = detail::split_csv(line);
            if (v.size() != 8) throw FormatError("sweep.csv: wrong column count");
            auto& [e, t] = cell[{parse_number<double>(v[0]), parse_number<double>(v[1]), parse_number<int>(v[2])}];
            e.push_back(parse_number<double>(v[4]));
            t.push_back(parse_number<double>(v[6]));
        }
        for (auto& [k, v] : cell) grid[k].push_back(v);
    }
    if (!grid.empty()) {
        std::string s = "alpha,lambda_ratio,w,metric,mean,stderr\n";
        for (const auto& [k, seeds] : grid) {
            std::vector<std::vector<double>> est;
            for (const auto& sd : seeds) est.push_back(sd.first);
            const auto sum = summarize(env_name, "stitch", est, seeds.front().second);
            for (const auto& row : sum.rows)
                s += format_exact(std::get<0>(k)) + "," + format_exact(std::get<1>(k)) + "," + std::to_string(std::get<2>(k)) +
                     "," + row.metric + "," + format_exact(row.mean) + "," + format_exact(row.stderr_) + "\n";
        }
        write_text(out / "sweep_metrics.csv", s);
    }

    // Concatenated traces for trajectory plots.
    std::string traces;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (!fs::exists(runs[i] / "traces.csv")) continue;
        std::istringstream in(read_text(runs[i] / "traces.csv"));
        std::string line;
        std::getline(in, line);
        if (traces.empty()) traces = "run," + line + "\n";
        while (std::getline(in, line))
            if (!line.empty()) traces += std::to_string(i) + "," + line + "\n";
    }
    if (!traces.empty()) write_text(out / "plot_traces.csv", traces);

    KvText man;
    man.append("verb", "report");
    man.append("runs", std::to_string(runs.size()));
    for (std::size_t i = 0; i < runs.size(); ++i) {
        man.append("run." + std::to_string(i) + ".seed", std::to_string(cfgs[i].seed));
        for (const auto& e : known_estimators())
            if (fs::exists(runs[i] / ("eval_" + e + ".csv")))
                man.append("run." + std::to_string(i) + ".hash.eval_" + e, file_hash(runs[i] / ("eval_" + e + ".csv")));
    }
    man.append("hash.metrics.csv", file_hash(out / "metrics.csv"));
    const KvText echo = cfgs.front().to_kv();
    for (const auto& [k, v] : echo.entries()) man.append("config." + k, v);
    write_text(out / "report.manifest", man.to_string());
    write_text(out / "config.txt", cfgs.front().echo());
    return rep;
}

} // namespace stitch
