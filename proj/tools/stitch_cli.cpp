// stitch-ope: gen-data | train | evaluate | report | verify
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "stitch/harness/pipeline.hpp"
#include "stitch/harness/verify.hpp"

using namespace stitch;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int workers = 1;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", c.config, "run config file");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "run seed (overrides the config)");
    cmd->add_option("--out", c.out, "output directory")->required();
    cmd->add_option("--workers", c.workers, "worker threads")->check(CLI::Range(1, 1024));
}

RunConfig load(const Common& c) {
    RunConfig cfg = read_run_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Off-policy evaluation by guided diffusion over stitched sub-trajectories"};
    app.require_subcommand(1);

    Common gen, tr, ev, rp, vf;
    std::string tr_data, ev_data, ev_models;
    std::vector<std::string> runs;

    auto* c_gen = app.add_subcommand("gen-data", "roll out behavior policies into a dataset directory");
    add_common(c_gen, gen);
    auto* c_tr = app.add_subcommand("train", "fit denoisers, reward and baseline models");
    add_common(c_tr, tr);
    c_tr->add_option("--data", tr_data, "dataset directory (default OUT/dataset)");
    auto* c_ev = app.add_subcommand("evaluate", "write eval_<estimator>.csv for every configured estimator");
    add_common(c_ev, ev);
    c_ev->add_option("--data", ev_data, "dataset directory (default OUT/dataset)");
    c_ev->add_option("--models", ev_models, "checkpoint directory (default OUT/models)");
    auto* c_rp = app.add_subcommand("report", "metric tables over run directories");
    add_common(c_rp, rp, false);
    c_rp->add_option("runs", runs, "run directories, one per seed")->required()->check(CLI::ExistingDirectory);
    auto* c_vf = app.add_subcommand("verify", "theory checks and the two-mode mixture data");
    add_common(c_vf, vf);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*c_gen) {
            gen_data(load(gen), gen.out);
        } else if (*c_tr) {
            const fs::path out = tr.out;
            train_models(load(tr), out, tr_data.empty() ? out / "dataset" : fs::path(tr_data));
        } else if (*c_ev) {
            const fs::path out = ev.out;
            evaluate_run(load(ev), out, ev_models.empty() ? out / "models" : fs::path(ev_models),
                         ev_data.empty() ? out / "dataset" : fs::path(ev_data), ev.workers);
        } else if (*c_rp) {
            std::vector<fs::path> dirs(runs.begin(), runs.end());
            const auto rep = report_runs(dirs, rp.out);
            for (const auto& r : rep.rows)
                std::printf("%s,%s,%s,%.6g,%.6g\n", r.env.c_str(), r.estimator.c_str(), r.metric.c_str(), r.mean, r.stderr_);
        } else if (*c_vf) {
            const auto res = verify_run(load(vf), vf.out, vf.workers);
            std::cout << res.report.to_string();
            if (!res.all_pass) return 1;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
