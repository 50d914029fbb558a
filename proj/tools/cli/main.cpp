#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "common.hpp"

using namespace sage::cli;

int main(int argc, char** argv) {
    CLI::App app{"sage: dual-process reasoning toolkit"};
    app.require_subcommand(1);
    Options o;

    struct Sub {
        const char* name;
        const char* help;
        int (*run)(const Options&);
    };
    const Sub subs[] = {
        {"make-corpus", "generate the synthetic addition corpus", cmd_make_corpus},
        {"train", "train the dual-head model on a corpus", cmd_train},
        {"rank", "sample, rerank and vote on the addition suite", cmd_rank},
        {"reliability", "run the reliability lab on a scenario", cmd_reliability},
        {"gate-bench", "accuracy/cost of entropy-gated hybrid decoding", cmd_gate_bench},
        {"distill", "reflective distillation and RL on the tool environment", cmd_distill},
        {"eval-tools", "evaluate the tool-calling agent and MCH recovery", cmd_eval_tools},
    };
    std::uint64_t seed = 0;
    std::size_t trials = 0, k = 0;
    double lambda = 0.0, tau = 0.0;
    std::vector<std::pair<CLI::App*, const Sub*>> registered;
    std::vector<CLI::Option*> seed_opts, trial_opts, k_opts, lambda_opts, tau_opts;
    for (const auto& s : subs) {
        auto* sc = app.add_subcommand(s.name, s.help);
        sc->add_option("--config", o.config, "key = value settings file");
        seed_opts.push_back(sc->add_option("--seed", seed, "random seed"));
        sc->add_option("--out", o.out, "output directory")->required();
        trial_opts.push_back(sc->add_option("--trials", trials, "trial or episode count"));
        k_opts.push_back(sc->add_option("--k", k, "samples per prompt"));
        lambda_opts.push_back(sc->add_option("--lambda", lambda, "skepticism weight"));
        tau_opts.push_back(sc->add_option("--tau", tau, "entropy threshold (nats)"));
        sc->add_option("--corpus", o.corpus, "corpus JSONL");
        sc->add_option("--checkpoint", o.checkpoint, "model checkpoint directory");
        registered.emplace_back(sc, &s);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    for (std::size_t i = 0; i < registered.size(); ++i) {
        auto [sc, s] = registered[i];
        if (!sc->parsed()) continue;
        if (seed_opts[i]->count()) o.seed = seed;
        if (trial_opts[i]->count()) o.trials = trials;
        if (k_opts[i]->count()) o.k = k;
        if (lambda_opts[i]->count()) o.lambda = lambda;
        if (tau_opts[i]->count()) o.tau = tau;
        try {
            return s->run(o);
        } catch (const UsageError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kUsage;
        } catch (const std::invalid_argument& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kUsage;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kCheckFailed;
        }
    }
    return kUsage;
}
