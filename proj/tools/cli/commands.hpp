#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace sage::cli {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> trials;
    std::optional<std::size_t> k;
    std::optional<double> lambda;
    std::optional<double> tau;
    std::string corpus;
    std::string checkpoint;
};

int cmd_make_corpus(const Options& o);
int cmd_train(const Options& o);
int cmd_rank(const Options& o);
int cmd_reliability(const Options& o);
int cmd_gate_bench(const Options& o);
int cmd_distill(const Options& o);
int cmd_eval_tools(const Options& o);

}  // namespace sage::cli
