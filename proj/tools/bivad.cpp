#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "bivad/commands.hpp"

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

struct Options {
    std::string config;
    std::vector<std::string> assignments;
    bool rbdc = false;
    bool tbdc = false;
    std::string alpha, beta;
};

bivad::RunConfig build_config(const Options& opt, bool eval) {
    Overrides overrides;
    for (const auto& a : opt.assignments) overrides.push_back(bivad::split_assignment(a));
    if (eval) {
        if (opt.rbdc) overrides.emplace_back("eval.rbdc", "true");
        if (opt.tbdc) overrides.emplace_back("eval.tbdc", "true");
        if (!opt.alpha.empty()) overrides.emplace_back("eval.alpha", opt.alpha);
        if (!opt.beta.empty()) overrides.emplace_back("eval.beta", opt.beta);
    }
    return opt.config.empty() ? bivad::RunConfig::parse("", overrides)
                              : bivad::RunConfig::load(opt.config, overrides);
}

int report(std::string_view code, const std::string& message) {
    std::string flat = message;
    for (auto& ch : flat)
        if (ch == '\n' || ch == '\r') ch = ' ';
    std::fprintf(stderr, "error[%.*s] %s\n", static_cast<int>(code.size()), code.data(), flat.c_str());
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bi-directional video anomaly detection"};
    app.require_subcommand(1);
    Options opt;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config, "key=value config file")->check(CLI::ExistingFile);
        sub->add_option("overrides", opt.assignments, "key=value overrides");
    };
    auto* train = app.add_subcommand("train", "train on <data.root>/train");
    auto* infer = app.add_subcommand("infer", "score <data.root>/test with a checkpoint");
    auto* eval = app.add_subcommand("eval", "evaluate scores against ground truth");
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    auto* bench = app.add_subcommand("bench", "measure per-frame inference time");
    for (auto* sub : {train, infer, eval, synth, bench}) add_common(sub);
    eval->add_flag("--rbdc", opt.rbdc, "region-based detection criterion");
    eval->add_flag("--tbdc", opt.tbdc, "track-based detection criterion");
    eval->add_option("--alpha", opt.alpha, "track coverage fraction");
    eval->add_option("--beta", opt.beta, "region overlap threshold");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report("usage", e.what());
    }

    try {
        const auto cfg = build_config(opt, eval->parsed());
        if (train->parsed()) bivad::cmd_train(cfg, std::cout);
        else if (infer->parsed()) bivad::cmd_infer(cfg, std::cout);
        else if (eval->parsed()) bivad::cmd_eval(cfg, std::cout);
        else if (synth->parsed()) bivad::cmd_synth(cfg, std::cout);
        else bivad::cmd_bench(cfg, std::cout);
    } catch (const bivad::Error& e) {
        return report(bivad::to_string(e.code()), e.what());
    } catch (const std::exception& e) {
        return report("internal", e.what());
    }
    return 0;
}
