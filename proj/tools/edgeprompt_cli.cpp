// Command-line front end. Flags and config-file keys share names; a flag given
// on the command line wins over the same key in --config. Everything goes
// through the C API.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "edgeprompt/edgeprompt.h"

namespace {

using json = nlohmann::json;

constexpr const char* kOutputRootVar = "EDGEPROMPT_OUTPUT_ROOT";

struct Flag {
    const char* name;
    const char* help;
};

// One subcommand: its flags are all captured as strings and only the ones the
// user actually passed are forwarded, so defaults live in one place.
struct Command {
    std::string run_name;
    CLI::App* app = nullptr;
    std::string config_path;
    std::map<std::string, std::string> values;
};

void add_flags(Command& cmd, const std::vector<Flag>& flags) {
    cmd.app->add_option("--config", cmd.config_path, "key=value file; flags override its keys");
    for (const Flag& f : flags) cmd.app->add_option(std::string("--") + f.name, cmd.values[f.name], f.help);
}

struct Failure {
    int code;
};

std::string take(char* s) {
    std::string out = s ? s : "";
    ep_string_free(s);
    return out;
}

[[noreturn]] void die(ep_status st) {
    std::fprintf(stderr, "error: %s\n", ep_last_error());
    throw Failure{ep_status_exit_code(st)};
}

json collect_settings(const Command& cmd) {
    json settings = json::object();
    if (!cmd.config_path.empty()) {
        std::string text;
        if (std::FILE* f = std::fopen(cmd.config_path.c_str(), "rb")) {
            char buf[4096];
            std::size_t n;
            while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, n);
            std::fclose(f);
        } else {
            std::fprintf(stderr, "error [config]: cannot read config file %s\n", cmd.config_path.c_str());
            throw Failure{2};
        }
        char* parsed = nullptr;
        if (ep_status st = ep_settings_parse(text.c_str(), &parsed); st != EP_OK) die(st);
        settings = json::parse(take(parsed));
    }
    for (const auto& [name, value] : cmd.values)
        if (cmd.app->count("--" + name) > 0) settings[name] = value;
    // Relative output paths land under the output root when it is set.
    if (const char* root = std::getenv(kOutputRootVar); root && *root && settings.contains("out")) {
        std::filesystem::path out = settings["out"].get<std::string>();
        if (out.is_relative()) settings["out"] = (std::filesystem::path(root) / out).string();
    }
    return settings;
}

json run(const Command& cmd, const json& settings) {
    char* result = nullptr;
    if (ep_status st = ep_run(cmd.run_name.c_str(), settings.dump().c_str(), &result); st != EP_OK) die(st);
    return json::parse(take(result));
}

int report(const Command& cmd, const json& settings, const json& r) {
    const std::string& name = cmd.run_name;
    if (name == "pretrain") {
        std::printf("pretrain %s: %zu epochs, final loss %.6f, checkpoint %s (sha256 %s)\n",
                    r["strategy"].get<std::string>().c_str(), r["epochs"].get<std::size_t>(),
                    r["final_loss"].get<double>(), r["checkpoint"].get<std::string>().c_str(),
                    r["digest"].get<std::string>().c_str());
        return 0;
    }
    if (name == "tune") {
        for (const auto& g : r["groups"])
            std::printf("%s anchors=%zu: test %.4f +- %.4f over %zu seeds (train %.4f)\n",
                        r["method"].get<std::string>().c_str(), g["anchors"].get<std::size_t>(),
                        g["mean_test_acc"].get<double>(), g["std_test_acc"].get<double>(), g["runs"].size(),
                        g["mean_train_acc"].get<double>());
        const std::filesystem::path dir = settings.value("out", std::string("."));
        std::printf("report written to %s\n", (dir / "report.json").string().c_str());
        return 0;
    }
    if (name == "eval") {
        std::printf("accuracy %.6f (%zu test instances, %s)\n", r["test_acc"].get<double>(),
                    r["test_size"].get<std::size_t>(), r["method"].get<std::string>().c_str());
        return 0;
    }
    if (name == "gen-csbm") {
        std::printf("wrote %s: %zu graph(s), %zu nodes, %zu edges\n", r["out"].get<std::string>().c_str(),
                    r["graphs"].get<std::size_t>(), r["nodes"].get<std::size_t>(), r["edges"].get<std::size_t>());
        return 0;
    }
    // verify: the report is the output; the exit status carries the verdict.
    std::printf("%s", r.dump(2).c_str());
    std::printf("\n%s: %s\n", r["theorem"].get<std::string>().c_str(), r["pass"].get<bool>() ? "PASS" : "FAIL");
    return r["pass"].get<bool>() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Edge prompt tuning for frozen graph neural networks"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(ep_version()));

    std::vector<std::unique_ptr<Command>> commands;
    auto make = [&](CLI::App* parent, const std::string& name, const std::string& run_name, const std::string& help,
                    const std::vector<Flag>& flags) {
        auto cmd = std::make_unique<Command>();
        cmd->run_name = run_name;
        cmd->app = parent->add_subcommand(name, help);
        add_flags(*cmd, flags);
        commands.push_back(std::move(cmd));
    };

    make(&app, "pretrain", "pretrain", "pre-train a backbone and write a checkpoint",
         {{"dataset", "graph container JSON"},
          {"out", "checkpoint path"},
          {"strategy", "graphcl | simgrace | ep-gppt | ep-graphprompt"},
          {"backbone", "gcn | gin (default: gcn for node tasks, gin for graph tasks)"},
          {"hidden", "hidden width (128)"},
          {"layers", "layer count (2 for gcn, 5 for gin)"},
          {"gin-epsilon", "GIN self weight epsilon (0)"},
          {"epochs", "epochs (50)"},
          {"lr", "learning rate (0.001)"},
          {"batch-size", "batch size (32)"},
          {"aug-ratio", "augmentation ratio (0.2)"},
          {"temperature", "contrastive temperature (0.5)"},
          {"noise-scale", "weight perturbation scale (0.1)"},
          {"mask-ratio", "masked edge fraction (0.2)"},
          {"views", "views per epoch on single-graph datasets (4)"},
          {"seed", "seed (0)"}});
    make(&app, "tune", "tune", "tune prompts and a linear head over a frozen checkpoint",
         {{"checkpoint", "checkpoint path"},
          {"dataset", "graph container JSON"},
          {"out", "output directory"},
          {"method", "edgeprompt | edgeprompt+ | gpf | gpf-plus | classifier-only"},
          {"task", "node | graph (must match the dataset)"},
          {"backbone", "expected backbone kind"},
          {"shots", "labelled instances per class (5 node, 50 graph)"},
          {"anchors", "anchor count or comma list to sweep (10 node, 5 graph)"},
          {"seeds", "comma list of seeds (0,1,2,3,4)"},
          {"split-seed", "fix the few-shot split instead of drawing one per seed"},
          {"epochs", "epochs (200)"},
          {"lr", "learning rate (0.001)"},
          {"batch-size", "batch size for graph tasks (32)"},
          {"readout", "sum | mean (sum)"},
          {"slope", "LeakyReLU slope of the score function (0.2)"}});
    make(&app, "eval", "eval", "evaluate a prompt file on the split it was tuned on",
         {{"checkpoint", "checkpoint path"},
          {"prompts", "prompt file"},
          {"dataset", "graph container JSON"},
          {"backbone", "expected backbone kind"},
          {"batch-size", "evaluation batch size (32)"},
          {"out", "JSON result path"}});
    CLI::App* verify = app.add_subcommand("verify", "check the theoretical constructions numerically");
    verify->require_subcommand(1);
    make(verify, "theorem1", "verify-theorem1", "prompted CSBM centroid distance reaches T times the original",
         {{"p", "intra-class edge probability (0.8)"},
          {"q", "inter-class edge probability (0.2)"},
          {"T", "target distance ratio (2.0)"},
          {"mu1", "class 1 mean, comma list (1,0)"},
          {"mu2", "class 2 mean, comma list (0,1)"},
          {"nodes", "nodes per class (2000)"},
          {"trials", "Monte-Carlo trials (20)"},
          {"seed", "seed (0)"},
          {"tolerance", "minimum pass band (0.05)"},
          {"out", "JSON report path"}});
    make(verify, "theorem2", "verify-theorem2", "feature prompt and scaled edge prompt give equal sum readouts",
         {{"nodes", "nodes per graph, or the maximum when min-nodes is given (6)"},
          {"min-nodes", "smallest graph size; sizes are drawn uniformly up to nodes"},
          {"trials", "random draws (100)"},
          {"dim", "feature width (4)"},
          {"out-dim", "output width (3)"},
          {"edge-prob", "edge probability (0.5)"},
          {"epsilons", "comma list of GIN epsilons, cycled (0,0.5)"},
          {"seed", "seed (0)"},
          {"control-scale", "coefficient scale of the negative control (1.1)"},
          {"out", "JSON report path"}});
    make(&app, "gen-csbm", "gen-csbm", "write a CSBM dataset container",
         {{"out", "output path"},
          {"p", "intra-class edge probability (0.8)"},
          {"q", "inter-class edge probability (0.2)"},
          {"n", "nodes per class (500)"},
          {"dim", "feature width (8)"},
          {"mu1", "class 1 mean, comma list"},
          {"mu2", "class 2 mean, comma list"},
          {"sep", "per-coordinate half gap when means are not given (0.5)"},
          {"offset", "per-coordinate common mean when means are not given (0)"},
          {"graphs", "graph count; more than 1 builds a graph-classification set (1)"},
          {"seed", "seed (0)"}});

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        for (const auto& cmd : commands)
            if (cmd->app->parsed()) {
                const json settings = collect_settings(*cmd);
                return report(*cmd, settings, run(*cmd, settings));
            }
    } catch (const Failure& f) {
        return f.code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
