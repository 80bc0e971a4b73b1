#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "hmeval/cli.hpp"
#include "hmeval/error.hpp"

using namespace hmeval;

namespace {

constexpr const char* kConfigHelp = R"(Config files hold one `key = value` per line; '#' or ';' starts a comment.
Keys are the long option names without the leading dashes (e.g. `steps = 31`,
`methods = lrp-eps-0.01,deconv-q2`). Options given on the command line
override the file. Every run writes run.cfg next to its outputs, which
replays the run: hmeval <command> --config <output>/run.cfg)";

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// --config is applied before the other flags so that they override it.
std::string find_config(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--config" && i + 1 < argc) return argv[i + 1];
        if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
    }
    return {};
}

}  // namespace

int main(int argc, char** argv) {
    cli::RunConfig config;
    CLI::App app{"Heatmap computation and perturbation-based evaluation for image classifiers"};
    app.footer(kConfigHelp);
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "flat key = value config file (see below)");

    auto opt = [&](const char* key, const char* help) {
        app.add_option_function<std::string>(
            std::string("--") + key,
            [&config, key](const std::string& v) { cli::apply_key_values(config, {{key, v}}); }, help);
    };
    opt("model", "model file (HBM1)");
    opt("dataset", "evaluation dataset path");
    opt("format", "dataset format: idx, cifar-binary, image-directory");
    opt("labels", "IDX labels file (default: derived from the images file name)");
    opt("split", "split tag of the evaluation dataset: train or test");
    opt("train-dataset", "training dataset (train, train-correlation; also perturbation statistics)");
    opt("train-format", "training dataset format");
    opt("train-labels", "training IDX labels file");
    opt("methods", ("comma-separated heatmap methods: " + valid_method_names()).c_str());
    opt("study-method", "method for perturb-study and train-correlation (default lrp-ab-2)");
    opt("operator", "perturbation operator: uniform, dirichlet, constant, blur");
    opt("steps", "perturbation steps L (default 100)");
    opt("repeats", "trajectories per image for stochastic operators (default 10)");
    opt("window", "region edge length in pixels (default 9)");
    opt("blur-sigma", "Gaussian blur sigma (default 3)");
    opt("seed", "global seed (default 0)");
    opt("samples", "number of images, taken from the start of the dataset (default 500)");
    opt("output", "output directory (default out)");
    opt("workers", "worker threads, 0 = all cores; never changes outputs");
    opt("lerf", "also run least-relevant-first curves and ABPC: true/false (default true)");
    opt("raw-format", "raw heatmap export: bin (float64 LE) or csv (default bin)");
    opt("learning-rate", "SGD learning rate (default 0.05)");
    opt("batch-size", "SGD minibatch size (default 32)");
    opt("epochs", "training epochs (default 1)");
    opt("train-seed", "initialization and shuffling seed (default 1)");
    opt("checkpoint-iterations", "explicit snapshot iterations, comma-separated");
    opt("checkpoints", "log-spaced snapshot count when no iterations are given (default 8)");
    opt("input-scaling", "input standardization for new models: standardize or none");

    auto sub = [&](const char* name, const char* help) {
        auto* s = app.add_subcommand(name, help);
        s->fallthrough();
        return s;
    };
    auto* heatmap = sub("heatmap", "render heatmaps, export raw scores and complexity metrics");
    auto* evaluate = sub("evaluate", "MoRF/LeRF curves with AOPC and ABPC per method");
    auto* study = sub("perturb-study", "compare the four perturbation operators for one method");
    auto* correlation = sub("train-correlation", "train with snapshots and correlate accuracy with AOPC");
    auto* train = sub("train", "train the small CNN and save it");

    try {
        const std::string pre = find_config(argc, argv);
        if (!pre.empty()) cli::apply_key_values(config, cli::parse_key_values(read_file(pre)));
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    }

    try {
        if (*heatmap) cli::cmd_heatmap(config);
        else if (*evaluate) cli::cmd_evaluate(config);
        else if (*study) cli::cmd_perturb_study(config);
        else if (*correlation) cli::cmd_train_correlation(config);
        else if (*train) cli::cmd_train(config);
    } catch (const Error& e) {
        std::fprintf(stderr, "error (%s): %s\n", std::string(to_string(e.kind())).c_str(), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
