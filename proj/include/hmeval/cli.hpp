#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hmeval/dataset.hpp"
#include "hmeval/methods.hpp"
#include "hmeval/perturbation.hpp"
#include "hmeval/trainer.hpp"

namespace hmeval::cli {

enum class RawFormat { Binary, Csv };

// Standardize: per-channel mean/std of the training data, set on freshly
// trained models. Loaded models keep whatever their file declares.
enum class InputScaling { None, Standardize };

struct RunConfig {
    std::filesystem::path model;
    DatasetSource dataset;
    // training data for `train` / `train-correlation`; Constant/Dirichlet
    // statistics come from here when set, otherwise from `dataset`
    std::optional<DatasetSource> train_dataset;

    std::vector<Method> methods{Method::SensitivityL2, Method::DeconvL2, Method::LrpEps001,
                                Method::LrpAlphaBeta2, Method::Random};
    Method study_method = Method::LrpAlphaBeta2;
    PerturbationConfig perturbation;
    std::size_t samples = 500;
    std::filesystem::path output = "out";
    std::size_t workers = 0;  // 0: hardware concurrency
    bool lerf = true;
    RawFormat raw_format = RawFormat::Binary;

    TrainConfig training;
    // log-spaced snapshot count for train-correlation when no explicit
    // iterations are given
    std::size_t checkpoints = 8;
    InputScaling input_scaling = InputScaling::Standardize;

    std::size_t worker_count() const;
    void validate() const;
};

/// Flat `key = value` rendering of every field; readable back as a config file.
std::string format_config(const RunConfig& config);

/// Parses `key = value` lines ('#' and ';' start comments) into a map.
std::map<std::string, std::string> parse_key_values(const std::string& text);

/// Applies known keys onto `config`; unknown keys throw InvalidArgument.
void apply_key_values(RunConfig& config, const std::map<std::string, std::string>& values);

/// 0, then `count - 1` roughly log-spaced iterations ending at `total`.
std::vector<std::size_t> log_spaced_iterations(std::size_t total, std::size_t count);

// Evaluation core shared by the commands.

struct MethodCurves {
    Method method;
    std::vector<PerturbationCurve> morf;
    std::vector<PerturbationCurve> lerf;  // empty when LeRF is disabled
};

struct EvaluationResult {
    Operator op = Operator::Uniform;
    std::vector<std::size_t> image_ids;
    std::vector<MethodCurves> methods;
};

/// Runs heatmap + MoRF (+ LeRF) for every image and method. Results do not
/// depend on `workers`.
EvaluationResult evaluate_methods(const Model& model, const Dataset& data,
                                  const std::vector<Method>& methods,
                                  const PerturbationConfig& perturbation,
                                  const DatasetStats& stats, bool with_lerf, std::size_t workers);

double mean(const std::vector<double>& v);
/// Standard error of the mean (sample standard deviation / sqrt(n)).
double standard_error(const std::vector<double>& v);
/// Spearman rank correlation with average ranks for ties; nullopt when
/// fewer than two points or either side is constant.
std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b);

// Subcommands. Each writes into config.output and a manifest.json there.

void cmd_heatmap(const RunConfig& config);
void cmd_evaluate(const RunConfig& config);
void cmd_perturb_study(const RunConfig& config);
void cmd_train_correlation(const RunConfig& config);
void cmd_train(const RunConfig& config);

}  // namespace hmeval::cli
