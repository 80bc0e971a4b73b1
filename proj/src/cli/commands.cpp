#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>

#include <fmt/format.h>

#include "hmeval/architectures.hpp"
#include "hmeval/cli.hpp"
#include "hmeval/complexity.hpp"
#include "hmeval/error.hpp"
#include "hmeval/model_io.hpp"
#include "hmeval/parallel.hpp"
#include "hmeval/render.hpp"
#include "report.hpp"

namespace hmeval::cli {
namespace {

// stream tag so random heatmaps never share draws with the perturbation noise
constexpr std::uint64_t kRandomHeatmapStream = 0x68656174;

Dataset load_checked(const DatasetSource& source, std::string_view role) {
    if (source.path.empty()) fail(ErrorKind::InvalidArgument, std::string(role) + " path is not set");
    Dataset ds = load_dataset(source);
    if (ds.size() == 0) fail(ErrorKind::InvalidArgument, std::string(role) + " is empty");
    ds.validate();
    return ds;
}

Model load_checked_model(const RunConfig& config, const Dataset& data) {
    if (config.model.empty()) fail(ErrorKind::InvalidArgument, "model path is not set");
    Model model = load_model(config.model);
    if (model.input_shape() != data.image_shape()) {
        fail(ErrorKind::ShapeMismatch, "model expects " + shape_string(model.input_shape()) +
                                           " but dataset images are " +
                                           shape_string(data.image_shape()));
    }
    return model;
}

DatasetStats stats_for(const RunConfig& config, const Dataset& eval, bool dirichlet) {
    if (config.train_dataset) return compute_stats(load_checked(*config.train_dataset, "training dataset"), dirichlet);
    return compute_stats(eval, dirichlet);
}

std::vector<Method> with_random(std::vector<Method> methods) {
    if (std::find(methods.begin(), methods.end(), Method::Random) == methods.end())
        methods.push_back(Method::Random);
    return methods;
}

std::size_t class_count(const Dataset& ds) {
    std::size_t n = ds.class_names.size();
    for (std::size_t label : ds.labels) n = std::max(n, label + 1);
    return n;
}

void write_raw(const Heatmap& h, const std::filesystem::path& path, RawFormat format) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    if (format == RawFormat::Binary) {
        for (double v : h.scores) {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            char b[8];
            for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
            out.write(b, 8);
        }
    } else {
        for (std::size_t y = 0; y < h.height; ++y) {
            std::string line;
            for (std::size_t x = 0; x < h.width; ++x)
                line += fmt::format("{}{}", x ? "," : "", h.at(y, x));
            out << line << '\n';
        }
    }
    if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

void write_curves(CsvWriter& csv, const EvaluationResult& r, bool lerf) {
    for (const MethodCurves& mc : r.methods) {
        const auto& curves = lerf ? mc.lerf : mc.morf;
        for (std::size_t i = 0; i < curves.size(); ++i) {
            for (std::size_t k = 0; k < curves[i].values.size(); ++k)
                csv.row(r.image_ids[i], method_name(mc.method), operator_name(r.op), k,
                        curves[i].values[k]);
        }
    }
}

void write_mean_curves(CsvWriter& csv, const EvaluationResult& r) {
    for (const MethodCurves& mc : r.methods) {
        for (const auto* curves : {&mc.morf, &mc.lerf}) {
            if (curves->empty()) continue;
            const std::size_t len = curves->front().values.size();
            for (std::size_t k = 0; k < len; ++k) {
                double s = 0.0;
                for (const auto& c : *curves) s += c.values[k];
                csv.row(method_name(mc.method), operator_name(r.op),
                        direction_name(curves->front().direction), k,
                        s / static_cast<double>(curves->size()));
            }
        }
    }
}

void write_report_rows(CsvWriter& csv, const EvaluationResult& r, std::uint64_t seed) {
    for (const MethodCurves& mc : r.methods) {
        const double a = aopc(mc.morf);
        if (mc.lerf.empty()) {
            csv.row(method_name(mc.method), operator_name(r.op), a, "", mc.morf.size(), seed);
        } else {
            csv.row(method_name(mc.method), operator_name(r.op), a, abpc(mc.lerf, mc.morf),
                    mc.morf.size(), seed);
        }
    }
}

void write_per_image(CsvWriter& csv, const EvaluationResult& r) {
    for (const MethodCurves& mc : r.methods) {
        for (std::size_t i = 0; i < mc.morf.size(); ++i) {
            const double a = curve_aopc(mc.morf[i]);
            if (mc.lerf.empty()) {
                csv.row(r.image_ids[i], method_name(mc.method), operator_name(r.op),
                        mc.morf[i].target, a, "");
            } else {
                csv.row(r.image_ids[i], method_name(mc.method), operator_name(r.op),
                        mc.morf[i].target, a, curve_abpc(mc.lerf[i], mc.morf[i]));
            }
        }
    }
}

const MethodCurves& find_method(const EvaluationResult& r, Method m) {
    for (const MethodCurves& mc : r.methods)
        if (mc.method == m) return mc;
    fail(ErrorKind::InvalidArgument, "method " + std::string(method_name(m)) + " not evaluated");
}

template <class Body>
void run_command(const char* name, const RunConfig& config, Body&& body) {
    config.validate();
    Manifest manifest(name, config);
    try {
        body(manifest);
        manifest.finish();
    } catch (const std::exception& e) {
        manifest.fail(e.what());
        throw;
    }
}

void log(const std::string& line) {
    std::fputs((line + "\n").c_str(), stderr);
}

struct TrainingRun {
    std::vector<Checkpoint> checkpoints;
    Dataset test;
};

TrainingRun run_training(const RunConfig& config, std::vector<std::size_t> iterations,
                         Manifest& manifest) {
    if (!config.train_dataset)
        fail(ErrorKind::InvalidArgument, "training needs --train-dataset");
    const Dataset train = load_checked(*config.train_dataset, "training dataset");
    Dataset test = load_checked(config.dataset, "dataset");
    if (train.image_shape() != test.image_shape())
        fail(ErrorKind::ShapeMismatch, "training and test images differ in shape");

    Model model = make_small_cnn(train.image_shape(), std::max(class_count(train), class_count(test)),
                                 config.training.seed);
    if (config.input_scaling == InputScaling::Standardize)
        model.set_input_norm(channel_standardization(train));

    TrainConfig tc = config.training;
    if (!iterations.empty()) tc.checkpoint_iterations = std::move(iterations);
    manifest.extra()["checkpoint_iterations"] = tc.checkpoint_iterations;
    auto checkpoints = train_sgd(model, train.examples(), test.examples(), tc, [](const Checkpoint& c) {
        log(fmt::format("iteration {} test accuracy {}", c.iteration, c.test_accuracy));
    });
    return {std::move(checkpoints), std::move(test)};
}

}  // namespace

EvaluationResult evaluate_methods(const Model& model, const Dataset& data,
                                  const std::vector<Method>& methods,
                                  const PerturbationConfig& perturbation,
                                  const DatasetStats& stats, bool with_lerf, std::size_t workers) {
    if (data.size() == 0) fail(ErrorKind::InvalidArgument, "no images to evaluate");
    if (methods.empty()) fail(ErrorKind::InvalidArgument, "no methods to evaluate");
    const SpatialLayout layout = spatial_layout(model.input_shape());
    const auto grid = build_region_grid(layout.height, layout.width, perturbation.window);
    if (perturbation.steps > grid.size()) {
        fail(ErrorKind::InvalidArgument, fmt::format("steps {} exceed the {} regions of a {} window grid",
                                                     perturbation.steps, grid.size(),
                                                     perturbation.window));
    }

    EvaluationResult result;
    result.op = perturbation.op;
    result.image_ids.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) result.image_ids[i] = i;
    for (Method m : methods) {
        MethodCurves mc{m, std::vector<PerturbationCurve>(data.size()), {}};
        if (with_lerf) mc.lerf.resize(data.size());
        result.methods.push_back(std::move(mc));
    }

    parallel_for(data.size(), workers, [&](std::size_t i) {
        const Tensor& image = data.images[i];
        const ForwardTrace trace = forward(model, image);
        const std::size_t target = argmax_index(trace.logits());
        for (MethodCurves& mc : result.methods) {
            try {
                const Heatmap h = compute_heatmap(mc.method, model, trace, target,
                                                  derive_seed({perturbation.seed, kRandomHeatmapStream, i}));
                const RegionOrdering ordering = order_regions(h, grid);
                mc.morf[i] = morf_curve(model, image, ordering, perturbation, stats, i);
                if (with_lerf) mc.lerf[i] = lerf_curve(model, image, ordering, perturbation, stats, i);
            } catch (const Error& e) {
                fail(e.kind(), fmt::format("image {}, method {}: {}", i, method_name(mc.method), e.what()));
            }
        }
    });
    return result;
}

void cmd_heatmap(const RunConfig& config) {
    run_command("heatmap", config, [&](Manifest& manifest) {
        const Dataset data = load_checked(config.dataset, "dataset").head(config.samples);
        const Model model = load_checked_model(config, data);
        const auto& methods = config.methods;
        const std::string ext = config.raw_format == RawFormat::Binary ? "bin" : "csv";

        std::vector<std::vector<ComplexityEntry>> complexity(data.size());
        parallel_for(data.size(), config.worker_count(), [&](std::size_t i) {
            const ForwardTrace trace = forward(model, data.images[i]);
            const std::size_t target = argmax_index(trace.logits());
            for (Method m : methods) {
                try {
                    const Heatmap h = compute_heatmap(
                        m, model, trace, target,
                        derive_seed({config.perturbation.seed, kRandomHeatmapStream, i}));
                    const std::string stem = fmt::format("img{:05d}_{}", i, method_name(m));
                    write_png(render_heatmap(h, RenderMode::SignedDiverging),
                              config.output / (stem + ".png"));
                    write_raw(h, config.output / (stem + "." + ext), config.raw_format);
                    complexity[i].push_back(measure_complexity(render_heatmap(h, RenderMode::Magnitude)));
                } catch (const Error& e) {
                    fail(e.kind(), fmt::format("image {}, method {}: {}", i, method_name(m), e.what()));
                }
            }
        });

        CsvWriter per_image(config.output / "complexity.csv",
                            {"image_id", "method", "entropy_bits", "png_bytes", "jpeg_bytes"});
        for (std::size_t i = 0; i < data.size(); ++i) {
            for (std::size_t k = 0; k < methods.size(); ++k) {
                const ComplexityEntry& e = complexity[i][k];
                per_image.row(i, method_name(methods[k]), e.entropy_bits, e.png_bytes, e.jpeg_bytes);
            }
        }
        per_image.close();
        CsvWriter summary(config.output / "complexity_summary.csv",
                          {"method", "mean_entropy_bits", "median_entropy_bits", "mean_png_bytes",
                           "median_png_bytes", "mean_jpeg_bytes", "median_jpeg_bytes", "n_images"});
        for (std::size_t k = 0; k < methods.size(); ++k) {
            std::vector<ComplexityEntry> entries;
            for (const auto& row : complexity) entries.push_back(row[k]);
            const ComplexitySummary s = summarize(entries);
            summary.row(method_name(methods[k]), s.mean_entropy, s.median_entropy, s.mean_png,
                        s.median_png, s.mean_jpeg, s.median_jpeg, entries.size());
        }
        summary.close();
        manifest.add_output("complexity.csv");
        manifest.add_output("complexity_summary.csv");
        manifest.extra()["images"] = data.size();
        manifest.extra()["heatmap_files"] = fmt::format("img<5-digit index>_<method>.png and .{}", ext);
    });
}

void cmd_evaluate(const RunConfig& config) {
    run_command("evaluate", config, [&](Manifest& manifest) {
        const Dataset full = load_checked(config.dataset, "dataset");
        const Dataset data = full.head(config.samples);
        const Model model = load_checked_model(config, data);
        const DatasetStats stats = stats_for(config, full, config.perturbation.op == Operator::Dirichlet);
        const auto methods = with_random(config.methods);
        const EvaluationResult r = evaluate_methods(model, data, methods, config.perturbation, stats,
                                                    config.lerf, config.worker_count());

        CsvWriter morf(config.output / "curves_morf.csv", {"image_id", "method", "operator", "k", "f_value"});
        write_curves(morf, r, false);
        morf.close();
        manifest.add_output("curves_morf.csv");
        if (config.lerf) {
            CsvWriter lerf(config.output / "curves_lerf.csv", {"image_id", "method", "operator", "k", "f_value"});
            write_curves(lerf, r, true);
            lerf.close();
            manifest.add_output("curves_lerf.csv");
        }
        CsvWriter report(config.output / "report.csv", {"method", "operator", "AOPC", "ABPC", "n_images", "seed"});
        write_report_rows(report, r, config.perturbation.seed);
        report.close();

        const auto baseline = aopc_by_step(find_method(r, Method::Random).morf);
        CsvWriter steps(config.output / "aopc_by_step.csv",
                        {"method", "operator", "k", "aopc", "aopc_minus_random"});
        for (const MethodCurves& mc : r.methods) {
            const auto a = aopc_by_step(mc.morf);
            for (std::size_t k = 0; k < a.size(); ++k)
                steps.row(method_name(mc.method), operator_name(r.op), k, a[k], a[k] - baseline[k]);
        }
        steps.close();
        CsvWriter per_image(config.output / "per_image.csv",
                            {"image_id", "method", "operator", "target", "aopc", "abpc"});
        write_per_image(per_image, r);
        per_image.close();
        CsvWriter means(config.output / "mean_curves.csv",
                        {"method", "operator", "direction", "k", "mean_f_value"});
        write_mean_curves(means, r);
        means.close();
        for (const char* f : {"report.csv", "aopc_by_step.csv", "per_image.csv", "mean_curves.csv"})
            manifest.add_output(f);
        manifest.extra()["effective_repeats"] = config.perturbation.effective_repeats();
        manifest.extra()["images"] = data.size();
    });
}

void cmd_perturb_study(const RunConfig& config) {
    run_command("perturb-study", config, [&](Manifest& manifest) {
        const Dataset full = load_checked(config.dataset, "dataset");
        const Dataset data = full.head(config.samples);
        const Model model = load_checked_model(config, data);
        const DatasetStats stats = stats_for(config, full, true);

        std::vector<EvaluationResult> results;
        nlohmann::ordered_json repeats;
        for (Operator op : {Operator::Uniform, Operator::Dirichlet, Operator::Constant, Operator::Blur}) {
            PerturbationConfig pc = config.perturbation;
            pc.op = op;
            log(fmt::format("operator {}", operator_name(op)));
            results.push_back(evaluate_methods(model, data, {config.study_method}, pc, stats, true,
                                               config.worker_count()));
            repeats[std::string(operator_name(op))] = pc.effective_repeats();
        }

        CsvWriter morf(config.output / "curves_morf.csv", {"image_id", "method", "operator", "k", "f_value"});
        CsvWriter lerf(config.output / "curves_lerf.csv", {"image_id", "method", "operator", "k", "f_value"});
        CsvWriter report(config.output / "report.csv", {"method", "operator", "AOPC", "ABPC", "n_images", "seed"});
        CsvWriter means(config.output / "mean_curves.csv",
                        {"method", "operator", "direction", "k", "mean_f_value"});
        CsvWriter per_image(config.output / "per_image.csv",
                            {"image_id", "method", "operator", "target", "aopc", "abpc"});
        for (const EvaluationResult& r : results) {
            write_curves(morf, r, false);
            write_curves(lerf, r, true);
            write_report_rows(report, r, config.perturbation.seed);
            write_mean_curves(means, r);
            write_per_image(per_image, r);
        }
        for (CsvWriter* w : {&morf, &lerf, &report, &means, &per_image}) w->close();
        for (const char* f : {"curves_morf.csv", "curves_lerf.csv", "report.csv", "mean_curves.csv", "per_image.csv"})
            manifest.add_output(f);
        manifest.extra()["effective_repeats"] = repeats;
        manifest.extra()["images"] = data.size();
        if (stats.dirichlet) manifest.extra()["dirichlet_alpha"] = stats.dirichlet->alpha;
    });
}

void cmd_train(const RunConfig& config) {
    run_command("train", config, [&](Manifest& manifest) {
        TrainingRun run = run_training(config, {}, manifest);
        CsvWriter csv(config.output / "checkpoints.csv", {"iteration", "test_accuracy"});
        for (const Checkpoint& c : run.checkpoints) csv.row(c.iteration, c.test_accuracy);
        csv.close();
        save_model(run.checkpoints.back().model, config.output / "model.hbm");
        manifest.add_output("checkpoints.csv");
        manifest.add_output("model.hbm");
    });
}

void cmd_train_correlation(const RunConfig& config) {
    run_command("train-correlation", config, [&](Manifest& manifest) {
        if (!config.train_dataset)
            fail(ErrorKind::InvalidArgument, "training needs --train-dataset");
        std::vector<std::size_t> iterations = config.training.checkpoint_iterations;
        if (iterations.empty()) {
            const Dataset probe = load_checked(*config.train_dataset, "training dataset");
            const std::size_t per_epoch =
                (probe.size() + config.training.batch_size - 1) / std::max<std::size_t>(1, config.training.batch_size);
            iterations = log_spaced_iterations(per_epoch * config.training.epochs, config.checkpoints);
        }
        TrainingRun run = run_training(config, iterations, manifest);
        const Dataset data = run.test.head(config.samples);
        const DatasetStats stats = stats_for(config, run.test, config.perturbation.op == Operator::Dirichlet);

        std::vector<double> acc, score, relative;
        CsvWriter csv(config.output / "checkpoints.csv",
                      {"iteration", "test_accuracy", "aopc", "aopc_random", "aopc_minus_random"});
        for (const Checkpoint& c : run.checkpoints) {
            const EvaluationResult r = evaluate_methods(c.model, data, {config.study_method, Method::Random},
                                                        config.perturbation, stats, false,
                                                        config.worker_count());
            const double a = aopc(r.methods[0].morf);
            const double base = aopc(r.methods[1].morf);
            csv.row(c.iteration, c.test_accuracy, a, base, a - base);
            log(fmt::format("iteration {}: accuracy {} aopc {}", c.iteration, c.test_accuracy, a));
            acc.push_back(c.test_accuracy);
            score.push_back(a);
            relative.push_back(a - base);
            const std::string name = fmt::format("checkpoint_{:07d}.hbm", c.iteration);
            save_model(c.model, config.output / name);
            manifest.add_output(name);
        }
        csv.close();
        CsvWriter corr(config.output / "correlation.csv", {"statistic", "value", "n_checkpoints"});
        auto put = [&](std::string_view what, std::optional<double> v) {
            if (v) corr.row(what, *v, acc.size());
            else corr.row(what, "undefined", acc.size());
        };
        put("spearman_accuracy_aopc", spearman(acc, score));
        put("spearman_accuracy_aopc_minus_random", spearman(acc, relative));
        corr.close();
        manifest.add_output("checkpoints.csv");
        manifest.add_output("correlation.csv");
        manifest.extra()["effective_repeats"] = config.perturbation.effective_repeats();
    });
}

}  // namespace hmeval::cli
