#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "hmeval/cli.hpp"
#include "hmeval/error.hpp"
#include "hmeval/parallel.hpp"

namespace hmeval::cli {
namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream in(value);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || ptr != end)
        fail(ErrorKind::InvalidArgument, "option '" + key + "': cannot parse '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    fail(ErrorKind::InvalidArgument, "option '" + key + "': expected true/false, got '" + value + "'");
}

Split parse_split(const std::string& key, const std::string& value) {
    if (value == "train") return Split::Train;
    if (value == "test") return Split::Test;
    fail(ErrorKind::InvalidArgument, "option '" + key + "': expected train/test, got '" + value + "'");
}

std::string join_methods(const std::vector<Method>& methods) {
    std::string out;
    for (Method m : methods) {
        if (!out.empty()) out += ',';
        out += method_name(m);
    }
    return out;
}

DatasetSource& train_source(RunConfig& config) {
    if (!config.train_dataset) {
        config.train_dataset = DatasetSource{};
        config.train_dataset->split = Split::Train;
    }
    return *config.train_dataset;
}

}  // namespace

std::size_t RunConfig::worker_count() const { return workers == 0 ? default_workers() : workers; }

void RunConfig::validate() const {
    if (methods.empty()) fail(ErrorKind::InvalidArgument, "methods list is empty");
    if (perturbation.repeats == 0) fail(ErrorKind::InvalidArgument, "repeats must be >= 1");
    if (perturbation.window == 0) fail(ErrorKind::InvalidArgument, "window must be >= 1");
    if (!(perturbation.blur_sigma > 0.0)) fail(ErrorKind::InvalidArgument, "blur-sigma must be > 0");
    if (samples == 0) fail(ErrorKind::InvalidArgument, "samples must be >= 1");
    if (output.empty()) fail(ErrorKind::InvalidArgument, "output directory is empty");
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::stringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line.resize(comment);
        line = trim(line);
        if (line.empty() || line.front() == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorKind::InvalidArgument, "config line " + std::to_string(number) + ": expected key = value");
        std::string key = trim(std::string_view(line).substr(0, eq));
        std::string value = trim(std::string_view(line).substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        if (key.empty())
            fail(ErrorKind::InvalidArgument, "config line " + std::to_string(number) + ": empty key");
        out[key] = value;
    }
    return out;
}

void apply_key_values(RunConfig& c, const std::map<std::string, std::string>& values) {
    for (const auto& [key, value] : values) {
        if (key == "model") c.model = value;
        else if (key == "dataset") c.dataset.path = value;
        else if (key == "format") c.dataset.format = parse_dataset_format(value);
        else if (key == "labels") c.dataset.labels = value.empty() ? std::nullopt : std::optional<std::filesystem::path>(value);
        else if (key == "split") c.dataset.split = parse_split(key, value);
        else if (key == "train-dataset") {
            if (value.empty()) c.train_dataset.reset();
            else train_source(c).path = value;
        } else if (key == "train-format") train_source(c).format = parse_dataset_format(value);
        else if (key == "train-labels") train_source(c).labels = value.empty() ? std::nullopt : std::optional<std::filesystem::path>(value);
        else if (key == "methods") {
            c.methods.clear();
            for (const std::string& name : split_list(value)) {
                const Method m = parse_method(name);
                if (std::find(c.methods.begin(), c.methods.end(), m) == c.methods.end())
                    c.methods.push_back(m);
            }
        } else if (key == "study-method") c.study_method = parse_method(value);
        else if (key == "operator") c.perturbation.op = parse_operator(value);
        else if (key == "steps") c.perturbation.steps = parse_number<std::size_t>(key, value);
        else if (key == "repeats") c.perturbation.repeats = parse_number<std::size_t>(key, value);
        else if (key == "window") c.perturbation.window = parse_number<std::size_t>(key, value);
        else if (key == "blur-sigma") c.perturbation.blur_sigma = parse_number<double>(key, value);
        else if (key == "seed") c.perturbation.seed = parse_number<std::uint64_t>(key, value);
        else if (key == "samples") c.samples = parse_number<std::size_t>(key, value);
        else if (key == "output") c.output = value;
        else if (key == "workers") c.workers = parse_number<std::size_t>(key, value);
        else if (key == "lerf") c.lerf = parse_bool(key, value);
        else if (key == "raw-format") {
            if (value == "bin") c.raw_format = RawFormat::Binary;
            else if (value == "csv") c.raw_format = RawFormat::Csv;
            else fail(ErrorKind::InvalidArgument, "option 'raw-format': expected bin or csv, got '" + value + "'");
        } else if (key == "learning-rate") c.training.learning_rate = parse_number<double>(key, value);
        else if (key == "batch-size") c.training.batch_size = parse_number<std::size_t>(key, value);
        else if (key == "epochs") c.training.epochs = parse_number<std::size_t>(key, value);
        else if (key == "train-seed") c.training.seed = parse_number<std::uint64_t>(key, value);
        else if (key == "checkpoint-iterations") {
            c.training.checkpoint_iterations.clear();
            for (const std::string& v : split_list(value))
                c.training.checkpoint_iterations.push_back(parse_number<std::size_t>(key, v));
        } else if (key == "checkpoints") c.checkpoints = parse_number<std::size_t>(key, value);
        else if (key == "input-scaling") {
            if (value == "standardize") c.input_scaling = InputScaling::Standardize;
            else if (value == "none") c.input_scaling = InputScaling::None;
            else fail(ErrorKind::InvalidArgument, "option 'input-scaling': expected standardize or none, got '" + value + "'");
        } else {
            fail(ErrorKind::InvalidArgument, "unknown config key '" + key + "'");
        }
    }
}

std::string format_config(const RunConfig& c) {
    std::string out;
    auto put = [&](std::string_view key, const auto& value) {
        out += fmt::format("{} = {}\n", key, value);
    };
    put("model", c.model.string());
    put("dataset", c.dataset.path.string());
    put("format", dataset_format_name(c.dataset.format));
    put("labels", c.dataset.labels ? c.dataset.labels->string() : std::string());
    put("split", c.dataset.split == Split::Train ? "train" : "test");
    if (c.train_dataset) {
        put("train-dataset", c.train_dataset->path.string());
        put("train-format", dataset_format_name(c.train_dataset->format));
        put("train-labels", c.train_dataset->labels ? c.train_dataset->labels->string() : std::string());
    }
    put("methods", join_methods(c.methods));
    put("study-method", method_name(c.study_method));
    put("operator", operator_name(c.perturbation.op));
    put("steps", c.perturbation.steps);
    put("repeats", c.perturbation.repeats);
    put("window", c.perturbation.window);
    put("blur-sigma", c.perturbation.blur_sigma);
    put("seed", c.perturbation.seed);
    put("samples", c.samples);
    put("output", c.output.string());
    put("workers", c.workers);
    put("lerf", c.lerf ? "true" : "false");
    put("raw-format", c.raw_format == RawFormat::Binary ? "bin" : "csv");
    put("learning-rate", c.training.learning_rate);
    put("batch-size", c.training.batch_size);
    put("epochs", c.training.epochs);
    put("train-seed", c.training.seed);
    std::string iterations;
    for (std::size_t it : c.training.checkpoint_iterations)
        iterations += (iterations.empty() ? "" : ",") + std::to_string(it);
    put("checkpoint-iterations", iterations);
    put("checkpoints", c.checkpoints);
    put("input-scaling", c.input_scaling == InputScaling::Standardize ? "standardize" : "none");
    return out;
}

std::vector<std::size_t> log_spaced_iterations(std::size_t total, std::size_t count) {
    std::set<std::size_t> picks{0, total};
    if (count > 2 && total > 1) {
        const double top = std::log(static_cast<double>(total));
        for (std::size_t k = 1; k + 1 < count; ++k) {
            const double t = static_cast<double>(k) / static_cast<double>(count - 1);
            picks.insert(static_cast<std::size_t>(std::lround(std::exp(t * top))));
        }
    }
    return {picks.begin(), picks.end()};
}

}  // namespace hmeval::cli
