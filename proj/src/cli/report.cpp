#include "report.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hmeval/error.hpp"

#ifndef HMEVAL_VERSION
#define HMEVAL_VERSION "dev"
#endif

namespace hmeval::cli {

std::string version_string() { return HMEVAL_VERSION; }

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     std::initializer_list<std::string_view> header)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) hmeval::fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    std::string line;
    for (std::string_view h : header) {
        line += h;
        line += ',';
    }
    line.back() = '\n';
    out_ << line;
}

void CsvWriter::close() {
    out_.close();
    if (!out_) hmeval::fail(ErrorKind::Io, "failed writing " + path_.string());
}

Manifest::Manifest(std::string command, const RunConfig& config)
    : command_(std::move(command)), config_(config) {
    std::filesystem::create_directories(config_.output);
    write("running", {});
}

void Manifest::add_output(const std::filesystem::path& file) {
    outputs_.push_back(file.filename().string());
}

void Manifest::finish() { write("complete", {}); }

void Manifest::fail(const std::string& message) { write("failed", message); }

void Manifest::write(std::string_view status, const std::string& error) {
    const std::string cfg_text = format_config(config_);
    nlohmann::ordered_json j;
    j["command"] = command_;
    j["version"] = version_string();
    j["status"] = status;
    if (!error.empty()) j["error"] = error;
    j["seed"] = config_.perturbation.seed;
    j["train_seed"] = config_.training.seed;
    j["workers"] = config_.worker_count();
    nlohmann::ordered_json cfg;
    for (const auto& [k, v] : parse_key_values(cfg_text)) cfg[k] = v;
    j["config"] = cfg;
    for (const auto& [k, v] : extra_.items()) j[k] = v;
    j["outputs"] = outputs_;
    if (status != "complete") {
        j["note"] = "outputs in this directory may be partial";
    }

    const auto dir = config_.output;
    std::ofstream m(dir / "manifest.json", std::ios::trunc);
    m << j.dump(2) << '\n';
    std::ofstream c(dir / "run.cfg", std::ios::trunc);
    c << "# replay with: hmeval " << command_ << " --config run.cfg\n" << cfg_text;
    if (!m || !c) hmeval::fail(ErrorKind::Io, "cannot write manifest in " + dir.string());
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double standard_error(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double n = static_cast<double>(v.size());
    return std::sqrt(ss / (n - 1.0) / n);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        hmeval::fail(ErrorKind::InvalidArgument, "spearman: series lengths differ");
    if (a.size() < 2) return std::nullopt;
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double ma = mean(ra), mb = mean(rb);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return std::nullopt;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace hmeval::cli
