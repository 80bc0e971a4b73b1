#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include "json.hpp"

#include "hmeval/cli.hpp"

namespace hmeval::cli {

// Comma-separated file with a header row. Doubles go through fmt's shortest
// round-trip formatting so reruns are byte-identical.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header);

    template <class... Args>
    void row(const Args&... fields) {
        std::string line;
        ((line += fmt::format("{},", fields)), ...);
        line.back() = '\n';
        out_ << line;
    }

    void close();

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

// Records a run in manifest.json (plus run.cfg, a config file that replays
// it). Starts as "running"; finish() or fail() fixes the status.
class Manifest {
public:
    Manifest(std::string command, const RunConfig& config);

    nlohmann::json& extra() { return extra_; }
    void add_output(const std::filesystem::path& file);
    void finish();
    void fail(const std::string& message);

private:
    void write(std::string_view status, const std::string& error);

    std::string command_;
    RunConfig config_;
    std::vector<std::string> outputs_;
    nlohmann::json extra_ = nlohmann::json::object();
};

std::string version_string();

}  // namespace hmeval::cli
