#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "idm/models.hpp"
#include "idm/splits.hpp"
#include "idm/synth.hpp"
#include "idm/train.hpp"

namespace idm {

struct ExperimentConfig {
    std::string base_dir = ".";  // relative paths resolve against this (the config file's directory)
    std::string corpus = "corpus.jsonl";
    std::string out_dir = "out";

    std::array<double, 3> ratios{0.8, 0.1, 0.1};
    std::uint64_t split_seed = 2024;
    std::vector<SizeSpec> sizes;
    std::vector<std::uint64_t> seeds;
    std::vector<Method> methods;
    Method baseline = Method::joint;

    std::size_t vocab_cap = 8192;
    AssemblyLimits limits;
    EncoderConfig encoder;
    ModelConfig componentwise;  // pooling / aggregation
    TrainConfig train;

    bool lambda_from_grid = true;  // mtl.lambda = grid
    double lambda = 0.05;
    std::vector<double> lambda_candidates = kDefaultLambdas;
    std::size_t lambda_items = 800;
    std::uint64_t lambda_seed = 7;

    SynthConfig synth;

    ExperimentConfig();

    std::string resolve(const std::string& path) const;
    std::string corpus_path() const { return resolve(corpus); }
    std::string out_path(const std::string& rel = "") const;
    void validate() const;

    // Full cell configuration for a method; the lambda is filled in by the caller for mtl.
    CellConfig cell_config(Method method, const std::string& size_label, std::uint64_t seed) const;
};

struct ConfigKey {
    std::string key;
    std::string help;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

const std::vector<ConfigKey>& config_keys();

// `key = value` lines; '#' starts a comment. Unknown keys are errors.
ExperimentConfig parse_config_text(std::string_view text, const std::string& base_dir = ".");
// A JSON object; nested objects are flattened with '.' into the same keys.
ExperimentConfig parse_config_json(std::string_view text, const std::string& base_dir = ".");
// Chooses the JSON reader when the file starts with '{'.
ExperimentConfig load_config(const std::string& path);

// Every key with its default value and a one-line description.
std::string defaults_text();

std::vector<std::uint64_t> parse_seed_list(const std::string& s);

}  // namespace idm
