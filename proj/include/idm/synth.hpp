#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "idm/corpus.hpp"
#include "json.hpp"

namespace idm {

// Synthetic reading-comprehension corpus whose difficulty is a planted
// function of passage length and key/distractor overlap.
struct SynthConfig {
    std::size_t passages = 1250;
    std::size_t items_per_passage = 4;
    std::size_t filler_vocab = 400;  // pseudo-words used for passages, questions and options
    std::size_t cue_pool = 1200;     // separate pseudo-words used as answer cues
    std::size_t min_len = 20;        // passage length in words
    std::size_t max_len = 100;
    std::size_t options = 4;
    std::size_t key_tokens = 4;  // words per option, cue included
    double alpha = 1.0;          // weight of standardised passage length
    double beta = 1.0;           // weight of mean key/distractor overlap
    double sigma = 0.25;         // label noise
    std::uint64_t seed = 7;

    void validate() const;
    nlohmann::ordered_json to_json() const;
};

struct ItemTruth {
    std::string item_id;
    std::size_t length = 0;
    double overlap = 0.0;
    double noiseless = 0.0;
};

struct SynthCorpus {
    Corpus corpus;
    std::vector<ItemTruth> truth;
    double length_mean = 0.0;
    double length_sd = 0.0;
};

SynthCorpus generate(const SynthConfig& config);

// |set(key) & set(distractor)| / |set(key)| averaged over distractors.
double option_overlap(const Item& item);

nlohmann::ordered_json truth_to_json(const SynthConfig& config, const SynthCorpus& synth);

}  // namespace idm
