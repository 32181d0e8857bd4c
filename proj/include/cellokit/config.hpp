#pragma once

#include "cellokit/losses.hpp"
#include "cellokit/model.hpp"
#include "cellokit/ontology.hpp"
#include "cellokit/trainer.hpp"

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cellokit::config {

/// Every tunable of a pre-training run.
struct RunConfig {
    model::ModelConfig model;
    trainer::TrainConfig train;
    ontology::PprOptions ppr;
    double threshold = ontology::default_similarity_threshold;
    losses::ObjectiveOptions objective;
};

/// Ordered "key = value" pairs; '#' starts a comment, blank lines are skipped.
std::vector<std::pair<std::string, std::string>> parse_pairs(std::string_view text);

/**
 * Assigns one key. `max_len` is the context length L shared by the tokenizer
 * and the positional table; `seed` drives both initialization and training.
 * Throws Error(InvalidArgument) for unknown keys or unparsable values.
 */
void set_value(RunConfig& config, std::string_view key, std::string_view value);

/// All recognized keys, in the order `snapshot` prints them.
const std::vector<std::string>& known_keys();

/// Current value of a key, formatted so that `set_value` reads it back exactly.
std::string get_value(const RunConfig& config, std::string_view key);

/// "key = value" lines for every key.
std::string snapshot(const RunConfig& config);

} // namespace cellokit::config
