#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "kformer/harness.hpp"
#include "kformer/model_types.hpp"

namespace kformer {

// Merged view of model + injection + train + task configuration, loaded from
// a single JSON file with dotted key=value overrides. All randomness flows
// from the one top-level seed. Unknown keys are rejected, every field is
// validated by finalize() before any work starts.
struct RunConfig {
    uint64_t seed = 0;
    ModelConfig model;
    InjectionConfig injection;
    harness::TrainConfig train;
    harness::SyntheticTaskConfig task;
    double bm25_k1 = 1.2;
    double bm25_b = 0.75;

    static RunConfig defaults();
    static RunConfig from_file(const std::string& path);

    // "injection.mode=ffn", "train.lr=0.001", "injection.layers=2,3,4" (use
    // "-" for the empty set). Unknown keys raise ConfigError listing the
    // valid ones.
    void apply_override(const std::string& key, const std::string& value);
    void apply_override_expr(const std::string& key_eq_value);

    // Fills derived fields (default injection layers = top 3 when unset,
    // seeds of the sub-configs) and validates everything.
    void finalize();

    nlohmann::json to_json() const;
    harness::ExperimentConfig experiment() const;

    static const std::vector<std::string>& valid_keys();

  private:
    bool layers_set_ = false;
};

}  // namespace kformer
