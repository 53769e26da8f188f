#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "kformer/model.hpp"
#include "kformer/retrieval.hpp"

namespace kformer::harness {

// Knowledge-dependent MCQ task: one fact sentence per (entity, attribute),
// questions ask an attribute of an entity, dev questions concern held-out
// entities only, so answering them above chance requires the retrieved
// facts.
struct SyntheticTaskConfig {
    int n_entities = 100;
    int n_attributes = 4;
    int n_values_per_attribute = 8;
    int n_options = 3;
    double dev_fraction = 0.2;
    int dev_variants = 4;  // option draws per held-out fact
    std::string distractor_policy = "same_attribute";  // or "any_attribute"
    uint64_t seed = 0;

    void validate() const;
};

struct MCQExample {
    std::string question;
    std::vector<std::string> options;
    int answer_index = 0;
    int gold_fact_doc_id = -1;  // diagnostics only
};

struct Dataset {
    std::vector<MCQExample> train;
    std::vector<MCQExample> dev;
    retrieval::Corpus corpus;
    Vocab vocab;
};

Dataset generate_dataset(const SyntheticTaskConfig& cfg, double bm25_k1 = 1.2,
                         double bm25_b = 0.75);

// JSON-lines {"question", "options", "answer", "gold_fact_id"}.
void save_examples_jsonl(const std::vector<MCQExample>& examples, const std::string& path);
std::vector<MCQExample> load_examples_jsonl(const std::string& path);

struct TrainConfig {
    int epochs = 12;
    int batch_size = 8;
    double lr = 2e-3;
    int warmup_steps = 60;  // then linear decay to zero
    double weight_decay = 1e-2;  // skipped on layer-norm parameters
    double clip_norm = 1.0;
    uint64_t seed = 0;
    bool freeze_retrieval = false;  // keep epoch-0 retrieval for ablation

    void validate() const;
};

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double dev_accuracy = 0.0;
    double dev_gold_recall = 0.0;  // gold fact among retrieved N (injection modes)
};

struct TrainResult {
    std::vector<EpochMetrics> curve;
};

// AdamW with linear warmup then linear decay, global-norm gradient clipping
// and per-epoch retrieval refresh. Divergence aborts with the failing step
// in the error message.
TrainResult train(Model& model, const Dataset& data, const retrieval::InvertedIndex& index,
                  const TrainConfig& tcfg);

// Fraction of examples whose argmax matches the label. Parallelizes over
// examples; aggregation is an integer sum, so the result is deterministic.
double evaluate(Model& model, const std::vector<MCQExample>& examples,
                const retrieval::InvertedIndex& index, int top_n_override = -1,
                double* gold_recall = nullptr);

// One full experiment from a merged config.
struct ExperimentConfig {
    ModelConfig model;  // vocab_size 0 = size from the generated vocabulary
    InjectionConfig injection;
    TrainConfig train;
    SyntheticTaskConfig task;
    double bm25_k1 = 1.2;
    double bm25_b = 0.75;
};

struct ExperimentResult {
    TrainResult curve;
    double dev_accuracy = 0.0;
    Model model;
    Dataset data;
    retrieval::InvertedIndex index;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Sweep outputs: CSV with a header row plus a JSON-lines log of per-epoch
// metrics, both deterministic for a fixed config.
struct SweepResult {
    std::string csv;
    std::string metrics_jsonl;
};

// One training run per layer set (an all-layers row is appended when
// missing); the empty set is the no-injection baseline.
SweepResult sweep_layers(const ExperimentConfig& base,
                         const std::vector<std::vector<int>>& layer_sets);

// One run per N when `retrain`, otherwise a single run re-evaluated with
// re-retrieval at each N.
SweepResult sweep_topn(const ExperimentConfig& base, const std::vector<int>& ns,
                       bool retrain = true);

// gelu outputs restricted to the knowledge columns, one matrix per injected
// layer, rows = tokens of the gold-option input sequence, columns = the N
// retrieved knowledge texts in retrieval order.
struct ActivationMatrix {
    Tensor values;  // [seq_len x N]
    int layer = 0;
    int64_t example_id = 0;
    std::vector<std::string> knowledge;
};

std::vector<ActivationMatrix> dump_activations(Model& model,
                                               const retrieval::InvertedIndex& index,
                                               const MCQExample& example, int64_t example_id);

nlohmann::json activation_json(const ActivationMatrix& m);

}  // namespace kformer::harness
