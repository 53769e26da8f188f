#include "kformer/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "kformer/errors.hpp"
#include "kformer/rng.hpp"

namespace kformer::harness {

using nlohmann::json;
using retrieval::InvertedIndex;
using retrieval::KnowledgeCandidate;

namespace {

const std::vector<std::string> kAttributeNames = {
    "color", "shape", "material", "origin", "size", "sound", "flavor", "season",
};

const std::vector<std::vector<std::string>> kValuePools = {
    {"red", "blue", "green", "yellow", "purple", "orange", "silver", "crimson"},
    {"round", "square", "oval", "spiky", "flat", "curved", "twisted", "pointed"},
    {"wood", "iron", "glass", "stone", "cotton", "paper", "clay", "rubber"},
    {"paris", "tokyo", "cairo", "lima", "oslo", "quito", "dakar", "prague"},
    {"tiny", "small", "medium", "large", "huge", "giant", "compact", "slim"},
    {"hum", "buzz", "clang", "chirp", "ring", "thud", "whistle", "drone"},
    {"sweet", "sour", "bitter", "salty", "mild", "spicy", "tangy", "smoky"},
    {"spring", "summer", "autumn", "winter", "monsoon", "harvest", "solstice", "equinox"},
};

std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

void SyntheticTaskConfig::validate() const {
    if (n_entities < 2 || n_attributes < 1 || n_values_per_attribute < 2 || n_options < 2 ||
        dev_variants < 1)
        throw ConfigError("task config: counts out of range");
    if (n_attributes > static_cast<int>(kAttributeNames.size()))
        throw ConfigError("task config: at most " + std::to_string(kAttributeNames.size()) +
                          " attributes supported");
    if (n_values_per_attribute > static_cast<int>(kValuePools[0].size()))
        throw ConfigError("task config: at most " + std::to_string(kValuePools[0].size()) +
                          " values per attribute supported");
    if (n_options > n_values_per_attribute)
        throw ConfigError("task config: n_options (" + std::to_string(n_options) +
                          ") exceeds values per attribute (" +
                          std::to_string(n_values_per_attribute) + ")");
    if (!(dev_fraction > 0.0 && dev_fraction < 1.0))
        throw ConfigError("task config: dev_fraction must lie in (0,1)");
    if (distractor_policy != "same_attribute" && distractor_policy != "any_attribute")
        throw ConfigError("task config: unknown distractor policy '" + distractor_policy + "'");
}

Dataset generate_dataset(const SyntheticTaskConfig& cfg, double bm25_k1, double bm25_b) {
    cfg.validate();
    SplitMix64 rng(cfg.seed ^ 0xda7a5e7ULL);

    const int n_dev = std::max(1, static_cast<int>(std::lround(cfg.n_entities * cfg.dev_fraction)));
    const int n_train = cfg.n_entities - n_dev;
    if (n_train < 1) throw ConfigError("task config: no training entities left");

    std::vector<std::string> entities;
    entities.reserve(static_cast<size_t>(cfg.n_entities));
    for (int e = 0; e < cfg.n_entities; ++e) entities.push_back("entity" + std::to_string(e));

    // value[(e,a)] and the fact corpus, one doc per (entity, attribute)
    std::vector<std::vector<int>> value_of(static_cast<size_t>(cfg.n_entities),
                                           std::vector<int>(static_cast<size_t>(cfg.n_attributes)));
    std::vector<std::string> fact_texts;
    fact_texts.reserve(static_cast<size_t>(cfg.n_entities * cfg.n_attributes));
    for (int e = 0; e < cfg.n_entities; ++e) {
        for (int a = 0; a < cfg.n_attributes; ++a) {
            const int v = static_cast<int>(rng.next_below(static_cast<uint64_t>(cfg.n_values_per_attribute)));
            value_of[static_cast<size_t>(e)][static_cast<size_t>(a)] = v;
            fact_texts.push_back("the " + kAttributeNames[static_cast<size_t>(a)] + " of " +
                                 entities[static_cast<size_t>(e)] + " is " +
                                 kValuePools[static_cast<size_t>(a)][static_cast<size_t>(v)]);
        }
    }

    auto make_example = [&](int e, int a) {
        MCQExample ex;
        ex.question = "what is the " + kAttributeNames[static_cast<size_t>(a)] + " of " +
                      entities[static_cast<size_t>(e)] + " ?";
        ex.gold_fact_doc_id = e * cfg.n_attributes + a;
        const int gold = value_of[static_cast<size_t>(e)][static_cast<size_t>(a)];
        std::vector<std::pair<int, int>> pool;  // (attribute, value)
        if (cfg.distractor_policy == "same_attribute") {
            for (int v = 0; v < cfg.n_values_per_attribute; ++v)
                if (v != gold) pool.emplace_back(a, v);
        } else {
            for (int pa = 0; pa < cfg.n_attributes; ++pa)
                for (int v = 0; v < cfg.n_values_per_attribute; ++v)
                    if (!(pa == a && v == gold)) pool.emplace_back(pa, v);
        }
        rng.shuffle(pool);
        ex.answer_index = static_cast<int>(rng.next_below(static_cast<uint64_t>(cfg.n_options)));
        int next_distractor = 0;
        for (int o = 0; o < cfg.n_options; ++o) {
            if (o == ex.answer_index) {
                ex.options.push_back(kValuePools[static_cast<size_t>(a)][static_cast<size_t>(gold)]);
            } else {
                const auto [pa, pv] = pool[static_cast<size_t>(next_distractor++)];
                ex.options.push_back(kValuePools[static_cast<size_t>(pa)][static_cast<size_t>(pv)]);
            }
        }
        return ex;
    };

    Dataset ds;
    ds.corpus = retrieval::make_corpus(fact_texts);
    for (int e = 0; e < n_train; ++e)
        for (int a = 0; a < cfg.n_attributes; ++a) ds.train.push_back(make_example(e, a));
    for (int e = n_train; e < cfg.n_entities; ++e)
        for (int a = 0; a < cfg.n_attributes; ++a)
            for (int variant = 0; variant < cfg.dev_variants; ++variant)
                ds.dev.push_back(make_example(e, a));

    // vocabulary, in first-appearance order over the whole task
    std::vector<std::string> words;
    auto add_words = [&](const std::string& text) {
        for (const auto& w : tokenize(text))
            if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
    };
    for (const auto& t : fact_texts) add_words(t);
    for (const auto& ex : ds.train) add_words(ex.question);
    for (const auto& ex : ds.dev) add_words(ex.question);
    ds.vocab = Vocab(words);

    // generation-time sanity: every dev gold fact must be in the BM25 top 5
    // for its question
    const InvertedIndex index = retrieval::build_index(ds.corpus, bm25_k1, bm25_b);
    for (const auto& ex : ds.dev) {
        const auto top = retrieval::sparse_retrieve(index, tokenize(ex.question), 5);
        const bool found = std::any_of(top.begin(), top.end(), [&](const KnowledgeCandidate& c) {
            return c.doc_id == ex.gold_fact_doc_id;
        });
        if (!found)
            throw DataError("generate_dataset: gold fact " + std::to_string(ex.gold_fact_doc_id) +
                            " not in BM25 top-5 for '" + ex.question + "'");
    }
    return ds;
}

void save_examples_jsonl(const std::vector<MCQExample>& examples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("dataset: cannot write '" + path + "'");
    for (const auto& ex : examples) {
        json j{{"question", ex.question},
               {"options", ex.options},
               {"answer", ex.answer_index},
               {"gold_fact_id", ex.gold_fact_doc_id}};
        out << j.dump() << '\n';
    }
}

std::vector<MCQExample> load_examples_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("dataset: cannot open '" + path + "'");
    std::vector<MCQExample> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("question") || !j.contains("options") ||
            !j.contains("answer"))
            throw DataError("dataset: malformed JSONL at line " + std::to_string(line_no));
        MCQExample ex;
        ex.question = j["question"].get<std::string>();
        ex.options = j["options"].get<std::vector<std::string>>();
        ex.answer_index = j["answer"].get<int>();
        ex.gold_fact_doc_id = j.value("gold_fact_id", -1);
        out.push_back(std::move(ex));
    }
    return out;
}

void TrainConfig::validate() const {
    if (epochs < 1 || batch_size < 1 || lr < 0.0 || warmup_steps < 0 || weight_decay < 0.0 ||
        clip_norm <= 0.0)
        throw ConfigError("train config: values out of range");
}

namespace {

// Decoupled weight decay, applied to everything except layer-norm
// parameters (the model has no other bias-like parameters).
class AdamW {
  public:
    AdamW(const std::vector<Parameter*>& params, const TrainConfig& cfg, int total_steps)
        : params_(params), cfg_(cfg), total_steps_(total_steps) {
        for (Parameter* p : params) {
            m_.push_back(Tensor::zeros(p->value.shape));
            v_.push_back(Tensor::zeros(p->value.shape));
        }
    }

    double schedule(int step) const {  // step is 1-based
        if (cfg_.warmup_steps > 0 && step <= cfg_.warmup_steps)
            return cfg_.lr * static_cast<double>(step) / cfg_.warmup_steps;
        const int rest = total_steps_ - cfg_.warmup_steps;
        if (rest <= 0) return cfg_.lr;
        const double frac = static_cast<double>(step - cfg_.warmup_steps) / rest;
        return cfg_.lr * std::max(0.0, 1.0 - frac);
    }

    void step() {
        ++t_;
        const double lr_t = schedule(t_);

        double sq = 0.0;
        for (Parameter* p : params_)
            for (double g : p->grad.data) sq += g * g;
        const double norm = std::sqrt(sq);
        const double clip = norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;

        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double bc1 = 1.0 - std::pow(b1, t_);
        const double bc2 = 1.0 - std::pow(b2, t_);
        for (size_t i = 0; i < params_.size(); ++i) {
            Parameter& p = *params_[i];
            const bool decay = p.name.find(".norm") == std::string::npos;
            const double wd = decay ? cfg_.weight_decay : 0.0;
            for (size_t j = 0; j < p.value.data.size(); ++j) {
                const double g = clip * p.grad.data[j];
                m_[i].data[j] = b1 * m_[i].data[j] + (1.0 - b1) * g;
                v_[i].data[j] = b2 * v_[i].data[j] + (1.0 - b2) * g * g;
                const double mhat = m_[i].data[j] / bc1;
                const double vhat = v_[i].data[j] / bc2;
                p.value.data[j] -= lr_t * (mhat / (std::sqrt(vhat) + eps) + wd * p.value.data[j]);
            }
        }
    }

    int steps_taken() const { return t_; }

  private:
    std::vector<Parameter*> params_;
    TrainConfig cfg_;
    int total_steps_;
    int t_ = 0;
    std::vector<Tensor> m_, v_;
};

std::vector<KnowledgeCandidate> retrieve_for(Model& model, const InvertedIndex& index,
                                             const std::string& question, int top_n_override = -1) {
    const InjectionConfig& ic = model.injection_config();
    if (ic.mode == FusionMode::kNone) return {};
    const int n = top_n_override >= 0 ? top_n_override : ic.top_n;
    return retrieval::retrieve(index, model.knowledge_embedder(), model.vocab(), question,
                               ic.sparse_m, n);
}

}  // namespace

TrainResult train(Model& model, const Dataset& data, const InvertedIndex& index,
                  const TrainConfig& tcfg) {
    tcfg.validate();
    if (data.train.empty()) throw DataError("train: empty training set");

    const auto params = model.parameters();
    const int n_train = static_cast<int>(data.train.size());
    const int batches_per_epoch = (n_train + tcfg.batch_size - 1) / tcfg.batch_size;
    AdamW opt(params, tcfg, tcfg.epochs * batches_per_epoch);

    const bool uses_retrieval = model.injection_config().mode != FusionMode::kNone;
    std::vector<std::vector<KnowledgeCandidate>> knowledge(data.train.size());

    TrainResult result;
    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        if (uses_retrieval && (!tcfg.freeze_retrieval || epoch == 0)) {
            for (size_t i = 0; i < data.train.size(); ++i)
                knowledge[i] = retrieve_for(model, index, data.train[i].question);
        }

        std::vector<int> order(data.train.size());
        std::iota(order.begin(), order.end(), 0);
        SplitMix64 shuffle_rng(tcfg.seed ^ (0x5affe11eULL + static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        for (int b = 0; b < batches_per_epoch; ++b) {
            const int lo = b * tcfg.batch_size;
            const int hi = std::min(n_train, lo + tcfg.batch_size);
            try {
                Tape tape;
                std::vector<Value> losses;
                for (int i = lo; i < hi; ++i) {
                    const MCQExample& ex = data.train[static_cast<size_t>(order[static_cast<size_t>(i)])];
                    std::vector<TokenSequence> opts;
                    for (const auto& o : ex.options) opts.push_back({model.vocab().encode_text(o)});
                    losses.push_back(model.mcq_loss(
                        tape, {model.vocab().encode_text(ex.question)}, opts,
                        knowledge[static_cast<size_t>(order[static_cast<size_t>(i)])], ex.answer_index));
                }
                Value batch_loss = tape.scale(tape.sum_all(tape.stack_scalars(losses)),
                                              1.0 / static_cast<double>(hi - lo));
                loss_sum += tape.value(batch_loss).data[0] * (hi - lo);
                tape.backward(batch_loss, params);
                opt.step();
            } catch (const NumericError& e) {
                throw NumericError("training diverged at step " +
                                   std::to_string(opt.steps_taken() + 1) + ": " + e.what());
            }
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = loss_sum / n_train;
        m.dev_accuracy = evaluate(model, data.dev, index, -1, &m.dev_gold_recall);
        result.curve.push_back(m);
    }
    return result;
}

double evaluate(Model& model, const std::vector<MCQExample>& examples, const InvertedIndex& index,
                int top_n_override, double* gold_recall) {
    if (examples.empty()) throw DataError("evaluate: empty dataset");
    const int n = static_cast<int>(examples.size());
    int correct = 0;
    int gold_hits = 0;
    bool failed = false;
    std::string failure;

#pragma omp parallel for schedule(static) reduction(+ : correct, gold_hits)
    for (int i = 0; i < n; ++i) {
        try {
            const MCQExample& ex = examples[static_cast<size_t>(i)];
            const auto knowledge = retrieve_for(model, index, ex.question, top_n_override);
            for (const auto& c : knowledge)
                if (c.doc_id == ex.gold_fact_doc_id) {
                    ++gold_hits;
                    break;
                }
            std::vector<TokenSequence> opts;
            for (const auto& o : ex.options) opts.push_back({model.vocab().encode_text(o)});
            const auto probs =
                model.mcq_score({model.vocab().encode_text(ex.question)}, opts, knowledge);
            const int pred = static_cast<int>(
                std::max_element(probs.begin(), probs.end()) - probs.begin());
            if (pred == ex.answer_index) ++correct;
        } catch (const std::exception& e) {
#pragma omp critical
            {
                failed = true;
                failure = e.what();
            }
        }
    }
    if (failed) throw NumericError("evaluate: " + failure);
    if (gold_recall != nullptr)
        *gold_recall = static_cast<double>(gold_hits) / static_cast<double>(n);
    return static_cast<double>(correct) / static_cast<double>(n);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    Dataset data = generate_dataset(cfg.task, cfg.bm25_k1, cfg.bm25_b);
    ModelConfig mc = cfg.model;
    if (mc.vocab_size == 0) mc.vocab_size = data.vocab.size();
    InvertedIndex index = retrieval::build_index(data.corpus, cfg.bm25_k1, cfg.bm25_b);
    ExperimentResult res{TrainResult{}, 0.0, Model(mc, data.vocab, cfg.injection), Dataset{},
                         InvertedIndex{}};
    res.curve = train(res.model, data, index, cfg.train);
    res.dev_accuracy = res.curve.curve.back().dev_accuracy;
    res.data = std::move(data);
    res.index = std::move(index);
    return res;
}

namespace {

std::string layers_label(const std::vector<int>& layers) {
    if (layers.empty()) return "-";
    std::string s;
    for (size_t i = 0; i < layers.size(); ++i) {
        if (i) s += '+';
        s += std::to_string(layers[i]);
    }
    return s;
}

void append_metrics(std::string& jsonl, const std::string& row, const TrainResult& r) {
    for (const auto& m : r.curve) {
        json j{{"row", row},
               {"epoch", m.epoch},
               {"train_loss", m.train_loss},
               {"dev_accuracy", m.dev_accuracy},
               {"dev_gold_recall", m.dev_gold_recall}};
        jsonl += j.dump();
        jsonl += '\n';
    }
}

}  // namespace

SweepResult sweep_layers(const ExperimentConfig& base,
                         const std::vector<std::vector<int>>& layer_sets) {
    std::vector<std::vector<int>> sets = layer_sets;
    std::vector<int> all;
    for (int l = 1; l <= base.model.num_layers; ++l) all.push_back(l);
    if (std::find(sets.begin(), sets.end(), all) == sets.end()) sets.push_back(all);

    SweepResult out;
    out.csv = "layers,mode,top_n,sparse_m,seed,epochs,dev_accuracy\n";
    for (const auto& set : sets) {
        ExperimentConfig cfg = base;
        cfg.injection.layers = set;
        ExperimentResult res = run_experiment(cfg);
        const std::string label = layers_label(set);
        out.csv += label + "," + to_string(cfg.injection.mode) + "," +
                   std::to_string(cfg.injection.top_n) + "," +
                   std::to_string(cfg.injection.sparse_m) + "," +
                   std::to_string(cfg.model.seed) + "," + std::to_string(cfg.train.epochs) + "," +
                   fmt_double(res.dev_accuracy) + "\n";
        append_metrics(out.metrics_jsonl, "layers=" + label, res.curve);
    }
    return out;
}

SweepResult sweep_topn(const ExperimentConfig& base, const std::vector<int>& ns, bool retrain) {
    for (int n : ns)
        if (n < 0 || n > base.injection.sparse_m)
            throw ConfigError("sweep_topn: N " + std::to_string(n) + " exceeds sparse_m " +
                              std::to_string(base.injection.sparse_m));

    SweepResult out;
    out.csv = "top_n,mode,layers,sparse_m,seed,epochs,retrain,dev_accuracy\n";
    auto emit = [&](int n, double acc) {
        out.csv += std::to_string(n) + "," + to_string(base.injection.mode) + "," +
                   layers_label(base.injection.layers) + "," +
                   std::to_string(base.injection.sparse_m) + "," +
                   std::to_string(base.model.seed) + "," + std::to_string(base.train.epochs) +
                   "," + (retrain ? "true" : "false") + "," + fmt_double(acc) + "\n";
    };

    if (retrain) {
        for (int n : ns) {
            ExperimentConfig cfg = base;
            cfg.injection.top_n = n;
            ExperimentResult res = run_experiment(cfg);
            emit(n, res.dev_accuracy);
            append_metrics(out.metrics_jsonl, "top_n=" + std::to_string(n), res.curve);
        }
    } else {
        ExperimentResult res = run_experiment(base);
        append_metrics(out.metrics_jsonl, "base", res.curve);
        for (int n : ns) emit(n, evaluate(res.model, res.data.dev, res.index, n));
    }
    return out;
}

std::vector<ActivationMatrix> dump_activations(Model& model, const InvertedIndex& index,
                                               const MCQExample& example, int64_t example_id) {
    if (model.injection_config().mode != FusionMode::kFfn)
        throw ConfigError("dump_activations: unsupported mode " +
                          to_string(model.injection_config().mode) + " (requires ffn)");
    const auto knowledge = retrieve_for(model, index, example.question);
    std::vector<std::vector<int>> kids;
    std::vector<std::string> texts;
    for (const auto& c : knowledge) {
        kids.push_back(model.vocab().encode_text(c.text));
        texts.push_back(c.text);
    }

    // gold-option input sequence: [CLS] Q [SEP] A
    TokenSequence q{model.vocab().encode_text(example.question)};
    TokenSequence a{model.vocab().encode_text(example.options[static_cast<size_t>(example.answer_index)])};
    TokenSequence seq;
    seq.ids.push_back(Vocab::kCls);
    seq.ids.insert(seq.ids.end(), q.ids.begin(), q.ids.end());
    seq.ids.push_back(Vocab::kSep);
    seq.ids.insert(seq.ids.end(), a.ids.begin(), a.ids.end());

    Tape tape;
    ActivationSink sink;
    model.encode(tape, seq, kids.empty() ? nullptr : &kids, &sink);

    std::vector<ActivationMatrix> out;
    for (auto& cap : sink) {
        ActivationMatrix m;
        m.values = std::move(cap.values);
        m.layer = cap.layer;
        m.example_id = example_id;
        m.knowledge = texts;
        out.push_back(std::move(m));
    }
    return out;
}

nlohmann::json activation_json(const ActivationMatrix& m) {
    json rows = json::array();
    for (int64_t i = 0; i < m.values.rows(); ++i) {
        json row = json::array();
        for (int64_t j = 0; j < m.values.cols(); ++j) row.push_back(m.values.at(i, j));
        rows.push_back(std::move(row));
    }
    return json{{"example_id", m.example_id},
                {"layer", m.layer},
                {"knowledge", m.knowledge},
                {"matrix", std::move(rows)}};
}

}  // namespace kformer::harness
