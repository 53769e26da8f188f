#include "kformer/runconfig.hpp"

#include <fstream>
#include <sstream>

#include "kformer/errors.hpp"

namespace kformer {

using nlohmann::json;

namespace {

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    if (s == "-" || s.empty()) return out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        try {
            out.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw ConfigError("invalid integer '" + tok + "' in list '" + s + "'");
        }
    }
    return out;
}

int to_int(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("invalid integer '" + v + "' for key '" + key + "'");
    }
}

double to_double(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("invalid number '" + v + "' for key '" + key + "'");
    }
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("invalid bool '" + v + "' for key '" + key + "' (use true/false)");
}

void reject_unknown(const json& j, const std::string& scope,
                    const std::vector<std::string>& known) {
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown config key '" + (scope.empty() ? key : scope + "." + key) +
                              "'");
    }
}

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    c.model.vocab_size = 0;  // sized from the generated vocabulary
    c.injection.mode = FusionMode::kFfn;
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config: malformed JSON in '" + path + "'");
    if (!j.is_object()) throw ConfigError("config: top level must be an object");

    RunConfig c = defaults();
    reject_unknown(j, "", {"seed", "model", "injection", "train", "task", "retrieval"});
    try {
        if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
        if (j.contains("model")) {
            const json& m = j["model"];
            reject_unknown(m, "model",
                           {"num_layers", "hidden", "intermediate", "num_heads", "vocab_size",
                            "max_seq_len"});
            c.model.num_layers = m.value("num_layers", c.model.num_layers);
            c.model.hidden = m.value("hidden", c.model.hidden);
            c.model.intermediate = m.value("intermediate", c.model.intermediate);
            c.model.num_heads = m.value("num_heads", c.model.num_heads);
            c.model.vocab_size = m.value("vocab_size", c.model.vocab_size);
            c.model.max_seq_len = m.value("max_seq_len", c.model.max_seq_len);
        }
        if (j.contains("injection")) {
            const json& m = j["injection"];
            reject_unknown(m, "injection", {"mode", "layers", "top_n", "sparse_m"});
            if (m.contains("mode")) c.injection.mode = fusion_mode_from_string(m["mode"].get<std::string>());
            if (m.contains("layers")) {
                c.injection.layers = m["layers"].get<std::vector<int>>();
                c.layers_set_ = true;
            }
            c.injection.top_n = m.value("top_n", c.injection.top_n);
            c.injection.sparse_m = m.value("sparse_m", c.injection.sparse_m);
        }
        if (j.contains("train")) {
            const json& m = j["train"];
            reject_unknown(m, "train",
                           {"epochs", "batch_size", "lr", "warmup_steps", "weight_decay",
                            "clip_norm", "freeze_retrieval"});
            c.train.epochs = m.value("epochs", c.train.epochs);
            c.train.batch_size = m.value("batch_size", c.train.batch_size);
            c.train.lr = m.value("lr", c.train.lr);
            c.train.warmup_steps = m.value("warmup_steps", c.train.warmup_steps);
            c.train.weight_decay = m.value("weight_decay", c.train.weight_decay);
            c.train.clip_norm = m.value("clip_norm", c.train.clip_norm);
            c.train.freeze_retrieval = m.value("freeze_retrieval", c.train.freeze_retrieval);
        }
        if (j.contains("task")) {
            const json& m = j["task"];
            reject_unknown(m, "task",
                           {"n_entities", "n_attributes", "n_values_per_attribute", "n_options",
                            "dev_fraction", "dev_variants", "distractor_policy"});
            c.task.n_entities = m.value("n_entities", c.task.n_entities);
            c.task.n_attributes = m.value("n_attributes", c.task.n_attributes);
            c.task.n_values_per_attribute =
                m.value("n_values_per_attribute", c.task.n_values_per_attribute);
            c.task.n_options = m.value("n_options", c.task.n_options);
            c.task.dev_fraction = m.value("dev_fraction", c.task.dev_fraction);
            c.task.dev_variants = m.value("dev_variants", c.task.dev_variants);
            c.task.distractor_policy = m.value("distractor_policy", c.task.distractor_policy);
        }
        if (j.contains("retrieval")) {
            const json& m = j["retrieval"];
            reject_unknown(m, "retrieval", {"k1", "b"});
            c.bm25_k1 = m.value("k1", c.bm25_k1);
            c.bm25_b = m.value("b", c.bm25_b);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

const std::vector<std::string>& RunConfig::valid_keys() {
    static const std::vector<std::string> keys = {
        "seed",
        "model.num_layers", "model.hidden", "model.intermediate", "model.num_heads",
        "model.vocab_size", "model.max_seq_len",
        "injection.mode", "injection.layers", "injection.top_n", "injection.sparse_m",
        "train.epochs", "train.batch_size", "train.lr", "train.warmup_steps",
        "train.weight_decay", "train.clip_norm", "train.freeze_retrieval",
        "task.n_entities", "task.n_attributes", "task.n_values_per_attribute", "task.n_options",
        "task.dev_fraction", "task.dev_variants", "task.distractor_policy",
        "retrieval.k1", "retrieval.b",
    };
    return keys;
}

void RunConfig::apply_override(const std::string& key, const std::string& value) {
    if (key == "seed") seed = static_cast<uint64_t>(std::stoull(value));
    else if (key == "model.num_layers") model.num_layers = to_int(value, key);
    else if (key == "model.hidden") model.hidden = to_int(value, key);
    else if (key == "model.intermediate") model.intermediate = to_int(value, key);
    else if (key == "model.num_heads") model.num_heads = to_int(value, key);
    else if (key == "model.vocab_size") model.vocab_size = to_int(value, key);
    else if (key == "model.max_seq_len") model.max_seq_len = to_int(value, key);
    else if (key == "injection.mode") injection.mode = fusion_mode_from_string(value);
    else if (key == "injection.layers") { injection.layers = parse_int_list(value); layers_set_ = true; }
    else if (key == "injection.top_n") injection.top_n = to_int(value, key);
    else if (key == "injection.sparse_m") injection.sparse_m = to_int(value, key);
    else if (key == "train.epochs") train.epochs = to_int(value, key);
    else if (key == "train.batch_size") train.batch_size = to_int(value, key);
    else if (key == "train.lr") train.lr = to_double(value, key);
    else if (key == "train.warmup_steps") train.warmup_steps = to_int(value, key);
    else if (key == "train.weight_decay") train.weight_decay = to_double(value, key);
    else if (key == "train.clip_norm") train.clip_norm = to_double(value, key);
    else if (key == "train.freeze_retrieval") train.freeze_retrieval = to_bool(value, key);
    else if (key == "task.n_entities") task.n_entities = to_int(value, key);
    else if (key == "task.n_attributes") task.n_attributes = to_int(value, key);
    else if (key == "task.n_values_per_attribute") task.n_values_per_attribute = to_int(value, key);
    else if (key == "task.n_options") task.n_options = to_int(value, key);
    else if (key == "task.dev_fraction") task.dev_fraction = to_double(value, key);
    else if (key == "task.dev_variants") task.dev_variants = to_int(value, key);
    else if (key == "task.distractor_policy") task.distractor_policy = value;
    else if (key == "retrieval.k1") bm25_k1 = to_double(value, key);
    else if (key == "retrieval.b") bm25_b = to_double(value, key);
    else {
        std::string valid;
        for (const auto& k : valid_keys()) valid += " " + k;
        throw ConfigError("unknown override key '" + key + "'; valid keys:" + valid);
    }
}

void RunConfig::apply_override_expr(const std::string& expr) {
    const auto eq = expr.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override '" + expr + "' is not of the form key=value");
    apply_override(expr.substr(0, eq), expr.substr(eq + 1));
}

void RunConfig::finalize() {
    if (!layers_set_) {
        injection.layers = (injection.mode == FusionMode::kFfn ||
                            injection.mode == FusionMode::kAttention)
                               ? top_k_layers(model.num_layers, 3)
                               : std::vector<int>{};
        layers_set_ = true;
    }
    model.seed = seed;
    train.seed = seed;
    task.seed = seed;
    // vocab_size 0 is sized from the data later; validate() needs a stand-in
    ModelConfig check = model;
    if (check.vocab_size == 0) check.vocab_size = 1;
    check.validate();
    injection.validate(model.num_layers);
    train.validate();
    task.validate();
    if (bm25_k1 < 0.0 || bm25_b < 0.0 || bm25_b > 1.0)
        throw ConfigError("retrieval: require k1 >= 0 and b in [0,1]");
}

json RunConfig::to_json() const {
    return json{
        {"seed", seed},
        {"model",
         {{"num_layers", model.num_layers},
          {"hidden", model.hidden},
          {"intermediate", model.intermediate},
          {"num_heads", model.num_heads},
          {"vocab_size", model.vocab_size},
          {"max_seq_len", model.max_seq_len}}},
        {"injection",
         {{"mode", to_string(injection.mode)},
          {"layers", injection.layers},
          {"top_n", injection.top_n},
          {"sparse_m", injection.sparse_m}}},
        {"train",
         {{"epochs", train.epochs},
          {"batch_size", train.batch_size},
          {"lr", train.lr},
          {"warmup_steps", train.warmup_steps},
          {"weight_decay", train.weight_decay},
          {"clip_norm", train.clip_norm},
          {"freeze_retrieval", train.freeze_retrieval}}},
        {"task",
         {{"n_entities", task.n_entities},
          {"n_attributes", task.n_attributes},
          {"n_values_per_attribute", task.n_values_per_attribute},
          {"n_options", task.n_options},
          {"dev_fraction", task.dev_fraction},
          {"dev_variants", task.dev_variants},
          {"distractor_policy", task.distractor_policy}}},
        {"retrieval", {{"k1", bm25_k1}, {"b", bm25_b}}},
    };
}

harness::ExperimentConfig RunConfig::experiment() const {
    harness::ExperimentConfig e;
    e.model = model;
    e.injection = injection;
    e.train = train;
    e.task = task;
    e.bm25_k1 = bm25_k1;
    e.bm25_b = bm25_b;
    return e;
}

}  // namespace kformer
