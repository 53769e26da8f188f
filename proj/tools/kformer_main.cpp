// kformer command line: index building, retrieval queries, synthetic dataset
// generation, training, evaluation, sweeps and activation dumps.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
// Failures print one machine-greppable line (E_CONFIG / E_DATA / E_NUMERIC)
// to stderr before anything else.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kformer/checkpoint.hpp"
#include "kformer/errors.hpp"
#include "kformer/harness.hpp"
#include "kformer/model.hpp"
#include "kformer/retrieval.hpp"
#include "kformer/runconfig.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kformer;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    // named flags; empty/negative means "not given"
    std::string seed_str;
    std::string mode;
    std::string layers;
    int topn = -1;
    int sparse_m = -1;
    std::string out_dir = "out";
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "JSON run configuration");
    cmd->add_option("--seed", o.seed_str, "override the run seed");
    cmd->add_option("--mode", o.mode, "fusion mode: none|ffn|attention|concat");
    cmd->add_option("--layers", o.layers, "injection layers as CSV, '-' for none");
    cmd->add_option("--topn", o.topn, "knowledge count N");
    cmd->add_option("--sparse-m", o.sparse_m, "sparse candidate count M");
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("overrides", o.overrides, "key=value configuration overrides");
}

RunConfig resolve_config(const CommonOpts& o) {
    RunConfig cfg = o.config_path.empty() ? RunConfig::defaults() : RunConfig::from_file(o.config_path);
    for (const auto& expr : o.overrides) cfg.apply_override_expr(expr);
    if (!o.seed_str.empty()) cfg.apply_override("seed", o.seed_str);
    if (!o.mode.empty()) cfg.apply_override("injection.mode", o.mode);
    if (!o.layers.empty()) cfg.apply_override("injection.layers", o.layers);
    if (o.topn >= 0) cfg.apply_override("injection.top_n", std::to_string(o.topn));
    if (o.sparse_m >= 0) cfg.apply_override("injection.sparse_m", std::to_string(o.sparse_m));
    cfg.finalize();
    return cfg;
}

std::string run_dir_name(const std::string& cmd, const RunConfig& cfg) {
    return cmd + "-mode=" + to_string(cfg.injection.mode) + "-seed=" + std::to_string(cfg.seed);
}

fs::path prepare_run_dir(const CommonOpts& o, const std::string& cmd, const RunConfig& cfg) {
    const fs::path dir = fs::path(o.out_dir) / run_dir_name(cmd, cfg);
    fs::create_directories(dir);
    std::ofstream rc(dir / "resolved_config.json");
    rc << cfg.to_json().dump(2) << '\n';
    return dir;
}

void echo_config(const RunConfig& cfg) {
    std::cout << "resolved config: " << cfg.to_json().dump() << '\n';
}

std::string fmt_full(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_metrics_jsonl(const harness::TrainResult& r, const fs::path& path) {
    std::ofstream out(path);
    for (const auto& m : r.curve) {
        json j{{"epoch", m.epoch},
               {"train_loss", m.train_loss},
               {"dev_accuracy", m.dev_accuracy},
               {"dev_gold_recall", m.dev_gold_recall}};
        out << j.dump() << '\n';
    }
}

json candidates_json(const std::vector<retrieval::KnowledgeCandidate>& cands) {
    json arr = json::array();
    for (const auto& c : cands) {
        json j{{"doc_id", c.doc_id}, {"text", c.text}, {"sparse_score", c.sparse_score}};
        if (c.has_dense) j["dense_score"] = c.dense_score;
        arr.push_back(std::move(j));
    }
    return arr;
}

int cmd_build_index(const std::string& corpus_path, const std::string& index_path, double k1,
                    double b) {
    const retrieval::Corpus corpus = retrieval::load_corpus_jsonl(corpus_path);
    const retrieval::InvertedIndex index = retrieval::build_index(corpus, k1, b);
    retrieval::save_index(index, index_path);
    std::cout << index.num_docs << " documents, " << index.postings.size()
              << " terms -> " << index_path << '\n';
    return 0;
}

int cmd_retrieve(const std::string& index_path, const std::string& checkpoint_path,
                 const std::string& query, int m, int n) {
    const retrieval::InvertedIndex index = retrieval::load_index(index_path);
    if (n > m) {
        std::cerr << "warning: clamping topn " << n << " to sparse-m " << m << '\n';
        n = m;
    }
    std::vector<retrieval::KnowledgeCandidate> cands;
    if (checkpoint_path.empty()) {
        cands = retrieval::sparse_retrieve(index, tokenize(query), m);
        if (static_cast<int>(cands.size()) > n) cands.resize(static_cast<size_t>(n));
    } else {
        Model model = load_checkpoint(checkpoint_path);
        cands = retrieval::retrieve(index, model.knowledge_embedder(), model.vocab(), query, m, n);
    }
    std::cout << candidates_json(cands).dump(2) << '\n';
    return 0;
}

int cmd_gen_data(const CommonOpts& o) {
    RunConfig cfg = resolve_config(o);
    echo_config(cfg);
    const harness::Dataset data = harness::generate_dataset(cfg.task, cfg.bm25_k1, cfg.bm25_b);
    fs::create_directories(o.out_dir);
    retrieval::save_corpus_jsonl(data.corpus, (fs::path(o.out_dir) / "corpus.jsonl").string());
    harness::save_examples_jsonl(data.train, (fs::path(o.out_dir) / "train.jsonl").string());
    harness::save_examples_jsonl(data.dev, (fs::path(o.out_dir) / "dev.jsonl").string());
    std::cout << data.corpus.documents.size() << " facts, " << data.train.size() << " train, "
              << data.dev.size() << " dev -> " << o.out_dir << '\n';
    return 0;
}

int cmd_train(const CommonOpts& o) {
    RunConfig cfg = resolve_config(o);
    echo_config(cfg);
    const fs::path dir = prepare_run_dir(o, "train", cfg);
    harness::ExperimentResult res = harness::run_experiment(cfg.experiment());
    for (const auto& m : res.curve.curve)
        std::cout << "epoch " << m.epoch << " train_loss " << fmt_full(m.train_loss)
                  << " dev_accuracy " << fmt_full(m.dev_accuracy) << " dev_gold_recall "
                  << fmt_full(m.dev_gold_recall) << '\n';
    write_metrics_jsonl(res.curve, dir / "metrics.jsonl");
    save_checkpoint(res.model, (dir / "checkpoint.kfc").string());
    std::cout << "dev_accuracy " << fmt_full(res.dev_accuracy) << '\n';
    std::cout << "artifacts in " << dir.string() << '\n';
    return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& checkpoint_path, const std::string& data_dir) {
    RunConfig cfg = resolve_config(o);
    echo_config(cfg);
    Model model = load_checkpoint(checkpoint_path);

    std::vector<harness::MCQExample> dev;
    retrieval::Corpus corpus;
    if (data_dir.empty()) {
        harness::Dataset data = harness::generate_dataset(cfg.task, cfg.bm25_k1, cfg.bm25_b);
        dev = std::move(data.dev);
        corpus = std::move(data.corpus);
    } else {
        corpus = retrieval::load_corpus_jsonl((fs::path(data_dir) / "corpus.jsonl").string());
        dev = harness::load_examples_jsonl((fs::path(data_dir) / "dev.jsonl").string());
    }
    const retrieval::InvertedIndex index = retrieval::build_index(corpus, cfg.bm25_k1, cfg.bm25_b);
    const double acc = harness::evaluate(model, dev, index);
    std::cout << "dev_accuracy " << fmt_full(acc) << '\n';
    return 0;
}

std::vector<std::vector<int>> parse_layer_sets(const std::string& spec, int num_layers) {
    std::vector<std::vector<int>> sets;
    if (spec.empty()) {
        // every-three-layers analog at toy depth: top, middle, bottom pairs
        // for L=4, plus all and none
        const int L = num_layers;
        if (L >= 2) {
            sets.push_back({L - 1, L});
            if (L >= 3) sets.push_back({L - 2, L - 1});
            sets.push_back({1, 2});
        } else {
            sets.push_back({1});
        }
        std::vector<int> all;
        for (int l = 1; l <= L; ++l) all.push_back(l);
        sets.push_back(all);
        sets.push_back({});
        return sets;
    }
    std::istringstream is(spec);
    std::string group;
    while (std::getline(is, group, ';')) {
        std::vector<int> set;
        if (group != "-" && !group.empty()) {
            std::istringstream gs(group);
            std::string tok;
            while (std::getline(gs, tok, ',')) set.push_back(std::stoi(tok));
        }
        sets.push_back(std::move(set));
    }
    return sets;
}

int cmd_sweep_layers(const CommonOpts& o, const std::string& sets_spec) {
    RunConfig cfg = resolve_config(o);
    echo_config(cfg);
    const auto sets = parse_layer_sets(sets_spec, cfg.model.num_layers);
    const harness::SweepResult sweep = harness::sweep_layers(cfg.experiment(), sets);
    fs::create_directories(o.out_dir);
    const fs::path csv = fs::path(o.out_dir) / "sweep_layers.csv";
    std::ofstream(csv) << sweep.csv;
    std::ofstream(fs::path(o.out_dir) / "sweep_layers_metrics.jsonl") << sweep.metrics_jsonl;
    std::cout << sweep.csv;
    std::cout << "wrote " << csv.string() << '\n';
    return 0;
}

int cmd_sweep_topn(const CommonOpts& o, const std::string& ns_spec, bool no_retrain) {
    RunConfig cfg = resolve_config(o);
    echo_config(cfg);
    std::vector<int> ns;
    {
        std::istringstream is(ns_spec);
        std::string tok;
        while (std::getline(is, tok, ',')) ns.push_back(std::stoi(tok));
    }
    const harness::SweepResult sweep = harness::sweep_topn(cfg.experiment(), ns, !no_retrain);
    fs::create_directories(o.out_dir);
    const fs::path csv = fs::path(o.out_dir) / "sweep_topn.csv";
    std::ofstream(csv) << sweep.csv;
    std::ofstream(fs::path(o.out_dir) / "sweep_topn_metrics.jsonl") << sweep.metrics_jsonl;
    std::cout << sweep.csv;
    std::cout << "wrote " << csv.string() << '\n';
    return 0;
}

int cmd_dump_activations(const CommonOpts& o, const std::string& checkpoint_path,
                         int example_index, const std::string& out_file) {
    RunConfig cfg = resolve_config(o);
    echo_config(cfg);
    Model model = load_checkpoint(checkpoint_path);
    harness::Dataset data = harness::generate_dataset(cfg.task, cfg.bm25_k1, cfg.bm25_b);
    if (example_index < 0 || example_index >= static_cast<int>(data.dev.size()))
        throw DataError("dump-activations: example index " + std::to_string(example_index) +
                        " outside dev set of " + std::to_string(data.dev.size()));
    const retrieval::InvertedIndex index =
        retrieval::build_index(data.corpus, cfg.bm25_k1, cfg.bm25_b);
    const auto mats = harness::dump_activations(
        model, index, data.dev[static_cast<size_t>(example_index)], example_index);
    std::ofstream out(out_file);
    if (!out) throw DataError("dump-activations: cannot write '" + out_file + "'");
    for (const auto& m : mats) out << harness::activation_json(m).dump() << '\n';
    std::cout << "wrote " << mats.size() << " matrices to " << out_file << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge injection in transformer feed-forward layers"};
    app.require_subcommand(1);

    // build-index
    auto* bi = app.add_subcommand("build-index", "build a BM25 inverted index from a JSONL corpus");
    std::string bi_corpus, bi_out = "index.json";
    double bi_k1 = 1.2, bi_b = 0.75;
    bi->add_option("--corpus", bi_corpus, "corpus JSONL")->required();
    bi->add_option("--out", bi_out, "index output path");
    bi->add_option("--k1", bi_k1, "BM25 k1");
    bi->add_option("--b", bi_b, "BM25 b");

    // retrieve
    auto* rt = app.add_subcommand("retrieve", "query an index, optionally dense re-ranked");
    std::string rt_index, rt_ckpt, rt_query;
    int rt_m = 100, rt_n = 5;
    rt->add_option("--index", rt_index, "index path")->required();
    rt->add_option("--checkpoint", rt_ckpt, "checkpoint for dense re-ranking");
    rt->add_option("--query", rt_query, "query text")->required();
    rt->add_option("--sparse-m", rt_m, "sparse candidate count M");
    rt->add_option("--topn", rt_n, "results to keep N");

    CommonOpts gd, tr, ev, sl, st, da;
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic MCQ task");
    add_common(gen, gd);
    auto* train_cmd = app.add_subcommand("train", "train a model on the synthetic task");
    add_common(train_cmd, tr);
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the dev set");
    std::string ev_ckpt, ev_data;
    add_common(eval_cmd, ev);
    eval_cmd->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
    eval_cmd->add_option("--data", ev_data, "dataset directory (default: regenerate from config)");
    auto* sweepl = app.add_subcommand("sweep-layers", "dev accuracy per injection-layer set");
    std::string sl_sets;
    add_common(sweepl, sl);
    sweepl->add_option("--sets", sl_sets, "semicolon-separated layer sets, e.g. '3,4;1,2;-'");
    auto* sweepn = app.add_subcommand("sweep-topn", "dev accuracy per knowledge count N");
    std::string st_ns = "1,5,10,15,20,25";
    bool st_noretrain = false;
    add_common(sweepn, st);
    sweepn->add_option("--ns", st_ns, "comma-separated N values");
    sweepn->add_flag("--no-retrain", st_noretrain, "re-evaluate one trained model per N");
    auto* dump = app.add_subcommand("dump-activations", "knowledge-slot activation matrices");
    std::string da_ckpt, da_out = "activations.jsonl";
    int da_example = 0;
    add_common(dump, da);
    dump->add_option("--checkpoint", da_ckpt, "checkpoint path")->required();
    dump->add_option("--example", da_example, "dev example index");
    dump->add_option("--out-file", da_out, "output JSONL path");

    try {
        app.parse(argc, argv);
        if (bi->parsed()) return cmd_build_index(bi_corpus, bi_out, bi_k1, bi_b);
        if (rt->parsed()) return cmd_retrieve(rt_index, rt_ckpt, rt_query, rt_m, rt_n);
        if (gen->parsed()) return cmd_gen_data(gd);
        if (train_cmd->parsed()) return cmd_train(tr);
        if (eval_cmd->parsed()) return cmd_eval(ev, ev_ckpt, ev_data);
        if (sweepl->parsed()) return cmd_sweep_layers(sl, sl_sets);
        if (sweepn->parsed()) return cmd_sweep_topn(st, st_ns, st_noretrain);
        if (dump->parsed()) return cmd_dump_activations(da, da_ckpt, da_example, da_out);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "E_CONFIG: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "E_CONFIG: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "E_DATA: " << e.what() << '\n';
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "E_NUMERIC: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "E_INTERNAL: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
