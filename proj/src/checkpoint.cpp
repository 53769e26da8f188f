#include "kformer/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "kformer/errors.hpp"

namespace kformer {

namespace {

constexpr char kMagic[] = "KFCKPT";
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    os.write(buf, 4);
}

uint32_t read_u32(std::istream& is) {
    char buf[4];
    is.read(buf, 4);
    if (!is) throw DataError("checkpoint: truncated file");
    uint32_t v;
    std::memcpy(&v, buf, 4);
    return v;
}

void write_i64(std::ostream& os, int64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    os.write(buf, 8);
}

int64_t read_i64(std::istream& is) {
    char buf[8];
    is.read(buf, 8);
    if (!is) throw DataError("checkpoint: truncated file");
    int64_t v;
    std::memcpy(&v, buf, 8);
    return v;
}

std::string header_text(Model& model) {
    const ModelConfig& mc = model.config();
    const InjectionConfig& ic = model.injection_config();
    std::ostringstream os;
    os << "num_layers=" << mc.num_layers << '\n'
       << "hidden=" << mc.hidden << '\n'
       << "intermediate=" << mc.intermediate << '\n'
       << "num_heads=" << mc.num_heads << '\n'
       << "vocab_size=" << mc.vocab_size << '\n'
       << "max_seq_len=" << mc.max_seq_len << '\n'
       << "seed=" << mc.seed << '\n'
       << "mode=" << to_string(ic.mode) << '\n';
    os << "inject_layers=";
    for (size_t i = 0; i < ic.layers.size(); ++i) {
        if (i) os << ',';
        os << ic.layers[i];
    }
    os << '\n';
    os << "top_n=" << ic.top_n << '\n' << "sparse_m=" << ic.sparse_m << '\n';
    os << "vocab=";
    const auto& words = model.vocab().words();
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) os << ' ';
        os << words[i];
    }
    os << '\n';
    return os.str();
}

std::map<std::string, std::string> parse_header(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("checkpoint: malformed header line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

}  // namespace

void save_checkpoint(Model& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("checkpoint: cannot write '" + path + "'");
    os.write(kMagic, sizeof(kMagic) - 1);
    write_u32(os, kVersion);
    const std::string header = header_text(model);
    write_u32(os, static_cast<uint32_t>(header.size()));
    os.write(header.data(), static_cast<std::streamsize>(header.size()));

    const auto params = model.parameters();
    write_u32(os, static_cast<uint32_t>(params.size()));
    for (const Parameter* p : params) {
        write_u32(os, static_cast<uint32_t>(p->name.size()));
        os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        write_u32(os, static_cast<uint32_t>(p->value.shape.size()));
        for (int64_t d : p->value.shape) write_i64(os, d);
        os.write(reinterpret_cast<const char*>(p->value.data.data()),
                 static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
    }
    if (!os) throw DataError("checkpoint: write failed for '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open '" + path + "'");
    char magic[sizeof(kMagic) - 1];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw DataError("checkpoint: '" + path + "' is not a kformer checkpoint");
    const uint32_t version = read_u32(is);
    if (version != kVersion)
        throw DataError("checkpoint: unsupported format version " + std::to_string(version));
    const uint32_t hlen = read_u32(is);
    std::string header(hlen, '\0');
    is.read(header.data(), hlen);
    if (!is) throw DataError("checkpoint: truncated header");
    const auto kv = parse_header(header);

    auto need = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw DataError("checkpoint: missing header key '" + key + "'");
        return it->second;
    };

    ModelConfig mc;
    mc.num_layers = std::stoi(need("num_layers"));
    mc.hidden = std::stoi(need("hidden"));
    mc.intermediate = std::stoi(need("intermediate"));
    mc.num_heads = std::stoi(need("num_heads"));
    mc.vocab_size = std::stoi(need("vocab_size"));
    mc.max_seq_len = std::stoi(need("max_seq_len"));
    mc.seed = std::stoull(need("seed"));

    InjectionConfig ic;
    ic.mode = fusion_mode_from_string(need("mode"));
    {
        std::istringstream ls(need("inject_layers"));
        std::string tok;
        while (std::getline(ls, tok, ','))
            if (!tok.empty()) ic.layers.push_back(std::stoi(tok));
    }
    ic.top_n = std::stoi(need("top_n"));
    ic.sparse_m = std::stoi(need("sparse_m"));

    std::vector<std::string> words;
    {
        std::istringstream ws(need("vocab"));
        std::string w;
        while (ws >> w) words.push_back(w);
    }
    if (words.size() < 3 || words[0] != "[CLS]" || words[1] != "[SEP]" || words[2] != "[UNK]")
        throw DataError("checkpoint: malformed vocabulary header");
    Vocab vocab(std::vector<std::string>(words.begin() + 3, words.end()));

    Model model(mc, vocab, ic);

    const uint32_t n_params = read_u32(is);
    const auto params = model.parameters();
    if (n_params != params.size())
        throw DataError("checkpoint: expected " + std::to_string(params.size()) +
                        " parameters, file has " + std::to_string(n_params));
    for (uint32_t i = 0; i < n_params; ++i) {
        const uint32_t nlen = read_u32(is);
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        const uint32_t rank = read_u32(is);
        std::vector<int64_t> shape(rank);
        for (uint32_t r = 0; r < rank; ++r) shape[r] = read_i64(is);
        Parameter& p = model.param(name);
        if (p.value.shape != shape)
            throw DataError("checkpoint: shape mismatch for '" + name + "'");
        is.read(reinterpret_cast<char*>(p.value.data.data()),
                static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
        if (!is) throw DataError("checkpoint: truncated parameter '" + name + "'");
    }
    return model;
}

}  // namespace kformer
