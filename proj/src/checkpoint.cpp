#include "prunesim/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace prunesim {

namespace {

void write_f64_le(std::ostream& os, std::span<const double> v) {
    for (double d : v) {
        auto bits = std::bit_cast<std::uint64_t>(d);
        char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
        os.write(buf, 8);
    }
}

void read_f64_le(std::istream& is, std::span<double> v, const char* what) {
    for (double& d : v) {
        char buf[8];
        is.read(buf, 8);
        if (!is) throw std::invalid_argument(std::string("checkpoint truncated in ") + what);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
        d = std::bit_cast<double>(bits);
    }
    require_finite(v, what);
}

nlohmann::ordered_json header_json(const ModelConfig& c) {
    nlohmann::ordered_json j;
    j["format"] = kCheckpointFormat;
    j["d_model"] = c.d_model;
    j["d_ff"] = c.d_ff;
    j["n_layers"] = c.n_layers;
    j["n_heads"] = c.n_heads;
    j["n_kv_heads"] = c.n_kv_heads;
    j["vocab"] = c.vocab;
    j["max_seq"] = c.max_seq;
    j["seed"] = c.seed;
    return j;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    ckpt.config.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::invalid_argument("cannot open checkpoint for writing: " + path.string());
    os << header_json(ckpt.config).dump() << '\n';
    write_f64_le(os, ckpt.tok_embedding.data());
    write_f64_le(os, ckpt.pos_embedding.data());
    for (const LayerWeights& w : ckpt.layers) {
        write_f64_le(os, w.wq.data());
        write_f64_le(os, w.wk.data());
        write_f64_le(os, w.wv.data());
        write_f64_le(os, w.wo.data());
        write_f64_le(os, w.attn_norm);
        write_f64_le(os, w.ffn_norm);
        write_f64_le(os, w.gate.data());
        write_f64_le(os, w.up.data());
        write_f64_le(os, w.down.data());
    }
    write_f64_le(os, ckpt.final_norm);
    if (!os) throw std::invalid_argument("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::invalid_argument("cannot open checkpoint: " + path.string());
    std::string header;
    if (!std::getline(is, header))
        throw std::invalid_argument("checkpoint missing header line: " + path.string());

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    if (!j.contains("format") || j["format"] != kCheckpointFormat)
        throw std::invalid_argument("checkpoint format version mismatch (want prunesim-ckpt-v1)");

    ModelConfig cfg;
    cfg.d_model = j.at("d_model").get<int>();
    cfg.d_ff = j.at("d_ff").get<int>();
    cfg.n_layers = j.at("n_layers").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.n_kv_heads = j.at("n_kv_heads").get<int>();
    cfg.vocab = j.at("vocab").get<int>();
    cfg.max_seq = j.at("max_seq").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.validate();

    const auto dm = static_cast<std::size_t>(cfg.d_model);
    const auto dff = static_cast<std::size_t>(cfg.d_ff);
    const auto kv = static_cast<std::size_t>(cfg.kv_dim());

    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.tok_embedding = Matrix(static_cast<std::size_t>(cfg.vocab), dm);
    ckpt.pos_embedding = Matrix(static_cast<std::size_t>(cfg.max_seq), dm);
    read_f64_le(is, ckpt.tok_embedding.data(), "tok_embedding");
    read_f64_le(is, ckpt.pos_embedding.data(), "pos_embedding");
    ckpt.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (LayerWeights& w : ckpt.layers) {
        w.wq = Matrix(dm, dm);
        w.wk = Matrix(kv, dm);
        w.wv = Matrix(kv, dm);
        w.wo = Matrix(dm, dm);
        w.attn_norm.resize(dm);
        w.ffn_norm.resize(dm);
        w.gate = Matrix(dff, dm);
        w.up = Matrix(dff, dm);
        w.down = Matrix(dm, dff);
        read_f64_le(is, w.wq.data(), "wq");
        read_f64_le(is, w.wk.data(), "wk");
        read_f64_le(is, w.wv.data(), "wv");
        read_f64_le(is, w.wo.data(), "wo");
        read_f64_le(is, w.attn_norm, "attn_norm");
        read_f64_le(is, w.ffn_norm, "ffn_norm");
        read_f64_le(is, w.gate.data(), "gate");
        read_f64_le(is, w.up.data(), "up");
        read_f64_le(is, w.down.data(), "down");
    }
    ckpt.final_norm.resize(dm);
    read_f64_le(is, ckpt.final_norm, "final_norm");
    if (is.peek() != EOF)
        throw std::invalid_argument("checkpoint has trailing bytes: " + path.string());
    return ckpt;
}

}  // namespace prunesim
