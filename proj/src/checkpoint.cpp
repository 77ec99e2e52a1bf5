#include "lssa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "lssa/error.hpp"

namespace lssa {

namespace {

constexpr char kMagic[] = "LSSA1\n";
constexpr int kVersion = 1;

void put_le(std::vector<char>& out, double v) {
    auto u = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

double get_le(const unsigned char* p) {
    std::uint64_t u = 0;
    for (int i = 7; i >= 0; --i) u = (u << 8) | p[i];
    return std::bit_cast<double>(u);
}

}  // namespace

const Matrix& Checkpoint::tensor(const std::string& name, std::size_t rows, std::size_t cols) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw CheckpointError("checkpoint lacks tensor '" + name + "'");
    if (it->second.rows() != rows || it->second.cols() != cols)
        throw CheckpointError("tensor '" + name + "' has shape " + std::to_string(it->second.rows()) +
                              "x" + std::to_string(it->second.cols()) + ", expected " +
                              std::to_string(rows) + "x" + std::to_string(cols));
    return it->second;
}

void Checkpoint::load_into(std::span<const NamedParam> params) const {
    for (const auto& p : params) p.block->value = tensor(p.name, p.block->rows(), p.block->cols());
}

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     std::span<const NamedParam> params) {
    nlohmann::ordered_json header;
    header["version"] = kVersion;
    header["vocab_size"] = meta.config.vocab_size;
    header["embed_dim"] = meta.config.embed_dim;
    header["hidden_dim"] = meta.config.hidden_dim;
    header["layers"] = meta.config.layers;
    header["dropout_keep"] = meta.config.dropout_keep;
    header["master_seed"] = meta.master_seed;
    header["stage"] = meta.stage;
    auto shapes = nlohmann::ordered_json::array();
    for (const auto& p : params)
        shapes.push_back({{"name", p.name}, {"rows", p.block->rows()}, {"cols", p.block->cols()}});
    header["params"] = shapes;

    std::vector<char> body;
    for (const auto& p : params)
        for (double v : p.block->value.data()) put_le(body, v);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint " + path);
    f << kMagic << header.dump() << '\n';
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!f) throw IoError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path);
    std::string magic, header_line;
    if (!std::getline(f, magic) || magic + "\n" != kMagic)
        throw CheckpointError(path + ": bad magic, not an LSSA1 checkpoint");
    if (!std::getline(f, header_line)) throw CheckpointError(path + ": missing header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path + ": malformed header: " + e.what());
    }

    Checkpoint ck;
    try {
        if (header.at("version").get<int>() != kVersion)
            throw CheckpointError(path + ": unsupported version");
        ck.meta.config.vocab_size = header.at("vocab_size").get<std::size_t>();
        ck.meta.config.embed_dim = header.at("embed_dim").get<std::size_t>();
        ck.meta.config.hidden_dim = header.at("hidden_dim").get<std::size_t>();
        ck.meta.config.layers = header.at("layers").get<std::size_t>();
        ck.meta.config.dropout_keep = header.at("dropout_keep").get<double>();
        ck.meta.master_seed = header.at("master_seed").get<std::uint64_t>();
        ck.meta.stage = header.at("stage").get<std::string>();

        std::vector<unsigned char> buf(8);
        for (const auto& s : header.at("params")) {
            const auto rows = s.at("rows").get<std::size_t>();
            const auto cols = s.at("cols").get<std::size_t>();
            Matrix m(rows, cols);
            buf.resize(m.size() * 8);
            f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
            if (static_cast<std::size_t>(f.gcount()) != buf.size())
                throw CheckpointError(path + ": truncated tensor data");
            auto d = m.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = get_le(buf.data() + 8 * i);
            ck.tensors.emplace(s.at("name").get<std::string>(), std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path + ": header field error: " + e.what());
    }
    ck.meta.config.validate();
    return ck;
}

}  // namespace lssa
