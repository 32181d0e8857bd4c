#include "cellokit/error.hpp"
#include "cellokit/io.hpp"
#include "cellokit/trainer.hpp"

#include <bit>
#include <cstring>
#include <map>
#include <sstream>

namespace cellokit::trainer {

namespace {

constexpr std::string_view magic = "CELLOKIT";
constexpr std::string_view end_marker = "END!";

class Writer {
public:
    void raw(std::string_view s) { out_.append(s); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
        }
    }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s);
    }
    void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::string_view raw(std::size_t n) {
        if (bytes_.size() - pos_ < n) {
            throw Error(ErrorKind::CorruptCheckpoint, "truncated at byte " + std::to_string(pos_));
        }
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint32_t u32() {
        const auto s = raw(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
        }
        return v;
    }
    std::string str() {
        const auto n = u32();
        return std::string(raw(n));
    }
    float f32() { return std::bit_cast<float>(u32()); }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

std::string config_text(const model::ModelConfig& c) {
    std::ostringstream o;
    o << "n_layers=" << c.n_layers << '\n'
      << "n_heads=" << c.n_heads << '\n'
      << "embed_dim=" << c.embed_dim << '\n'
      << "ffn_dim=" << c.ffn_dim << '\n'
      << "vocab_size=" << c.vocab_size << '\n'
      << "max_len=" << c.max_len << '\n'
      << "dropout=" << std::bit_cast<std::uint64_t>(c.dropout) << '\n'
      << "temperature=" << std::bit_cast<std::uint64_t>(c.temperature) << '\n'
      << "seed=" << c.seed << '\n'
      << "normalize_embeddings=" << (c.normalize_embeddings ? 1 : 0) << '\n'
      << "tie_mgp_projection=" << (c.tie_mgp_projection ? 1 : 0) << '\n';
    return o.str();
}

model::ModelConfig parse_config_text(const std::string& text) {
    std::map<std::string, std::uint64_t> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::CorruptCheckpoint, "bad config line '" + line + "'");
        }
        try {
            kv[line.substr(0, eq)] = std::stoull(line.substr(eq + 1));
        } catch (const std::exception&) {
            throw Error(ErrorKind::CorruptCheckpoint, "bad config value '" + line + "'");
        }
    }
    auto get = [&](const char* key) {
        auto it = kv.find(key);
        if (it == kv.end()) {
            throw Error(ErrorKind::CorruptCheckpoint, std::string("config lacks ") + key);
        }
        return it->second;
    };
    model::ModelConfig c;
    c.n_layers = get("n_layers");
    c.n_heads = get("n_heads");
    c.embed_dim = get("embed_dim");
    c.ffn_dim = get("ffn_dim");
    c.vocab_size = get("vocab_size");
    c.max_len = get("max_len");
    c.dropout = std::bit_cast<double>(get("dropout"));
    c.temperature = std::bit_cast<double>(get("temperature"));
    c.seed = get("seed");
    c.normalize_embeddings = get("normalize_embeddings") != 0;
    c.tie_mgp_projection = get("tie_mgp_projection") != 0;
    return c;
}

} // namespace

std::string serialize_checkpoint(const model::ModelState& state) {
    Writer w;
    w.raw(magic);
    w.u32(checkpoint_version);
    w.str(config_text(state.config()));
    w.u32(static_cast<std::uint32_t>(state.n_types()));
    for (const auto& t : state.type_ids()) {
        w.str(t);
    }
    const auto& params = state.parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        w.str(p.name);
        w.u32(static_cast<std::uint32_t>(p.value.rows));
        w.u32(static_cast<std::uint32_t>(p.value.cols));
        for (double v : p.value.data) {
            w.f32(static_cast<float>(v));
        }
    }
    w.raw(end_marker);
    return w.take();
}

model::ModelState deserialize_checkpoint(std::string_view bytes) {
    Reader r(bytes);
    if (bytes.size() < magic.size() || r.raw(magic.size()) != magic) {
        throw Error(ErrorKind::CorruptCheckpoint, "missing CELLOKIT magic");
    }
    const auto version = r.u32();
    if (version != checkpoint_version) {
        throw Error(ErrorKind::VersionMismatch,
                    "checkpoint format version " + std::to_string(version) + ", expected " + std::to_string(checkpoint_version));
    }
    const auto config = parse_config_text(r.str());
    try {
        config.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::CorruptCheckpoint, e.what());
    }
    const auto n_types = r.u32();
    std::vector<std::string> types;
    for (std::uint32_t i = 0; i < n_types; ++i) {
        types.push_back(r.str());
    }
    auto state = model::ModelState::empty(config, types);
    const auto n_params = r.u32();
    if (n_params != state.parameters().size()) {
        throw Error(ErrorKind::CorruptCheckpoint, "tensor count " + std::to_string(n_params) + " does not match the model layout");
    }
    for (std::uint32_t i = 0; i < n_params; ++i) {
        const auto name = r.str();
        if (!state.has_param(name)) {
            throw Error(ErrorKind::CorruptCheckpoint, "unknown tensor " + name);
        }
        auto& p = state.param(name);
        const auto rows = r.u32();
        const auto cols = r.u32();
        if (rows != p.value.rows || cols != p.value.cols) {
            throw Error(ErrorKind::CorruptCheckpoint, "tensor " + name + " has the wrong shape");
        }
        for (double& v : p.value.data) {
            v = static_cast<double>(r.f32());
        }
    }
    if (r.raw(end_marker.size()) != end_marker || !r.at_end()) {
        throw Error(ErrorKind::CorruptCheckpoint, "missing end marker");
    }
    return state;
}

void save_checkpoint(const model::ModelState& state, const std::filesystem::path& path) {
    io::write_atomic(path, serialize_checkpoint(state));
}

model::ModelState load_checkpoint(const std::filesystem::path& path) {
    return deserialize_checkpoint(io::read_file(path));
}

model::ModelState load_checkpoint(const std::filesystem::path& path, const CheckpointExpectation& expected) {
    auto state = load_checkpoint(path);
    if (state.config().vocab_size != expected.vocab_size) {
        throw Error(ErrorKind::VersionMismatch, "checkpoint vocab size " + std::to_string(state.config().vocab_size) +
                                                    " differs from expected vocab size " + std::to_string(expected.vocab_size));
    }
    if (state.type_ids() != expected.type_ids) {
        throw Error(ErrorKind::VersionMismatch, "checkpoint type ordering (" + std::to_string(state.n_types()) +
                                                    " types) differs from the expected ordering (" +
                                                    std::to_string(expected.type_ids.size()) + " types)");
    }
    return state;
}

} // namespace cellokit::trainer
