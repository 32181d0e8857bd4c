#include "cellokit/model.hpp"
#include "cellokit/error.hpp"
#include "cellokit/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace cellokit::model {

namespace {

double as_float(double v) {
    return static_cast<double>(static_cast<float>(v));
}

std::string layer_name(std::size_t l, std::string_view suffix) {
    return "layers." + std::to_string(l) + "." + std::string(suffix);
}

} // namespace

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidArgument, "model config: " + what); };
    if (n_layers == 0) fail("n_layers must be positive");
    if (n_heads == 0 || embed_dim == 0 || embed_dim % n_heads != 0) fail("embed_dim must be a positive multiple of n_heads");
    if (ffn_dim == 0) fail("ffn_dim must be positive");
    if (vocab_size < 4) fail("vocab_size must cover at least one gene plus three special tokens");
    if (max_len < 2) fail("max_len must be at least 2");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
    if (!(temperature > 0.0)) fail("temperature must be positive");
}

void ModelState::build_layout() {
    const std::size_t d = config_.embed_dim;
    const std::size_t f = config_.ffn_dim;
    const std::size_t v = config_.vocab_size;
    params_.clear();
    params_.emplace_back("embed.token", v, d);
    params_.emplace_back("embed.position", config_.max_len, d);
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
        params_.emplace_back(layer_name(l, "ln1.gamma"), 1, d);
        params_.emplace_back(layer_name(l, "ln1.beta"), 1, d);
        for (const char* m : {"q", "k", "v", "o"}) {
            params_.emplace_back(layer_name(l, std::string("attn.w") + m), d, d);
            params_.emplace_back(layer_name(l, std::string("attn.b") + m), 1, d);
        }
        params_.emplace_back(layer_name(l, "ln2.gamma"), 1, d);
        params_.emplace_back(layer_name(l, "ln2.beta"), 1, d);
        params_.emplace_back(layer_name(l, "ffn.w1"), f, d);
        params_.emplace_back(layer_name(l, "ffn.b1"), 1, f);
        params_.emplace_back(layer_name(l, "ffn.w2"), d, f);
        params_.emplace_back(layer_name(l, "ffn.b2"), 1, d);
    }
    params_.emplace_back("final_ln.gamma", 1, d);
    params_.emplace_back("final_ln.beta", 1, d);
    if (!config_.tie_mgp_projection) {
        params_.emplace_back("mgp.weight", v, d);
    }
    params_.emplace_back("mgp.bias", 1, v);
    params_.emplace_back("types.embedding", type_ids_.size(), d);
    params_.emplace_back("reg.weight", d, d);
    params_.emplace_back("reg.bias", 1, d);

    index_.clear();
    for (std::size_t i = 0; i < params_.size(); ++i) {
        index_.emplace(params_[i].name, i);
    }
}

ModelState ModelState::empty(ModelConfig config, std::vector<std::string> type_ids) {
    config.validate();
    ModelState s;
    s.config_ = config;
    s.type_ids_ = std::move(type_ids);
    if (s.type_ids_.empty()) {
        throw Error(ErrorKind::InvalidArgument, "model needs at least one cell type");
    }
    s.build_layout();
    return s;
}

ModelState::ModelState(ModelConfig config, std::vector<std::string> type_ids)
    : ModelState(empty(std::move(config), std::move(type_ids))) {
    std::mt19937_64 rng(config_.seed);
    std::normal_distribution<double> embed_init(0.0, 0.02);
    for (auto& p : params_) {
        const std::string& n = p.name;
        const bool is_table = n.starts_with("embed.") || n == "types.embedding";
        const bool is_gamma = n.ends_with(".gamma");
        const bool is_bias = n.ends_with(".beta") || n.find(".b") != std::string::npos || n.ends_with("bias");
        if (is_table) {
            for (double& v : p.value.data) {
                v = as_float(embed_init(rng));
            }
        } else if (is_gamma) {
            p.value.fill(1.0);
        } else if (is_bias) {
            p.value.fill(0.0);
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(p.value.cols));
            std::uniform_real_distribution<double> uni(-bound, bound);
            for (double& v : p.value.data) {
                v = as_float(uni(rng));
            }
        }
    }
}

std::optional<std::size_t> ModelState::find_type(std::string_view type) const {
    auto it = std::find(type_ids_.begin(), type_ids_.end(), type);
    if (it == type_ids_.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - type_ids_.begin());
}

std::size_t ModelState::type_index(std::string_view type) const {
    if (auto idx = find_type(type)) {
        return *idx;
    }
    throw Error(ErrorKind::UnknownTypeId, std::string(type));
}

ad::Parameter& ModelState::param(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) {
        throw Error(ErrorKind::InvalidArgument, "no parameter named " + std::string(name));
    }
    return params_[it->second];
}

const ad::Parameter& ModelState::param(std::string_view name) const {
    return const_cast<ModelState*>(this)->param(name);
}

void ModelState::zero_grad() {
    for (auto& p : params_) {
        p.zero_grad();
    }
}

std::size_t ModelState::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.value.size();
    }
    return n;
}

namespace {

template <typename Seq>
EncoderInput pack_impl(std::span<const Seq> seqs) {
    EncoderInput in;
    for (const auto& s : seqs) {
        in.seq_len = std::max(in.seq_len, s.true_length);
    }
    in.tokens.reserve(seqs.size() * in.seq_len);
    for (const auto& s : seqs) {
        if (s.true_length == 0 || s.true_length > s.tokens.size()) {
            throw Error(ErrorKind::InvalidArgument, "sequence true_length out of range");
        }
        in.lengths.push_back(s.true_length);
        for (std::size_t t = 0; t < in.seq_len; ++t) {
            in.tokens.push_back(s.tokens[t]);
        }
    }
    return in;
}

} // namespace

EncoderInput pack(std::span<const tokenizer::TokenSequence> seqs) {
    return pack_impl(seqs);
}

EncoderInput pack(std::span<const tokenizer::MaskedSequence> seqs) {
    return pack_impl(seqs);
}

ForwardOutput forward(ad::Tape& tape, ModelState& state, const EncoderInput& input, std::mt19937_64* dropout_rng) {
    const ModelConfig& cfg = state.config();
    const std::size_t n_seq = input.n_seq();
    const std::size_t len = input.seq_len;
    if (n_seq == 0) {
        throw Error(ErrorKind::InvalidArgument, "forward on an empty batch");
    }
    if (len > cfg.max_len) {
        throw Error(ErrorKind::InvalidArgument, "sequence length " + std::to_string(len) + " exceeds max_len " + std::to_string(cfg.max_len));
    }
    if (input.tokens.size() != n_seq * len) {
        throw Error(ErrorKind::SizeMismatch, "token count does not match n_seq * seq_len");
    }

    std::vector<std::size_t> token_rows(input.tokens.begin(), input.tokens.end());
    for (std::size_t t : token_rows) {
        if (t >= cfg.vocab_size) {
            throw Error(ErrorKind::TokenOutOfRange, "token " + std::to_string(t) + " >= vocab size " + std::to_string(cfg.vocab_size));
        }
    }
    std::vector<std::size_t> positions(n_seq * len);
    for (std::size_t i = 0; i < positions.size(); ++i) {
        positions[i] = i % len;
    }

    auto p = [&](std::string_view name) { return tape.param(state.param(name)); };
    const double rate = dropout_rng != nullptr ? cfg.dropout : 0.0;
    std::mt19937_64 unused;
    std::mt19937_64& rng = dropout_rng != nullptr ? *dropout_rng : unused;

    ad::Var x = ad::add(tape, ad::gather_rows(tape, p("embed.token"), token_rows), ad::gather_rows(tape, p("embed.position"), positions));
    x = ad::dropout(tape, x, rate, rng);

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        auto lp = [&](std::string_view suffix) { return p(layer_name(l, suffix)); };
        const ad::Var h = ad::layer_norm(tape, x, lp("ln1.gamma"), lp("ln1.beta"));
        const ad::Var q = ad::linear(tape, h, lp("attn.wq"), lp("attn.bq"));
        const ad::Var k = ad::linear(tape, h, lp("attn.wk"), lp("attn.bk"));
        const ad::Var v = ad::linear(tape, h, lp("attn.wv"), lp("attn.bv"));
        const ad::Var att = ad::attention(tape, q, k, v, len, input.lengths, cfg.n_heads);
        const ad::Var proj = ad::linear(tape, att, lp("attn.wo"), lp("attn.bo"));
        x = ad::add(tape, x, ad::dropout(tape, proj, rate, rng));

        const ad::Var h2 = ad::layer_norm(tape, x, lp("ln2.gamma"), lp("ln2.beta"));
        const ad::Var f1 = ad::gelu(tape, ad::linear(tape, h2, lp("ffn.w1"), lp("ffn.b1")));
        const ad::Var f2 = ad::linear(tape, f1, lp("ffn.w2"), lp("ffn.b2"));
        x = ad::add(tape, x, ad::dropout(tape, f2, rate, rng));
    }
    const ad::Var states = ad::layer_norm(tape, x, p("final_ln.gamma"), p("final_ln.beta"));

    std::vector<std::size_t> cls_rows(n_seq);
    for (std::size_t s = 0; s < n_seq; ++s) {
        cls_rows[s] = s * len;
    }
    ad::Var cls = ad::gather_rows(tape, states, cls_rows);
    if (cfg.normalize_embeddings) {
        cls = ad::l2_normalize_rows(tape, cls);
    }
    return ForwardOutput{states, cls, len};
}

ad::Var mgp_logits(ad::Tape& tape, ModelState& state, ad::Var states, std::span<const std::size_t> rows) {
    const std::size_t n_rows = tape.value(states).rows;
    for (std::size_t r : rows) {
        if (r >= n_rows) {
            throw Error(ErrorKind::PositionOutOfRange, "row " + std::to_string(r) + " >= " + std::to_string(n_rows));
        }
    }
    const ad::Var selected = ad::gather_rows(tape, states, rows);
    const ad::Var weight = tape.param(state.param(state.config().tie_mgp_projection ? "embed.token" : "mgp.weight"));
    return ad::linear(tape, selected, weight, tape.param(state.param("mgp.bias")));
}

ad::Var type_embeddings(ad::Tape& tape, ModelState& state, std::span<const std::size_t> type_indices) {
    for (std::size_t t : type_indices) {
        if (t >= state.n_types()) {
            throw Error(ErrorKind::UnknownTypeId, "type index " + std::to_string(t));
        }
    }
    ad::Var rows = ad::gather_rows(tape, tape.param(state.param("types.embedding")), type_indices);
    if (state.config().normalize_embeddings) {
        rows = ad::l2_normalize_rows(tape, rows);
    }
    return rows;
}

ad::Var type_regression(ad::Tape& tape, ModelState& state, ad::Var type_rows) {
    return ad::linear(tape, type_rows, tape.param(state.param("reg.weight")), tape.param(state.param("reg.bias")));
}

ad::Matrix embed(const ModelState& state, std::span<const tokenizer::TokenSequence> seqs, std::size_t batch_size) {
    const std::size_t d = state.config().embed_dim;
    ad::Matrix out(seqs.size(), d);
    if (batch_size == 0) {
        batch_size = 1;
    }
    // A non-recording tape never writes gradients, so the parameters stay untouched.
    ModelState& frozen = const_cast<ModelState&>(state);
    for (std::size_t start = 0; start < seqs.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, seqs.size() - start);
        ad::Tape tape(false);
        const ForwardOutput fw = forward(tape, frozen, pack(seqs.subspan(start, n)));
        const ad::Matrix& z = tape.value(fw.embeddings);
        for (std::size_t r = 0; r < n; ++r) {
            auto dst = out.row(start + r);
            std::copy(z.row(r).begin(), z.row(r).end(), dst.begin());
            if (!state.config().normalize_embeddings) {
                const double norm = std::max(std::sqrt(kernels::dot(dst, dst)), 1e-12);
                for (double& v : dst) {
                    v /= norm;
                }
            }
        }
    }
    return out;
}

std::vector<double> type_embedding(const ModelState& state, std::size_t type_index) {
    if (type_index >= state.n_types()) {
        throw Error(ErrorKind::UnknownTypeId, "type index " + std::to_string(type_index));
    }
    const auto row = state.param("types.embedding").value.row(type_index);
    std::vector<double> out(row.begin(), row.end());
    const double norm = std::max(std::sqrt(kernels::dot(out, out)), 1e-12);
    for (double& v : out) {
        v /= norm;
    }
    return out;
}

} // namespace cellokit::model
