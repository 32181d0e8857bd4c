#include "cellokit/config.hpp"
#include "cellokit/error.hpp"

#include <charconv>
#include <cstdio>
#include <functional>

namespace cellokit::config {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
    throw Error(ErrorKind::InvalidArgument, "config key '" + std::string(key) + "': cannot parse '" + std::string(value) + "'");
}

double to_double(std::string_view key, std::string_view v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v);
    return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v);
    return out;
}

bool to_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad_value(key, v);
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

struct Field {
    std::function<void(RunConfig&, std::string_view, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename Member>
Field real_field(Member member) {
    return {[member](RunConfig& c, std::string_view k, std::string_view v) { member(c) = to_double(k, v); },
            [member](RunConfig c) { return fmt(member(c)); }};
}

template <typename Member>
Field count_field(Member member) {
    return {[member](RunConfig& c, std::string_view k, std::string_view v) { member(c) = to_u64(k, v); },
            [member](RunConfig c) { return fmt(static_cast<std::uint64_t>(member(c))); }};
}

template <typename Member>
Field flag_field(Member member) {
    return {[member](RunConfig& c, std::string_view k, std::string_view v) { member(c) = to_bool(k, v); },
            [member](RunConfig c) { return fmt(static_cast<bool>(member(c))); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = [] {
        std::vector<std::pair<std::string, Field>> t;
        t.emplace_back("n_layers", count_field([](RunConfig& c) -> std::size_t& { return c.model.n_layers; }));
        t.emplace_back("n_heads", count_field([](RunConfig& c) -> std::size_t& { return c.model.n_heads; }));
        t.emplace_back("embed_dim", count_field([](RunConfig& c) -> std::size_t& { return c.model.embed_dim; }));
        t.emplace_back("ffn_dim", count_field([](RunConfig& c) -> std::size_t& { return c.model.ffn_dim; }));
        t.emplace_back("max_len", count_field([](RunConfig& c) -> std::size_t& { return c.model.max_len; }));
        t.emplace_back("dropout", real_field([](RunConfig& c) -> double& { return c.model.dropout; }));
        t.emplace_back("temperature", real_field([](RunConfig& c) -> double& { return c.model.temperature; }));
        t.emplace_back("normalize_embeddings", flag_field([](RunConfig& c) -> bool& { return c.model.normalize_embeddings; }));
        t.emplace_back("tie_mgp_projection", flag_field([](RunConfig& c) -> bool& { return c.model.tie_mgp_projection; }));
        t.emplace_back("seed", Field{[](RunConfig& c, std::string_view k, std::string_view v) {
                                         c.model.seed = to_u64(k, v);
                                         c.train.seed = c.model.seed;
                                     },
                                     [](const RunConfig& c) { return fmt(c.train.seed); }});
        t.emplace_back("lr", real_field([](RunConfig& c) -> double& { return c.train.lr; }));
        t.emplace_back("weight_decay", real_field([](RunConfig& c) -> double& { return c.train.weight_decay; }));
        t.emplace_back("warmup_steps", count_field([](RunConfig& c) -> std::size_t& { return c.train.warmup_steps; }));
        t.emplace_back("total_steps", count_field([](RunConfig& c) -> std::size_t& { return c.train.total_steps; }));
        t.emplace_back("batch_size", count_field([](RunConfig& c) -> std::size_t& { return c.train.batch_size; }));
        t.emplace_back("checkpoint_interval", count_field([](RunConfig& c) -> std::size_t& { return c.train.checkpoint_interval; }));
        t.emplace_back("beta1", real_field([](RunConfig& c) -> double& { return c.train.beta1; }));
        t.emplace_back("beta2", real_field([](RunConfig& c) -> double& { return c.train.beta2; }));
        t.emplace_back("adam_eps", real_field([](RunConfig& c) -> double& { return c.train.adam_eps; }));
        t.emplace_back("schedule", Field{[](RunConfig& c, std::string_view k, std::string_view v) {
                                             if (v == "linear") c.train.schedule = trainer::DecaySchedule::Linear;
                                             else if (v == "constant") c.train.schedule = trainer::DecaySchedule::Constant;
                                             else bad_value(k, v);
                                         },
                                         [](const RunConfig& c) {
                                             return std::string(c.train.schedule == trainer::DecaySchedule::Linear ? "linear" : "constant");
                                         }});
        t.emplace_back("decay_embeddings", flag_field([](RunConfig& c) -> bool& { return c.train.decay_embeddings; }));
        t.emplace_back("mask_ratio", real_field([](RunConfig& c) -> double& { return c.train.mask_ratio; }));
        t.emplace_back("damping", real_field([](RunConfig& c) -> double& { return c.ppr.damping; }));
        t.emplace_back("ppr_tolerance", real_field([](RunConfig& c) -> double& { return c.ppr.tolerance; }));
        t.emplace_back("ppr_max_iters", count_field([](RunConfig& c) -> std::size_t& { return c.ppr.max_iters; }));
        t.emplace_back("threshold", real_field([](RunConfig& c) -> double& { return c.threshold; }));
        t.emplace_back("weight_mgp", real_field([](RunConfig& c) -> double& { return c.objective.weights.mgp; }));
        t.emplace_back("weight_intra", real_field([](RunConfig& c) -> double& { return c.objective.weights.intra; }));
        t.emplace_back("weight_inter", real_field([](RunConfig& c) -> double& { return c.objective.weights.inter; }));
        t.emplace_back("weight_reg", real_field([](RunConfig& c) -> double& { return c.objective.weights.reg; }));
        t.emplace_back("intra_denominator", Field{[](RunConfig& c, std::string_view k, std::string_view v) {
                                                      if (v == "per_cell") c.objective.intra_mode = losses::IntraDenominator::PerCell;
                                                      else if (v == "unique_types") c.objective.intra_mode = losses::IntraDenominator::UniqueTypes;
                                                      else bad_value(k, v);
                                                  },
                                                  [](const RunConfig& c) {
                                                      return std::string(c.objective.intra_mode == losses::IntraDenominator::PerCell
                                                                             ? "per_cell"
                                                                             : "unique_types");
                                                  }});
        return t;
    }();
    return table;
}

const Field& field(std::string_view key) {
    for (const auto& [name, f] : fields()) {
        if (name == key) return f;
    }
    throw Error(ErrorKind::InvalidArgument, "unknown config key '" + std::string(key) + "'");
}

} // namespace

std::vector<std::pair<std::string, std::string>> parse_pairs(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorKind::MalformedLine, "config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw Error(ErrorKind::MalformedLine, "config line " + std::to_string(line_no) + ": empty key or value");
        }
        out.emplace_back(std::string(key), std::string(value));
    }
    return out;
}

void set_value(RunConfig& config, std::string_view key, std::string_view value) {
    field(key).set(config, key, trim(value));
}

const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, f] : fields()) k.push_back(name);
        return k;
    }();
    return keys;
}

std::string get_value(const RunConfig& config, std::string_view key) {
    return field(key).get(config);
}

std::string snapshot(const RunConfig& config) {
    std::string out;
    for (const auto& [name, f] : fields()) {
        out += name + " = " + f.get(config) + '\n';
    }
    return out;
}

} // namespace cellokit::config
