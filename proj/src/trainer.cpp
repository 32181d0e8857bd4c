#include "cellokit/trainer.hpp"
#include "cellokit/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace cellokit::trainer {

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidArgument, "train config: " + what); };
    if (!(lr >= 0.0)) fail("lr must be non-negative");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
    if (warmup_steps > total_steps) fail("warmup_steps exceeds total_steps");
    if (batch_size == 0) fail("batch_size must be at least 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) fail("Adam betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
    if (!(mask_ratio > 0.0 && mask_ratio <= 1.0)) fail("mask_ratio must lie in (0, 1]");
}

double lr_at(const TrainConfig& config, std::size_t step) {
    const double peak = config.lr;
    if (step < config.warmup_steps) {
        return peak * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
    }
    if (config.schedule == DecaySchedule::Constant) {
        return peak;
    }
    if (step >= config.total_steps) {
        return step == config.warmup_steps ? peak : 0.0;
    }
    const double remaining = static_cast<double>(config.total_steps - step);
    return peak * remaining / static_cast<double>(config.total_steps - config.warmup_steps);
}

namespace {

std::vector<ad::Parameter*> all_parameters(model::ModelState& state) {
    std::vector<ad::Parameter*> out;
    for (auto& p : state.parameters()) {
        out.push_back(&p);
    }
    return out;
}

} // namespace

AdamW::AdamW(model::ModelState& state) : AdamW(all_parameters(state)) {}

AdamW::AdamW(std::vector<ad::Parameter*> params) : params_(std::move(params)) {
    for (const auto* p : params_) {
        m_.emplace_back(p->value.size(), 0.0);
        v_.emplace_back(p->value.size(), 0.0);
    }
}

void AdamW::step(const TrainConfig& config, double lr) {
    ++t_;
    const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(t_));
    const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = *params_[i];
        const bool is_embedding = p.name.starts_with("embed.") || p.name == "types.embedding";
        const double decay = (config.decay_embeddings || !is_embedding) ? config.weight_decay : 0.0;
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            const double g = p.grad.data[k];
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g;
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g * g;
            const double mhat = m[k] / bias1;
            const double vhat = v[k] / bias2;
            double& x = p.value.data[k];
            x -= lr * (mhat / (std::sqrt(vhat) + config.adam_eps) + decay * x);
            x = static_cast<double>(static_cast<float>(x));
        }
    }
}

void check_gradients(const model::ModelState& state) {
    for (const auto& p : state.parameters()) {
        for (double g : p.grad.data) {
            if (!std::isfinite(g)) {
                throw Error(ErrorKind::NonFiniteGradient, "parameter " + p.name);
            }
        }
    }
}

losses::LossBreakdown train_step(model::ModelState& state, AdamW& optimizer, const losses::PretrainBatch& batch,
                                 const losses::ObjectiveContext& ctx, const TrainConfig& config, std::size_t step) {
    state.zero_grad();
    std::mt19937_64 dropout_rng(mix_seed(config.seed ^ 0xd5a61266f0c9392cULL, step));
    ad::Tape tape;
    const losses::Objective obj = losses::total_loss(tape, state, batch, ctx, &dropout_rng);
    if (!std::isfinite(tape.value(obj.total)(0, 0))) {
        throw Error(ErrorKind::NonFiniteLoss, "objective is not finite at step " + std::to_string(step));
    }
    tape.backward(obj.total);
    check_gradients(state);
    optimizer.step(config, lr_at(config, step));
    return obj.breakdown;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t counter) {
    // splitmix64 finalizer over the combined value
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (counter + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::string log_header() {
    return "step\tlr\tmgp\tintra\tinter\treg\ttotal\n";
}

std::string format_log_row(const LogRow& row) {
    char buf[256];
    const auto& l = row.logged;
    std::snprintf(buf, sizeof(buf), "%zu\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n", row.step, row.lr, l.mgp, l.intra, l.inter, l.reg, l.total);
    return buf;
}

std::vector<LogRow> pretrain(model::ModelState& state, const PretrainData& data, const tokenizer::GeneVocab& vocab,
                             const losses::ObjectiveContext& ctx, const TrainConfig& config,
                             const std::function<void(const LogRow&)>& on_step) {
    config.validate();
    const std::size_t n = data.sequences.size();
    if (n == 0) {
        throw Error(ErrorKind::EmptyCorpus, "no training cells");
    }
    if (data.type_rows.size() != n || data.type_nodes.size() != n) {
        throw Error(ErrorKind::SizeMismatch, "training data needs one type per cell");
    }
    const std::size_t batch_size = std::min(config.batch_size, n);
    AdamW optimizer(state);
    std::vector<std::size_t> order(n);
    std::size_t cursor = n;
    std::size_t epoch = 0;
    std::vector<LogRow> log;
    log.reserve(config.total_steps);

    for (std::size_t step = 1; step <= config.total_steps; ++step) {
        losses::PretrainBatch batch;
        for (std::size_t slot = 0; slot < batch_size; ++slot) {
            if (cursor == n) {
                std::iota(order.begin(), order.end(), std::size_t{0});
                std::mt19937_64 shuffle_rng(mix_seed(config.seed, epoch++));
                std::shuffle(order.begin(), order.end(), shuffle_rng);
                cursor = 0;
            }
            const std::size_t idx = order[cursor++];
            const std::uint64_t mask_seed = mix_seed(mix_seed(config.seed, step), slot);
            batch.cells.push_back(tokenizer::apply_masking(data.sequences[idx], vocab, config.mask_ratio, mask_seed));
            batch.type_rows.push_back(data.type_rows[idx]);
            batch.type_nodes.push_back(data.type_nodes[idx]);
        }
        LogRow row;
        row.step = step;
        row.lr = lr_at(config, step);
        row.raw = train_step(state, optimizer, batch, ctx, config, step);
        const double b = static_cast<double>(batch_size);
        row.logged = losses::combine(row.raw.mgp, row.raw.intra / b, row.raw.inter / b, row.raw.reg / b);
        log.push_back(row);
        if (on_step) {
            on_step(row);
        }
    }
    return log;
}

} // namespace cellokit::trainer
