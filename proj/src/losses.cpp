#include "cellokit/losses.hpp"
#include "cellokit/error.hpp"
#include "cellokit/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cellokit::losses {

namespace {

void check_same(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b)) {
        throw Error(ErrorKind::SizeMismatch, std::string(what) + ": " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                                                 " vs " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
    }
}

/// Columns entering row i's softmax; the positive column i comes first.
std::vector<std::size_t> intra_columns(std::size_t i, std::size_t batch, IntraDenominator mode, std::span<const std::size_t> types) {
    std::vector<std::size_t> cols{i};
    if (mode == IntraDenominator::PerCell) {
        for (std::size_t j = 0; j < batch; ++j) {
            if (j != i) {
                cols.push_back(j);
            }
        }
        return cols;
    }
    if (types.size() != batch) {
        throw Error(ErrorKind::SizeMismatch, "unique-type intra loss needs one type per cell");
    }
    std::vector<std::size_t> seen{types[i]};
    for (std::size_t j = 0; j < batch; ++j) {
        if (std::find(seen.begin(), seen.end(), types[j]) == seen.end()) {
            seen.push_back(types[j]);
            cols.push_back(j);
        }
    }
    return cols;
}

/// log(sum_j exp(x_j)) with max subtraction.
double log_sum_exp(std::span<const double> x) {
    const double mx = *std::max_element(x.begin(), x.end());
    double s = 0.0;
    for (double v : x) {
        s += std::exp(v - mx);
    }
    return mx + std::log(s);
}

double plain_dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

} // namespace

LossBreakdown combine(double mgp, double intra, double inter, double reg) {
    return LossBreakdown{mgp, intra, inter, reg, mgp + intra + inter + reg};
}

double loss_mgp(const Matrix& logits, std::span<const std::size_t> labels) {
    if (logits.rows != labels.size()) {
        throw Error(ErrorKind::SizeMismatch, "one label per logit row required");
    }
    if (logits.rows == 0) {
        return 0.0;
    }
    double total = 0.0;
    for (std::size_t r = 0; r < logits.rows; ++r) {
        if (labels[r] >= logits.cols) {
            throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(labels[r]));
        }
        total += log_sum_exp(logits.row(r)) - logits(r, labels[r]);
    }
    return total / static_cast<double>(logits.rows);
}

double loss_intra(const Matrix& z, const Matrix& type_rows, double tau, IntraDenominator mode, std::span<const std::size_t> types) {
    check_same(z, type_rows, "loss_intra");
    double total = 0.0;
    std::vector<double> logits;
    for (std::size_t i = 0; i < z.rows; ++i) {
        const auto cols = intra_columns(i, z.rows, mode, types);
        logits.clear();
        for (std::size_t j : cols) {
            logits.push_back(plain_dot(z.row(i), type_rows.row(j)) / tau);
        }
        total += log_sum_exp(logits) - logits[0];
    }
    return total;
}

double loss_reg(const Matrix& z, const Matrix& type_rows, const Matrix& weight, const Matrix& bias) {
    check_same(z, type_rows, "loss_reg");
    if (weight.rows != z.cols || weight.cols != type_rows.cols || bias.rows != 1 || bias.cols != z.cols) {
        throw Error(ErrorKind::SizeMismatch, "loss_reg: linear map shape");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < z.rows; ++i) {
        for (std::size_t o = 0; o < weight.rows; ++o) {
            const double mapped = plain_dot(weight.row(o), type_rows.row(i)) + bias(0, o);
            const double diff = mapped - z(i, o);
            total += diff * diff;
        }
    }
    return total;
}

InterPlan plan_inter(const std::vector<std::size_t>& batch_types, const ontology::SimilarityTable& table,
                     const ontology::AncestorSets& anc) {
    InterPlan plan;
    plan.batch = batch_types.size();
    plan.sets.assign(plan.batch * plan.batch, {});
    for (std::size_t i = 0; i < plan.batch; ++i) {
        for (std::size_t j = 0; j < plan.batch; ++j) {
            if (i != j) {
                plan.sets[i * plan.batch + j] = ontology::negative_set(i, j, batch_types, table, anc);
            }
        }
    }
    return plan;
}

double loss_inter(const Matrix& z, const InterPlan& plan, double tau) {
    if (z.rows != plan.batch) {
        throw Error(ErrorKind::SizeMismatch, "loss_inter: plan batch differs from embedding rows");
    }
    double total = 0.0;
    std::vector<double> logits;
    for (std::size_t i = 0; i < plan.batch; ++i) {
        for (std::size_t j = 0; j < plan.batch; ++j) {
            const auto& omega = plan.sets[i * plan.batch + j];
            if (i == j || omega.empty()) {
                continue;
            }
            logits.assign(1, plain_dot(z.row(i), z.row(j)) / tau);
            for (std::size_t k : omega) {
                logits.push_back(plain_dot(z.row(i), z.row(k)) / tau);
            }
            total += log_sum_exp(logits) - logits[0];
        }
    }
    return total;
}

double loss_inter(const Matrix& z, const std::vector<std::size_t>& batch_types, const ontology::SimilarityTable& table,
                  const ontology::AncestorSets& anc, double tau) {
    return loss_inter(z, plan_inter(batch_types, table, anc), tau);
}

ad::Var intra_loss(ad::Tape& tape, ad::Var z, ad::Var type_rows, double tau, IntraDenominator mode, std::span<const std::size_t> types) {
    const Matrix& vz = tape.value(z);
    const Matrix& vh = tape.value(type_rows);
    check_same(vz, vh, "intra_loss");
    const std::size_t batch = vz.rows;
    const auto& kern = kernels::active();

    // Full score matrix S = Z H^T / tau; each row uses a subset of its columns.
    Matrix scores(batch, batch);
    kern.gemm_nt(vz.data.data(), vh.data.data(), scores.data.data(), batch, batch, vz.cols, false);
    std::vector<std::vector<std::size_t>> columns(batch);
    Matrix coeff(batch, batch);  // dL/dS
    double total = 0.0;
    std::vector<double> logits;
    for (std::size_t i = 0; i < batch; ++i) {
        columns[i] = intra_columns(i, batch, mode, types);
        logits.clear();
        for (std::size_t j : columns[i]) {
            logits.push_back(scores(i, j) / tau);
        }
        const double lse = log_sum_exp(logits);
        total += lse - logits[0];
        for (std::size_t c = 0; c < columns[i].size(); ++c) {
            coeff(i, columns[i][c]) += std::exp(logits[c] - lse);
        }
        coeff(i, i) -= 1.0;
    }
    Matrix out(1, 1, total);
    return tape.push(std::move(out), {z, type_rows}, [z, type_rows, tau, coeff = std::move(coeff)](ad::Tape& tp, std::size_t self) {
        const double g = tp.grad(ad::Var{self})(0, 0) / tau;
        const Matrix& vz = tp.value(z);
        const Matrix& vh = tp.value(type_rows);
        Matrix scaled = coeff;
        for (double& v : scaled.data) {
            v *= g;
        }
        const auto& k = kernels::active();
        if (tp.needs_grad(z)) {
            k.gemm_nn_acc(scaled.data.data(), vh.data.data(), tp.grad(z).data.data(), scaled.rows, vh.cols, scaled.cols);
        }
        if (tp.needs_grad(type_rows)) {
            k.gemm_tn_acc(scaled.data.data(), vz.data.data(), tp.grad(type_rows).data.data(), scaled.cols, vz.cols, scaled.rows);
        }
    });
}

ad::Var reg_loss(ad::Tape& tape, ad::Var z, ad::Var mapped_type_rows) {
    const Matrix& vz = tape.value(z);
    const Matrix& vm = tape.value(mapped_type_rows);
    check_same(vz, vm, "reg_loss");
    Matrix diff(vz.rows, vz.cols);
    double total = 0.0;
    for (std::size_t i = 0; i < vz.size(); ++i) {
        diff.data[i] = vm.data[i] - vz.data[i];
        total += diff.data[i] * diff.data[i];
    }
    return tape.push(Matrix(1, 1, total), {z, mapped_type_rows}, [z, mapped_type_rows, diff = std::move(diff)](ad::Tape& tp, std::size_t self) {
        const double g = 2.0 * tp.grad(ad::Var{self})(0, 0);
        if (tp.needs_grad(mapped_type_rows)) {
            Matrix& gm = tp.grad(mapped_type_rows);
            for (std::size_t i = 0; i < diff.size(); ++i) {
                gm.data[i] += g * diff.data[i];
            }
        }
        if (tp.needs_grad(z)) {
            Matrix& gz = tp.grad(z);
            for (std::size_t i = 0; i < diff.size(); ++i) {
                gz.data[i] -= g * diff.data[i];
            }
        }
    });
}

ad::Var inter_loss(ad::Tape& tape, ad::Var z, const InterPlan& plan, double tau) {
    const Matrix& vz = tape.value(z);
    if (vz.rows != plan.batch) {
        throw Error(ErrorKind::SizeMismatch, "inter_loss: plan batch differs from embedding rows");
    }
    const std::size_t batch = plan.batch;
    Matrix gram(batch, batch);
    kernels::active().gemm_nt(vz.data.data(), vz.data.data(), gram.data.data(), batch, batch, vz.cols, false);

    Matrix coeff(batch, batch);  // dL/d(z_i . z_k) / (1/tau), accumulated per ordered pair
    double total = 0.0;
    std::vector<double> logits;
    for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t j = 0; j < batch; ++j) {
            const auto& omega = plan.sets[i * batch + j];
            if (i == j || omega.empty()) {
                continue;
            }
            logits.assign(1, gram(i, j) / tau);
            for (std::size_t k : omega) {
                logits.push_back(gram(i, k) / tau);
            }
            const double lse = log_sum_exp(logits);
            total += lse - logits[0];
            coeff(i, j) += std::exp(logits[0] - lse) - 1.0;
            for (std::size_t c = 0; c < omega.size(); ++c) {
                coeff(i, omega[c]) += std::exp(logits[c + 1] - lse);
            }
        }
    }
    return tape.push(Matrix(1, 1, total), {z}, [z, tau, coeff = std::move(coeff)](ad::Tape& tp, std::size_t self) {
        const double g = tp.grad(ad::Var{self})(0, 0) / tau;
        const Matrix& vz = tp.value(z);
        // d(z_i . z_k) reaches both rows: (C + C^T) Z.
        Matrix sym(coeff.rows, coeff.cols);
        for (std::size_t i = 0; i < coeff.rows; ++i) {
            for (std::size_t k = 0; k < coeff.cols; ++k) {
                sym(i, k) = g * (coeff(i, k) + coeff(k, i));
            }
        }
        kernels::active().gemm_nn_acc(sym.data.data(), vz.data.data(), tp.grad(z).data.data(), sym.rows, vz.cols, sym.cols);
    });
}

Objective total_loss(ad::Tape& tape, model::ModelState& state, const PretrainBatch& batch, const ObjectiveContext& ctx,
                     std::mt19937_64* dropout_rng) {
    const std::size_t n = batch.cells.size();
    if (batch.type_rows.size() != n || batch.type_nodes.size() != n) {
        throw Error(ErrorKind::SizeMismatch, "batch needs one type per cell");
    }
    const double tau = state.config().temperature;
    const model::EncoderInput input = model::pack(batch.cells);
    const model::ForwardOutput fw = model::forward(tape, state, input, dropout_rng);

    std::vector<std::size_t> rows;
    std::vector<std::size_t> labels;
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t pos : batch.cells[s].selected) {
            rows.push_back(s * fw.seq_len + pos);
            labels.push_back(static_cast<std::size_t>(batch.cells[s].labels[pos]));
        }
    }
    Objective obj;
    obj.mgp = ad::cross_entropy(tape, model::mgp_logits(tape, state, fw.states, rows), labels);

    const ad::Var types = model::type_embeddings(tape, state, batch.type_rows);
    obj.intra = intra_loss(tape, fw.embeddings, types, tau, ctx.options.intra_mode, batch.type_nodes);
    obj.reg = reg_loss(tape, fw.embeddings, model::type_regression(tape, state, types));

    if (ctx.table == nullptr || ctx.ancestors == nullptr) {
        throw Error(ErrorKind::MissingSimilarity, "objective context lacks a similarity table or ancestor sets");
    }
    obj.inter = inter_loss(tape, fw.embeddings, plan_inter(batch.type_nodes, *ctx.table, *ctx.ancestors), tau);

    const auto& w = ctx.options.weights;
    const std::vector<ad::Var> terms{obj.mgp, obj.intra, obj.inter, obj.reg};
    const std::vector<double> weights{w.mgp, w.intra, w.inter, w.reg};
    obj.total = ad::weighted_sum(tape, terms, weights);
    obj.breakdown = combine(tape.value(obj.mgp)(0, 0), tape.value(obj.intra)(0, 0), tape.value(obj.inter)(0, 0), tape.value(obj.reg)(0, 0));
    return obj;
}

GradCheckResult grad_check(const std::function<ad::Var(ad::Tape&)>& build, std::span<ad::Parameter* const> params,
                           double eps, std::size_t n_probes, std::uint64_t seed) {
    if (!(eps > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "grad_check step must be positive");
    }
    for (ad::Parameter* p : params) {
        p->grad = Matrix(p->value.rows, p->value.cols);
    }
    {
        ad::Tape tape;
        const ad::Var loss = build(tape);
        if (!std::isfinite(tape.value(loss)(0, 0))) {
            throw Error(ErrorKind::NonFiniteLoss, "loss is not finite at the base point");
        }
        tape.backward(loss);
    }

    auto evaluate = [&build]() {
        ad::Tape tape(false);
        const double v = tape.value(build(tape))(0, 0);
        if (!std::isfinite(v)) {
            throw Error(ErrorKind::NonFiniteLoss, "loss is not finite at a probe point");
        }
        return v;
    };

    std::size_t total_entries = 0;
    for (const ad::Parameter* p : params) {
        total_entries += p->value.size();
    }
    GradCheckResult result;
    if (total_entries == 0) {
        return result;
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, total_entries - 1);
    for (std::size_t probe = 0; probe < n_probes; ++probe) {
        std::size_t flat = pick(rng);
        std::size_t which = 0;
        while (flat >= params[which]->value.size()) {
            flat -= params[which]->value.size();
            ++which;
        }
        ad::Parameter& p = *params[which];
        double& x = p.value.data[flat];
        const double saved = x;
        x = saved + eps;
        const double f1 = evaluate();
        x = saved - eps;
        const double fm1 = evaluate();
        x = saved + 2.0 * eps;
        const double f2 = evaluate();
        x = saved - 2.0 * eps;
        const double fm2 = evaluate();
        x = saved;

        // Grouped as differences so that a locally constant loss gives exactly 0.
        const double fd = (8.0 * (f1 - fm1) - (f2 - fm2)) / (12.0 * eps);
        const double analytic = p.grad.data[flat];
        const double err = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-8});
        if (err > result.max_relative_error) {
            result.max_relative_error = err;
            result.worst_parameter = p.name + "[" + std::to_string(flat) + "]";
        }
        ++result.probes;
    }
    return result;
}

} // namespace cellokit::losses
