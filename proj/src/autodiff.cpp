#include "cellokit/autodiff.hpp"
#include "cellokit/error.hpp"
#include "cellokit/kernels.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace cellokit::ad {

namespace {

void require(bool ok, const char* op, const std::string& detail) {
    if (!ok) {
        throw Error(ErrorKind::SizeMismatch, std::string(op) + ": " + detail);
    }
}

std::string shape(const Matrix& m) {
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

} // namespace

Var Tape::constant(Matrix value) {
    Node node;
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
    Node node;
    node.param = &p;
    node.needs_grad = record_;
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Var Tape::push(Matrix value, std::span<const Var> inputs, Backward fn) {
    Node node;
    node.value = std::move(value);
    if (record_) {
        for (const Var in : inputs) {
            node.needs_grad = node.needs_grad || nodes_[in.id].needs_grad;
        }
        if (node.needs_grad) {
            node.backward = std::move(fn);
        }
    }
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

const Matrix& Tape::value(Var v) const {
    const Node& node = nodes_[v.id];
    return node.param != nullptr ? node.param->value : node.value;
}

Matrix& Tape::grad(Var v) {
    Node& node = nodes_[v.id];
    Matrix& g = node.param != nullptr ? node.param->grad : node.grad;
    const Matrix& val = value(v);
    if (!g.same_shape(val)) {
        g = Matrix(val.rows, val.cols);
    }
    return g;
}

void Tape::backward(Var loss) {
    require(record_, "backward", "tape was created without recording");
    const Matrix& lv = value(loss);
    require(lv.rows == 1 && lv.cols == 1, "backward", "loss must be 1x1, got " + shape(lv));
    grad(loss)(0, 0) += 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.backward || node.grad.size() == 0) {
            continue;
        }
        node.backward(*this, i);
    }
}

Var gather_rows(Tape& tape, Var table, std::span<const std::size_t> ids) {
    const Matrix& t = tape.value(table);
    Matrix out(ids.size(), t.cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= t.rows) {
            throw Error(ErrorKind::TokenOutOfRange, "row id " + std::to_string(ids[i]) + " >= " + std::to_string(t.rows));
        }
        std::copy(t.row(ids[i]).begin(), t.row(ids[i]).end(), out.row(i).begin());
    }
    std::vector<std::size_t> idx(ids.begin(), ids.end());
    return tape.push(std::move(out), {table}, [table, idx = std::move(idx)](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(Var{self});
        Matrix& gt = tp.grad(table);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            kernels::axpy(1.0, g.row(i), gt.row(idx[i]));
        }
    });
}

Var add(Tape& tape, Var a, Var b) {
    const Matrix& va = tape.value(a);
    const Matrix& vb = tape.value(b);
    require(va.same_shape(vb), "add", shape(va) + " vs " + shape(vb));
    Matrix out = va;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data[i] += vb.data[i];
    }
    return tape.push(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(Var{self});
        for (const Var in : {a, b}) {
            if (tp.needs_grad(in)) {
                Matrix& gi = tp.grad(in);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    gi.data[i] += g.data[i];
                }
            }
        }
    });
}

Var add_bias(Tape& tape, Var x, Var bias) {
    const Matrix& vx = tape.value(x);
    const Matrix& vb = tape.value(bias);
    require(vb.rows == 1 && vb.cols == vx.cols, "add_bias", shape(vx) + " + " + shape(vb));
    Matrix out = vx;
    for (std::size_t r = 0; r < out.rows; ++r) {
        kernels::axpy(1.0, vb.row(0), out.row(r));
    }
    return tape.push(std::move(out), {x, bias}, [x, bias](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(Var{self});
        if (tp.needs_grad(x)) {
            Matrix& gx = tp.grad(x);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx.data[i] += g.data[i];
            }
        }
        if (tp.needs_grad(bias)) {
            Matrix& gb = tp.grad(bias);
            for (std::size_t r = 0; r < g.rows; ++r) {
                kernels::axpy(1.0, g.row(r), gb.row(0));
            }
        }
    });
}

Var scale(Tape& tape, Var x, double factor) {
    Matrix out = tape.value(x);
    for (double& v : out.data) {
        v *= factor;
    }
    return tape.push(std::move(out), {x}, [x, factor](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(Var{self});
        Matrix& gx = tp.grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            gx.data[i] += factor * g.data[i];
        }
    });
}

Var matmul_nt(Tape& tape, Var x, Var w) {
    const Matrix& vx = tape.value(x);
    const Matrix& vw = tape.value(w);
    require(vx.cols == vw.cols, "matmul_nt", shape(vx) + " * (" + shape(vw) + ")^T");
    Matrix out(vx.rows, vw.rows);
    kernels::active().gemm_nt(vx.data.data(), vw.data.data(), out.data.data(), vx.rows, vw.rows, vx.cols, false);
    return tape.push(std::move(out), {x, w}, [x, w](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(Var{self});
        const Matrix& vx = tp.value(x);
        const Matrix& vw = tp.value(w);
        const auto& k = kernels::active();
        if (tp.needs_grad(x)) {
            Matrix& gx = tp.grad(x);
            k.gemm_nn_acc(g.data.data(), vw.data.data(), gx.data.data(), g.rows, vw.cols, g.cols);
        }
        if (tp.needs_grad(w)) {
            Matrix& gw = tp.grad(w);
            k.gemm_tn_acc(g.data.data(), vx.data.data(), gw.data.data(), g.cols, vx.cols, g.rows);
        }
    });
}

Var linear(Tape& tape, Var x, Var w, Var bias) {
    return add_bias(tape, matmul_nt(tape, x, w), bias);
}

Var layer_norm(Tape& tape, Var x, Var gamma, Var beta, double eps) {
    const Matrix& vx = tape.value(x);
    const Matrix& vg = tape.value(gamma);
    const Matrix& vb = tape.value(beta);
    require(vg.rows == 1 && vg.cols == vx.cols && vb.same_shape(vg), "layer_norm", shape(vx) + " with " + shape(vg));
    const std::size_t n = vx.cols;
    Matrix out(vx.rows, n);
    Matrix normed(vx.rows, n);
    std::vector<double> inv_std(vx.rows);
    for (std::size_t r = 0; r < vx.rows; ++r) {
        const auto row = vx.row(r);
        double mean = 0.0;
        for (double v : row) {
            mean += v;
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : row) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<double>(n);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < n; ++c) {
            normed(r, c) = (row[c] - mean) * inv_std[r];
            out(r, c) = normed(r, c) * vg(0, c) + vb(0, c);
        }
    }
    return tape.push(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, normed = std::move(normed), inv_std = std::move(inv_std)](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(Var{self});
        const Matrix& vg = tp.value(gamma);
        const std::size_t n = g.cols;
        if (tp.needs_grad(gamma) || tp.needs_grad(beta)) {
            Matrix& gg = tp.grad(gamma);
            Matrix& gb = tp.grad(beta);
            for (std::size_t r = 0; r < g.rows; ++r) {
                for (std::size_t c = 0; c < n; ++c) {
                    gg(0, c) += g(r, c) * normed(r, c);
                    gb(0, c) += g(r, c);
                }
            }
        }
        if (tp.needs_grad(x)) {
            Matrix& gx = tp.grad(x);
            std::vector<double> ghat(n);
            for (std::size_t r = 0; r < g.rows; ++r) {
                double mean_g = 0.0;
                double mean_gx = 0.0;
                for (std::size_t c = 0; c < n; ++c) {
                    ghat[c] = g(r, c) * vg(0, c);
                    mean_g += ghat[c];
                    mean_gx += ghat[c] * normed(r, c);
                }
                mean_g /= static_cast<double>(n);
                mean_gx /= static_cast<double>(n);
                for (std::size_t c = 0; c < n; ++c) {
                    gx(r, c) += inv_std[r] * (ghat[c] - mean_g - normed(r, c) * mean_gx);
                }
            }
        }
    });
}

Var gelu(Tape& tape, Var x) {
    Matrix out = tape.value(x);
    for (double& v : out.data) {
        v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
    }
    return tape.push(std::move(out), {x}, [x](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(Var{self});
        const Matrix& vx = tp.value(x);
        Matrix& gx = tp.grad(x);
        const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = vx.data[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            gx.data[i] += g.data[i] * (cdf + v * pdf);
        }
    });
}

Var dropout(Tape& tape, Var x, double rate, std::mt19937_64& rng) {
    if (rate <= 0.0) {
        return x;
    }
    const Matrix& vx = tape.value(x);
    const double keep_scale = 1.0 / (1.0 - rate);
    std::bernoulli_distribution keep(1.0 - rate);
    Matrix mask(vx.rows, vx.cols);
    Matrix out(vx.rows, vx.cols);
    for (std::size_t i = 0; i < vx.size(); ++i) {
        mask.data[i] = keep(rng) ? keep_scale : 0.0;
        out.data[i] = vx.data[i] * mask.data[i];
    }
    return tape.push(std::move(out), {x}, [x, mask = std::move(mask)](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(Var{self});
        Matrix& gx = tp.grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            gx.data[i] += g.data[i] * mask.data[i];
        }
    });
}

Var l2_normalize_rows(Tape& tape, Var x, double eps) {
    const Matrix& vx = tape.value(x);
    Matrix out(vx.rows, vx.cols);
    std::vector<double> norms(vx.rows);
    for (std::size_t r = 0; r < vx.rows; ++r) {
        norms[r] = std::max(std::sqrt(kernels::dot(vx.row(r), vx.row(r))), eps);
        for (std::size_t c = 0; c < vx.cols; ++c) {
            out(r, c) = vx(r, c) / norms[r];
        }
    }
    return tape.push(std::move(out), {x}, [x, norms = std::move(norms)](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(Var{self});
        const Matrix& y = tp.value(Var{self});
        Matrix& gx = tp.grad(x);
        for (std::size_t r = 0; r < g.rows; ++r) {
            const double proj = kernels::dot(y.row(r), g.row(r));
            for (std::size_t c = 0; c < g.cols; ++c) {
                gx(r, c) += (g(r, c) - y(r, c) * proj) / norms[r];
            }
        }
    });
}

Var attention(Tape& tape, Var q, Var k, Var v, std::size_t seq_len, std::span<const std::size_t> valid_lengths, std::size_t n_heads) {
    const Matrix& vq = tape.value(q);
    const Matrix& vk = tape.value(k);
    const Matrix& vv = tape.value(v);
    const std::size_t n_seq = valid_lengths.size();
    require(vq.same_shape(vk) && vq.same_shape(vv), "attention", "q/k/v shapes differ");
    require(vq.rows == n_seq * seq_len, "attention", "rows " + std::to_string(vq.rows) + " != n_seq * seq_len");
    require(n_heads > 0 && vq.cols % n_heads == 0, "attention", "dim not divisible by heads");
    const std::size_t dim = vq.cols;
    const std::size_t dh = dim / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto& kern = kernels::active();

    // probs[s][h] is seq_len x valid_len, row-major.
    std::vector<std::vector<double>> probs(n_seq * n_heads);
    std::vector<std::size_t> lengths(valid_lengths.begin(), valid_lengths.end());
    Matrix out(vq.rows, dim);
    std::vector<double> qh(seq_len * dh);
    std::vector<double> kh(seq_len * dh);
    std::vector<double> vh(seq_len * dh);
    std::vector<double> oh(seq_len * dh);

    for (std::size_t s = 0; s < n_seq; ++s) {
        const std::size_t len = lengths[s];
        require(len >= 1 && len <= seq_len, "attention", "valid length out of range");
        for (std::size_t h = 0; h < n_heads; ++h) {
            for (std::size_t t = 0; t < seq_len; ++t) {
                const std::size_t r = s * seq_len + t;
                std::copy_n(&vq(r, h * dh), dh, &qh[t * dh]);
                std::copy_n(&vk(r, h * dh), dh, &kh[t * dh]);
                std::copy_n(&vv(r, h * dh), dh, &vh[t * dh]);
            }
            std::vector<double>& p = probs[s * n_heads + h];
            p.assign(seq_len * len, 0.0);
            kern.gemm_nt(qh.data(), kh.data(), p.data(), seq_len, len, dh, false);
            for (std::size_t t = 0; t < seq_len; ++t) {
                double* prow = p.data() + t * len;
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < len; ++j) {
                    prow[j] *= inv_sqrt;
                    mx = std::max(mx, prow[j]);
                }
                double denom = 0.0;
                for (std::size_t j = 0; j < len; ++j) {
                    prow[j] = std::exp(prow[j] - mx);
                    denom += prow[j];
                }
                for (std::size_t j = 0; j < len; ++j) {
                    prow[j] /= denom;
                }
            }
            std::fill(oh.begin(), oh.end(), 0.0);
            kern.gemm_nn_acc(p.data(), vh.data(), oh.data(), seq_len, dh, len);
            for (std::size_t t = 0; t < seq_len; ++t) {
                std::copy_n(&oh[t * dh], dh, &out(s * seq_len + t, h * dh));
            }
        }
    }

    return tape.push(std::move(out), {q, k, v},
                     [q, k, v, seq_len, n_heads, dh, inv_sqrt, lengths = std::move(lengths), probs = std::move(probs)](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(Var{self});
        const Matrix& vq = tp.value(q);
        const Matrix& vk = tp.value(k);
        const Matrix& vv = tp.value(v);
        Matrix& gq = tp.grad(q);
        Matrix& gk = tp.grad(k);
        Matrix& gv = tp.grad(v);
        const auto& kern = kernels::active();
        std::vector<double> qh(seq_len * dh), kh(seq_len * dh), vh(seq_len * dh), gh(seq_len * dh);
        std::vector<double> dq(seq_len * dh), dk(seq_len * dh), dv(seq_len * dh);
        for (std::size_t s = 0; s < lengths.size(); ++s) {
            const std::size_t len = lengths[s];
            std::vector<double> dp(seq_len * len);
            for (std::size_t h = 0; h < n_heads; ++h) {
                for (std::size_t t = 0; t < seq_len; ++t) {
                    const std::size_t r = s * seq_len + t;
                    std::copy_n(&vq(r, h * dh), dh, &qh[t * dh]);
                    std::copy_n(&vk(r, h * dh), dh, &kh[t * dh]);
                    std::copy_n(&vv(r, h * dh), dh, &vh[t * dh]);
                    std::copy_n(&g(r, h * dh), dh, &gh[t * dh]);
                }
                const std::vector<double>& p = probs[s * n_heads + h];
                // dV = P^T dO (only the first len key rows are reachable)
                std::fill(dv.begin(), dv.end(), 0.0);
                kern.gemm_tn_acc(p.data(), gh.data(), dv.data(), len, dh, seq_len);
                // dP = dO V^T
                kern.gemm_nt(gh.data(), vh.data(), dp.data(), seq_len, len, dh, false);
                // dS = P * (dP - rowsum(dP * P)), folded with the 1/sqrt(dh) scale
                for (std::size_t t = 0; t < seq_len; ++t) {
                    const double* prow = p.data() + t * len;
                    double* drow = dp.data() + t * len;
                    double inner = 0.0;
                    for (std::size_t j = 0; j < len; ++j) {
                        inner += drow[j] * prow[j];
                    }
                    for (std::size_t j = 0; j < len; ++j) {
                        drow[j] = prow[j] * (drow[j] - inner) * inv_sqrt;
                    }
                }
                std::fill(dq.begin(), dq.end(), 0.0);
                std::fill(dk.begin(), dk.end(), 0.0);
                kern.gemm_nn_acc(dp.data(), kh.data(), dq.data(), seq_len, dh, len);
                kern.gemm_tn_acc(dp.data(), qh.data(), dk.data(), len, dh, seq_len);
                for (std::size_t t = 0; t < seq_len; ++t) {
                    const std::size_t r = s * seq_len + t;
                    for (std::size_t c = 0; c < dh; ++c) {
                        gq(r, h * dh + c) += dq[t * dh + c];
                        gk(r, h * dh + c) += dk[t * dh + c];
                        gv(r, h * dh + c) += dv[t * dh + c];
                    }
                }
            }
        }
    });
}

Var weighted_sum(Tape& tape, std::span<const Var> terms, std::span<const double> weights) {
    require(terms.size() == weights.size(), "weighted_sum", "term/weight count mismatch");
    Matrix out(1, 1);
    for (std::size_t i = 0; i < terms.size(); ++i) {
        const Matrix& t = tape.value(terms[i]);
        require(t.rows == 1 && t.cols == 1, "weighted_sum", "terms must be 1x1");
        out(0, 0) += weights[i] * t(0, 0);
    }
    std::vector<Var> ins(terms.begin(), terms.end());
    std::vector<double> ws(weights.begin(), weights.end());
    return tape.push(std::move(out), std::span<const Var>(ins), [ins, ws](Tape& tp, std::size_t self) {
        const double g = tp.grad(Var{self})(0, 0);
        for (std::size_t i = 0; i < ins.size(); ++i) {
            if (tp.needs_grad(ins[i]) && ws[i] != 0.0) {
                tp.grad(ins[i])(0, 0) += ws[i] * g;
            }
        }
    });
}

Var cross_entropy(Tape& tape, Var logits, std::span<const std::size_t> labels) {
    const Matrix& z = tape.value(logits);
    require(z.rows == labels.size(), "cross_entropy", std::to_string(z.rows) + " rows vs " + std::to_string(labels.size()) + " labels");
    Matrix out(1, 1);
    if (z.rows == 0) {
        return tape.push(std::move(out), {logits}, nullptr);
    }
    Matrix probs(z.rows, z.cols);
    double total = 0.0;
    for (std::size_t r = 0; r < z.rows; ++r) {
        if (labels[r] >= z.cols) {
            throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(labels[r]) + " >= " + std::to_string(z.cols));
        }
        const auto row = z.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double denom = 0.0;
        for (std::size_t c = 0; c < z.cols; ++c) {
            probs(r, c) = std::exp(row[c] - mx);
            denom += probs(r, c);
        }
        for (std::size_t c = 0; c < z.cols; ++c) {
            probs(r, c) /= denom;
        }
        total += -(row[labels[r]] - mx - std::log(denom));
    }
    const double inv_n = 1.0 / static_cast<double>(z.rows);
    out(0, 0) = total * inv_n;
    std::vector<std::size_t> lab(labels.begin(), labels.end());
    return tape.push(std::move(out), {logits}, [logits, inv_n, lab = std::move(lab), probs = std::move(probs)](Tape& tp, std::size_t self) {
        const double g = tp.grad(Var{self})(0, 0) * inv_n;
        Matrix& gz = tp.grad(logits);
        for (std::size_t r = 0; r < probs.rows; ++r) {
            for (std::size_t c = 0; c < probs.cols; ++c) {
                gz(r, c) += g * (probs(r, c) - (c == lab[r] ? 1.0 : 0.0));
            }
        }
    });
}

} // namespace cellokit::ad
