#include "leocvae/tape.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "leocvae/errors.hpp"

namespace leocvae {

Node Tape::push(Matrix value, std::function<void(Tape&, std::size_t)> backprop,
                ParamTensor* bound) {
    Record r;
    r.value = std::move(value);
    r.backprop = std::move(backprop);
    r.bound = bound;
    records_.push_back(std::move(r));
    return Node{records_.size() - 1};
}

Matrix& Tape::grad_ref(std::size_t id) {
    Record& r = records_[id];
    if (!r.grad_set) {
        r.grad = Matrix(r.value.rows(), r.value.cols());
        r.grad_set = true;
    }
    return r.grad;
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
    grad_ref(id) += g;
}

const Matrix& Tape::value(Node n) const {
    return records_[n.id].value;
}

double Tape::scalar(Node n) const {
    const Matrix& v = records_[n.id].value;
    if (v.rows() != 1 || v.cols() != 1) {
        throw UsageError("scalar: node has shape " + v.shape_str());
    }
    return v(0, 0);
}

Node Tape::constant(Matrix v) {
    return push(std::move(v), nullptr);
}

Node Tape::param(ParamTensor& p) {
    return push(p.value, [](Tape& t, std::size_t self) {
        Record& r = t.records_[self];
        if (r.grad_set) r.bound->grad += r.grad;
    }, &p);
}

Node Tape::affine(Node x, Node w, Node bias) {
    const Matrix& xv = records_[x.id].value;
    const Matrix& wv = records_[w.id].value;
    const Matrix& bv = records_[bias.id].value;
    if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
        throw DimensionError("affine: shape mismatch " + xv.shape_str() + " * " + wv.shape_str() +
                             " + " + bv.shape_str());
    }
    Matrix out = add_row_broadcast(matmul(xv, wv), bv);
    const std::size_t xi = x.id, wi = w.id, bi = bias.id;
    return push(std::move(out), [xi, wi, bi](Tape& t, std::size_t self) {
        const Matrix& g = t.records_[self].grad;
        t.accumulate(xi, matmul_transpose_b(g, t.records_[wi].value));
        t.accumulate(wi, matmul_transpose_a(t.records_[xi].value, g));
        t.accumulate(bi, column_sums(g));
    });
}

Node Tape::add(Node a, Node b) {
    Matrix out = leocvae::add(records_[a.id].value, records_[b.id].value);
    const std::size_t ai = a.id, bi = b.id;
    return push(std::move(out), [ai, bi](Tape& t, std::size_t self) {
        const Matrix& g = t.records_[self].grad;
        t.accumulate(ai, g);
        t.accumulate(bi, g);
    });
}

Node Tape::sub(Node a, Node b) {
    Matrix out = leocvae::sub(records_[a.id].value, records_[b.id].value);
    const std::size_t ai = a.id, bi = b.id;
    return push(std::move(out), [ai, bi](Tape& t, std::size_t self) {
        const Matrix& g = t.records_[self].grad;
        t.accumulate(ai, g);
        Matrix& gb = t.grad_ref(bi);
        for (std::size_t i = 0; i < gb.size(); ++i) gb.values()[i] -= g.values()[i];
    });
}

Node Tape::mul(Node a, Node b) {
    Matrix out = hadamard(records_[a.id].value, records_[b.id].value);
    const std::size_t ai = a.id, bi = b.id;
    return push(std::move(out), [ai, bi](Tape& t, std::size_t self) {
        const Matrix& g = t.records_[self].grad;
        t.accumulate(ai, hadamard(g, t.records_[bi].value));
        t.accumulate(bi, hadamard(g, t.records_[ai].value));
    });
}

Node Tape::scale(Node a, double s) {
    Matrix out = leocvae::scale(records_[a.id].value, s);
    const std::size_t ai = a.id;
    return push(std::move(out), [ai, s](Tape& t, std::size_t self) {
        t.accumulate(ai, leocvae::scale(t.records_[self].grad, s));
    });
}

Node Tape::exp(Node a) {
    const Matrix& av = records_[a.id].value;
    Matrix out(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.size(); ++i) out.values()[i] = std::exp(av.values()[i]);
    const std::size_t ai = a.id;
    return push(std::move(out), [ai](Tape& t, std::size_t self) {
        t.accumulate(ai, hadamard(t.records_[self].grad, t.records_[self].value));
    });
}

Node Tape::leaky_relu(Node a, double negative_slope) {
    if (negative_slope < 0.0 || negative_slope >= 1.0) {
        throw ConfigError("leaky_relu: slope must be in [0,1), got " +
                          std::to_string(negative_slope));
    }
    const Matrix& av = records_[a.id].value;
    Matrix out(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double v = av.values()[i];
        out.values()[i] = v >= 0.0 ? v : negative_slope * v;
    }
    const std::size_t ai = a.id;
    return push(std::move(out), [ai, negative_slope](Tape& t, std::size_t self) {
        const Matrix& g = t.records_[self].grad;
        const Matrix& av2 = t.records_[ai].value;
        Matrix& ga = t.grad_ref(ai);
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga.values()[i] += g.values()[i] * (av2.values()[i] >= 0.0 ? 1.0 : negative_slope);
        }
    });
}

Node Tape::clamp(Node a, double lo, double hi) {
    const Matrix& av = records_[a.id].value;
    Matrix out(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double v = av.values()[i];
        out.values()[i] = v < lo ? lo : (v > hi ? hi : v);
    }
    const std::size_t ai = a.id;
    return push(std::move(out), [ai, lo, hi](Tape& t, std::size_t self) {
        const Matrix& g = t.records_[self].grad;
        const Matrix& av2 = t.records_[ai].value;
        Matrix& ga = t.grad_ref(ai);
        for (std::size_t i = 0; i < ga.size(); ++i) {
            const double v = av2.values()[i];
            if (v >= lo && v <= hi) ga.values()[i] += g.values()[i];
        }
    });
}

Node Tape::dropout(Node a, double p, bool training, RngStream& rng) {
    if (p < 0.0 || p >= 1.0) {
        throw ConfigError("dropout: p must be in [0,1), got " + std::to_string(p));
    }
    if (!training || p == 0.0) return a;
    const Matrix& av = records_[a.id].value;
    const double keep_scale = 1.0 / (1.0 - p);
    Matrix mask(av.rows(), av.cols());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask.values()[i] = rng.uniform01() < p ? 0.0 : keep_scale;
    }
    Matrix out = hadamard(av, mask);
    const std::size_t ai = a.id;
    return push(std::move(out), [ai, mask = std::move(mask)](Tape& t, std::size_t self) {
        t.accumulate(ai, hadamard(t.records_[self].grad, mask));
    });
}

Node Tape::concat_cols(Node a, Node b) {
    const Matrix& av = records_[a.id].value;
    const Matrix& bv = records_[b.id].value;
    if (av.rows() != bv.rows()) {
        throw DimensionError("concat_cols: row mismatch " + av.shape_str() + " vs " +
                             bv.shape_str());
    }
    const std::size_t ca = av.cols(), cb = bv.cols();
    Matrix out(av.rows(), ca + cb);
    for (std::size_t i = 0; i < av.rows(); ++i) {
        for (std::size_t j = 0; j < ca; ++j) out(i, j) = av(i, j);
        for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = bv(i, j);
    }
    const std::size_t ai = a.id, bi = b.id;
    return push(std::move(out), [ai, bi, ca, cb](Tape& t, std::size_t self) {
        const Matrix& g = t.records_[self].grad;
        Matrix& ga = t.grad_ref(ai);
        Matrix& gb = t.grad_ref(bi);
        for (std::size_t i = 0; i < ga.rows(); ++i) {
            for (std::size_t j = 0; j < ca; ++j) ga(i, j) += g(i, j);
            for (std::size_t j = 0; j < cb; ++j) gb(i, j) += g(i, ca + j);
        }
    });
}

Node Tape::row_sum(Node a) {
    Matrix out = row_sums(records_[a.id].value);
    const std::size_t ai = a.id;
    return push(std::move(out), [ai](Tape& t, std::size_t self) {
        const Matrix& g = t.records_[self].grad;
        Matrix& ga = t.grad_ref(ai);
        for (std::size_t i = 0; i < ga.rows(); ++i) {
            for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(i, 0);
        }
    });
}

Node Tape::mean_all(Node a) {
    const Matrix& av = records_[a.id].value;
    const double inv_n = 1.0 / static_cast<double>(av.size());
    Matrix out(1, 1);
    out(0, 0) = sum_all(av) * inv_n;
    const std::size_t ai = a.id;
    return push(std::move(out), [ai, inv_n](Tape& t, std::size_t self) {
        const double g = t.records_[self].grad(0, 0) * inv_n;
        Matrix& ga = t.grad_ref(ai);
        for (double& v : ga.values()) v += g;
    });
}

Node Tape::max_with(Node a, double floor) {
    const Matrix& av = records_[a.id].value;
    Matrix out(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.size(); ++i) {
        out.values()[i] = av.values()[i] < floor ? floor : av.values()[i];
    }
    const std::size_t ai = a.id;
    return push(std::move(out), [ai, floor](Tape& t, std::size_t self) {
        const Matrix& g = t.records_[self].grad;
        const Matrix& av2 = t.records_[ai].value;
        Matrix& ga = t.grad_ref(ai);
        for (std::size_t i = 0; i < ga.size(); ++i) {
            if (av2.values()[i] >= floor) ga.values()[i] += g.values()[i];
        }
    });
}

Node Tape::bce_with_logits_mean(Node logits, Matrix targets) {
    const Matrix& lv = records_[logits.id].value;
    check_same_shape(lv, targets, "bce_with_logits_mean");
    const double inv_n = 1.0 / static_cast<double>(lv.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < lv.size(); ++i) {
        const double l = lv.values()[i];
        const double target = targets.values()[i];
        // max(l,0) - l*t + log(1 + exp(-|l|)): stable for large |l|
        loss += std::max(l, 0.0) - l * target + std::log1p(std::exp(-std::abs(l)));
    }
    Matrix out(1, 1);
    out(0, 0) = loss * inv_n;
    const std::size_t li = logits.id;
    return push(std::move(out), [li, inv_n, targets = std::move(targets)](Tape& t,
                                                                          std::size_t self) {
        const double g = t.records_[self].grad(0, 0) * inv_n;
        const Matrix& lv2 = t.records_[li].value;
        Matrix& gl = t.grad_ref(li);
        for (std::size_t i = 0; i < gl.size(); ++i) {
            const double sig = 1.0 / (1.0 + std::exp(-lv2.values()[i]));
            gl.values()[i] += g * (sig - targets.values()[i]);
        }
    });
}

Node Tape::softmax_xent_mean(Node logits, Matrix target_probs) {
    const Matrix& lv = records_[logits.id].value;
    check_same_shape(lv, target_probs, "softmax_xent_mean");
    const std::size_t batch = lv.rows(), classes = lv.cols();
    Matrix probs(batch, classes);
    double loss = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        double row_max = lv(i, 0);
        for (std::size_t c = 1; c < classes; ++c) row_max = std::max(row_max, lv(i, c));
        double denom = 0.0;
        for (std::size_t c = 0; c < classes; ++c) denom += std::exp(lv(i, c) - row_max);
        const double log_denom = std::log(denom);
        for (std::size_t c = 0; c < classes; ++c) {
            const double log_p = lv(i, c) - row_max - log_denom;
            probs(i, c) = std::exp(log_p);
            loss -= target_probs(i, c) * log_p;
        }
    }
    const double inv_b = 1.0 / static_cast<double>(batch);
    Matrix out(1, 1);
    out(0, 0) = loss * inv_b;
    const std::size_t li = logits.id;
    return push(std::move(out),
                [li, inv_b, probs = std::move(probs),
                 target_probs = std::move(target_probs)](Tape& t, std::size_t self) {
                    const double g = t.records_[self].grad(0, 0) * inv_b;
                    Matrix& gl = t.grad_ref(li);
                    for (std::size_t i = 0; i < gl.size(); ++i) {
                        gl.values()[i] += g * (probs.values()[i] - target_probs.values()[i]);
                    }
                });
}

Node Tape::batchnorm(Node x, Node gamma, Node beta, BatchNormState& state, bool training,
                     double eps, double momentum) {
    const Matrix& xv = records_[x.id].value;
    const Matrix& gv = records_[gamma.id].value;
    const Matrix& bv = records_[beta.id].value;
    const std::size_t batch = xv.rows(), width = xv.cols();
    if (gv.rows() != 1 || gv.cols() != width || bv.rows() != 1 || bv.cols() != width ||
        state.running_mean.cols() != width) {
        throw DimensionError("batchnorm: shape mismatch for input " + xv.shape_str());
    }

    Matrix mean(1, width), inv_std(1, width), xhat(batch, width);
    if (training) {
        const double inv_b = 1.0 / static_cast<double>(batch);
        for (std::size_t j = 0; j < width; ++j) {
            double m = 0.0;
            for (std::size_t i = 0; i < batch; ++i) m += xv(i, j);
            m *= inv_b;
            double var = 0.0;
            for (std::size_t i = 0; i < batch; ++i) {
                const double d = xv(i, j) - m;
                var += d * d;
            }
            var *= inv_b;  // biased variance for normalization
            mean(0, j) = m;
            inv_std(0, j) = 1.0 / std::sqrt(var + eps);
            // running_var tracks the unbiased estimate
            const double unbiased = batch > 1 ? var * static_cast<double>(batch) /
                                                    static_cast<double>(batch - 1)
                                              : var;
            state.running_mean(0, j) = (1.0 - momentum) * state.running_mean(0, j) + momentum * m;
            state.running_var(0, j) =
                (1.0 - momentum) * state.running_var(0, j) + momentum * unbiased;
        }
    } else {
        for (std::size_t j = 0; j < width; ++j) {
            mean(0, j) = state.running_mean(0, j);
            inv_std(0, j) = 1.0 / std::sqrt(state.running_var(0, j) + eps);
        }
    }

    Matrix out(batch, width);
    for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t j = 0; j < width; ++j) {
            xhat(i, j) = (xv(i, j) - mean(0, j)) * inv_std(0, j);
            out(i, j) = gv(0, j) * xhat(i, j) + bv(0, j);
        }
    }

    const std::size_t xi = x.id, gi = gamma.id, bi = beta.id;
    return push(std::move(out),
                [xi, gi, bi, training, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
                    const Matrix& g = t.records_[self].grad;
                    const std::size_t batch2 = g.rows(), width2 = g.cols();
                    const Matrix& gamma_v = t.records_[gi].value;
                    Matrix& gx = t.grad_ref(xi);
                    Matrix& gg = t.grad_ref(gi);
                    Matrix& gb = t.grad_ref(bi);
                    const double inv_b = 1.0 / static_cast<double>(batch2);
                    for (std::size_t j = 0; j < width2; ++j) {
                        double sum_g = 0.0, sum_gx = 0.0;
                        for (std::size_t i = 0; i < batch2; ++i) {
                            sum_g += g(i, j);
                            sum_gx += g(i, j) * xhat(i, j);
                        }
                        gb(0, j) += sum_g;
                        gg(0, j) += sum_gx;
                        const double k = gamma_v(0, j) * inv_std(0, j);
                        if (training) {
                            // dL/dx via batch statistics
                            const double mean_g = sum_g * inv_b;
                            const double mean_gx = sum_gx * inv_b;
                            for (std::size_t i = 0; i < batch2; ++i) {
                                gx(i, j) += k * (g(i, j) - mean_g - xhat(i, j) * mean_gx);
                            }
                        } else {
                            for (std::size_t i = 0; i < batch2; ++i) gx(i, j) += k * g(i, j);
                        }
                    }
                });
}

void Tape::backward(Node loss) {
    if (consumed_) {
        throw UsageError("backward: tape already consumed; reset() before reuse");
    }
    const Matrix& lv = records_[loss.id].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw UsageError("backward: loss node must be scalar, got " + lv.shape_str());
    }
    consumed_ = true;
    grad_ref(loss.id)(0, 0) = 1.0;
    for (std::size_t i = records_.size(); i-- > 0;) {
        Record& r = records_[i];
        if (r.grad_set && r.backprop) r.backprop(*this, i);
    }
}

void Tape::reset() {
    records_.clear();
    consumed_ = false;
}

}  // namespace leocvae
