#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "leocvae/matrix.hpp"
#include "leocvae/rng.hpp"

namespace leocvae {

// Trainable tensor: value plus gradient and Adam state, all of one shape.
// Gradients accumulate across backward passes until zero_grad().
struct ParamTensor {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix adam_m;
    Matrix adam_v;
    long step_count = 0;

    ParamTensor() = default;
    ParamTensor(std::string param_name, Matrix init)
        : name(std::move(param_name)),
          value(std::move(init)),
          grad(value.rows(), value.cols()),
          adam_m(value.rows(), value.cols()),
          adam_v(value.rows(), value.cols()) {}

    void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

// Batch-normalization running statistics, updated in training mode and used
// verbatim in eval mode.
struct BatchNormState {
    Matrix running_mean;  // 1xM
    Matrix running_var;   // 1xM

    BatchNormState() = default;
    explicit BatchNormState(std::size_t width)
        : running_mean(1, width), running_var(Matrix::constant(1, width, 1.0)) {}
};

// Handle into a Tape. Only valid for the tape that created it, and only
// until that tape is reset.
struct Node {
    std::size_t id = static_cast<std::size_t>(-1);
};

// Define-by-run reverse-mode tape. Recording order is topological order, so
// backward() simply walks the records in reverse. A tape is single-use:
// after backward() it must be reset() before recording again.
class Tape {
public:
    Node constant(Matrix v);
    // Leaf bound to a parameter; backward accumulates into p.grad.
    Node param(ParamTensor& p);

    // out = x * w + bias broadcast per row. x: Bxn, w: nxm, bias: 1xm.
    Node affine(Node x, Node w, Node bias);

    Node add(Node a, Node b);
    Node sub(Node a, Node b);
    Node mul(Node a, Node b);  // elementwise
    Node scale(Node a, double s);
    Node exp(Node a);

    // max(x, slope*x); subgradient at 0 is 1.
    Node leaky_relu(Node a, double negative_slope);
    // Pass-through inside [lo, hi] (inclusive), zero gradient outside.
    Node clamp(Node a, double lo, double hi);
    // Inverted dropout; identity in eval mode or when p == 0.
    Node dropout(Node a, double p, bool training, RngStream& rng);
    Node concat_cols(Node a, Node b);

    Node row_sum(Node a);   // Bxm -> Bx1
    Node mean_all(Node a);  // -> 1x1
    // Elementwise max(a, floor); gradient 1 where a >= floor, else 0.
    Node max_with(Node a, double floor);

    // Mean binary cross-entropy of logits (Bx1) against fixed targets (Bx1).
    Node bce_with_logits_mean(Node logits, Matrix targets);
    // Mean softmax cross-entropy of logits (BxC) against fixed target
    // probability rows (BxC).
    Node softmax_xent_mean(Node logits, Matrix target_probs);

    // Batch normalization over rows with affine gamma/beta (1xM params).
    Node batchnorm(Node x, Node gamma, Node beta, BatchNormState& state, bool training,
                   double eps = 1e-5, double momentum = 0.1);

    const Matrix& value(Node n) const;
    double scalar(Node n) const;

    // Seeds d(loss)/d(loss) = 1 and propagates to every leaf. Requires a
    // 1x1 loss node and an unconsumed tape.
    void backward(Node loss);

    void reset();
    std::size_t num_nodes() const { return records_.size(); }
    bool consumed() const { return consumed_; }

private:
    struct Record {
        Matrix value;
        Matrix grad;
        bool grad_set = false;
        ParamTensor* bound = nullptr;
        std::function<void(Tape&, std::size_t)> backprop;
    };

    Node push(Matrix value, std::function<void(Tape&, std::size_t)> backprop,
              ParamTensor* bound = nullptr);
    Matrix& grad_ref(std::size_t id);
    void accumulate(std::size_t id, const Matrix& g);
    const Record& record(std::size_t id) const { return records_[id]; }

    std::vector<Record> records_;
    bool consumed_ = false;
};

}  // namespace leocvae
