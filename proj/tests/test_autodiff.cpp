#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "leocvae/classifier.hpp"
#include "leocvae/cvae.hpp"
#include "leocvae/errors.hpp"
#include "leocvae/matrix.hpp"
#include "leocvae/optim.hpp"
#include "leocvae/rng.hpp"
#include "leocvae/tape.hpp"

using namespace leocvae;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, RngStream& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
    return m;
}

// Central-difference gradient check. `loss_fn` must rebuild the forward pass
// from scratch (fresh tape) and be deterministic, so each perturbed
// evaluation sees the same graph.
double max_rel_error(std::vector<ParamTensor*> params, const std::function<double()>& loss_fn,
                     const std::function<void()>& backward_fn) {
    for (auto* p : params) p->zero_grad();
    backward_fn();

    double worst = 0.0;
    for (auto* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value.values()[i];
            const double h = 1e-5 * std::max(1.0, std::abs(saved));
            p->value.values()[i] = saved + h;
            const double up = loss_fn();
            p->value.values()[i] = saved - h;
            const double down = loss_fn();
            p->value.values()[i] = saved;

            const double fd = (up - down) / (2.0 * h);
            const double analytic = p->grad.values()[i];
            const double rel =
                std::abs(analytic - fd) / std::max({1e-6, std::abs(analytic), std::abs(fd)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// Convenience for single-tape graphs: builder returns the loss node.
double check_graph(std::vector<ParamTensor*> params,
                   const std::function<Node(Tape&)>& build) {
    auto loss_fn = [&]() {
        Tape t;
        return t.scalar(build(t));
    };
    auto backward_fn = [&]() {
        Tape t;
        Node loss = build(t);
        t.backward(loss);
    };
    return max_rel_error(params, loss_fn, backward_fn);
}

}  // namespace

TEST_CASE("affine gradients match finite differences") {
    RngStream rng(1);
    ParamTensor w("w", random_matrix(3, 4, rng));
    ParamTensor b("b", random_matrix(1, 4, rng));
    ParamTensor x("x", random_matrix(5, 3, rng));

    auto build = [&](Tape& t) {
        Node out = t.affine(t.param(x), t.param(w), t.param(b));
        return t.mean_all(t.mul(out, out));
    };
    CHECK(check_graph({&w, &b, &x}, build) < 1e-6);
}

TEST_CASE("elementwise op gradients match finite differences") {
    RngStream rng(2);
    ParamTensor a("a", random_matrix(4, 3, rng));
    ParamTensor b("b", random_matrix(4, 3, rng));

    SUBCASE("add/sub/mul/scale") {
        auto build = [&](Tape& t) {
            Node s = t.add(t.param(a), t.scale(t.param(b), 1.7));
            Node d = t.sub(s, t.mul(t.param(a), t.param(b)));
            return t.mean_all(t.mul(d, d));
        };
        CHECK(check_graph({&a, &b}, build) < 1e-6);
    }
    SUBCASE("exp") {
        auto build = [&](Tape& t) { return t.mean_all(t.exp(t.param(a))); };
        CHECK(check_graph({&a}, build) < 1e-6);
    }
    SUBCASE("leaky_relu away from the kink") {
        auto build = [&](Tape& t) {
            return t.mean_all(t.leaky_relu(t.param(a), 0.2));
        };
        CHECK(check_graph({&a}, build) < 1e-6);
    }
    SUBCASE("clamp passes gradient inside the window only") {
        ParamTensor c("c", Matrix{{-3.0, -0.5, 0.5, 3.0}});
        auto build = [&](Tape& t) {
            Node clamped = t.clamp(t.param(c), -1.0, 1.0);
            return t.mean_all(t.mul(clamped, clamped));
        };
        Tape t;
        Node loss = build(t);
        c.zero_grad();
        t.backward(loss);
        CHECK(c.grad(0, 0) == 0.0);  // below the window
        CHECK(c.grad(0, 3) == 0.0);  // above the window
        CHECK(c.grad(0, 1) == doctest::Approx(2.0 * -0.5 / 4.0));
        CHECK(c.grad(0, 2) == doctest::Approx(2.0 * 0.5 / 4.0));
    }
    SUBCASE("max_with blocks gradient under the floor") {
        ParamTensor c("c", Matrix{{0.05}});
        ParamTensor d("d", Matrix{{0.3}});
        auto build = [&](Tape& t) {
            Node lo = t.max_with(t.param(c), 0.1);
            Node hi = t.max_with(t.param(d), 0.1);
            return t.mean_all(t.add(lo, hi));
        };
        Tape t;
        Node loss = build(t);
        c.zero_grad();
        d.zero_grad();
        t.backward(loss);
        CHECK(c.grad(0, 0) == 0.0);
        CHECK(d.grad(0, 0) == doctest::Approx(1.0));
    }
}

TEST_CASE("reduction gradients match finite differences") {
    RngStream rng(3);
    ParamTensor a("a", random_matrix(6, 5, rng));
    auto build = [&](Tape& t) {
        Node rs = t.row_sum(t.mul(t.param(a), t.param(a)));
        return t.mean_all(rs);
    };
    CHECK(check_graph({&a}, build) < 1e-6);
}

TEST_CASE("concat_cols routes gradients to both inputs") {
    RngStream rng(4);
    ParamTensor a("a", random_matrix(3, 2, rng));
    ParamTensor b("b", random_matrix(3, 4, rng));
    ParamTensor w("w", random_matrix(6, 1, rng));
    ParamTensor bias("bias", random_matrix(1, 1, rng));
    auto build = [&](Tape& t) {
        Node cat = t.concat_cols(t.param(a), t.param(b));
        Node out = t.affine(cat, t.param(w), t.param(bias));
        return t.mean_all(t.mul(out, out));
    };
    CHECK(check_graph({&a, &b, &w, &bias}, build) < 1e-6);
}

TEST_CASE("dropout gradient matches finite differences under a fixed mask") {
    RngStream rng(5);
    ParamTensor a("a", random_matrix(4, 6, rng));
    // Re-seeding per evaluation fixes the mask across FD perturbations.
    auto build = [&](Tape& t) {
        RngStream mask_rng(99);
        Node dropped = t.dropout(t.param(a), 0.4, true, mask_rng);
        return t.mean_all(t.mul(dropped, dropped));
    };
    CHECK(check_graph({&a}, build) < 1e-6);
}

TEST_CASE("dropout is identity in eval mode and rescales in training mode") {
    RngStream rng(6);
    Matrix x = random_matrix(64, 8, rng);
    Tape t;
    RngStream unused(0);
    Node kept = t.dropout(t.constant(x), 0.5, false, unused);
    CHECK(t.value(kept) == x);

    RngStream mask_rng(7);
    Tape t2;
    Node dropped = t2.dropout(t2.constant(x), 0.5, true, mask_rng);
    const Matrix& v = t2.value(dropped);
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v.values()[i] == 0.0) {
            ++zeros;
        } else {
            // Inverted dropout scales survivors by 1/(1-p) = 2.
            CHECK(v.values()[i] == doctest::Approx(2.0 * x.values()[i]));
        }
    }
    CHECK(zeros > 150);  // ~256 of 512 expected
    CHECK(zeros < 350);
}

TEST_CASE("binary cross-entropy with logits matches a direct computation") {
    RngStream rng(8);
    ParamTensor logits("logits", random_matrix(7, 1, rng, 2.0));
    Matrix targets(7, 1);
    for (std::size_t i = 0; i < 7; ++i) targets(i, 0) = (i % 2) ? 0.95 : 0.05;

    auto build = [&](Tape& t) { return t.bce_with_logits_mean(t.param(logits), targets); };
    CHECK(check_graph({&logits}, build) < 1e-6);

    Tape t;
    double got = t.scalar(build(t));
    double expect = 0.0;
    for (std::size_t i = 0; i < 7; ++i) {
        const double z = logits.value(i, 0);
        const double y = targets(i, 0);
        const double p = 1.0 / (1.0 + std::exp(-z));
        expect += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    expect /= 7.0;
    CHECK(got == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("softmax cross-entropy matches a direct computation") {
    RngStream rng(9);
    ParamTensor logits("logits", random_matrix(5, 3, rng, 2.0));
    Matrix targets(5, 3);
    for (std::size_t i = 0; i < 5; ++i) {
        const std::size_t hot = i % 3;
        for (std::size_t c = 0; c < 3; ++c)
            targets(i, c) = (c == hot) ? 1.0 - 0.1 + 0.1 / 3 : 0.1 / 3;
    }

    auto build = [&](Tape& t) { return t.softmax_xent_mean(t.param(logits), targets); };
    CHECK(check_graph({&logits}, build) < 1e-6);

    Tape t;
    double got = t.scalar(build(t));
    double expect = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        double mx = logits.value(i, 0);
        for (std::size_t c = 1; c < 3; ++c) mx = std::max(mx, logits.value(i, c));
        double denom = 0.0;
        for (std::size_t c = 0; c < 3; ++c) denom += std::exp(logits.value(i, c) - mx);
        for (std::size_t c = 0; c < 3; ++c) {
            const double logp = logits.value(i, c) - mx - std::log(denom);
            expect -= targets(i, c) * logp;
        }
    }
    expect /= 5.0;
    CHECK(got == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("batchnorm gradients match finite differences in training mode") {
    RngStream rng(10);
    ParamTensor x("x", random_matrix(8, 3, rng));
    ParamTensor gamma("gamma", random_matrix(1, 3, rng));
    ParamTensor beta("beta", random_matrix(1, 3, rng));
    BatchNormState pristine(3);

    auto build = [&](Tape& t, BatchNormState& st) {
        Node out = t.batchnorm(t.param(x), t.param(gamma), t.param(beta), st, true);
        return t.mean_all(t.mul(out, out));
    };
    auto loss_fn = [&]() {
        BatchNormState st = pristine;  // forward mutates running stats
        Tape t;
        return t.scalar(build(t, st));
    };
    auto backward_fn = [&]() {
        BatchNormState st = pristine;
        Tape t;
        t.backward(build(t, st));
    };
    // Looser than the elementwise ops: the 1/sqrt(var) path has third
    // derivatives that dominate the central-difference truncation error.
    CHECK(max_rel_error({&x, &gamma, &beta}, loss_fn, backward_fn) < 1e-4);
}

TEST_CASE("batchnorm eval mode uses running statistics") {
    RngStream rng(11);
    ParamTensor gamma("gamma", Matrix::constant(1, 2, 1.0));
    ParamTensor beta("beta", Matrix(1, 2));
    BatchNormState st(2);
    st.running_mean = Matrix{{1.0, -1.0}};
    st.running_var = Matrix{{4.0, 0.25}};

    Matrix x{{3.0, 0.0}, {1.0, -1.0}};
    Tape t;
    Node out = t.batchnorm(t.constant(x), t.param(gamma), t.param(beta), st, false);
    const Matrix& v = t.value(out);
    CHECK(v(0, 0) == doctest::Approx((3.0 - 1.0) / std::sqrt(4.0 + 1e-5)));
    CHECK(v(0, 1) == doctest::Approx((0.0 + 1.0) / std::sqrt(0.25 + 1e-5)));
    CHECK(v(1, 0) == doctest::Approx(0.0));
    CHECK(v(1, 1) == doctest::Approx(0.0));
    // Eval mode must not move the running stats.
    CHECK(st.running_mean(0, 0) == 1.0);
    CHECK(st.running_var(0, 1) == 0.25);
}

TEST_CASE("full weighted reconstruction loss gradients match finite differences") {
    // The training objective end to end: encode, reparameterize, decode,
    // weighted reconstruction + KLD with floor. 20 random mini-batches.
    RngStream rng(12);
    CvaeArchitecture arch;
    arch.input_dim = 6;
    arch.num_classes = 2;
    arch.enc_hidden1 = 8;
    arch.enc_hidden2 = 5;
    arch.latent_dim = 3;
    arch.dec_hidden1 = 5;
    arch.dec_hidden2 = 8;
    CvaeModel model(arch, rng);

    for (int batch = 0; batch < 20; ++batch) {
        const std::size_t n = 3 + batch % 4;
        Matrix x = random_matrix(n, 6, rng);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(rng.uniform_index(2));
        Matrix onehot = one_hot(labels, 2);
        Matrix eps = random_matrix(n, 3, rng);
        std::vector<double> weights(n);
        for (auto& w : weights) w = rng.uniform(0.5, 3.0);

        auto build = [&](Tape& t) {
            RngStream unused(0);
            Node xin = t.constant(x);
            Node cond = t.constant(onehot);
            auto enc = model.encode_nodes(t, xin, cond, false, unused);
            Node z = reparameterize_nodes(t, enc.mu, enc.logvar, eps);
            Node x_hat = model.decode_nodes(t, z, cond, false, unused);
            return weighted_loss_nodes(t, x_hat, x, weights, enc.mu, enc.logvar, 4.0, 0.1).total;
        };
        const double worst = check_graph(model.parameters(), build);
        CAPTURE(batch);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("classifier loss gradients match finite differences") {
    RngStream rng(13);
    ClassifierConfig config;
    config.hidden = 6;

    SUBCASE("binary head") {
        MlpClassifier clf(5, 2, config, rng);
        for (int batch = 0; batch < 20; ++batch) {
            const std::size_t n = 4 + batch % 3;
            Matrix x = random_matrix(n, 5, rng);
            Matrix targets(n, 1);
            for (std::size_t i = 0; i < n; ++i)
                targets(i, 0) = rng.uniform_index(2) ? 0.95 : 0.05;
            auto build = [&](Tape& t) {
                RngStream unused(0);
                Node logits = clf.logits_nodes(t, t.constant(x), false, unused);
                return t.bce_with_logits_mean(logits, targets);
            };
            CAPTURE(batch);
            CHECK(check_graph(clf.parameters(), build) < 1e-4);
        }
    }
    SUBCASE("multiclass head") {
        MlpClassifier clf(5, 3, config, rng);
        Matrix x = random_matrix(6, 5, rng);
        Matrix targets(6, 3);
        for (std::size_t i = 0; i < 6; ++i) {
            for (std::size_t c = 0; c < 3; ++c)
                targets(i, c) = (c == i % 3) ? 0.9 + 0.1 / 3 : 0.1 / 3;
        }
        auto build = [&](Tape& t) {
            RngStream unused(0);
            Node logits = clf.logits_nodes(t, t.constant(x), false, unused);
            return t.softmax_xent_mean(logits, targets);
        };
        CHECK(check_graph(clf.parameters(), build) < 1e-4);
    }
}

TEST_CASE("gradients accumulate across backward passes until zero_grad") {
    ParamTensor p("p", Matrix{{2.0}});
    auto run = [&]() {
        Tape t;
        Node loss = t.mean_all(t.mul(t.param(p), t.param(p)));
        t.backward(loss);
    };
    p.zero_grad();
    run();
    CHECK(p.grad(0, 0) == doctest::Approx(4.0));
    run();
    CHECK(p.grad(0, 0) == doctest::Approx(8.0));
    p.zero_grad();
    CHECK(p.grad(0, 0) == 0.0);
}

TEST_CASE("backward on a consumed tape throws") {
    ParamTensor p("p", Matrix{{1.0}});
    Tape t;
    Node loss = t.mean_all(t.param(p));
    t.backward(loss);
    CHECK(t.consumed());
    CHECK_THROWS_AS(t.backward(loss), UsageError);
    t.reset();
    CHECK_FALSE(t.consumed());
    CHECK(t.num_nodes() == 0);
}

TEST_CASE("backward requires a scalar loss node") {
    ParamTensor p("p", Matrix{{1.0, 2.0}});
    Tape t;
    Node vec = t.param(p);
    CHECK_THROWS_AS(t.backward(vec), UsageError);
}

TEST_CASE("adam matches a hand-unrolled reference update") {
    ParamTensor p("p", Matrix{{1.0, -2.0}});
    AdamConfig config;
    config.lr = 0.1;
    config.weight_decay = 0.0;

    // Two steps with fixed gradients, recomputed by hand.
    double m[2] = {0, 0}, v[2] = {0, 0};
    double ref[2] = {1.0, -2.0};
    const double grads[2][2] = {{0.5, -1.5}, {-0.25, 2.0}};
    for (int step = 1; step <= 2; ++step) {
        p.zero_grad();
        p.grad(0, 0) = grads[step - 1][0];
        p.grad(0, 1) = grads[step - 1][1];
        adam_step({&p}, config);

        for (int i = 0; i < 2; ++i) {
            const double g = grads[step - 1][i];
            m[i] = 0.9 * m[i] + 0.1 * g;
            v[i] = 0.999 * v[i] + 0.001 * g * g;
            const double m_hat = m[i] / (1.0 - std::pow(0.9, step));
            const double v_hat = v[i] / (1.0 - std::pow(0.999, step));
            ref[i] -= 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8);
        }
        CHECK(p.value(0, 0) == doctest::Approx(ref[0]).epsilon(1e-12));
        CHECK(p.value(0, 1) == doctest::Approx(ref[1]).epsilon(1e-12));
    }
}

TEST_CASE("adam weight decay is decoupled from the gradient") {
    ParamTensor p("p", Matrix{{10.0}});
    AdamConfig config;
    config.lr = 0.5;
    config.weight_decay = 0.1;
    p.zero_grad();  // zero gradient: only the decay should act on the value
    adam_step({&p}, config);
    CHECK(p.value(0, 0) == doctest::Approx(10.0 * (1.0 - 0.5 * 0.1)).epsilon(1e-12));
}

TEST_CASE("adam rejects non-finite gradients") {
    ParamTensor p("p", Matrix{{1.0}});
    p.zero_grad();
    p.grad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(adam_step({&p}, AdamConfig{}), NumericError);
}

TEST_CASE("global norm clipping") {
    ParamTensor a("a", Matrix{{0.0}});
    ParamTensor b("b", Matrix{{0.0}});
    a.zero_grad();
    b.zero_grad();
    a.grad(0, 0) = 3.0;
    b.grad(0, 0) = 4.0;  // global norm 5

    SUBCASE("reports the pre-clip norm and rescales to the cap") {
        const double norm = clip_global_norm({&a, &b}, 1.0);
        CHECK(norm == doctest::Approx(5.0));
        CHECK(a.grad(0, 0) == doctest::Approx(3.0 / 5.0));
        CHECK(b.grad(0, 0) == doctest::Approx(4.0 / 5.0));
        // Clipping an already-clipped gradient is a no-op.
        const double again = clip_global_norm({&a, &b}, 1.0);
        CHECK(again == doctest::Approx(1.0));
        CHECK(a.grad(0, 0) == doctest::Approx(3.0 / 5.0));
    }
    SUBCASE("leaves gradients under the cap untouched") {
        const double norm = clip_global_norm({&a, &b}, 10.0);
        CHECK(norm == doctest::Approx(5.0));
        CHECK(a.grad(0, 0) == 3.0);
        CHECK(b.grad(0, 0) == 4.0);
    }
}

TEST_CASE("identical seeds give identical training graphs") {
    // Same parameters, same RNG seed, dropout on: values and gradients must
    // be byte-identical across two runs.
    RngStream init(14);
    ParamTensor w("w", random_matrix(4, 4, init));
    Matrix x = random_matrix(8, 4, init);

    auto run = [&](std::uint64_t seed, Matrix& grad_out) {
        RngStream rng(seed);
        for (auto* p : std::vector<ParamTensor*>{&w}) p->zero_grad();
        Tape t;
        Node h = t.dropout(t.affine(t.constant(x), t.param(w), t.constant(Matrix(1, 4))), 0.3,
                           true, rng);
        t.backward(t.mean_all(t.mul(h, h)));
        grad_out = w.grad;
    };
    Matrix g1, g2, g3;
    run(7, g1);
    run(7, g2);
    run(8, g3);
    CHECK(g1 == g2);
    CHECK_FALSE(g1 == g3);
}
