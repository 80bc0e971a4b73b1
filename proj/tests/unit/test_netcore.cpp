#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hmeval/architectures.hpp"
#include "hmeval/error.hpp"
#include "hmeval/model_io.hpp"
#include "hmeval/trainer.hpp"
#include "testkit.hpp"

using namespace hmeval;
using namespace hmeval::testkit;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an hmeval::Error");
    return ErrorKind::InvalidArgument;
}

Model single_linear(std::vector<double> w, double b = 0.0) {
    Linear l(w.size(), 1);
    l.weights = std::move(w);
    l.bias = {b};
    return Model({l.in}, {l});
}

}  // namespace

TEST_CASE("tensor construction checks the data length") {
    CHECK(kind_of([] { Tensor({2, 2}, std::vector<double>{1, 2, 3}); }) == ErrorKind::ShapeMismatch);
    Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.sum() == doctest::Approx(9.0));
    CHECK(t.reshaped({6}).shape() == Shape{6});
}

TEST_CASE("forward: rectifier, dot product and max pooling examples") {
    Model relu({2}, {ReLU{}, Flatten{}});
    CHECK(logits(relu, Tensor::from({-3, 2})).values()[0] == 0.0);
    CHECK(logits(relu, Tensor::from({-3, 2})).values()[1] == 2.0);

    Model lin = single_linear({2, -1});
    CHECK(logits(lin, Tensor::from({1, 1}))[0] == 1.0);

    Model pool({1, 2, 2}, {MaxPool2D{2, 2}, Flatten{}});
    const ForwardTrace trace = forward(pool, Tensor({1, 2, 2}, {1, 5, 3, 2}));
    CHECK(trace.logits()[0] == 5.0);
    REQUIRE(trace.argmax[0].size() == 1);
    CHECK(trace.argmax[0][0] == 1);  // row 0, column 1
}

TEST_CASE("max pooling ties resolve to the first position in row-major order") {
    Model pool({1, 2, 2}, {MaxPool2D{2, 2}, Flatten{}});
    CHECK(forward(pool, Tensor({1, 2, 2}, {4, 4, 4, 4})).argmax[0][0] == 0);
    CHECK(forward(pool, Tensor({1, 2, 2}, {0, 1, 1, 0})).argmax[0][0] == 1);
}

TEST_CASE("forward rejects wrong input shapes") {
    Model lin = single_linear({2, -1});
    CHECK(kind_of([&] { forward(lin, Tensor::from({1, 2, 3})); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("model construction validates layer composition") {
    CHECK(kind_of([] { Model({3}, {Linear(2, 1)}); }) == ErrorKind::Validation);
    CHECK(kind_of([] { Model({1, 5, 5}, {MaxPool2D{2, 2}, Flatten{}}); }) == ErrorKind::Validation);
    CHECK(kind_of([] { Model({1, 4, 4}, {Conv2D(1, 2, 3)}); }) == ErrorKind::Validation);
    try {
        Model({1, 4, 4}, {ReLU{}, Conv2D(2, 2, 3), Flatten{}});
        FAIL("accepted");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
    }
}

TEST_CASE("predict takes the arg max, lowest index on ties") {
    CHECK(argmax_index(Tensor::from({0.2, 0.9, 0.1})) == 1);
    CHECK(argmax_index(Tensor::from({0.5, 0.5})) == 0);
}

TEST_CASE("predict agrees with an independent forward pass on held-out digits") {
    const Dataset train = mnist_train(1000);
    const Dataset test = mnist_test(200);
    Model model = make_small_cnn(train.image_shape(), 10, 5);
    model.set_input_norm(channel_standardization(train));
    TrainConfig cfg;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.05;
    const Model trained = train_sgd(model, train.examples(), test.examples(), cfg).back().model;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto naive = naive_logits(trained, test.images[i]);
        const std::size_t expected =
            static_cast<std::size_t>(std::max_element(naive.begin(), naive.end()) - naive.begin());
        REQUIRE(predict(trained, test.images[i]) == expected);
        const Tensor fast = logits(trained, test.images[i]);
        for (std::size_t k = 0; k < naive.size(); ++k)
            CHECK(fast[k] == doctest::Approx(naive[k]).epsilon(1e-12));
    }
}

TEST_CASE("gradient of a linear model is its weight vector") {
    Model lin = single_linear({3, 4});
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor x = random_tensor({2}, rng, -5, 5);
        const Tensor g = gradient_input(lin, forward(lin, x), 0);
        CHECK(g[0] == 3.0);
        CHECK(g[1] == 4.0);
    }
}

TEST_CASE("ReLU gradient is zero for negative pre-activation") {
    Linear first(1, 1);
    first.weights = {1.0};
    Linear last(1, 1);
    last.weights = {5.0};
    Model m({1}, {first, ReLU{}, last});
    CHECK(gradient_input(m, forward(m, Tensor::from({-1})), 0)[0] == 0.0);
    CHECK(gradient_input(m, forward(m, Tensor::from({2})), 0)[0] == 5.0);
}

TEST_CASE("gradient matches central finite differences on random conv nets") {
    Rng rng(20240611);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Model m = random_conv_net(rng);
        const Tensor x = smooth_input(m, rng, 1e-2);
        const ForwardTrace trace = forward(m, x);
        REQUIRE(away_from_kinks(m, trace, 1e-2));
        const std::size_t target = rng() % m.class_count();
        const Tensor g = gradient_input(m, trace, target);
        const auto fd = finite_difference_gradient(m, x, target, 1e-4);
        worst = std::max(worst, relative_error(g.values(), fd));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("gradient is taken with respect to the raw input when inputs are standardized") {
    Rng rng(77);
    Model m = random_conv_net(rng);
    const std::size_t channels = m.input_shape()[0];
    InputNorm norm{std::vector<double>(channels, 0.3), std::vector<double>(channels, 0.25)};
    m.set_input_norm(norm);
    const Tensor x = smooth_input(m, rng, 1e-2);
    const Tensor g = gradient_input(m, forward(m, x), 1);
    const auto fd = finite_difference_gradient(m, x, 1, 1e-4);
    CHECK(relative_error(g.values(), fd) < 1e-4);
}

TEST_CASE("backward passes reject stale traces") {
    Rng rng(1);
    Model m = random_conv_net(rng);
    const ForwardTrace trace = forward(m, random_tensor(m.input_shape(), rng));
    std::get<Linear>(m.mutable_layer(m.layer_count() - 1)).bias[0] += 1.0;
    CHECK(kind_of([&] { gradient_input(m, trace, 0); }) == ErrorKind::StaleTrace);
}

TEST_CASE("trace replay reproduces every layer output bit for bit") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const Model m = random_conv_net(rng);
        const ForwardTrace trace = forward(m, random_tensor(m.input_shape(), rng));
        REQUIRE(trace.inputs.size() == m.layer_count());
        for (std::size_t l = 0; l < m.layer_count(); ++l) {
            ArgmaxMap argmax;
            CHECK(layer_forward(m.layers()[l], trace.inputs[l], &argmax) == trace.outputs[l]);
            if (const auto* p = std::get_if<MaxPool2D>(&m.layers()[l])) {
                const Shape& in = trace.inputs[l].shape();
                const Shape& out = trace.outputs[l].shape();
                for (std::size_t k = 0; k < argmax.size(); ++k) {
                    const std::size_t c = k / (out[1] * out[2]);
                    const std::size_t oy = k / out[2] % out[1], ox = k % out[2];
                    const std::size_t idx = argmax[k];
                    const std::size_t iy = idx / in[2] % in[1], ix = idx % in[2];
                    CHECK(idx / (in[1] * in[2]) == c);
                    CHECK(iy >= oy * p->stride);
                    CHECK(iy < oy * p->stride + p->window);
                    CHECK(ix >= ox * p->stride);
                    CHECK(ix < ox * p->stride + p->window);
                    CHECK(trace.inputs[l][idx] == trace.outputs[l][k]);
                }
            }
        }
    }
}

TEST_CASE("pooling passes the backward signal only to recorded maxima") {
    Rng rng(4);
    Model m({1, 4, 4}, {MaxPool2D{2, 2}, Flatten{}, Linear(4, 2)});
    for (double& w : std::get<Linear>(m.mutable_layer(2)).weights) w = std::normal_distribution<>(0, 1)(rng);
    const ForwardTrace trace = forward(m, random_tensor({1, 4, 4}, rng));
    const Tensor g = gradient_input(m, trace, 0);
    std::vector<bool> is_max(16, false);
    for (auto idx : trace.argmax[0]) is_max[idx] = true;
    for (std::size_t i = 0; i < 16; ++i) {
        if (!is_max[i]) CHECK(g[i] == 0.0);
        else CHECK(g[i] != 0.0);
    }
}

TEST_CASE("forward is bit-reproducible") {
    Rng rng(12);
    const Model m = random_conv_net(rng);
    const Tensor x = random_tensor(m.input_shape(), rng);
    CHECK(logits(m, x) == logits(m, x));
    CHECK(forward(m, x).outputs == forward(m, x).outputs);
}

TEST_CASE("training with zero epochs returns the initial model only") {
    Rng rng(2);
    const Model m = random_mlp(rng, 2);
    std::vector<Tensor> xs{Tensor::from({1, 0}), Tensor::from({0, 1})};
    std::vector<std::size_t> ys{0, 1};
    TrainConfig cfg;
    cfg.epochs = 0;
    const auto cps = train_sgd(m, {xs, ys}, {xs, ys}, cfg);
    REQUIRE(cps.size() == 1);
    CHECK(cps[0].iteration == 0);
    CHECK(cps[0].model == m);
}

namespace {

// Perceptron: converges iff the labelled points are linearly separable
// (with margin); bounded number of passes.
bool perceptron_separable(const std::vector<Tensor>& xs, const std::vector<std::size_t>& ys) {
    double w0 = 0, w1 = 0, b = 0;
    for (int pass = 0; pass < 1000; ++pass) {
        bool clean = true;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double y = ys[i] == 1 ? 1.0 : -1.0;
            if (y * (w0 * xs[i][0] + w1 * xs[i][1] + b) <= 0.0) {
                w0 += y * xs[i][0];
                w1 += y * xs[i][1];
                b += y;
                clean = false;
            }
        }
        if (clean) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("SGD separates a linearly separable toy set") {
    Rng rng(31);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<Tensor> xs;
    std::vector<std::size_t> ys;
    while (xs.size() < 60) {
        const double a = u(rng), b = u(rng);
        const double side = a + 0.5 * b - 0.1;
        if (std::abs(side) < 0.15) continue;  // keep a margin
        xs.push_back(Tensor::from({a, b}));
        ys.push_back(side > 0 ? 1 : 0);
    }
    REQUIRE(perceptron_separable(xs, ys));
    Model m({2}, {Linear(2, 2)});
    init_parameters(m, 5);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 4;
    cfg.learning_rate = 0.5;
    const Examples data{xs, ys};
    const auto cps = train_sgd(m, data, data, cfg);
    CHECK(cps.back().test_accuracy == 1.0);
    CHECK(accuracy(cps.back().model, data) == 1.0);
}

TEST_CASE("training is deterministic for a fixed seed") {
    const Dataset train = mnist_train(200);
    Model m = make_small_cnn(train.image_shape(), 10, 1);
    TrainConfig cfg;
    cfg.batch_size = 10;
    cfg.seed = 8;
    cfg.checkpoint_interval = 5;
    const auto a = train_sgd(m, train.examples(), train.examples(), cfg);
    const auto b = train_sgd(m, train.examples(), train.examples(), cfg);
    REQUIRE(a.size() == b.size());
    CHECK(a.size() == 5);  // 0, 5, 10, 15, 20
    CHECK(a.back().model == b.back().model);
    for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i].iteration > a[i - 1].iteration);
}

TEST_CASE("training rejects bad inputs") {
    Rng rng(2);
    const Model m = random_mlp(rng, 2);
    std::vector<Tensor> xs{Tensor::from({1, 0})};
    std::vector<std::size_t> ys{0};
    std::vector<std::size_t> bad{7};
    TrainConfig cfg;
    CHECK(kind_of([&] { train_sgd(m, {}, {}, cfg); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { train_sgd(m, {xs, bad}, {}, cfg); }) == ErrorKind::InvalidArgument);
    cfg.learning_rate = 0.0;
    CHECK(kind_of([&] { train_sgd(m, {xs, ys}, {}, cfg); }) == ErrorKind::InvalidArgument);
    cfg.learning_rate = 0.1;
    cfg.checkpoint_iterations = {3, 3};
    CHECK(kind_of([&] { train_sgd(m, {xs, ys}, {}, cfg); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("model files round-trip bit-exactly") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        Model m = random_conv_net(rng);
        if (trial % 2) {
            const std::size_t c = m.input_shape()[0];
            m.set_input_norm({std::vector<double>(c, 0.1 * trial), std::vector<double>(c, 0.7)});
        }
        std::stringstream buf;
        write_model(m, buf);
        const Model back = read_model(buf);
        CHECK(back == m);
        const Tensor x = random_tensor(m.input_shape(), rng);
        CHECK(logits(back, x) == logits(m, x));
    }
}

TEST_CASE("model file errors fall into distinct categories") {
    Rng rng(3);
    const Model m = random_conv_net(rng);
    std::stringstream buf;
    write_model(m, buf);
    const std::string good = buf.str();
    auto load = [](std::string bytes) {
        std::stringstream in(bytes);
        return read_model(in);
    };
    std::string bad = good;
    bad[0] = 'X';
    CHECK(kind_of([&] { load(bad); }) == ErrorKind::Format);
    bad = good;
    bad[3] = '2';
    CHECK(kind_of([&] { load(bad); }) == ErrorKind::Version);
    CHECK(kind_of([&] { load(good.substr(0, good.size() - 5)); }) == ErrorKind::Truncated);
    CHECK(kind_of([&] { load(good.substr(0, 2)); }) == ErrorKind::Truncated);
}

TEST_CASE("a file declaring inconsistent layer shapes names the layer") {
    // Linear(4 -> 3) followed by Linear(2 -> 1)
    Model a({4}, {Linear(4, 3)});
    Model b({2}, {Linear(2, 1)});
    std::stringstream sa, sb;
    write_model(a, sa);
    write_model(b, sb);
    std::string bytes = sa.str();
    const std::string tail = sb.str();
    // header: magic(4) rank(4) extent(4) norm(4) count(4)
    bytes[16] = 2;
    bytes += tail.substr(20);
    std::stringstream in(bytes);
    try {
        read_model(in);
        FAIL("accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Validation);
        CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
    }
}
