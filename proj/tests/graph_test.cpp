#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "enk/graph.hpp"
#include "enk/loss.hpp"
#include "enk/optim.hpp"
#include "enk/rng.hpp"

using namespace enk;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1, double hi = 1) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

EnkConvParams random_conv(std::size_t f, std::size_t c, std::size_t kh, std::size_t kw, Rng& rng) {
    EnkConvParams p;
    p.kernel = random_tensor({f, c, kh, kw}, rng, -0.5, 0.5);
    p.bias = random_tensor({f}, rng, -0.1, 0.1);
    return p;
}

DenseLayer random_dense(std::size_t out, std::size_t in, Rng& rng) {
    DenseLayer d;
    d.weight = random_tensor({out, in}, rng, -0.5, 0.5);
    d.bias = random_tensor({out}, rng, -0.1, 0.1);
    return d;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

std::vector<char> file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("graph_forward hand cases") {
    // lone softmax on [0,0]
    ModelGraph sm = make_graph({2}, {SoftmaxLayer{}});
    Tensor p = graph_eval(sm, Tensor({2}, 0.0));
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-15));

    // the conv running example through enk-conv + flatten
    EnkConvLayer ec;
    ec.params.kernel = Tensor::from_values({1, 1, 2, 2}, {1, 0, 0, 1});
    ec.params.bias = Tensor({1}, 0.0);
    ec.params.b = 0.5;
    ModelGraph g = make_graph({1, 2, 3}, {ec, FlattenLayer{}});
    Tensor y = graph_eval(g, Tensor::from_values({1, 2, 3}, {1, 2, 3, 4, 5, 6}));
    CHECK(y.shape() == std::vector<std::size_t>{2});
    CHECK(y[0] == doctest::Approx(12.0).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(24.0).epsilon(1e-12));

    CHECK_THROWS_AS(make_graph({2}, {}), GraphError);
    ModelGraph empty;
    empty.input_shape = {2};
    CHECK_THROWS_AS(graph_eval(empty, Tensor({2}, 0.0)), GraphError);
}

TEST_CASE("graph build validates the shape chain and names the layer") {
    Rng rng(1);
    // dense after conv without flatten
    std::vector<Layer> bad = {Layer{ConvLayer{random_conv(2, 1, 1, 3, rng)}},
                              Layer{random_dense(2, 4, rng)}};
    try {
        make_graph({1, 2, 8}, bad);
        FAIL("expected GraphError");
    } catch (const GraphError& e) {
        CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
        CHECK(std::string(e.what()).find("dense") != std::string::npos);
    }

    // kernel larger than input
    CHECK_THROWS_AS(make_graph({1, 2, 8}, {Layer{ConvLayer{random_conv(2, 1, 3, 3, rng)}}}),
                    GraphError);

    // mismatched input at forward time
    ModelGraph g = make_graph({1, 2, 8}, {Layer{ConvLayer{random_conv(2, 1, 1, 3, rng)}}});
    CHECK_THROWS_AS(graph_eval(g, Tensor({1, 2, 7}, 0.0)), GraphError);
}

TEST_CASE("cross entropy hand cases") {
    LossResult r = cross_entropy_loss(Tensor({2}, 0.0), 0);
    CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(r.d_scores[0] == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(r.d_scores[1] == doctest::Approx(0.5).epsilon(1e-15));

    LossResult conf = cross_entropy_loss(Tensor::from_values({2}, {10.0, -10.0}), 0);
    CHECK(conf.loss == doctest::Approx(2.0611536e-9).epsilon(1e-4));

    // d_scores sums to zero for arbitrary scores
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        Tensor s = random_tensor({5}, rng, -3, 3);
        LossResult lr = cross_entropy_loss(s, rng.index(5));
        double sum = 0.0;
        for (std::size_t k = 0; k < 5; ++k) sum += lr.d_scores[k];
        CHECK(std::abs(sum) < 1e-12);
    }

    CHECK_THROWS_AS(cross_entropy_loss(Tensor({3}, 0.0), 3), ParamError);
}

TEST_CASE("cross entropy gradient matches finite differences") {
    Rng rng(11);
    Tensor s = random_tensor({4}, rng, -2, 2);
    const std::size_t label = 2;
    LossResult r = cross_entropy_loss(s, label);
    const double step = 1e-6;
    for (std::size_t i = 0; i < s.size(); ++i) {
        Tensor sp = s, sm = s;
        sp[i] += step;
        sm[i] -= step;
        const double fd =
            (cross_entropy_loss(sp, label).loss - cross_entropy_loss(sm, label).loss) / (2 * step);
        CHECK(r.d_scores[i] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("adam hand cases") {
    // zero gradient leaves parameters untouched
    double p0 = 1.5;
    AdamState s0;
    std::vector<double> z{0.0};
    adam_step(s0, {std::span<double>(&p0, 1)}, {std::span<const double>(z.data(), 1)});
    CHECK(p0 == 1.5);

    // first step moves by ~lr against the gradient sign
    double p1 = 1.0;
    AdamState s1;
    std::vector<double> g1{1.0};
    adam_step(s1, {std::span<double>(&p1, 1)}, {std::span<const double>(g1.data(), 1)});
    CHECK(p1 == doctest::Approx(0.999).epsilon(1e-6));

    // steady descent on the quadratic 0.5*(p-3)^2
    double p2 = 0.0;
    AdamState s2;
    double prev_loss = 0.5 * (p2 - 3.0) * (p2 - 3.0);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> g{p2 - 3.0};
        adam_step(s2, {std::span<double>(&p2, 1)}, {std::span<const double>(g.data(), 1)});
    }
    const double end_loss = 0.5 * (p2 - 3.0) * (p2 - 3.0);
    CHECK(end_loss < prev_loss);
    CHECK(p2 > 0.15);  // 200 steps at ~1e-3 each

    // view mismatch rejected
    AdamState s3;
    double p3 = 0.0;
    std::vector<double> g3{1.0, 2.0};
    CHECK_THROWS_AS(
        adam_step(s3, {std::span<double>(&p3, 1)}, {std::span<const double>(g3.data(), 2)}),
        ParamError);
}

TEST_CASE("param census") {
    Rng rng(9);
    // dense in=4 out=3 with bias
    ModelGraph d = make_graph({4}, {Layer{random_dense(3, 4, rng)}});
    CHECK(param_count(d) == 15);

    // conv 8 filters x 4ch x 3x7 + bias, then the enk twin
    ConvLayer conv{random_conv(8, 4, 3, 7, rng)};
    CHECK(layer_param_count(Layer{conv}) == 680);
    EnkConvLayer ek;
    ek.params = conv.params;
    CHECK(layer_param_count(Layer{ek}) == 681);
    ek.weights_trainable = false;
    CHECK(layer_param_count(Layer{ek}) == 1);

    // parameter-free kinds
    CHECK(layer_param_count(Layer{ReluLayer{}}) == 0);
    CHECK(layer_param_count(Layer{GaussianNoiseLayer{0.1}}) == 0);
    CHECK(layer_param_count(Layer{AvgPoolLayer{2, 2}}) == 0);
}

TEST_CASE("activation and pool layers: values and gradients") {
    Rng rng(21);
    Tensor x = random_tensor({2, 4, 6}, rng, -2, 2);

    // relu forward/backward
    Tensor yr = layer_forward(Layer{ReluLayer{}}, x, false, nullptr);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(yr[i] == (x[i] > 0 ? x[i] : 0.0));
    Tensor ones(x.shape(), 1.0);
    LayerBackward br = layer_backward(Layer{ReluLayer{}}, x, yr, ones);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(br.d_input[i] == (x[i] > 0 ? 1.0 : 0.0));

    // elu: continuous at 0, slope alpha*e^x below
    EluLayer elu;
    Tensor ye = layer_forward(Layer{elu}, x, false, nullptr);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double want = x[i] > 0 ? x[i] : std::expm1(x[i]);
        CHECK(ye[i] == doctest::Approx(want).epsilon(1e-15));
    }
    LayerBackward be = layer_backward(Layer{elu}, x, ye, ones);
    const double step = 1e-6;
    for (std::size_t i = 0; i < 8; ++i) {
        Tensor xp = x, xm = x;
        xp[i] += step;
        xm[i] -= step;
        const Tensor yp = layer_forward(Layer{elu}, xp, false, nullptr);
        const Tensor ym = layer_forward(Layer{elu}, xm, false, nullptr);
        CHECK(be.d_input[i] == doctest::Approx((yp[i] - ym[i]) / (2 * step)).epsilon(1e-6));
    }

    // avg pool over 2x3 windows: hand value and uniform gradient spread
    Tensor xa = Tensor::from_values({1, 2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor ya = layer_forward(Layer{AvgPoolLayer{2, 3}}, xa, false, nullptr);
    CHECK(ya.size() == 1);
    CHECK(ya[0] == doctest::Approx(3.5).epsilon(1e-15));
    LayerBackward ba = layer_backward(Layer{AvgPoolLayer{2, 3}}, xa, ya, Tensor({1, 1, 1}, 6.0));
    for (std::size_t i = 0; i < 6; ++i) CHECK(ba.d_input[i] == doctest::Approx(1.0));

    // max pool: value, and tie routes to the first maximal element
    Tensor xm = Tensor::from_values({1, 2, 2}, {7, 7, 1, 2});
    Tensor ym = layer_forward(Layer{MaxPoolLayer{2, 2}}, xm, false, nullptr);
    CHECK(ym[0] == 7.0);
    LayerBackward bm = layer_backward(Layer{MaxPoolLayer{2, 2}}, xm, ym, Tensor({1, 1, 1}, 1.0));
    CHECK(bm.d_input[0] == 1.0);  // first of the tied maxima
    CHECK(bm.d_input[1] == 0.0);
    CHECK(bm.d_input[2] == 0.0);

    // truncated remainder columns receive no gradient
    Tensor xt = Tensor::from_values({1, 1, 3}, {5, 1, 9});
    Tensor yt = layer_forward(Layer{MaxPoolLayer{1, 2}}, xt, false, nullptr);
    CHECK(yt.size() == 1);
    CHECK(yt[0] == 5.0);
    LayerBackward bt = layer_backward(Layer{MaxPoolLayer{1, 2}}, xt, yt, Tensor({1, 1, 1}, 1.0));
    CHECK(bt.d_input[2] == 0.0);

    // pool window larger than input
    CHECK_THROWS_AS(layer_forward(Layer{AvgPoolLayer{5, 1}}, xa, false, nullptr), DimsError);
}

TEST_CASE("dense and softmax layers: values and gradients") {
    Rng rng(33);
    DenseLayer d = random_dense(3, 5, rng);
    Tensor x = random_tensor({5}, rng);
    Tensor y = layer_forward(Layer{d}, x, false, nullptr);
    for (std::size_t o = 0; o < 3; ++o) {
        double want = d.bias[o];
        for (std::size_t i = 0; i < 5; ++i) want += d.weight(o, i) * x[i];
        CHECK(y[o] == doctest::Approx(want).epsilon(1e-14));
    }

    Tensor d_out = random_tensor({3}, rng);
    LayerBackward b = layer_backward(Layer{d}, x, y, d_out);
    REQUIRE(b.dense.has_value());
    const double step = 1e-6;
    auto loss = [&](const DenseLayer& dl, const Tensor& xin) {
        Tensor yy = layer_forward(Layer{dl}, xin, false, nullptr);
        double l = 0.0;
        for (std::size_t i = 0; i < yy.size(); ++i) l += yy[i] * d_out[i];
        return l;
    };
    for (std::size_t i = 0; i < x.size(); ++i) {
        Tensor xp = x, xm = x;
        xp[i] += step;
        xm[i] -= step;
        CHECK(b.d_input[i] == doctest::Approx((loss(d, xp) - loss(d, xm)) / (2 * step)).epsilon(1e-6));
    }
    for (std::size_t i = 0; i < d.weight.size(); ++i) {
        DenseLayer dp = d, dm = d;
        dp.weight[i] += step;
        dm.weight[i] -= step;
        CHECK(b.dense->d_weight[i] ==
              doctest::Approx((loss(dp, x) - loss(dm, x)) / (2 * step)).epsilon(1e-6));
    }

    // softmax backward against finite differences
    Tensor sx = random_tensor({4}, rng, -2, 2);
    Tensor sy = layer_forward(Layer{SoftmaxLayer{}}, sx, false, nullptr);
    Tensor sg = random_tensor({4}, rng);
    LayerBackward sb = layer_backward(Layer{SoftmaxLayer{}}, sx, sy, sg);
    for (std::size_t i = 0; i < 4; ++i) {
        Tensor xp = sx, xm = sx;
        xp[i] += step;
        xm[i] -= step;
        Tensor yp = layer_forward(Layer{SoftmaxLayer{}}, xp, false, nullptr);
        Tensor ym = layer_forward(Layer{SoftmaxLayer{}}, xm, false, nullptr);
        double fd = 0.0;
        for (std::size_t k = 0; k < 4; ++k) fd += (yp[k] - ym[k]) / (2 * step) * sg[k];
        CHECK(sb.d_input[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("whole-graph backward matches finite differences on a mixed stack") {
    Rng rng(77);
    EnkConvLayer ek;
    ek.params = random_conv(3, 2, 2, 3, rng);
    ek.params.b = 0.2;
    std::vector<Layer> layers = {Layer{ConvLayer{random_conv(2, 1, 1, 3, rng)}},
                                 Layer{ek},
                                 Layer{EluLayer{}},
                                 Layer{MaxPoolLayer{1, 2}},
                                 Layer{FlattenLayer{}},
                                 Layer{random_dense(3, 1, rng)}};
    // dense input size depends on the chain; compute it, then rebuild the layer
    ModelGraph probe = make_graph({1, 3, 12}, {layers.begin(), layers.end() - 1});
    std::size_t flat = graph_output_shape(probe)[0];
    layers.back() = Layer{random_dense(3, flat, rng)};

    ModelGraph g = make_graph({1, 3, 12}, layers);
    Tensor x = random_tensor({1, 3, 12}, rng);
    const std::size_t label = 1;

    auto loss_of = [&](ModelGraph& gg) {
        Tape t;
        Tensor scores = graph_forward(static_cast<const ModelGraph&>(gg), x, t, false);
        return cross_entropy_loss(scores, label).loss;
    };

    Tape tape;
    Tensor scores = graph_forward(static_cast<const ModelGraph&>(g), x, tape, false);
    LossResult lr = cross_entropy_loss(scores, label);
    GraphGrads grads = graph_backward(g, tape, lr.d_scores);

    std::vector<std::span<double>> views = trainable_params(g);
    std::vector<std::span<const double>> gviews = trainable_grads(g, grads);
    REQUIRE(views.size() == gviews.size());

    const double step = 1e-5;
    for (std::size_t vi = 0; vi < views.size(); ++vi) {
        REQUIRE(views[vi].size() == gviews[vi].size());
        for (std::size_t j = 0; j < views[vi].size(); ++j) {
            const double keep = views[vi][j];
            views[vi][j] = keep + step;
            const double lp = loss_of(g);
            views[vi][j] = keep - step;
            const double lm = loss_of(g);
            views[vi][j] = keep;
            const double fd = (lp - lm) / (2 * step);
            const double an = gviews[vi][j];
            CHECK(std::abs(an - fd) <= 1e-4 * std::max({1.0, std::abs(an), std::abs(fd)}));
        }
    }

    // input gradient too
    for (std::size_t i = 0; i < x.size(); i += 5) {
        const double keep = x[i];
        x[i] = keep + step;
        const double lp = loss_of(g);
        x[i] = keep - step;
        const double lm = loss_of(g);
        x[i] = keep;
        const double fd = (lp - lm) / (2 * step);
        CHECK(std::abs(grads.d_input[i] - fd) <=
              1e-4 * std::max({1.0, std::abs(grads.d_input[i]), std::abs(fd)}));
    }
}

TEST_CASE("frozen enk layer exposes only b to the optimizer") {
    Rng rng(13);
    EnkConvLayer ek;
    ek.params = random_conv(2, 1, 1, 3, rng);
    ek.weights_trainable = false;
    ModelGraph g = make_graph({1, 2, 8}, {Layer{ek}, Layer{FlattenLayer{}}});
    CHECK(param_count(g) == 1);

    std::vector<std::span<double>> views = trainable_params(g);
    REQUIRE(views.size() == 1);
    CHECK(views[0].size() == 1);
    CHECK(views[0].data() == &std::get<EnkConvLayer>(g.layers[0]).params.b);
}

TEST_CASE("train-mode cache powers backward; eval passes are bit-identical") {
    Rng rng(8);
    std::vector<Layer> layers = {Layer{ConvLayer{random_conv(2, 1, 1, 3, rng)}},
                                 Layer{GaussianNoiseLayer{0.5}}, Layer{ReluLayer{}},
                                 Layer{FlattenLayer{}}};
    ModelGraph g = make_graph({1, 2, 6}, layers);
    Tensor x = random_tensor({1, 2, 6}, rng);

    // train mode with rng: noise active, cache filled
    Rng noise(101);
    Tensor y1 = graph_forward(g, x, &noise);
    CHECK(g.cache.acts.size() == layers.size() + 1);
    GraphGrads grads = graph_backward(g, g.cache, Tensor(y1.shape(), 1.0));
    CHECK(grads.slots.size() == layers.size());

    // eval mode: two passes identical, noise inert, cache untouched
    g.mode = Mode::eval;
    g.cache.acts.clear();
    Tensor e1 = graph_eval(g, x);
    Tensor e2 = graph_eval(g, x);
    for (std::size_t i = 0; i < e1.size(); ++i) CHECK(e1[i] == e2[i]);
    CHECK(g.cache.acts.empty());

    // train pass with the same seed reproduces itself
    Rng noise2(101);
    g.mode = Mode::train;
    Tensor y2 = graph_forward(g, x, &noise2);
    for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1[i] == y2[i]);
}

TEST_CASE("gradient accumulation and scaling") {
    Rng rng(3);
    ModelGraph g = make_graph({1, 2, 6}, {Layer{ConvLayer{random_conv(2, 1, 1, 3, rng)}},
                                          Layer{FlattenLayer{}}, Layer{random_dense(2, 16, rng)}});
    Tensor x = random_tensor({1, 2, 6}, rng);
    Tape t;
    Tensor scores = graph_forward(static_cast<const ModelGraph&>(g), x, t, false);
    GraphGrads a = graph_backward(g, t, cross_entropy_loss(scores, 0).d_scores);
    GraphGrads b = graph_backward(g, t, cross_entropy_loss(scores, 1).d_scores);

    GraphGrads sum = a;
    grads_accumulate(sum, b);
    grads_scale(sum, 0.5);
    const auto& ca = std::get<ConvGrads>(a.slots[0]);
    const auto& cb = std::get<ConvGrads>(b.slots[0]);
    const auto& cs = std::get<ConvGrads>(sum.slots[0]);
    for (std::size_t i = 0; i < cs.d_kernel.size(); ++i) {
        CHECK(cs.d_kernel[i] == doctest::Approx(0.5 * (ca.d_kernel[i] + cb.d_kernel[i])).epsilon(1e-15));
    }
    const auto& da = std::get<DenseGrads>(a.slots[2]);
    const auto& db = std::get<DenseGrads>(b.slots[2]);
    const auto& ds = std::get<DenseGrads>(sum.slots[2]);
    for (std::size_t i = 0; i < ds.d_weight.size(); ++i) {
        CHECK(ds.d_weight[i] == doctest::Approx(0.5 * (da.d_weight[i] + db.d_weight[i])).epsilon(1e-15));
    }
}

TEST_CASE("checkpoint round trip preserves every parameter bit") {
    Rng rng(42);
    EnkConvLayer ek;
    ek.params = random_conv(3, 2, 1, 4, rng);
    ek.params.b = 0.125;
    ek.weights_trainable = false;
    std::vector<Layer> layers = {Layer{ConvLayer{random_conv(2, 1, 2, 3, rng)}},
                                 Layer{ek},
                                 Layer{GaussianNoiseLayer{0.25}},
                                 Layer{EluLayer{1.0}},
                                 Layer{MaxPoolLayer{1, 2}},
                                 Layer{AvgPoolLayer{1, 2}},
                                 Layer{ReluLayer{}},
                                 Layer{FlattenLayer{}},
                                 Layer{random_dense(2, 1, rng)},
                                 Layer{SoftmaxLayer{}}};
    ModelGraph probe = make_graph({1, 4, 20}, {layers.begin(), layers.end() - 2});
    layers[8] = Layer{random_dense(2, graph_output_shape(probe)[0], rng)};
    ModelGraph g = make_graph({1, 4, 20}, layers);

    const auto path = temp_file("enk_graph_roundtrip.enkm");
    save_checkpoint(g, path);
    ModelGraph r = load_checkpoint(path);

    CHECK(r.input_shape == g.input_shape);
    REQUIRE(r.layers.size() == g.layers.size());
    CHECK(param_count(r) == param_count(g));
    const auto& rek = std::get<EnkConvLayer>(r.layers[1]);
    CHECK(rek.params.b == 0.125);
    CHECK(rek.weights_trainable == false);
    CHECK(std::get<GaussianNoiseLayer>(r.layers[2]).sigma == 0.25);

    // same outputs bit for bit
    Tensor x = random_tensor({1, 4, 20}, rng);
    Tensor y1 = graph_eval(g, x);
    Tensor y2 = graph_eval(r, x);
    for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1[i] == y2[i]);

    // saving the loaded graph reproduces the file byte for byte
    const auto path2 = temp_file("enk_graph_roundtrip2.enkm");
    save_checkpoint(r, path2);
    CHECK(file_bytes(path) == file_bytes(path2));

    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("checkpoint rejects malformed files") {
    const auto path = temp_file("enk_graph_badmagic.enkm");
    {
        std::ofstream out(path, std::ios::binary);
        out << "XXXXjunkjunkjunk";
    }
    try {
        load_checkpoint(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset == 0);
    }

    // truncation mid-payload
    Rng rng(5);
    ModelGraph g = make_graph({1, 2, 6}, {Layer{ConvLayer{random_conv(2, 1, 1, 3, rng)}},
                                          Layer{FlattenLayer{}}});
    save_checkpoint(g, path);
    std::vector<char> bytes = file_bytes(path);
    {
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
    }
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);

    // wrong version
    bytes[4] = 9;
    {
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);

    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path), FileError);
}
