#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <vector>

#include "enk/models.hpp"

using namespace enk;

namespace {

std::vector<char> file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ModelSpec spec_for(Family f, Variant v, std::size_t ch, std::size_t sm, std::size_t classes) {
    ModelSpec s;
    s.family = f;
    s.variant = v;
    s.channels = ch;
    s.samples = sm;
    s.classes = classes;
    s.init_seed = 11;
    s.widths = default_widths(f);
    return s;
}

Tensor random_input(std::size_t ch, std::size_t sm, std::uint64_t seed) {
    Rng rng(seed);
    Tensor x({1, ch, sm});
    for (double& v : x.values()) v = rng.normal(0.0, 1.0);
    return x;
}

}  // namespace

TEST_CASE("parameter deltas hold for every family and shape preset") {
    for (const DataPreset& p : data_presets()) {
        for (Family f : all_families()) {
            ModelGraph org = build_model(model_spec_for(f, Variant::org, p, 3));
            ModelGraph enk = build_model(model_spec_for(f, Variant::enk, p, 3));
            ModelGraph gauss = build_model(model_spec_for(f, Variant::gauss, p, 3));
            CHECK(param_count(enk) - param_count(org) == 1);
            CHECK(param_count(gauss) == param_count(org));
            CHECK(graph_output_shape(org) == std::vector<std::size_t>{p.synth.class_count});
            CHECK(graph_output_shape(enk) == std::vector<std::size_t>{p.synth.class_count});
        }
    }
}

TEST_CASE("structural facts") {
    ModelGraph deep = build_model(spec_for(Family::deep_toy, Variant::org, 16, 128, 2));
    ModelGraph shallow = build_model(spec_for(Family::shallow_toy, Variant::org, 16, 128, 2));
    CHECK(deep.layers.size() > shallow.layers.size());

    // the slot sits immediately after the first convolution
    ModelGraph enk = build_model(spec_for(Family::deep_toy, Variant::enk, 16, 128, 2));
    CHECK(std::holds_alternative<ConvLayer>(enk.layers[0]));
    REQUIRE(std::holds_alternative<EnkConvLayer>(enk.layers[1]));
    ModelGraph gauss = build_model(spec_for(Family::deep_toy, Variant::gauss, 16, 128, 2));
    CHECK(std::holds_alternative<GaussianNoiseLayer>(gauss.layers[1]));

    // identical layer lists apart from the slot
    ModelGraph org = build_model(spec_for(Family::deep_toy, Variant::org, 16, 128, 2));
    REQUIRE(enk.layers.size() == org.layers.size() + 1);
    REQUIRE(gauss.layers.size() == org.layers.size() + 1);
    for (std::size_t i = 0; i < org.layers.size(); ++i) {
        const std::size_t j = i == 0 ? i : i + 1;
        CHECK(enk.layers[j].index() == org.layers[i].index());
        CHECK(gauss.layers[j].index() == org.layers[i].index());
    }

    // the slot layer carries exactly one trainable parameter: b
    const auto* slot = std::get_if<EnkConvLayer>(&enk.layers[1]);
    CHECK_FALSE(slot->weights_trainable);
    CHECK(layer_param_count(enk.layers[1]) == 1);
    ModelGraph enk2 = build_model(spec_for(Family::deep_toy, Variant::enk, 16, 128, 2));
    std::vector<std::span<double>> views = trainable_params(enk2);
    bool found_b = false;
    for (const auto& v : views)
        if (v.size() == 1 && v.data() == &std::get_if<EnkConvLayer>(&enk2.layers[1])->params.b)
            found_b = true;
    CHECK(found_b);
}

TEST_CASE("common layers share weights across variants for one seed") {
    ModelGraph org = build_model(spec_for(Family::compact_toy, Variant::org, 8, 64, 2));
    ModelGraph enk = build_model(spec_for(Family::compact_toy, Variant::enk, 8, 64, 2));
    const auto* c_org = std::get_if<ConvLayer>(&org.layers[0]);
    const auto* c_enk = std::get_if<ConvLayer>(&enk.layers[0]);
    REQUIRE(c_org != nullptr);
    REQUIRE(c_enk != nullptr);
    REQUIRE(c_org->params.kernel.size() == c_enk->params.kernel.size());
    for (std::size_t i = 0; i < c_org->params.kernel.size(); ++i)
        CHECK(c_org->params.kernel[i] == c_enk->params.kernel[i]);

    // dense too, since the full-extent pool keeps its input size equal
    const auto* d_org = std::get_if<DenseLayer>(&org.layers.back());
    const auto* d_enk = std::get_if<DenseLayer>(&enk.layers.back());
    REQUIRE(d_org->weight.shape() == d_enk->weight.shape());
    for (std::size_t i = 0; i < d_org->weight.size(); ++i) CHECK(d_org->weight[i] == d_enk->weight[i]);
}

TEST_CASE("enk at b=0 equals an org-plus-extra-conv control") {
    for (Family f : all_families()) {
        ModelSpec s = spec_for(f, Variant::enk, 8, 32, 2);
        s.widths = miniature_widths(f);
        ModelGraph enk = build_model(s);
        ModelGraph control = enk;
        const auto* slot = std::get_if<EnkConvLayer>(&control.layers[1]);
        REQUIRE(slot != nullptr);
        REQUIRE(slot->params.b == 0.0);
        control.layers[1] = ConvLayer{slot->params};

        const Tensor x = random_input(8, 32, 5);
        const Tensor a = graph_eval(enk, x);
        const Tensor b = graph_eval(control, x);
        REQUIRE(a.shape() == b.shape());
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
}

TEST_CASE("builders are deterministic per seed") {
    const ModelSpec s = spec_for(Family::compact_toy, Variant::enk, 8, 64, 3);
    ModelGraph a = build_model(s);
    ModelGraph b = build_model(s);

    const auto pa = std::filesystem::temp_directory_path() / "enk_build_a.enkm";
    const auto pb = std::filesystem::temp_directory_path() / "enk_build_b.enkm";
    save_checkpoint(a, pa);
    save_checkpoint(b, pb);
    CHECK(file_bytes(pa) == file_bytes(pb));

    ModelSpec s2 = s;
    s2.init_seed = 12;
    ModelGraph c = build_model(s2);
    save_checkpoint(c, pb);
    CHECK(file_bytes(pa) != file_bytes(pb));

    std::filesystem::remove(pa);
    std::filesystem::remove(pb);
}

TEST_CASE("miniature widths build on a small canvas") {
    for (Family f : all_families()) {
        for (Variant v : all_variants()) {
            ModelSpec s = spec_for(f, v, 8, 32, 2);
            s.widths = miniature_widths(f);
            ModelGraph g = build_model(s);
            CHECK(graph_output_shape(g) == std::vector<std::size_t>{2});
            const Tensor y = graph_eval(g, random_input(8, 32, 2));
            CHECK(y.size() == 2);
        }
    }
}

TEST_CASE("builder rejects impossible shapes") {
    CHECK_THROWS_AS(build_model(spec_for(Family::compact_toy, Variant::org, 0, 64, 2)), ParamError);
    CHECK_THROWS_AS(build_model(spec_for(Family::compact_toy, Variant::org, 8, 64, 1)), ParamError);
    // samples narrower than the first kernel
    CHECK_THROWS_AS(build_model(spec_for(Family::shallow_toy, Variant::org, 8, 10, 2)), GraphError);
    // wide enough for the first conv but not the slot
    CHECK_THROWS_AS(build_model(spec_for(Family::shallow_toy, Variant::enk, 8, 30, 2)), GraphError);
    ModelSpec bad = spec_for(Family::compact_toy, Variant::org, 8, 64, 2);
    bad.widths.kernel_w.pop_back();
    CHECK_THROWS_AS(build_model(bad), ParamError);
}
