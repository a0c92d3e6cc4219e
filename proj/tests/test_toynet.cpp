#include "cavkit/bundle.hpp"
#include "cavkit/toynet.hpp"

#include "oracles/finite_difference.hpp"
#include "support.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include <numeric>

using namespace cavkit;
using namespace cavkit::toy;
using testing::error_of;

namespace {

SyntheticData small_data(std::size_t n = 120, std::uint64_t seed = 7) {
    auto spec = SyntheticSpec::defaults();
    spec.n_samples = n;
    spec.seed = seed;
    return generate(spec);
}

} // namespace

TEST_CASE("defaults plant stripes, blob and a null grid", "[toy]") {
    const auto spec = SyntheticSpec::defaults();
    CHECK(spec.n_samples == 600);
    CHECK(spec.noise_std == 0.1);
    CHECK(spec.class_names == std::vector<std::string>{"A", "B", "C"});
    REQUIRE(spec.concepts.size() == 3);
    CHECK(spec.concepts[0].class_effect == std::map<std::string, int>{{"A", 1}, {"B", -1}});
    CHECK(spec.concepts[1].class_effect == std::map<std::string, int>{{"B", 1}, {"C", -1}});
    CHECK(spec.concepts[2].class_effect.empty());
    CHECK(error_of([] { SyntheticSpec::defaults(1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("single planted concept decides the label", "[toy]") {
    SyntheticSpec spec;
    spec.n_samples = 300;
    spec.noise_std = 0.0;
    spec.class_names = {"A", "B", "C"};
    spec.concepts = {PlantedConcept{"stripes", Motif::horizontal_stripes, {{"A", 1}, {"B", -1}}}};
    const auto d = generate(spec);
    const auto& flags = d.concept_flags.at("stripes");
    for (std::size_t i = 0; i < d.labels.size(); ++i) CHECK((d.labels[i] == 0) == (flags[i] == 1));
    // the image is exactly the motif or blank
    const auto motif = render_motif(Motif::horizontal_stripes, spec.image_side);
    for (std::size_t i = 0; i < 10; ++i) {
        const auto img = d.images.row(i);
        for (std::size_t p = 0; p < img.size(); ++p) CHECK(img[p] == (flags[i] ? motif[p] : 0.0f));
    }
}

TEST_CASE("generation is seeded", "[toy]") {
    const auto a = small_data(80, 3), b = small_data(80, 3), c = small_data(80, 4);
    CHECK(a.concept_flags == b.concept_flags);
    CHECK(a.labels == b.labels);
    CHECK(testing::same_bits(a.images.data(), b.images.data()));
    CHECK(a.concept_flags != c.concept_flags);
    CHECK(a.sample_ids.front() == "s0000");
}

TEST_CASE("generator rejects bad specs", "[toy]") {
    auto spec = SyntheticSpec::defaults();
    spec.concepts[0].class_effect["Q"] = 1;
    CHECK(error_of([&] { generate(spec); }) == ErrorCode::UnknownClass);
    spec = SyntheticSpec::defaults();
    spec.concepts[0].class_effect["A"] = 2;
    CHECK(error_of([&] { generate(spec); }) == ErrorCode::InvalidArgument);
    spec = SyntheticSpec::defaults();
    spec.noise_std = -1;
    CHECK(error_of([&] { generate(spec); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("layer gradients match central differences", "[toy][oracle]") {
    const auto d = small_data(40);
    for (std::uint64_t seed : {1u, 2u}) {
        const auto net = ToyNet::initialized(16, 3, seed);
        for (const char* layer : {kHiddenLayer, kConvLayer}) {
            const auto rep = oracle::check_layer_gradient(net, d.images, layer, 100, 1e-3, seed * 10);
            INFO(layer << " max relative error " << rep.max_rel_error);
            CHECK(rep.probes == 100);
            CHECK(rep.max_rel_error < 1e-3);
        }
    }
}

TEST_CASE("parameter gradients match central differences", "[toy][oracle]") {
    const auto d = small_data(40);
    const auto net = ToyNet::initialized(16, 3, 5);
    const auto rep = oracle::check_parameter_gradient(net, d.images, d.labels, 100, 1e-3, 9);
    INFO("max relative error " << rep.max_rel_error);
    CHECK(rep.max_rel_error < 1e-3);
}

TEST_CASE("tied output weights give identical gradients for every class", "[toy]") {
    auto net = ToyNet::initialized(16, 3, 11);
    auto& p = net.parameters();
    const std::size_t out_w = p.size() - 3 - 3 * kHiddenWidth;
    for (std::size_t k = 1; k < 3; ++k) {
        std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(out_w), kHiddenWidth,
                    p.begin() + static_cast<std::ptrdiff_t>(out_w + k * kHiddenWidth));
        p[p.size() - 3 + k] = p[p.size() - 3];
    }
    const auto d = small_data(5);
    for (const char* layer : {kHiddenLayer, kConvLayer})
        for (std::size_t i = 0; i < 5; ++i) {
            const auto g0 = net.layer_gradient(d.images.row(i), layer, 0);
            CHECK(net.layer_gradient(d.images.row(i), layer, 1) == g0);
            CHECK(net.layer_gradient(d.images.row(i), layer, 2) == g0);
        }
}

TEST_CASE("logits_from reproduces the forward pass", "[toy]") {
    const auto net = ToyNet::initialized(16, 4, 2);
    auto spec = SyntheticSpec::defaults(4);
    spec.n_samples = 6;
    const auto d = generate(spec);
    for (std::size_t i = 0; i < 6; ++i) {
        const auto full = net.logits(d.images.row(i));
        for (const char* layer : {kHiddenLayer, kConvLayer}) {
            const auto from = net.logits_from(layer, net.layer_activation(d.images.row(i), layer));
            for (std::size_t k = 0; k < 4; ++k) CHECK(from[k] == Catch::Approx(full[k]).epsilon(1e-12));
        }
    }
    CHECK(net.layer_size(kConvLayer) == kConvChannels * 16 * 16);
    CHECK(net.layer_size(kHiddenLayer) == kHiddenWidth);
    CHECK(error_of([&] { net.layer_size("fc9"); }) == ErrorCode::UnknownLayer);
}

TEST_CASE("training descends and is bitwise reproducible", "[toy]") {
    const auto d = small_data(200);
    TrainOptions opt;
    opt.epochs = 3;
    const auto a = train_toy(d.images, d.labels, 3, opt);
    REQUIRE(a.epoch_loss.size() == 3);
    CHECK(a.epoch_loss[0] < a.initial_loss);
    const auto b = train_toy(d.images, d.labels, 3, opt);
    CHECK(testing::same_bits(a.net.parameters(), b.net.parameters()));
    opt.seed = 8;
    CHECK_FALSE(testing::same_bits(train_toy(d.images, d.labels, 3, opt).net.parameters(), a.net.parameters()));

    const std::vector<std::size_t> one_class(d.labels.size(), 1);
    CHECK(error_of([&] { train_toy(d.images, one_class, 3, opt); }) == ErrorCode::NotTrainable);
}

TEST_CASE("exported bundle carries backprop gradients", "[toy][bundle]") {
    testing::TempDir dir("exp");
    const auto d = small_data(30);
    const auto net = ToyNet::initialized(16, 3, 4);
    const auto manifest = export_bundle(net, d, kHiddenLayer, dir.path());
    const auto b = load_bundle(manifest);
    CHECK(b.layers == std::vector<std::string>{kHiddenLayer});
    CHECK(b.gradients.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& g = b.gradient(kHiddenLayer, d.class_names[k]);
        for (std::size_t i = 0; i < 30; i += 7) {
            const auto expect = net.layer_gradient(d.images.row(i), kHiddenLayer, k);
            for (std::size_t j = 0; j < expect.size(); ++j) CHECK(g.tensor.row(i)[j] == static_cast<float>(expect[j]));
        }
    }
    CHECK(b.dataset.concept_names() == std::vector<std::string>{"blob", "grid", "stripes"});
    for (std::size_t i = 0; i < 30; ++i)
        CHECK((b.dataset.concept_labels.at("stripes")[i] == ConceptLabel::present) == (d.concept_flags.at("stripes")[i] == 1));

    const std::string twice[] = {kHiddenLayer, kHiddenLayer};
    CHECK(error_of([&] { export_bundle(net, d, twice, dir / "dup"); }) == ErrorCode::InvalidArgument);
    CHECK(error_of([&] { export_bundle(net, d, "fc9", dir / "bad"); }) == ErrorCode::UnknownLayer);
}

TEST_CASE("network and truth files round trip", "[toy]") {
    testing::TempDir dir("net");
    const auto net = ToyNet::initialized(16, 3, 21);
    save_net(net, dir / "net.json");
    CHECK(load_net(dir / "net.json") == net);
    CHECK(error_of([&] { load_net(dir / "missing.json"); }) == ErrorCode::MissingFile);

    const auto spec = SyntheticSpec::defaults();
    auto small = spec;
    small.n_samples = 12;
    const auto d = generate(small);
    write_truth(small, d, dir / "truth.json");
    const auto j = nlohmann::json::parse(testing::read_file(dir / "truth.json"));
    CHECK(j["concepts"][0]["name"] == "stripes");
    CHECK(j["concepts"][0]["class_effect"]["A"] == 1);
    CHECK(j["concepts"][2]["class_effect"]["C"] == 0);
    CHECK(j["class_labels"].size() == 12);
}
