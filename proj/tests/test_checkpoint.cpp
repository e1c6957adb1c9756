#include <doctest.h>

#include <filesystem>

#include "rbamc/byteio.hpp"
#include "rbamc/checkpoint.hpp"
#include "rbamc/errors.hpp"
#include "support.hpp"

using namespace rbamc;
using testing::random_orthogonal;
using testing::random_tensor;

namespace {

Model trained_like(ModelVariant v, std::uint64_t seed) {
    Model m(v, ArchSpec::lresnet18a(3, 2, 64), seed);
    Rng rng(seed + 1);
    for (BatchNormLayer* b : m.batchnorm_layers())
        for (std::size_t c = 0; c < b->state.channels(); ++c) {
            b->state.gamma[c] = rng.uniform(0.5, 1.5);
            b->state.running_mean[c] = rng.uniform(-1, 1);
            b->state.running_var[c] = rng.uniform(0.5, 2);
        }
    for (ConvLayer* c : m.conv_layers())
        if (c->rotation) {
            c->rotation->R1 = random_orthogonal(c->rotation->n1, rng);
            c->rotation->R2 = random_orthogonal(c->rotation->n2, rng);
            c->rotation->beta = rng.uniform(-2, 2);
            c->rotation->eta = 0.01;
        }
    return m;
}

Tensor logits_of(Model& m, const Tensor& x) {
    Rng rng(0);
    return m.forward(x, Mode::Infer, rng);
}

}  // namespace

TEST_CASE("checkpoint round trip preserves outputs bit-exactly") {
    Rng rng(1);
    const Tensor x = random_tensor({4, 1, 2, 64}, rng);
    for (ModelVariant v : {ModelVariant::Real, ModelVariant::BNN, ModelVariant::BNN2Real, ModelVariant::RBNN}) {
        Model m = trained_like(v, 5);
        const CheckpointMeta meta{7, 123, 0xabcdef};
        const std::vector<std::uint8_t> bytes = encode_checkpoint(m, meta);
        Checkpoint back = decode_checkpoint(bytes);
        CHECK(back.meta == meta);
        CHECK(back.model.variant() == v);
        CHECK(back.model.arch() == m.arch());
        CHECK(logits_of(back.model, x) == logits_of(m, x));
        CHECK(encode_checkpoint(back.model, back.meta) == bytes);
    }
}

TEST_CASE("checkpoint files") {
    const auto path = std::filesystem::temp_directory_path() / "rbamc_test_ckpt.amcw";
    Model m = trained_like(ModelVariant::RBNN, 2);
    save_checkpoint(path, m, {});
    const Checkpoint c = load_checkpoint(path);
    CHECK(encode_checkpoint(c.model, c.meta) == read_file(path));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
}

TEST_CASE("corrupted checkpoints are rejected") {
    Model m = trained_like(ModelVariant::RBNN, 3);
    const std::vector<std::uint8_t> good = encode_checkpoint(m, {});

    SUBCASE("bad magic") {
        auto b = good;
        b[1] = 'X';
        CHECK_THROWS_AS(decode_checkpoint(b), FormatError);
    }
    SUBCASE("unsupported version is never coerced") {
        auto b = good;
        b[4] = static_cast<std::uint8_t>(kCheckpointVersion + 1);
        try {
            decode_checkpoint(b);
            FAIL("expected a format error");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("version") != std::string::npos);
        }
    }
    SUBCASE("flipped payload byte fails the checksum") {
        auto b = good;
        b[b.size() / 2] ^= 0x10;
        CHECK_THROWS_AS(decode_checkpoint(b), FormatError);
    }
    SUBCASE("truncation") {
        auto b = good;
        b.resize(b.size() - 9);
        CHECK_THROWS_AS(decode_checkpoint(b), FormatError);
        b.resize(6);
        CHECK_THROWS_AS(decode_checkpoint(b), TruncationError);
    }
    SUBCASE("non-orthogonal rotation") {
        Model bad = m;
        for (ConvLayer* c : bad.conv_layers())
            if (c->rotation) {
                c->rotation->R1.at(0, 0) += 1e-3;
                break;
            }
        CHECK_THROWS_AS(decode_checkpoint(encode_checkpoint(bad, {})), FormatError);
    }
}

TEST_CASE("conversion from a real model") {
    Rng rng(4);
    Model real = trained_like(ModelVariant::Real, 6);
    for (ConvLayer* c : real.conv_layers())
        for (double& w : c->weight.values()) w *= 3.0;

    const Model bnn = convert_model(real, ModelVariant::BNN);
    CHECK(bnn.variant() == ModelVariant::BNN);
    const auto rc = real.conv_layers();
    const auto bc = bnn.conv_layers();
    for (std::size_t i = 0; i < rc.size(); ++i) CHECK(bc[i]->weight == clip_latent(rc[i]->weight));
    for (std::size_t i = 0; i < real.batchnorm_layers().size(); ++i)
        CHECK(bnn.batchnorm_layers()[i]->state.running_mean == real.batchnorm_layers()[i]->state.running_mean);

    // packed inference of the converted model equals the dense sign simulation
    Model sim = bnn, packed = bnn;
    sim.set_dense_binary_simulation(true);
    const Tensor x = random_tensor({3, 1, 2, 64}, rng);
    CHECK(logits_of(packed, x) == logits_of(sim, x));

    const Model rb = convert_model(real, ModelVariant::RBNN);
    for (const ConvLayer* c : rb.conv_layers()) {
        if (!c->rotation) continue;
        CHECK(orthogonality_error(c->rotation->R1) < 1e-8);
        CHECK(orthogonality_error(c->rotation->R2) < 1e-8);
        CHECK(c->rotation->eta > 0.0);
    }
    decode_checkpoint(encode_checkpoint(rb, {}));

    CHECK_THROWS_AS(convert_model(bnn, ModelVariant::RBNN), DomainError);
    CHECK_THROWS_AS(convert_model(real, ModelVariant::Real), DomainError);
}
