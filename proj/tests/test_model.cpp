#include <doctest.h>

#include <cmath>

#include "rbamc/complexity.hpp"
#include "rbamc/errors.hpp"
#include "rbamc/model.hpp"
#include "support.hpp"

using namespace rbamc;
using testing::max_rel_err;
using testing::numeric_grad;
using testing::random_signs;
using testing::random_tensor;

namespace {

constexpr ModelVariant kVariants[] = {ModelVariant::Real, ModelVariant::BNN, ModelVariant::BNN2Real,
                                      ModelVariant::RBNN};

// Layer list of the full-size network written out by hand:
// {c_in, c_out, k, out_h, out_w, binarized-in-block}
struct ConvRow {
    std::uint64_t c_in, c_out, k, out_h, out_w;
    bool block;
};

std::vector<ConvRow> table_rows() {
    std::vector<ConvRow> r;
    r.push_back({1, 32, 3, 2, 1024, false});
    auto a = [&](std::uint64_t c, std::uint64_t h, std::uint64_t w) {
        r.push_back({c, c, 3, h, w, true});
        r.push_back({c, c, 3, h, w, true});
    };
    auto b = [&](std::uint64_t ci, std::uint64_t co, std::uint64_t h, std::uint64_t w) {
        r.push_back({ci, co, 3, h, w, true});
        r.push_back({co, co, 3, 1, w / 2, true});
        r.push_back({ci, co, 1, 1, w / 2, true});
    };
    a(32, 2, 1024);
    a(32, 2, 1024);
    b(32, 32, 2, 1024);
    a(32, 1, 512);
    b(32, 64, 1, 512);
    a(64, 1, 256);
    b(64, 128, 1, 256);
    a(128, 1, 128);
    return r;
}

ArchSpec tiny_arch(std::size_t classes = 3) {
    ArchSpec a;
    a.input_h = 2;
    a.input_w = 8;
    a.stem_channels = 2;
    a.num_classes = classes;
    a.dropout_rate = 0.0;
    a.blocks = {{BlockKind::A, 2, 2, false}, {BlockKind::B, 2, 3, true}};
    return a;
}

double loss_of(Model& m, const Tensor& x, std::span<const int> labels) {
    Rng rng(0);
    return softmax_xent(m.forward(x, Mode::Train, rng), labels).loss;
}

// BN that computes gamma·v + beta exactly on integers.
void set_affine(BatchNormLayer& b, double gamma, double beta) {
    for (std::size_t c = 0; c < b.state.channels(); ++c) {
        b.state.gamma[c] = gamma;
        b.state.beta[c] = beta;
        b.state.running_mean[c] = 0.0;
        b.state.running_var[c] = 1.0;
    }
    b.state.eps = 1e-20;
}

void make_sign_block(ResBlock& b, Rng& rng) {
    for (ConvLayer* c : {&b.conv1, &b.conv2}) c->weight = random_signs(c->weight.shape(), rng);
    if (b.shortcut) b.shortcut->weight = random_signs(b.shortcut->weight.shape(), rng);
    set_affine(b.bn1, 2.0, 1.0);
    set_affine(b.bn2, 4.0, 2.0);
    if (b.shortcut_bn) set_affine(*b.shortcut_bn, 2.0, 1.0);
}

}  // namespace

TEST_CASE("architecture") {
    const ArchSpec a = ArchSpec::lresnet18a(24);
    CHECK(a.blocks.size() == 8);
    CHECK(a.feature_channels() == 128);
    CHECK_THROWS_AS(ArchSpec::lresnet18a(1), DomainError);
    ArchSpec bad = a;
    bad.blocks[1].channels_in = 64;
    CHECK_THROWS_AS(bad.validate(), ShapeError);
    BlockSpec blk{BlockKind::A, 4, 8, false};
    CHECK_THROWS_AS(blk.validate(), ShapeError);
    CHECK(parse_variant("rbnn") == ModelVariant::RBNN);
    CHECK_THROWS_AS(parse_variant("xnor"), DomainError);
    for (ModelVariant v : kVariants) CHECK(parse_variant(to_string(v)) == v);
}

TEST_CASE("output volumes follow the layer table") {
    const Model m(ModelVariant::Real, ArchSpec::lresnet18a(24), 1);
    const std::vector<ShapeTraceEntry> t = m.shape_trace();
    const std::vector<std::pair<std::string, Shape>> expect{
        {"input", {1, 2, 1024}},     {"conv", {32, 2, 1024}},      {"R-Block A", {32, 2, 1024}},
        {"R-Block A", {32, 2, 1024}}, {"R-Block B", {32, 1, 512}},  {"R-Block A", {32, 1, 512}},
        {"R-Block B", {64, 1, 256}},  {"R-Block A", {64, 1, 256}},  {"R-Block B", {128, 1, 128}},
        {"R-Block A", {128, 1, 128}}, {"pool", {128, 1, 1}},        {"BN", {128, 1, 1}},
        {"linear", {24, 1, 1}},
    };
    REQUIRE(t.size() == expect.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        CHECK(t[i].layer == expect[i].first);
        CHECK(t[i].output == expect[i].second);
    }
}

TEST_CASE("variant wiring") {
    for (ModelVariant v : kVariants) {
        Model m(v, ArchSpec::lresnet18a(24, 4), 3);
        const auto convs = m.conv_layers();
        CHECK(convs.size() == 1 + 8 * 2 + 3);
        const bool stem_binary = v == ModelVariant::BNN;
        CHECK(convs[0]->binarized() == stem_binary);
        for (std::size_t i = 1; i < convs.size(); ++i) {
            CHECK(convs[i]->binarized() == (v != ModelVariant::Real));
            CHECK(convs[i]->rotation.has_value() == (v == ModelVariant::RBNN));
            if (convs[i]->rotation) {
                CHECK(convs[i]->rotation->beta == 0.0);
                CHECK(convs[i]->rotation->size() == convs[i]->spec.weight_count());
            }
        }
        CHECK(m.head().binary == (v == ModelVariant::BNN));
        for (const ConvLayer* c : convs)
            if (c->binarized())
                for (double w : c->weight.values()) CHECK(std::abs(w) <= 1.0);
    }
}

TEST_CASE("parameter, operation and memory accounting") {
    const std::vector<ConvRow> rows = table_rows();
    std::uint64_t conv_params = 0, flops = 0, block_params = 0, block_ops = 0;
    for (const ConvRow& r : rows) {
        const std::uint64_t p = r.c_in * r.c_out * r.k * r.k;
        const std::uint64_t f = 2 * r.c_in * r.k * r.k * r.out_h * r.out_w * r.c_out;
        conv_params += p;
        flops += f;
        if (r.block) {
            block_params += p;
            block_ops += f;
        }
    }
    const std::uint64_t linear_params = 128 * 24 + 24, linear_flops = 2 * 128 * 24;
    CHECK(conv_params == 730400);

    CountingRules with_bn;
    with_bn.include_bn = true;
    const ComplexityReport real_bn = analyze(ArchSpec::lresnet18a(24), ModelVariant::Real, with_bn);
    CHECK(real_bn.total_params() == 736312);
    CHECK(real_bn.total_params() == conv_params + linear_params + 2816);

    const ComplexityReport real = analyze(ArchSpec::lresnet18a(24), ModelVariant::Real, {});
    CHECK(real.flops == flops + linear_flops);
    CHECK(real.flops >= 4.40e8);
    CHECK(real.flops <= 4.58e8);
    CHECK(real.xnor_ops == 0);
    CHECK(real.memory_mb() == doctest::Approx((conv_params + linear_params) * 8 / 1e6));
    CHECK(std::abs(real.memory_mb() - 5.87) <= 0.1);

    const ComplexityReport rbnn = analyze(ArchSpec::lresnet18a(24), ModelVariant::RBNN, {});
    CHECK(rbnn.flops == 1179648 + 6144);
    CHECK(rbnn.xnor_ops == block_ops);
    CHECK(rbnn.xnor_ops >= 4.40e8);
    CHECK(rbnn.xnor_ops <= 4.55e8);
    CHECK(rbnn.params_binary == block_params);
    CHECK(std::abs(rbnn.memory_mb() - 0.118) <= 0.006);

    const ComplexityReport b2r = analyze(ArchSpec::lresnet18a(24), ModelVariant::BNN2Real, {});
    CHECK(b2r.memory_bytes == rbnn.memory_bytes);

    const ComplexityReport bnn = analyze(ArchSpec::lresnet18a(24), ModelVariant::BNN, {});
    CHECK(bnn.params_real == 0);
    CHECK(bnn.memory_bytes == doctest::Approx((conv_params + linear_params) / 8.0));
    CHECK(std::abs(bnn.memory_mb() - 0.092) <= 0.005);

    for (std::size_t k : {2u, 4u}) {
        const ComplexityReport bag = analyze(ArchSpec::lresnet18a(24), ModelVariant::RBNN, {}, k);
        CHECK(bag.memory_bytes == k * rbnn.memory_bytes);
        CHECK(bag.flops == rbnn.flops);
    }

    SUBCASE("totals are sums of layer records, independent of seed") {
        const Model m1(ModelVariant::RBNN, ArchSpec::lresnet18a(24), 1), m2(ModelVariant::RBNN, ArchSpec::lresnet18a(24), 99);
        const ComplexityReport a = analyze(m1, with_bn), b = analyze(m2, with_bn);
        CHECK(a.total_params() == b.total_params());
        CHECK(a.flops == b.flops);
        std::uint64_t pr = 0, pb = 0, f = 0, x = 0;
        for (const LayerComplexity& l : a.layers) {
            CHECK((l.params_real == 0 || l.params_binary == 0));
            pr += l.params_real;
            pb += l.params_binary;
            f += l.flops;
            x += l.xnor_ops;
        }
        CHECK(pr == a.params_real);
        CHECK(pb == a.params_binary);
        CHECK(f == a.flops);
        CHECK(x == a.xnor_ops);
    }
}

TEST_CASE("forward shapes and finiteness") {
    Rng rng(4);
    const Tensor x = random_tensor({7, 1, 2, 64}, rng);
    for (ModelVariant v : kVariants) {
        Model m(v, ArchSpec::lresnet18a(24, 4, 64), 5);
        const Tensor y = m.forward(x, Mode::Infer, rng);
        CHECK(y.shape() == Shape{7, 24});
        CHECK(y.all_finite());
        const Tensor yt = m.forward(x, Mode::Train, rng);
        CHECK(yt.all_finite());
    }
    Model m(ModelVariant::Real, ArchSpec::lresnet18a(24, 4, 64), 5);
    CHECK_THROWS_AS(m.forward(Tensor({1, 1, 2, 32}), Mode::Infer, rng), ShapeError);
    CHECK_THROWS_AS(m.backward(Tensor({1, 24})), DomainError);
}

TEST_CASE("construction is deterministic in the seed") {
    const Model a(ModelVariant::RBNN, ArchSpec::lresnet18a(4, 4, 64), 11);
    const Model b(ModelVariant::RBNN, ArchSpec::lresnet18a(4, 4, 64), 11);
    const Model c(ModelVariant::RBNN, ArchSpec::lresnet18a(4, 4, 64), 12);
    const auto ca = a.conv_layers(), cb = b.conv_layers(), cc = c.conv_layers();
    bool any_diff = false;
    for (std::size_t i = 0; i < ca.size(); ++i) {
        CHECK(ca[i]->weight == cb[i]->weight);
        any_diff = any_diff || !(ca[i]->weight == cc[i]->weight);
    }
    CHECK(a.head().weight == b.head().weight);
    CHECK(any_diff);
}

TEST_CASE("RBNN with beta = 0 reproduces BNN2Real exactly") {
    Rng rng(6);
    const ArchSpec arch = ArchSpec::lresnet18a(4, 4, 64);
    Model b2r(ModelVariant::BNN2Real, arch, 7);
    Model rb(ModelVariant::RBNN, arch, 7);
    auto cs = b2r.conv_layers();
    auto cr = rb.conv_layers();
    REQUIRE(cs.size() == cr.size());
    for (std::size_t i = 0; i < cs.size(); ++i) {
        REQUIRE(cs[i]->weight == cr[i]->weight);
        // a nontrivial rotation that beta = 0 must switch off
        if (cr[i]->rotation) {
            RotationState& s = *cr[i]->rotation;
            s.R1 = testing::random_orthogonal(s.n1, rng);
            s.R2 = testing::random_orthogonal(s.n2, rng);
        }
    }
    const Tensor x = random_tensor({5, 1, 2, 64}, rng);
    Rng r1(1), r2(1);
    CHECK(b2r.forward(x, Mode::Infer, r1) == rb.forward(x, Mode::Infer, r2));
    CHECK(b2r.forward(x, Mode::Train, r1) == rb.forward(x, Mode::Train, r2));

    for (ConvLayer* c : cr)
        if (c->rotation) c->rotation->beta = 0.4;
    Rng r3(1), r4(1);
    CHECK_FALSE(b2r.forward(x, Mode::Infer, r3) == rb.forward(x, Mode::Infer, r4));
}

TEST_CASE("packed binary path equals the dense sign simulation") {
    Rng rng(8);
    for (ModelVariant v : {ModelVariant::BNN, ModelVariant::BNN2Real, ModelVariant::RBNN}) {
        Model m(v, ArchSpec::lresnet18a(5, 4, 64), 9);
        for (ConvLayer* c : m.conv_layers())
            if (c->rotation) c->rotation->beta = 0.8;
        const Tensor x = random_tensor({3, 1, 2, 64}, rng);
        Rng a(2), b(2);
        const Tensor packed = m.forward(x, Mode::Infer, a);
        m.set_dense_binary_simulation(true);
        const Tensor dense = m.forward(x, Mode::Infer, b);
        m.set_dense_binary_simulation(false);
        CHECK(packed == dense);
    }
}

TEST_CASE("real and binary blocks agree on +-1 weights and activations") {
    Rng rng(10);
    const ArchSpec arch = ArchSpec::lresnet18a(4, 4, 32);
    Model real(ModelVariant::Real, arch, 1);
    Model bnn(ModelVariant::BNN, arch, 1);
    for (std::size_t i = 0; i < real.block_count(); ++i) {
        Rng seed_a(100 + i), seed_b(100 + i);
        make_sign_block(real.block(i), seed_a);
        make_sign_block(bnn.block(i), seed_b);
    }
    Tensor xr = random_signs({2, 4, 2, 32}, rng);
    Tensor xb = xr;
    for (std::size_t i = 0; i < real.block_count(); ++i) {
        xr = real.forward_block(i, xr, Mode::Infer);
        xb = bnn.forward_block(i, xb, Mode::Infer);
        REQUIRE(xr == xb);
        for (double v : xr.values()) REQUIRE(std::abs(v) == 1.0);
    }
}

TEST_CASE("A-block with zero convolutions is a pure skip") {
    Rng rng(11);
    Model m(ModelVariant::Real, ArchSpec::lresnet18a(4, 4, 32), 1);
    ResBlock& b = m.block(0);
    b.conv1.weight.fill(0.0);
    b.conv2.weight.fill(0.0);
    const Tensor x = random_tensor({2, 4, 2, 32}, rng, -2.0, 2.0);
    CHECK(m.forward_block(0, x, Mode::Infer) == hardtanh(x));
}

TEST_CASE("block gradients against central differences") {
    Rng rng(12);
    ArchSpec arch = tiny_arch();
    Model m(ModelVariant::Real, arch, 3);
    for (std::size_t idx : {0u, 1u}) {
        const std::size_t c_in = m.block(idx).spec.channels_in;
        Tensor x = random_tensor({3, c_in, 2, 8}, rng, -1.5, 1.5);
        const Shape out_shape = m.forward_block(idx, x, Mode::Train).shape();
        const Tensor u = random_tensor(out_shape, rng);
        auto f = [&] {
            const Tensor y = m.forward_block(idx, x, Mode::Train);
            return dot(y.data(), u.data());
        };
        m.zero_grad();
        m.forward_block(idx, x, Mode::Train);
        const Tensor gx = m.backward_block(idx, u);
        CHECK(max_rel_err(gx, numeric_grad(x, f)) < 1e-4);
        ResBlock& b = m.block(idx);
        const Tensor analytic = b.conv1.weight_grad;
        CHECK(max_rel_err(analytic, numeric_grad(b.conv1.weight, f)) < 1e-4);
        if (b.shortcut) {
            const Tensor sg = b.shortcut->weight_grad;
            CHECK(max_rel_err(sg, numeric_grad(b.shortcut->weight, f)) < 1e-4);
        }
    }
}

TEST_CASE("end-to-end gradients of a tiny network") {
    Rng rng(13);
    Model m(ModelVariant::Real, tiny_arch(), 4);
    const Tensor x = random_tensor({4, 1, 2, 8}, rng, -2.0, 2.0);
    const int labels[] = {0, 2, 1, 2};
    m.zero_grad();
    Rng r(0);
    const XentResult xr = softmax_xent(m.forward(x, Mode::Train, r), labels);
    m.backward(xr.grad);
    for (ParamView& p : m.parameters()) {
        Tensor value({p.value.size()}, std::vector<double>(p.value.begin(), p.value.end()));
        const Tensor analytic({p.grad.size()}, std::vector<double>(p.grad.begin(), p.grad.end()));
        auto f = [&] {
            std::copy(value.values().begin(), value.values().end(), p.value.begin());
            return loss_of(m, x, labels);
        };
        const Tensor numeric = numeric_grad(value, f);
        std::copy(value.values().begin(), value.values().end(), p.value.begin());
        INFO(p.name);
        CHECK(max_rel_err(analytic, numeric) < 1e-4);
    }
}

TEST_CASE("binary variants route gradients to latent weights and beta") {
    Rng rng(14);
    Model m(ModelVariant::RBNN, tiny_arch(), 5);
    for (ConvLayer* c : m.conv_layers())
        if (c->rotation) {
            c->rotation->R1 = testing::random_orthogonal(c->rotation->n1, rng);
            c->rotation->R2 = testing::random_orthogonal(c->rotation->n2, rng);
            c->rotation->beta = 0.5;
        }
    const Tensor x = random_tensor({4, 1, 2, 8}, rng);
    const int labels[] = {0, 1, 2, 0};
    m.zero_grad();
    Rng r(0);
    const XentResult xr = softmax_xent(m.forward(x, Mode::Train, r), labels);
    m.backward(xr.grad);
    bool beta_moved = false, weight_moved = false;
    for (const ParamView& p : m.parameters()) {
        for (double g : p.grad) CHECK(std::isfinite(g));
        if (p.name.ends_with(".beta") && p.name.find("conv") != std::string::npos)
            beta_moved = beta_moved || p.grad[0] != 0.0;
        if (p.clip_to_unit)
            for (double g : p.grad) weight_moved = weight_moved || g != 0.0;
    }
    CHECK(beta_moved);
    CHECK(weight_moved);
}
