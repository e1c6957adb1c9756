#include "rbamc/complexity.hpp"

#include "rbamc/errors.hpp"

namespace rbamc {

std::uint64_t conv_flops(const ConvSpec& spec, std::size_t out_h, std::size_t out_w) {
    return 2ULL * spec.c_in * spec.k_h * spec.k_w * out_h * out_w * spec.c_out;
}

ComplexityReport analyze(const Model& model, const CountingRules& rules, std::size_t ensemble_size) {
    if (ensemble_size == 0) throw DomainError("analyze: ensemble size must be positive");
    ComplexityReport r;
    r.variant = model.variant();
    r.num_classes = model.arch().num_classes;
    r.ensemble_size = ensemble_size;
    r.rules = rules;

    const ArchSpec& arch = model.arch();
    auto add_conv = [&](const ConvLayer& c, std::size_t& h, std::size_t& w) {
        const std::size_t oh = c.spec.out_h(h), ow = c.spec.out_w(w);
        LayerComplexity l;
        l.name = c.name;
        l.kind = "conv";
        l.binary = c.binarized();
        const std::uint64_t ops = conv_flops(c.spec, oh, ow);
        (l.binary ? l.params_binary : l.params_real) = c.spec.weight_count();
        (l.binary ? l.xnor_ops : l.flops) = ops;
        l.output = {c.spec.c_out, oh, ow};
        r.layers.push_back(std::move(l));
        h = oh;
        w = ow;
    };
    auto add_bn = [&](const BatchNormLayer& b, const Shape& out) {
        if (!rules.include_bn) return;
        LayerComplexity l;
        l.name = b.name;
        l.kind = "bn";
        l.params_real = 2 * b.state.channels();
        l.output = out;
        r.layers.push_back(std::move(l));
    };

    const auto convs = model.conv_layers();
    const auto bns = model.batchnorm_layers();
    std::size_t ci = 0, bi = 0;
    std::size_t h = arch.input_h, w = arch.input_w;
    add_conv(*convs[ci++], h, w);
    add_bn(*bns[bi++], r.layers.back().output);
    for (const BlockSpec& bs : arch.blocks) {
        const std::size_t in_h = h, in_w = w;
        add_conv(*convs[ci++], h, w);
        add_bn(*bns[bi++], {bs.channels_out, h, w});
        add_conv(*convs[ci++], h, w);
        add_bn(*bns[bi++], {bs.channels_out, h, w});
        if (bs.kind == BlockKind::B) {
            std::size_t sh = in_h, sw = in_w;
            add_conv(*convs[ci++], sh, sw);
            add_bn(*bns[bi++], {bs.channels_out, sh, sw});
        }
    }
    const std::size_t features = arch.feature_channels();
    add_bn(*bns[bi++], {features, 1, 1});

    const LinearLayer& head = model.head();
    LayerComplexity l;
    l.name = head.name;
    l.kind = "linear";
    l.binary = head.binary;
    const std::uint64_t params = head.weight.size() + head.bias.size();
    (l.binary ? l.params_binary : l.params_real) = params;
    (l.binary ? l.xnor_ops : l.flops) = 2ULL * features * arch.num_classes;
    l.output = {arch.num_classes, 1, 1};
    r.layers.push_back(std::move(l));

    for (const LayerComplexity& x : r.layers) {
        r.params_real += x.params_real;
        r.params_binary += x.params_binary;
        r.flops += x.flops;
        r.xnor_ops += x.xnor_ops;
    }
    r.params_real *= ensemble_size;
    r.params_binary *= ensemble_size;
    r.memory_bytes = static_cast<double>(r.params_real) * rules.real_width_bits / 8.0 +
                     static_cast<double>(r.params_binary) * rules.binary_width_bits / 8.0;
    return r;
}

ComplexityReport analyze(const ArchSpec& arch, ModelVariant variant, const CountingRules& rules,
                         std::size_t ensemble_size) {
    return analyze(Model(variant, arch, 0), rules, ensemble_size);
}

}  // namespace rbamc
