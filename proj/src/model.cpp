#include "rbamc/model.hpp"

#include <cmath>

#include "rbamc/errors.hpp"

namespace rbamc {

std::string to_string(ModelVariant v) {
    switch (v) {
        case ModelVariant::Real: return "real";
        case ModelVariant::BNN: return "bnn";
        case ModelVariant::BNN2Real: return "bnn2real";
        case ModelVariant::RBNN: return "rbnn";
    }
    return "unknown";
}

ModelVariant parse_variant(const std::string& name) {
    if (name == "real") return ModelVariant::Real;
    if (name == "bnn") return ModelVariant::BNN;
    if (name == "bnn2real") return ModelVariant::BNN2Real;
    if (name == "rbnn") return ModelVariant::RBNN;
    throw DomainError("unknown variant '" + name + "' (expected real|bnn|bnn2real|rbnn)");
}

void BlockSpec::validate() const {
    if (channels_in == 0 || channels_out == 0) throw ShapeError("block: zero channels");
    if (kind == BlockKind::A && (channels_in != channels_out || downsample))
        throw ShapeError("block A must preserve channels and extent");
}

ArchSpec ArchSpec::lresnet18a(std::size_t num_classes, std::size_t width, std::size_t input_w) {
    if (width == 0) throw DomainError("width must be positive");
    ArchSpec a;
    a.input_w = input_w;
    a.stem_channels = width;
    a.num_classes = num_classes;
    const std::size_t w1 = width, w2 = 2 * width, w4 = 4 * width;
    a.blocks = {
        {BlockKind::A, w1, w1, false}, {BlockKind::A, w1, w1, false}, {BlockKind::B, w1, w1, true},
        {BlockKind::A, w1, w1, false}, {BlockKind::B, w1, w2, true}, {BlockKind::A, w2, w2, false},
        {BlockKind::B, w2, w4, true},  {BlockKind::A, w4, w4, false},
    };
    a.validate();
    return a;
}

void ArchSpec::validate() const {
    if (num_classes < 2) throw DomainError("num_classes must be at least 2");
    if (stem_channels == 0 || input_h == 0 || input_w == 0) throw ShapeError("architecture: zero extent");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw DomainError("dropout rate must lie in [0, 1)");
    std::size_t c = stem_channels;
    for (const BlockSpec& b : blocks) {
        b.validate();
        if (b.channels_in != c) throw ShapeError("architecture: block channel chain is broken");
        c = b.channels_out;
    }
}

std::size_t ArchSpec::feature_channels() const { return blocks.empty() ? stem_channels : blocks.back().channels_out; }

Tensor ConvLayer::effective_weights() const {
    if (kind == ConvKind::Rotated) return adjusted_weights(weight, *rotation);
    return weight;
}

namespace {

ConvLayer make_conv(std::string name, const ConvSpec& spec, ConvKind kind, Rng& rng) {
    ConvLayer c;
    c.name = std::move(name);
    c.spec = spec;
    c.kind = kind;
    c.weight = Tensor(spec.weight_shape());
    const double bound = std::sqrt(6.0 / static_cast<double>(spec.c_in * spec.k_h * spec.k_w));
    for (double& v : c.weight.values()) v = rng.uniform(-bound, bound);
    if (c.binarized()) clip_latent_inplace(c.weight);
    if (kind == ConvKind::Rotated) c.rotation = RotationState::identity(spec.weight_count());
    c.weight_grad = Tensor(spec.weight_shape());
    return c;
}

BatchNormLayer make_bn(std::string name, std::size_t channels) {
    BatchNormLayer b;
    b.name = std::move(name);
    b.state = BatchNormState(channels);
    b.gamma_grad.assign(channels, 0.0);
    b.beta_grad.assign(channels, 0.0);
    return b;
}

void add_inplace(Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

}  // namespace

Model::Model(ModelVariant variant, ArchSpec arch, std::uint64_t seed) : variant_(variant), arch_(std::move(arch)) {
    arch_.validate();
    const ConvKind block_kind = variant == ModelVariant::Real   ? ConvKind::Real
                                : variant == ModelVariant::RBNN ? ConvKind::Rotated
                                                                : ConvKind::Binary;
    const ConvKind stem_kind = variant == ModelVariant::BNN ? ConvKind::Binary : ConvKind::Real;

    std::uint64_t layer_index = 0;
    auto next_rng = [&]() { return Rng(derive_seed({seed, 0x1a7e4ULL, layer_index++})); };

    {
        Rng rng = next_rng();
        stem_ = make_conv("stem", ConvSpec::square(1, arch_.stem_channels, 3, 1, 1), stem_kind, rng);
        stem_bn_ = make_bn("stem.bn", arch_.stem_channels);
    }
    for (std::size_t i = 0; i < arch_.blocks.size(); ++i) {
        const BlockSpec& bs = arch_.blocks[i];
        const std::string prefix = "block" + std::to_string(i);
        const std::size_t stride = bs.downsample ? 2 : 1;
        ResBlock b;
        b.spec = bs;
        Rng r1 = next_rng();
        b.conv1 = make_conv(prefix + ".conv1", ConvSpec::square(bs.channels_in, bs.channels_out, 3, 1, 1), block_kind, r1);
        b.bn1 = make_bn(prefix + ".bn1", bs.channels_out);
        Rng r2 = next_rng();
        b.conv2 = make_conv(prefix + ".conv2", ConvSpec::square(bs.channels_out, bs.channels_out, 3, stride, 1),
                            block_kind, r2);
        b.bn2 = make_bn(prefix + ".bn2", bs.channels_out);
        if (bs.kind == BlockKind::B) {
            Rng r3 = next_rng();
            b.shortcut = make_conv(prefix + ".shortcut", ConvSpec::square(bs.channels_in, bs.channels_out, 1, stride, 0),
                                   block_kind, r3);
            b.shortcut_bn = make_bn(prefix + ".shortcut_bn", bs.channels_out);
        }
        blocks_.push_back(std::move(b));
    }
    const std::size_t features = arch_.feature_channels();
    head_bn_ = make_bn("head.bn", features);
    head_.name = "head.linear";
    head_.binary = variant == ModelVariant::BNN;
    head_.weight = Tensor({arch_.num_classes, features});
    head_.bias = Tensor({arch_.num_classes});
    Rng rng = next_rng();
    const double bound = 1.0 / std::sqrt(static_cast<double>(features));
    for (double& v : head_.weight.values()) v = rng.uniform(-bound, bound);
    for (double& v : head_.bias.values()) v = rng.uniform(-bound, bound);
    head_.weight_grad = Tensor(head_.weight.shape());
    head_.bias_grad = Tensor(head_.bias.shape());
}

Model build(ModelVariant variant, const ArchSpec& arch, std::uint64_t seed) { return Model(variant, arch, seed); }

Tensor Model::conv_forward(ConvLayer& layer, const Tensor& x, bool cache) {
    if (layer.kind == ConvKind::Real) {
        if (cache) layer.cached_input = x;
        return conv2d_forward(x, layer.spec, layer.weight);
    }
    Tensor effective = layer.effective_weights();
    Tensor weight_signs = sign(effective);
    Tensor out;
    if (dense_binary_ || cache) {
        Tensor signs = sign(x);
        out = dense_binary_ ? conv2d_forward(signs, layer.spec, weight_signs)
                            : binary_conv2d(ChannelBits::from_signs(signs), ChannelBits::from_signs(weight_signs),
                                            layer.spec);
        if (cache) layer.cached_signs = std::move(signs);
    } else {
        out = binary_conv2d(ChannelBits::from_signs(x), ChannelBits::from_signs(weight_signs), layer.spec);
    }
    if (cache) {
        layer.cached_input = x;
        layer.cached_effective = std::move(effective);
        layer.cached_weight_signs = std::move(weight_signs);
    }
    return out;
}

Tensor Model::conv_backward(ConvLayer& layer, const Tensor& upstream, bool need_input_grad) {
    if (layer.kind == ConvKind::Real) {
        ConvGrads g = conv2d_backward(upstream, layer.cached_input, layer.spec, layer.weight, need_input_grad);
        add_inplace(layer.weight_grad, g.weights);
        return std::move(g.input);
    }
    ConvGrads g = conv2d_backward(upstream, layer.cached_signs, layer.spec, layer.cached_weight_signs, need_input_grad);
    const Tensor g_effective = ste_backward(g.weights, layer.cached_effective);
    if (layer.kind == ConvKind::Rotated) {
        add_inplace(layer.weight_grad, adjusted_weights_backward(g_effective, *layer.rotation));
        layer.beta_grad += beta_grad(g_effective, layer.weight, *layer.rotation);
    } else {
        add_inplace(layer.weight_grad, g_effective);
    }
    if (!need_input_grad) return {};
    return ste_backward(g.input, layer.cached_input);
}

Tensor Model::bn_forward(BatchNormLayer& layer, const Tensor& x, Mode mode) {
    return batchnorm_forward(x, layer.state, mode, mode == Mode::Train ? &layer.cache : nullptr);
}

Tensor Model::bn_backward(BatchNormLayer& layer, const Tensor& upstream) {
    BatchNormGrads g = batchnorm_backward(upstream, layer.cache, layer.state);
    for (std::size_t c = 0; c < g.gamma.size(); ++c) {
        layer.gamma_grad[c] += g.gamma[c];
        layer.beta_grad[c] += g.beta[c];
    }
    return std::move(g.input);
}

Tensor Model::block_forward(ResBlock& b, const Tensor& x, Mode mode) {
    const bool cache = mode == Mode::Train;
    Tensor h = bn_forward(b.bn1, conv_forward(b.conv1, x, cache), mode);
    if (cache) b.pre_act1 = h;
    h = bn_forward(b.bn2, conv_forward(b.conv2, hardtanh(h), cache), mode);
    if (b.shortcut)
        add_inplace(h, bn_forward(*b.shortcut_bn, conv_forward(*b.shortcut, x, cache), mode));
    else
        add_inplace(h, x);
    if (cache) b.sum = h;
    return hardtanh(h);
}

Tensor Model::block_backward(ResBlock& b, const Tensor& upstream) {
    const Tensor g = hardtanh_backward(upstream, b.sum);
    Tensor g_main = conv_backward(b.conv2, bn_backward(b.bn2, g), true);
    g_main = hardtanh_backward(g_main, b.pre_act1);
    Tensor gx = conv_backward(b.conv1, bn_backward(b.bn1, g_main), true);
    if (b.shortcut)
        add_inplace(gx, conv_backward(*b.shortcut, bn_backward(*b.shortcut_bn, g), true));
    else
        add_inplace(gx, g);
    return gx;
}

Tensor Model::forward_block(std::size_t index, const Tensor& input, Mode mode) {
    return block_forward(blocks_.at(index), input, mode);
}

Tensor Model::backward_block(std::size_t index, const Tensor& upstream) {
    return block_backward(blocks_.at(index), upstream);
}

Tensor Model::forward(const Tensor& input, Mode mode, Rng& rng) {
    if (input.rank() != 4 || input.dim(1) != 1 || input.dim(2) != arch_.input_h || input.dim(3) != arch_.input_w)
        throw ShapeError("model: input " + shape_str(input.shape()) + ", expected [N x 1 x " +
                         std::to_string(arch_.input_h) + " x " + std::to_string(arch_.input_w) + "]");
    const bool cache = mode == Mode::Train;
    const std::size_t n = input.dim(0);

    Tensor x = bn_forward(stem_bn_, conv_forward(stem_, input, cache), mode);
    if (cache) stem_pre_act_ = x;
    x = hardtanh(x);
    for (ResBlock& b : blocks_) x = block_forward(b, x, mode);

    pooled_input_shape_ = x.shape();
    Tensor p = bn_forward(head_bn_, avgpool_global(x), mode);
    p.reshape({n, arch_.feature_channels()});
    DropoutResult d = dropout(p, arch_.dropout_rate, rng, mode);
    if (cache) dropout_mask_ = std::move(d.mask);

    Tensor logits;
    if (head_.binary) {
        Tensor xs = sign(d.output);
        Tensor ws = sign(head_.weight);
        logits = linear_forward(xs, ws, head_.bias);
        if (cache) {
            head_.cached_signs = std::move(xs);
            head_.cached_weight_signs = std::move(ws);
        }
    } else {
        logits = linear_forward(d.output, head_.weight, head_.bias);
    }
    if (cache) head_.cached_input = std::move(d.output);
    have_cache_ = cache;
    return logits;
}

void Model::backward(const Tensor& grad_logits) {
    if (!have_cache_) throw DomainError("model: backward without a train-mode forward");
    LinearGrads lg;
    if (head_.binary) {
        lg = linear_backward(grad_logits, head_.cached_signs, head_.cached_weight_signs);
        add_inplace(head_.weight_grad, ste_backward(lg.weights, head_.weight));
        lg.input = ste_backward(lg.input, head_.cached_input);
    } else {
        lg = linear_backward(grad_logits, head_.cached_input, head_.weight);
        add_inplace(head_.weight_grad, lg.weights);
    }
    add_inplace(head_.bias_grad, lg.bias);

    Tensor g = dropout_backward(lg.input, dropout_mask_);
    g.reshape({g.dim(0), g.dim(1), 1, 1});
    g = avgpool_global_backward(bn_backward(head_bn_, g), pooled_input_shape_);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = block_backward(*it, g);
    g = bn_backward(stem_bn_, hardtanh_backward(g, stem_pre_act_));
    conv_backward(stem_, g, false);
}

void Model::zero_grad() {
    for (ConvLayer* c : conv_layers()) {
        c->weight_grad.fill(0.0);
        c->beta_grad = 0.0;
    }
    for (BatchNormLayer* b : batchnorm_layers()) {
        std::fill(b->gamma_grad.begin(), b->gamma_grad.end(), 0.0);
        std::fill(b->beta_grad.begin(), b->beta_grad.end(), 0.0);
    }
    head_.weight_grad.fill(0.0);
    head_.bias_grad.fill(0.0);
}

std::vector<ParamView> Model::parameters() {
    std::vector<ParamView> out;
    for (ConvLayer* c : conv_layers()) {
        out.push_back({c->name + ".weight", c->weight.data(), c->weight_grad.data(), c->binarized()});
        if (c->rotation)
            out.push_back({c->name + ".beta", {&c->rotation->beta, 1}, {&c->beta_grad, 1}, false});
    }
    for (BatchNormLayer* b : batchnorm_layers()) {
        out.push_back({b->name + ".gamma", b->state.gamma, b->gamma_grad, false});
        out.push_back({b->name + ".beta", b->state.beta, b->beta_grad, false});
    }
    out.push_back({head_.name + ".weight", head_.weight.data(), head_.weight_grad.data(), head_.binary});
    out.push_back({head_.name + ".bias", head_.bias.data(), head_.bias_grad.data(), false});
    return out;
}

std::vector<ConvLayer*> Model::conv_layers() {
    std::vector<ConvLayer*> out{&stem_};
    for (ResBlock& b : blocks_) {
        out.push_back(&b.conv1);
        out.push_back(&b.conv2);
        if (b.shortcut) out.push_back(&*b.shortcut);
    }
    return out;
}

std::vector<const ConvLayer*> Model::conv_layers() const {
    std::vector<const ConvLayer*> out;
    for (ConvLayer* c : const_cast<Model*>(this)->conv_layers()) out.push_back(c);
    return out;
}

std::vector<BatchNormLayer*> Model::batchnorm_layers() {
    std::vector<BatchNormLayer*> out{&stem_bn_};
    for (ResBlock& b : blocks_) {
        out.push_back(&b.bn1);
        out.push_back(&b.bn2);
        if (b.shortcut_bn) out.push_back(&*b.shortcut_bn);
    }
    out.push_back(&head_bn_);
    return out;
}

std::vector<const BatchNormLayer*> Model::batchnorm_layers() const {
    std::vector<const BatchNormLayer*> out;
    for (BatchNormLayer* b : const_cast<Model*>(this)->batchnorm_layers()) out.push_back(b);
    return out;
}

std::vector<ShapeTraceEntry> Model::shape_trace() const {
    std::vector<ShapeTraceEntry> t;
    std::size_t h = arch_.input_h, w = arch_.input_w;
    t.push_back({"input", {1, h, w}});
    t.push_back({"conv", {arch_.stem_channels, stem_.spec.out_h(h), stem_.spec.out_w(w)}});
    h = stem_.spec.out_h(h);
    w = stem_.spec.out_w(w);
    for (const ResBlock& b : blocks_) {
        const std::size_t h1 = b.conv1.spec.out_h(h), w1 = b.conv1.spec.out_w(w);
        h = b.conv2.spec.out_h(h1);
        w = b.conv2.spec.out_w(w1);
        t.push_back({b.spec.kind == BlockKind::A ? "R-Block A" : "R-Block B", {b.spec.channels_out, h, w}});
    }
    const std::size_t c = arch_.feature_channels();
    t.push_back({"pool", {c, 1, 1}});
    t.push_back({"BN", {c, 1, 1}});
    t.push_back({"linear", {arch_.num_classes, 1, 1}});
    return t;
}

void Model::clear_caches() {
    for (ConvLayer* c : conv_layers()) {
        c->cached_input = {};
        c->cached_signs = {};
        c->cached_effective = {};
        c->cached_weight_signs = {};
    }
    for (BatchNormLayer* b : batchnorm_layers()) b->cache = {};
    for (ResBlock& b : blocks_) {
        b.pre_act1 = {};
        b.sum = {};
    }
    head_.cached_input = {};
    head_.cached_signs = {};
    head_.cached_weight_signs = {};
    stem_pre_act_ = {};
    dropout_mask_ = {};
    have_cache_ = false;
}

}  // namespace rbamc
