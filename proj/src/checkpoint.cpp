#include "rbamc/checkpoint.hpp"

#include <cmath>

#include "rbamc/byteio.hpp"
#include "rbamc/errors.hpp"

namespace rbamc {

namespace {

constexpr char kMagic[] = "AMCW";

void put_bits(ByteWriter& w, const BitTensor& bits) {
    w.u64(bits.words().size());
    for (std::uint64_t word : bits.words()) w.u64(word);
}

std::vector<std::uint64_t> get_bits(ByteReader& r) {
    const std::uint64_t n = r.u64();
    if (n > r.remaining() / 8) r.fail("packed bit block longer than the file");
    std::vector<std::uint64_t> words(n);
    for (auto& word : words) word = r.u64();
    return words;
}

void put_tensor(ByteWriter& w, const Tensor& t) {
    w.u64(t.size());
    w.f64s(t.data());
}

void get_into(ByteReader& r, std::span<double> dst, const std::string& what) {
    const std::uint64_t n = r.u64();
    if (n != dst.size())
        r.fail(what + ": stored " + std::to_string(n) + " values, architecture needs " + std::to_string(dst.size()));
    for (double& v : dst) v = r.f64();
}

void expect_name(ByteReader& r, const std::string& expected) {
    const std::size_t at = r.offset();
    const std::string name = r.str();
    if (name != expected)
        throw FormatError("layer record '" + name + "' where '" + expected + "' was expected (at byte offset " +
                          std::to_string(at) + ")");
}

void check_bits(ByteReader& r, const Tensor& signs, const std::string& layer) {
    const std::size_t at = r.offset();
    const std::vector<std::uint64_t> words = get_bits(r);
    if (words != pack(signs).words())
        throw FormatError(layer + ": packed sign bits disagree with the stored weights (at byte offset " +
                          std::to_string(at) + ")");
}

void put_arch(ByteWriter& w, const ArchSpec& a) {
    w.u32(static_cast<std::uint32_t>(a.input_h));
    w.u32(static_cast<std::uint32_t>(a.input_w));
    w.u32(static_cast<std::uint32_t>(a.stem_channels));
    w.u32(static_cast<std::uint32_t>(a.num_classes));
    w.f64(a.dropout_rate);
    w.u32(static_cast<std::uint32_t>(a.blocks.size()));
    for (const BlockSpec& b : a.blocks) {
        w.u8(static_cast<std::uint8_t>(b.kind));
        w.u32(static_cast<std::uint32_t>(b.channels_in));
        w.u32(static_cast<std::uint32_t>(b.channels_out));
        w.u8(b.downsample ? 1 : 0);
    }
}

ArchSpec get_arch(ByteReader& r) {
    ArchSpec a;
    a.input_h = r.u32();
    a.input_w = r.u32();
    a.stem_channels = r.u32();
    a.num_classes = r.u32();
    a.dropout_rate = r.f64();
    const std::uint32_t blocks = r.u32();
    if (blocks > 4096) r.fail("implausible block count " + std::to_string(blocks));
    for (std::uint32_t i = 0; i < blocks; ++i) {
        BlockSpec b;
        const std::uint8_t kind = r.u8();
        if (kind > 1) r.fail("unknown block kind " + std::to_string(kind));
        b.kind = static_cast<BlockKind>(kind);
        b.channels_in = r.u32();
        b.channels_out = r.u32();
        b.downsample = r.u8() != 0;
        a.blocks.push_back(b);
    }
    try {
        a.validate();
    } catch (const std::exception& e) {
        r.fail(std::string("invalid architecture: ") + e.what());
    }
    return a;
}

void put_spec(ByteWriter& w, const ConvSpec& s) {
    for (std::size_t v : {s.c_in, s.c_out, s.k_h, s.k_w, s.stride_h, s.stride_w, s.pad_h, s.pad_w})
        w.u32(static_cast<std::uint32_t>(v));
    w.u8(s.has_bias ? 1 : 0);
}

ConvSpec get_spec(ByteReader& r) {
    ConvSpec s;
    for (std::size_t* v : {&s.c_in, &s.c_out, &s.k_h, &s.k_w, &s.stride_h, &s.stride_w, &s.pad_h, &s.pad_w}) *v = r.u32();
    s.has_bias = r.u8() != 0;
    return s;
}

}  // namespace

// Layout (little-endian), documented in docs/formats.md:
//   "AMCW" | u32 version | u8 variant | architecture | conv records | BN records |
//   head record | u32 epochs | u64 seed | u64 log digest | u64 FNV-1a of all preceding bytes
std::vector<std::uint8_t> encode_checkpoint(const Model& model, const CheckpointMeta& meta) {
    ByteWriter w;
    w.bytes(std::string_view(kMagic, 4));
    w.u32(kCheckpointVersion);
    w.u8(static_cast<std::uint8_t>(model.variant()));
    put_arch(w, model.arch());

    const auto convs = model.conv_layers();
    w.u32(static_cast<std::uint32_t>(convs.size()));
    for (const ConvLayer* c : convs) {
        w.str(c->name);
        w.u8(static_cast<std::uint8_t>(c->kind));
        put_spec(w, c->spec);
        put_tensor(w, c->weight);
        if (c->binarized()) put_bits(w, pack(c->binary_weights()));
        if (c->rotation) {
            const RotationState& rs = *c->rotation;
            w.u32(static_cast<std::uint32_t>(rs.n1));
            w.u32(static_cast<std::uint32_t>(rs.n2));
            w.f64s(rs.R1.data());
            w.f64s(rs.R2.data());
            w.f64(rs.beta);
            w.f64(rs.eta);
        }
    }

    const auto bns = model.batchnorm_layers();
    w.u32(static_cast<std::uint32_t>(bns.size()));
    for (const BatchNormLayer* b : bns) {
        w.str(b->name);
        w.u32(static_cast<std::uint32_t>(b->state.channels()));
        w.f64(b->state.eps);
        w.f64(b->state.momentum);
        w.f64s(b->state.gamma);
        w.f64s(b->state.beta);
        w.f64s(b->state.running_mean);
        w.f64s(b->state.running_var);
    }

    const LinearLayer& head = model.head();
    w.str(head.name);
    w.u8(head.binary ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(head.weight.dim(0)));
    w.u32(static_cast<std::uint32_t>(head.weight.dim(1)));
    put_tensor(w, head.weight);
    put_tensor(w, head.bias);
    if (head.binary) put_bits(w, pack(sign(head.weight)));

    w.u32(meta.epochs_trained);
    w.u64(meta.seed);
    w.u64(meta.log_digest);
    w.u64(fnv1a(w.buffer()));
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw TruncationError("truncated: file shorter than the 4-byte magic");
    ByteReader r(bytes);
    if (r.bytes(4) != std::string_view(kMagic, 4))
        throw FormatError("bad magic: expected \"AMCW\" checkpoint file (at byte offset 0)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion) + " (at byte offset 4)");
    if (bytes.size() < 16) throw TruncationError("truncated: checkpoint has no checksum trailer");
    const std::span<const std::uint8_t> body = bytes.first(bytes.size() - 8);
    ByteReader trailer(bytes.last(8));
    if (trailer.u64() != fnv1a(body))
        throw FormatError("checksum mismatch (trailer at byte offset " + std::to_string(body.size()) + ")");
    r = ByteReader(body);
    r.bytes(8);

    const std::uint8_t tag = r.u8();
    if (tag > 3) r.fail("unknown variant tag " + std::to_string(tag));
    const auto variant = static_cast<ModelVariant>(tag);
    const ArchSpec arch = get_arch(r);

    Checkpoint ck{Model(variant, arch, 0), {}};
    Model& m = ck.model;

    const auto convs = m.conv_layers();
    if (r.u32() != convs.size()) r.fail("conv record count does not match the architecture");
    for (ConvLayer* c : convs) {
        expect_name(r, c->name);
        const std::uint8_t kind = r.u8();
        if (kind != static_cast<std::uint8_t>(c->kind)) r.fail(c->name + ": layer kind mismatch");
        if (get_spec(r) != c->spec) r.fail(c->name + ": convolution geometry mismatch");
        get_into(r, c->weight.data(), c->name);
        if (c->rotation) {
            // Rotation follows the bits on disk; check the bits once it is loaded.
            const std::vector<std::uint64_t> words = get_bits(r);
            const std::size_t at = r.offset();
            RotationState& rs = *c->rotation;
            if (r.u32() != rs.n1 || r.u32() != rs.n2)
                throw FormatError(c->name + ": rotation split mismatch (at byte offset " + std::to_string(at) + ")");
            for (double& v : rs.R1.data()) v = r.f64();
            for (double& v : rs.R2.data()) v = r.f64();
            rs.beta = r.f64();
            rs.eta = r.f64();
            const double err = std::max(orthogonality_error(rs.R1), orthogonality_error(rs.R2));
            if (!(err <= kCheckpointOrthoTol))
                throw FormatError(c->name + ": rotation is not orthogonal (error " + std::to_string(err) +
                                  ") (at byte offset " + std::to_string(at) + ")");
            if (words != pack(c->binary_weights()).words())
                throw FormatError(c->name + ": packed sign bits disagree with the stored weights");
        } else if (c->binarized()) {
            check_bits(r, c->binary_weights(), c->name);
        }
    }

    const auto bns = m.batchnorm_layers();
    if (r.u32() != bns.size()) r.fail("batch-norm record count does not match the architecture");
    for (BatchNormLayer* b : bns) {
        expect_name(r, b->name);
        if (r.u32() != b->state.channels()) r.fail(b->name + ": channel count mismatch");
        b->state.eps = r.f64();
        b->state.momentum = r.f64();
        for (auto* v : {&b->state.gamma, &b->state.beta, &b->state.running_mean, &b->state.running_var})
            for (double& x : *v) x = r.f64();
        if (!(b->state.eps > 0.0)) r.fail(b->name + ": non-positive epsilon");
    }

    LinearLayer& head = m.head();
    expect_name(r, head.name);
    if ((r.u8() != 0) != head.binary) r.fail("head: binary flag mismatch");
    if (r.u32() != head.weight.dim(0) || r.u32() != head.weight.dim(1)) r.fail("head: shape mismatch");
    get_into(r, head.weight.data(), head.name + ".weight");
    get_into(r, head.bias.data(), head.name + ".bias");
    if (head.binary) check_bits(r, sign(head.weight), head.name);

    ck.meta.epochs_trained = r.u32();
    ck.meta.seed = r.u64();
    ck.meta.log_digest = r.u64();
    if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " unexpected bytes before the checksum");
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta) {
    write_file_atomic(path, encode_checkpoint(model, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

Model convert_model(const Model& source, ModelVariant target) {
    if (source.variant() != ModelVariant::Real)
        throw DomainError("convert: source checkpoint is '" + to_string(source.variant()) +
                          "'; only real checkpoints can be converted");
    if (target != ModelVariant::BNN && target != ModelVariant::RBNN)
        throw DomainError("convert: target must be bnn or rbnn");
    Model out(target, source.arch(), 0);
    const auto src = source.conv_layers();
    const auto dst = out.conv_layers();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i]->weight = src[i]->weight;
        if (dst[i]->binarized()) clip_latent_inplace(dst[i]->weight);
        if (dst[i]->rotation) {
            RotationState& rs = *dst[i]->rotation;
            rs = learn_rotation(fold(dst[i]->weight.data(), rs.n1, rs.n2), rs).state;
        }
    }
    const auto sb = source.batchnorm_layers();
    const auto db = out.batchnorm_layers();
    for (std::size_t i = 0; i < sb.size(); ++i) db[i]->state = sb[i]->state;
    out.head().weight = source.head().weight;
    out.head().bias = source.head().bias;
    if (out.head().binary) clip_latent_inplace(out.head().weight);
    return out;
}

}  // namespace rbamc
