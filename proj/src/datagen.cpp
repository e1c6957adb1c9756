#include "rbamc/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "rbamc/byteio.hpp"
#include "rbamc/errors.hpp"

namespace rbamc {

namespace {

constexpr std::size_t kRrcSpan = 6;
constexpr char kDatasetMagic[] = "AMCD";

unsigned gray(unsigned i) { return i ^ (i >> 1); }

// Gray-coded PAM levels −(M−1)..(M−1) step 2, indexed by symbol value.
std::vector<double> gray_pam(unsigned m) {
    std::vector<double> levels(m);
    for (unsigned p = 0; p < m; ++p) levels[gray(p)] = 2.0 * p - (m - 1.0);
    return levels;
}

std::vector<std::complex<double>> gray_psk(unsigned m, double offset) {
    std::vector<std::complex<double>> pts(m);
    for (unsigned p = 0; p < m; ++p)
        pts[gray(p)] = std::polar(1.0, offset + 2.0 * std::numbers::pi * p / static_cast<double>(m));
    return pts;
}

void normalize_energy(std::vector<std::complex<double>>& pts) {
    double e = 0.0;
    for (const auto& p : pts) e += std::norm(p);
    const double scale = 1.0 / std::sqrt(e / static_cast<double>(pts.size()));
    for (auto& p : pts) p *= scale;
}

}  // namespace

std::string to_string(ModClass m) {
    switch (m) {
        case ModClass::OOK: return "OOK";
        case ModClass::ASK4: return "4ASK";
        case ModClass::BPSK: return "BPSK";
        case ModClass::QPSK: return "QPSK";
        case ModClass::PSK8: return "8PSK";
        case ModClass::QAM16: return "16QAM";
    }
    return "?";
}

ModClass parse_modclass(const std::string& name) {
    for (ModClass m : all_modclasses())
        if (to_string(m) == name) return m;
    throw DomainError("unsupported modulation '" + name + "' (supported: OOK 4ASK BPSK QPSK 8PSK 16QAM)");
}

std::vector<ModClass> all_modclasses() {
    return {ModClass::OOK, ModClass::ASK4, ModClass::BPSK, ModClass::QPSK, ModClass::PSK8, ModClass::QAM16};
}

std::vector<std::complex<double>> constellation(ModClass m) {
    std::vector<std::complex<double>> pts;
    switch (m) {
        case ModClass::OOK: pts = {{0.0, 0.0}, {1.0, 0.0}}; break;
        case ModClass::ASK4:
            for (double l : gray_pam(4)) pts.emplace_back(l, 0.0);
            break;
        case ModClass::BPSK: pts = {{1.0, 0.0}, {-1.0, 0.0}}; break;
        case ModClass::QPSK: pts = gray_psk(4, std::numbers::pi / 4.0); break;
        case ModClass::PSK8: pts = gray_psk(8, 0.0); break;
        case ModClass::QAM16: {
            const auto pam = gray_pam(4);
            for (unsigned s = 0; s < 16; ++s) pts.emplace_back(pam[s >> 2], pam[s & 3]);
            break;
        }
        default: throw DomainError("constellation: unsupported class");
    }
    normalize_energy(pts);
    return pts;
}

std::vector<int> GenConfig::snr_grid_range(int lo, int hi, int step) {
    if (step <= 0) throw DomainError("snr step must be positive");
    if (hi < lo) throw DomainError("snr max below snr min");
    std::vector<int> g;
    for (int s = lo; s <= hi; s += step) g.push_back(s);
    return g;
}

void GenConfig::validate() const {
    if (classes.empty()) throw DomainError("at least one modulation class is required");
    if (snr_grid.empty()) throw DomainError("snr grid is empty");
    if (frames_per_cell == 0) throw DomainError("frames per (class, snr) must be at least 1");
    if (samples_per_symbol == 0) throw DomainError("samples per symbol must be positive");
    if (!(rolloff > 0.0 && rolloff <= 1.0)) throw DomainError("roll-off must lie in (0, 1]");
    if (impairments.max_phase < 0.0 || impairments.max_cfo < 0.0) throw DomainError("negative impairment range");
    for (int s : snr_grid)
        if (s < -32768 || s > 32766) throw DomainError("snr out of range");
}

std::vector<double> rrc_taps(double beta, std::size_t sps, std::size_t span) {
    const std::size_t len = 2 * span * sps + 1;
    std::vector<double> h(len);
    const double pi = std::numbers::pi;
    for (std::size_t i = 0; i < len; ++i) {
        const double t = (static_cast<double>(i) - static_cast<double>(span * sps)) / static_cast<double>(sps);
        double v;
        if (t == 0.0) {
            v = 1.0 - beta + 4.0 * beta / pi;
        } else if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-12) {
            v = beta / std::sqrt(2.0) *
                ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * beta)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * beta)));
        } else {
            v = (std::sin(pi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(pi * t * (1.0 + beta))) /
                (pi * t * (1.0 - (4.0 * beta * t) * (4.0 * beta * t)));
        }
        h[i] = v;
    }
    double e = 0.0;
    for (double v : h) e += v * v;
    for (double& v : h) v /= std::sqrt(e);
    return h;
}

FrameParts synthesize(ModClass m, double snr_db, Rng& rng, const GenConfig& cfg) {
    const std::size_t sps = cfg.samples_per_symbol;
    const auto pts = constellation(m);
    const auto taps = rrc_taps(cfg.rolloff, sps, kRrcSpan);
    const std::size_t len = taps.size();
    const std::size_t timing = static_cast<std::size_t>(rng.below(sps));
    const std::size_t start = len + timing;
    const std::size_t num_sym = (start + kFrameSamples) / sps + 2;

    std::vector<std::complex<double>> symbols(num_sym);
    for (auto& s : symbols) s = pts[rng.below(pts.size())];
    const double phase = rng.uniform() * cfg.impairments.max_phase;
    const double cfo = rng.uniform(-cfg.impairments.max_cfo, cfg.impairments.max_cfo);

    FrameParts f;
    f.clean.resize(kFrameSamples);
    for (std::size_t i = 0; i < kFrameSamples; ++i) {
        const std::size_t n = start + i;
        std::complex<double> acc = 0.0;
        // Symbol k sits at sample k·sps; tap index n − k·sps must lie in [0, len).
        const std::size_t k_hi = n / sps;
        const std::size_t k_lo = n + 1 > len ? (n + 1 - len + sps - 1) / sps : 0;
        for (std::size_t k = k_lo; k <= k_hi && k < num_sym; ++k) acc += symbols[k] * taps[n - k * sps];
        f.clean[i] = acc;
    }
    double power = 0.0;
    for (const auto& v : f.clean) power += std::norm(v);
    power /= static_cast<double>(kFrameSamples);
    const double scale = power > 0.0 ? 1.0 / std::sqrt(power) : 0.0;
    for (std::size_t i = 0; i < kFrameSamples; ++i) {
        const double angle = phase + 2.0 * std::numbers::pi * cfo * static_cast<double>(i);
        f.clean[i] *= scale * std::polar(1.0, angle);
    }

    f.noise.assign(kFrameSamples, {0.0, 0.0});
    if (std::isfinite(snr_db)) {
        const double sigma = std::sqrt(std::pow(10.0, -snr_db / 10.0) / 2.0);
        for (auto& v : f.noise) {
            const double re = rng.normal();
            const double im = rng.normal();
            v = {sigma * re, sigma * im};
        }
    }
    return f;
}

Frame gen_frame(ModClass m, double snr_db, Rng& rng, const GenConfig& cfg, std::uint16_t label) {
    const FrameParts p = synthesize(m, snr_db, rng, cfg);
    Frame f;
    f.label = label;
    f.snr_db = std::isfinite(snr_db) ? static_cast<std::int16_t>(std::lround(snr_db)) : kNoNoiseLabel;
    f.iq.resize(2 * kFrameSamples);
    for (std::size_t i = 0; i < kFrameSamples; ++i) {
        const auto v = p.clean[i] + p.noise[i];
        f.iq[i] = static_cast<float>(v.real());
        f.iq[kFrameSamples + i] = static_cast<float>(v.imag());
    }
    return f;
}

std::uint64_t frame_seed(std::uint64_t master, std::size_t class_index, int snr_db, std::size_t frame_index) {
    return derive_seed({master, class_index, static_cast<std::uint64_t>(static_cast<std::int64_t>(snr_db)), frame_index});
}

Dataset generate(const GenConfig& cfg) {
    cfg.validate();
    Dataset ds;
    for (ModClass m : cfg.classes) ds.class_names.push_back(to_string(m));
    ds.snr_grid = cfg.snr_grid;
    ds.frames.reserve(cfg.classes.size() * cfg.snr_grid.size() * cfg.frames_per_cell);
    for (std::size_t c = 0; c < cfg.classes.size(); ++c)
        for (int snr : cfg.snr_grid)
            for (std::size_t i = 0; i < cfg.frames_per_cell; ++i) {
                Rng rng(frame_seed(cfg.seed, c, snr, i));
                ds.frames.push_back(gen_frame(cfg.classes[c], snr, rng, cfg, static_cast<std::uint16_t>(c)));
            }
    return ds;
}

// Layout (little-endian):
//   "AMCD" | u32 version | u32 n_classes, {u16 len, bytes}* | u32 n_snr, i16* |
//   u64 frame_count | u32 samples_per_frame | frame records
// Frame record: u16 label | i16 snr | samples_per_frame × (f32 I, f32 Q).
std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
    ByteWriter w;
    w.bytes(std::string_view(kDatasetMagic, 4));
    w.u32(kDatasetVersion);
    w.u32(static_cast<std::uint32_t>(ds.class_names.size()));
    for (const auto& n : ds.class_names) w.str(n);
    w.u32(static_cast<std::uint32_t>(ds.snr_grid.size()));
    for (int s : ds.snr_grid) w.i16(static_cast<std::int16_t>(s));
    const std::size_t count_offset = w.size();
    w.u64(0);
    w.u32(static_cast<std::uint32_t>(kFrameSamples));
    std::uint64_t count = 0;
    for (const Frame& f : ds.frames) {
        if (f.iq.size() != 2 * kFrameSamples) throw ShapeError("frame must hold 2 x 1024 samples");
        if (f.label >= ds.class_names.size()) throw DomainError("frame label outside the class table");
        w.u16(f.label);
        w.i16(f.snr_db);
        for (std::size_t i = 0; i < kFrameSamples; ++i) {
            w.f32(f.iq[i]);
            w.f32(f.iq[kFrameSamples + i]);
        }
        ++count;
    }
    w.patch_u64(count_offset, count);
    return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (bytes.size() < 4) throw TruncationError("truncated: file shorter than the 4-byte magic");
    const std::string magic = r.bytes(4);
    if (magic != std::string_view(kDatasetMagic, 4))
        throw FormatError("bad magic: expected \"AMCD\" dataset file (at byte offset 0)");
    const std::uint32_t version = r.u32();
    if (version != kDatasetVersion)
        throw FormatError("unsupported dataset version " + std::to_string(version) + ", expected " +
                          std::to_string(kDatasetVersion) + " (at byte offset 4)");
    Dataset ds;
    const std::uint32_t n_classes = r.u32();
    if (n_classes == 0 || n_classes > 0xffff) r.fail("bad class count " + std::to_string(n_classes));
    for (std::uint32_t i = 0; i < n_classes; ++i) ds.class_names.push_back(r.str());
    const std::uint32_t n_snr = r.u32();
    if (n_snr > 0xffff) r.fail("bad snr count " + std::to_string(n_snr));
    for (std::uint32_t i = 0; i < n_snr; ++i) ds.snr_grid.push_back(r.i16());
    const std::uint64_t count = r.u64();
    const std::uint32_t samples = r.u32();
    if (samples != kFrameSamples) r.fail("unsupported frame length " + std::to_string(samples));
    const std::uint64_t record = 4 + 8ULL * samples;
    if (count > r.remaining() / record + 1)
        throw TruncationError("truncated: header declares " + std::to_string(count) + " frames but only " +
                              std::to_string(r.remaining()) + " bytes follow at offset " + std::to_string(r.offset()));
    ds.frames.resize(count);
    for (Frame& f : ds.frames) {
        const std::size_t at = r.offset();
        f.label = r.u16();
        if (f.label >= n_classes)
            throw FormatError("frame label " + std::to_string(f.label) + " outside class table (at byte offset " +
                              std::to_string(at) + ")");
        f.snr_db = r.i16();
        f.iq.resize(2 * kFrameSamples);
        for (std::size_t i = 0; i < kFrameSamples; ++i) {
            f.iq[i] = r.f32();
            f.iq[kFrameSamples + i] = r.f32();
        }
    }
    if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes after the last frame");
    return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
    const auto bytes = encode_dataset(ds);
    write_file_atomic(path, bytes);
}

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

DatasetSummary gen_dataset(const GenConfig& cfg, const std::filesystem::path& path) {
    const Dataset ds = generate(cfg);
    const auto bytes = encode_dataset(ds);
    write_file_atomic(path, bytes);
    return {ds.frames.size(), bytes.size(), ds.class_names.size(), ds.snr_grid.size()};
}

SplitIndices split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw DomainError("train fraction must lie in [0, 1]");
    std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < ds.frames.size(); ++i) cells[{ds.frames[i].label, ds.frames[i].snr_db}].push_back(i);
    SplitIndices out;
    for (auto& [key, idx] : cells) {
        Rng rng(derive_seed({seed, static_cast<std::uint64_t>(key.first),
                             static_cast<std::uint64_t>(static_cast<std::int64_t>(key.second))}));
        for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
        const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
        out.train.insert(out.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        out.test.insert(out.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

}  // namespace rbamc
