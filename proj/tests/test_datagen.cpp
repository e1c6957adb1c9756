#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>

#include "rbamc/byteio.hpp"
#include "rbamc/datagen.hpp"
#include "rbamc/errors.hpp"

using namespace rbamc;

namespace {

double mean_energy(const std::vector<std::complex<double>>& pts) {
    double e = 0.0;
    for (const auto& p : pts) e += std::norm(p);
    return e / static_cast<double>(pts.size());
}

double power(const std::vector<std::complex<double>>& v) { return mean_energy(v); }

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("rbamc_test_" + name);
}

GenConfig small_config() {
    GenConfig cfg;
    cfg.classes = {ModClass::BPSK, ModClass::QPSK, ModClass::QAM16};
    cfg.snr_grid = {0, 10};
    cfg.frames_per_cell = 4;
    cfg.seed = 42;
    return cfg;
}

}  // namespace

TEST_CASE("constellations") {
    for (ModClass m : all_modclasses()) {
        const auto pts = constellation(m);
        CHECK(std::abs(mean_energy(pts) - 1.0) < 1e-12);
        CHECK(parse_modclass(to_string(m)) == m);
    }
    CHECK_THROWS_AS(parse_modclass("GMSK"), DomainError);

    const auto bpsk = constellation(ModClass::BPSK);
    REQUIRE(bpsk.size() == 2);
    CHECK(std::abs(bpsk[0] - std::complex<double>(1, 0)) + std::abs(bpsk[1] - std::complex<double>(-1, 0)) < 1e-15);

    const auto qpsk = constellation(ModClass::QPSK);
    REQUIRE(qpsk.size() == 4);
    for (const auto& p : qpsk) {
        CHECK(std::abs(std::abs(p) - 1.0) < 1e-15);
        // every point sits at π/4 + kπ/2
        const double k = (std::arg(p) - std::numbers::pi / 4) / (std::numbers::pi / 2);
        CHECK(std::abs(k - std::round(k)) < 1e-12);
    }

    const auto qam = constellation(ModClass::QAM16);
    CHECK(qam.size() == 16);
    CHECK(constellation(ModClass::PSK8).size() == 8);
    CHECK(constellation(ModClass::ASK4).size() == 4);
    CHECK(constellation(ModClass::OOK).size() == 2);

    // Gray mapping: neighbouring PSK points differ in one bit
    const auto psk8 = constellation(ModClass::PSK8);
    for (std::size_t a = 0; a < 8; ++a)
        for (std::size_t b = 0; b < 8; ++b) {
            const double d = std::abs(psk8[a] - psk8[b]);
            if (a != b && d < 0.8) CHECK(std::popcount(a ^ b) == 1);
        }
}

TEST_CASE("root-raised-cosine taps") {
    const std::vector<double> t = rrc_taps(0.35, 8, 6);
    CHECK(t.size() == 2 * 6 * 8 + 1);
    double e = 0.0;
    for (double v : t) e += v * v;
    CHECK(e == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < t.size(); ++i) {
        CHECK(std::isfinite(t[i]));
        CHECK(t[i] == doctest::Approx(t[t.size() - 1 - i]).epsilon(1e-12));
    }
    // 1/(4β) falls on a sample when β = 0.25 and sps = 8
    for (double v : rrc_taps(0.25, 8, 4)) CHECK(std::isfinite(v));
}

TEST_CASE("frame synthesis") {
    GenConfig cfg;
    SUBCASE("noise-free frames have unit power") {
        for (ModClass m : all_modclasses()) {
            Rng rng(frame_seed(1, static_cast<std::size_t>(m), 0, 0));
            const FrameParts p = synthesize(m, kNoNoise, rng, cfg);
            CHECK(p.clean.size() == kFrameSamples);
            CHECK(std::abs(power(p.clean) - 1.0) < 1e-9);
            for (const auto& n : p.noise) CHECK(n == std::complex<double>(0, 0));
            Rng again(frame_seed(1, static_cast<std::size_t>(m), 0, 0));
            const Frame f = gen_frame(m, kNoNoise, again, cfg);
            CHECK(f.snr_db == kNoNoiseLabel);
            double pw = 0.0;
            for (std::size_t i = 0; i < kFrameSamples; ++i)
                pw += double(f.iq[i]) * f.iq[i] + double(f.iq[kFrameSamples + i]) * f.iq[kFrameSamples + i];
            CHECK(std::abs(pw / kFrameSamples - 1.0) < 1e-6);
        }
    }
    SUBCASE("measured SNR at 10 dB over 1e4 frames") {
        double ratio_db = 0.0;
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            Rng rng(frame_seed(7, 3, 10, static_cast<std::size_t>(i)));
            const FrameParts p = synthesize(ModClass::QPSK, 10.0, rng, cfg);
            ratio_db += 10.0 * std::log10(power(p.clean) / power(p.noise));
        }
        CHECK(std::abs(ratio_db / n - 10.0) <= 0.3);
    }
    SUBCASE("frames are reproducible from their seed") {
        Rng a(99), b(99), c(100);
        const Frame fa = gen_frame(ModClass::QAM16, 4.0, a, cfg, 5);
        const Frame fb = gen_frame(ModClass::QAM16, 4.0, b, cfg, 5);
        const Frame fc = gen_frame(ModClass::QAM16, 4.0, c, cfg, 5);
        CHECK(fa == fb);
        CHECK_FALSE(fa == fc);
        CHECK(fa.label == 5);
        CHECK(fa.snr_db == 4);
        CHECK(fa.iq.size() == 2 * kFrameSamples);
        for (float v : fa.iq) CHECK(std::isfinite(v));
    }
    SUBCASE("stream seeds separate every index") {
        CHECK(frame_seed(1, 0, 0, 0) != frame_seed(1, 0, 0, 1));
        CHECK(frame_seed(1, 0, 0, 0) != frame_seed(1, 1, 0, 0));
        CHECK(frame_seed(1, 0, 0, 0) != frame_seed(1, 0, 2, 0));
        CHECK(frame_seed(1, 0, 0, 0) != frame_seed(2, 0, 0, 0));
    }
}

TEST_CASE("configuration") {
    CHECK(GenConfig::default_snr_grid().size() == 26);
    CHECK(GenConfig::default_snr_grid().front() == -20);
    CHECK(GenConfig::default_snr_grid().back() == 30);
    CHECK(GenConfig::snr_grid_range(6, 14, 4) == std::vector<int>{6, 10, 14});
    GenConfig cfg;
    cfg.validate();
    cfg.frames_per_cell = 0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg.frames_per_cell = 1;
    cfg.rolloff = 0.0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg.rolloff = 0.35;
    cfg.snr_grid.clear();
    CHECK_THROWS_AS(cfg.validate(), DomainError);
}

TEST_CASE("dataset generation and file format") {
    const GenConfig cfg = small_config();
    const Dataset ds = generate(cfg);
    CHECK(ds.frames.size() == 3 * 2 * 4);
    CHECK(ds.class_names == std::vector<std::string>{"BPSK", "QPSK", "16QAM"});
    CHECK(ds.frames.front().label == 0);
    CHECK(ds.frames.back().label == 2);
    CHECK(ds.frames[4].snr_db == 10);

    SUBCASE("encoding round trip is bit-identical") {
        const std::vector<std::uint8_t> bytes = encode_dataset(ds);
        CHECK(bytes.size() > 24 * 2 * kFrameSamples * 4);
        const Dataset back = decode_dataset(bytes);
        CHECK(back == ds);
        CHECK(encode_dataset(back) == bytes);
    }
    SUBCASE("file round trip and repeatability") {
        const auto p1 = temp_path("ds1.amcd"), p2 = temp_path("ds2.amcd");
        const DatasetSummary s = gen_dataset(cfg, p1);
        gen_dataset(cfg, p2);
        CHECK(s.frames == 24);
        CHECK(s.classes == 3);
        CHECK(s.snrs == 2);
        CHECK(read_file(p1) == read_file(p2));
        CHECK(s.bytes == read_file(p1).size());
        CHECK(load_dataset(p1) == ds);
        std::filesystem::remove(p1);
        std::filesystem::remove(p2);
    }
    SUBCASE("corrupted magic names the expected magic") {
        std::vector<std::uint8_t> bytes = encode_dataset(ds);
        bytes[0] = 'X';
        try {
            decode_dataset(bytes);
            FAIL("expected a format error");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("AMCD") != std::string::npos);
        }
    }
    SUBCASE("truncated file") {
        std::vector<std::uint8_t> bytes = encode_dataset(ds);
        bytes.resize(bytes.size() - 100);
        CHECK_THROWS_AS(decode_dataset(bytes), TruncationError);
        bytes.resize(10);
        CHECK_THROWS_AS(decode_dataset(bytes), TruncationError);
    }
    SUBCASE("unsupported version and trailing bytes") {
        std::vector<std::uint8_t> bytes = encode_dataset(ds);
        bytes[4] = 9;
        CHECK_THROWS_AS(decode_dataset(bytes), FormatError);
        bytes = encode_dataset(ds);
        bytes.push_back(0);
        CHECK_THROWS_AS(decode_dataset(bytes), FormatError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_dataset(temp_path("does_not_exist.amcd")), IoError); }
}

TEST_CASE("stratified split") {
    GenConfig cfg = small_config();
    cfg.frames_per_cell = 100;
    cfg.snr_grid = {0};
    cfg.classes = {ModClass::BPSK, ModClass::QPSK};
    const Dataset ds = generate(cfg);
    const SplitIndices s = split(ds, 0.75, 3);
    CHECK(s.train.size() == 150);
    CHECK(s.test.size() == 50);
    std::map<int, int> per_class;
    for (std::size_t i : s.train) ++per_class[ds.frames[i].label];
    CHECK(per_class[0] == 75);
    CHECK(per_class[1] == 75);
    std::vector<bool> seen(ds.frames.size(), false);
    for (std::size_t i : s.train) seen[i] = true;
    for (std::size_t i : s.test) {
        CHECK_FALSE(seen[i]);
        seen[i] = true;
    }
    for (bool b : seen) CHECK(b);

    const SplitIndices same = split(ds, 0.75, 3), other = split(ds, 0.75, 4);
    CHECK(same.train == s.train);
    CHECK_FALSE(other.train == s.train);
    CHECK_THROWS_AS(split(ds, 1.5, 0), DomainError);
}
