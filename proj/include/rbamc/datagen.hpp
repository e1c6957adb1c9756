#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rbamc/rng.hpp"

namespace rbamc {

enum class ModClass : std::uint8_t { OOK = 0, ASK4 = 1, BPSK = 2, QPSK = 3, PSK8 = 4, QAM16 = 5 };

std::string to_string(ModClass m);
ModClass parse_modclass(const std::string& name);
std::vector<ModClass> all_modclasses();

/// Unit-average-energy constellation, indexed by symbol value (Gray-mapped
/// for ASK, PSK and QAM).
std::vector<std::complex<double>> constellation(ModClass m);

inline constexpr std::size_t kFrameSamples = 1024;
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();
inline constexpr std::int16_t kNoNoiseLabel = std::numeric_limits<std::int16_t>::max();

/// One I/Q frame: iq holds the in-phase row followed by the quadrature row.
struct Frame {
    std::vector<float> iq;  // 2 x kFrameSamples
    std::uint16_t label = 0;
    std::int16_t snr_db = 0;

    friend bool operator==(const Frame&, const Frame&) = default;
};

struct ImpairmentConfig {
    double max_phase = 6.283185307179586;  // phase offset ~ U[0, max_phase)
    double max_cfo = 1e-4;                 // CFO ~ U[−max_cfo, max_cfo], cycles/sample
};

struct GenConfig {
    std::vector<ModClass> classes{ModClass::OOK, ModClass::ASK4, ModClass::BPSK,
                                  ModClass::QPSK, ModClass::PSK8, ModClass::QAM16};
    std::vector<int> snr_grid = default_snr_grid();
    std::size_t frames_per_cell = 1;
    std::size_t samples_per_symbol = 8;
    double rolloff = 0.35;
    ImpairmentConfig impairments;
    std::uint64_t seed = 0;

    static std::vector<int> snr_grid_range(int lo, int hi, int step);
    static std::vector<int> default_snr_grid() { return snr_grid_range(-20, 30, 2); }
    void validate() const;
};

/// Clean and noise components of a frame before quantization.
struct FrameParts {
    std::vector<std::complex<double>> clean;
    std::vector<std::complex<double>> noise;
};

/// Root-raised-cosine taps spanning ±span symbols, unit energy.
std::vector<double> rrc_taps(double rolloff, std::size_t samples_per_symbol, std::size_t span);

/// Random symbols → upsample → RRC → unit power → phase/CFO → AWGN at snr_db
/// (kNoNoise disables noise).
FrameParts synthesize(ModClass m, double snr_db, Rng& rng, const GenConfig& cfg);

/// Frame from `synthesize`, quantized to float. `label` is the class index
/// recorded in the frame.
Frame gen_frame(ModClass m, double snr_db, Rng& rng, const GenConfig& cfg, std::uint16_t label = 0);

/// Per-frame stream seed derived from (master seed, class, snr, index).
std::uint64_t frame_seed(std::uint64_t master, std::size_t class_index, int snr_db, std::size_t frame_index);

struct Dataset {
    std::vector<std::string> class_names;
    std::vector<int> snr_grid;
    std::vector<Frame> frames;

    std::size_t num_classes() const { return class_names.size(); }
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// All frames of the config, ordered by class, then snr, then frame index.
Dataset generate(const GenConfig& cfg);

struct DatasetSummary {
    std::size_t frames = 0;
    std::size_t bytes = 0;
    std::size_t classes = 0;
    std::size_t snrs = 0;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
DatasetSummary gen_dataset(const GenConfig& cfg, const std::filesystem::path& path);

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Seeded permutation inside every (class, snr) cell; round(fraction·cell)
/// frames of each cell go to train.
SplitIndices split(const Dataset& ds, double train_fraction, std::uint64_t seed);

}  // namespace rbamc
