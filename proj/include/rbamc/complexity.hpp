#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rbamc/model.hpp"

namespace rbamc {

struct CountingRules {
    bool include_bn = false;
    int real_width_bits = 64;
    int binary_width_bits = 1;
};

struct LayerComplexity {
    std::string name;
    std::string kind;  // conv | bn | linear
    bool binary = false;
    std::uint64_t params_real = 0;
    std::uint64_t params_binary = 0;
    std::uint64_t flops = 0;     // real multiply + add
    std::uint64_t xnor_ops = 0;  // same count for binarized layers
    Shape output;                // per-sample output volume
};

/// Parameter, operation and memory accounting. Per-layer records describe one
/// network; totals cover `ensemble_size` networks (parameters and memory scale
/// with the ensemble, computation does not since members run in parallel).
struct ComplexityReport {
    ModelVariant variant = ModelVariant::Real;
    std::size_t num_classes = 0;
    std::size_t ensemble_size = 1;
    CountingRules rules;
    std::vector<LayerComplexity> layers;

    std::uint64_t params_real = 0;
    std::uint64_t params_binary = 0;
    std::uint64_t flops = 0;
    std::uint64_t xnor_ops = 0;
    double memory_bytes = 0.0;

    std::uint64_t total_params() const { return params_real + params_binary; }
    double memory_mb() const { return memory_bytes / 1e6; }
};

/// Multiply-add FLOPs of one convolution: 2·c_i·k_h·k_w·h_out·w_out·c_o.
std::uint64_t conv_flops(const ConvSpec& spec, std::size_t out_h, std::size_t out_w);

ComplexityReport analyze(const ArchSpec& arch, ModelVariant variant, const CountingRules& rules,
                         std::size_t ensemble_size = 1);
ComplexityReport analyze(const Model& model, const CountingRules& rules, std::size_t ensemble_size = 1);

}  // namespace rbamc
