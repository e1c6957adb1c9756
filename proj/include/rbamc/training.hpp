#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rbamc/datagen.hpp"
#include "rbamc/model.hpp"

namespace rbamc {

struct TrainConfig {
    double lr0 = 0.01;
    double lr_min = 0.0;
    double momentum = 0.9;
    std::size_t epochs = 200;
    std::size_t batch_size = 256;
    std::size_t restart_period = 0;  // 0: one cosine period over all epochs
    std::uint64_t seed = 0;
    bool evaluate_test = true;       // fill test_acc each epoch

    void validate() const;
};

/// lr_min + ½(lr0 − lr_min)(1 + cos(π·t/T)), t = epoch mod T.
double cosine_lr(std::size_t epoch, const TrainConfig& cfg);
double cosine_lr_at(double t, double period, double lr0, double lr_min);

/// v ← momentum·v + g; p ← p − lr·v; latent binary weights are clipped to [−1, 1].
void sgd_momentum_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
                       double lr, double momentum, bool clip_to_unit = false);

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;      // NaN when not evaluated
    double mean_cos_phi = 0.0;  // NaN for the real variant
    double flip_fraction = 0.0;
    std::vector<std::vector<double>> rotation_objectives;  // RBNN: per layer solve trace

    friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

/// The frames at `indices` as an [N, 1, 2, 1024] tensor.
Tensor frames_to_tensor(const Dataset& ds, std::span<const std::size_t> indices);
std::vector<int> frame_labels(const Dataset& ds, std::span<const std::size_t> indices);

using EpochCallback = std::function<void(const EpochLog&)>;

/// Mini-batch SGD over `train_idx`. Binary variants train latent weights
/// through the STE; RBNN layers re-learn their rotations before each epoch.
std::vector<EpochLog> train(Model& model, const Dataset& ds, std::span<const std::size_t> train_idx,
                            std::span<const std::size_t> test_idx, const TrainConfig& cfg,
                            const EpochCallback& on_epoch = {});

/// Mean cos φ and flip fraction of the current binarized weights.
struct RotationDiagnostics {
    double mean_cos_phi = 0.0;
    double flip_fraction = 0.0;
};
RotationDiagnostics rotation_diagnostics(const Model& model);

struct SnrAccuracy {
    int snr_db = 0;
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct EvalReport {
    std::vector<std::string> class_names;
    std::size_t correct = 0;
    std::size_t total = 0;
    std::vector<SnrAccuracy> per_snr;             // ascending SNR
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]

    double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

/// Builds a report from predicted labels.
EvalReport make_report(const Dataset& ds, std::span<const std::size_t> indices, std::span<const int> predicted);

struct Ensemble {
    std::vector<Model> members;
};

/// Inference-mode logits.
Tensor predict_logits(Model& model, const Tensor& input);
/// Running mean of the members' logits.
Tensor ensemble_predict(Ensemble& ensemble, const Tensor& input);

std::vector<int> argmax_rows(const Tensor& logits);

EvalReport evaluate(Model& model, const Dataset& ds, std::span<const std::size_t> indices,
                    std::size_t batch = 256);
EvalReport evaluate(Ensemble& ensemble, const Dataset& ds, std::span<const std::size_t> indices,
                    std::size_t batch = 256);

/// Sampling with replacement, same size as `indices`.
std::vector<std::size_t> bootstrap(std::span<const std::size_t> indices, std::uint64_t seed);
std::uint64_t member_seed(std::uint64_t seed, std::size_t member);

/// Seed and bootstrap resample of ensemble member `member`.
struct BagMember {
    std::uint64_t seed = 0;
    std::vector<std::size_t> sample;
};
BagMember bag_member(std::span<const std::size_t> train_idx, std::uint64_t seed, std::size_t member);

/// B members, each built and trained with member_seed(cfg.seed, b) on its own
/// bootstrap resample of `train_idx`.
Ensemble bag_train(std::size_t members, ModelVariant variant, const ArchSpec& arch, const Dataset& ds,
                   std::span<const std::size_t> train_idx, const TrainConfig& cfg,
                   std::vector<std::vector<EpochLog>>* logs = nullptr);

}  // namespace rbamc
