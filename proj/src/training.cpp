#include "rbamc/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "rbamc/errors.hpp"
#include "rbamc/layers.hpp"
#include "rbamc/rotation.hpp"

namespace rbamc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_indices(const Dataset& ds, std::span<const std::size_t> indices) {
    for (std::size_t i : indices)
        if (i >= ds.frames.size()) throw DomainError("frame index " + std::to_string(i) + " out of range");
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw DomainError("learning rate must be positive");
    if (!(lr_min >= 0.0) || lr_min > lr0) throw DomainError("lr_min must lie in [0, lr0]");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("momentum must lie in [0, 1)");
    if (batch_size == 0) throw DomainError("batch size must be at least 1");
}

double cosine_lr_at(double t, double period, double lr0, double lr_min) {
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * t / period));
}

double cosine_lr(std::size_t epoch, const TrainConfig& cfg) {
    if (epoch >= cfg.epochs) throw DomainError("cosine_lr: epoch " + std::to_string(epoch) + " outside schedule");
    const std::size_t period = cfg.restart_period ? cfg.restart_period : cfg.epochs;
    return cosine_lr_at(static_cast<double>(epoch % period), static_cast<double>(period), cfg.lr0, cfg.lr_min);
}

void sgd_momentum_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
                       double lr, double momentum, bool clip_to_unit) {
    if (params.size() != grads.size() || params.size() != velocity.size())
        throw ShapeError("sgd step: parameter, gradient and velocity sizes differ (" + std::to_string(params.size()) +
                         ", " + std::to_string(grads.size()) + ", " + std::to_string(velocity.size()) + ")");
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = momentum * velocity[i] + grads[i];
        params[i] -= lr * velocity[i];
        if (clip_to_unit) params[i] = std::clamp(params[i], -1.0, 1.0);
    }
}

Tensor frames_to_tensor(const Dataset& ds, std::span<const std::size_t> indices) {
    check_indices(ds, indices);
    Tensor x({indices.size(), 1, 2, kFrameSamples});
    double* out = x.ptr();
    for (std::size_t i : indices) {
        const auto& iq = ds.frames[i].iq;
        if (iq.size() != 2 * kFrameSamples) throw ShapeError("frame must hold 2 x 1024 samples");
        out = std::copy(iq.begin(), iq.end(), out);
    }
    return x;
}

std::vector<int> frame_labels(const Dataset& ds, std::span<const std::size_t> indices) {
    check_indices(ds, indices);
    std::vector<int> labels;
    labels.reserve(indices.size());
    for (std::size_t i : indices) labels.push_back(ds.frames[i].label);
    return labels;
}

RotationDiagnostics rotation_diagnostics(const Model& model) {
    RotationDiagnostics d;
    std::size_t layers = 0;
    for (const ConvLayer* c : model.conv_layers()) {
        if (!c->binarized()) continue;
        const Tensor rotated = c->rotation ? rotate_weights(c->weight, *c->rotation) : c->weight;
        d.mean_cos_phi += cos_phi(c->weight.data(), rotated.data());
        std::size_t flips = 0;
        for (std::size_t i = 0; i < rotated.size(); ++i)
            flips += sign_of(rotated.data()[i]) != sign_of(c->weight.data()[i]);
        d.flip_fraction += static_cast<double>(flips) / static_cast<double>(rotated.size());
        ++layers;
    }
    if (layers == 0) return {kNaN, 0.0};
    d.mean_cos_phi /= static_cast<double>(layers);
    d.flip_fraction /= static_cast<double>(layers);
    return d;
}

std::vector<EpochLog> train(Model& model, const Dataset& ds, std::span<const std::size_t> train_idx,
                            std::span<const std::size_t> test_idx, const TrainConfig& cfg,
                            const EpochCallback& on_epoch) {
    cfg.validate();
    if (ds.num_classes() != model.arch().num_classes)
        throw DomainError("dataset has " + std::to_string(ds.num_classes()) + " classes, model outputs " +
                          std::to_string(model.arch().num_classes));
    if (cfg.epochs > 0 && train_idx.empty()) throw DomainError("training set is empty");
    check_indices(ds, train_idx);
    check_indices(ds, test_idx);

    std::vector<ParamView> params = model.parameters();
    std::vector<std::vector<double>> velocity;
    for (const ParamView& p : params) velocity.emplace_back(p.value.size(), 0.0);

    std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
    std::vector<EpochLog> logs;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochLog log;
        log.epoch = epoch;
        log.lr = cosine_lr(epoch, cfg);

        if (model.variant() == ModelVariant::RBNN) {
            double cos_sum = 0.0, flip_sum = 0.0;
            std::size_t layers = 0;
            for (ConvLayer* c : model.conv_layers()) {
                if (!c->rotation) continue;
                const RotationSolve solve =
                    learn_rotation(fold(c->weight.data(), c->rotation->n1, c->rotation->n2), *c->rotation);
                *c->rotation = solve.state;
                cos_sum += solve.cos_phi_final;
                flip_sum += solve.flip_fraction;
                log.rotation_objectives.push_back(solve.objective_trace);
                ++layers;
            }
            log.mean_cos_phi = layers ? cos_sum / static_cast<double>(layers) : kNaN;
            log.flip_fraction = layers ? flip_sum / static_cast<double>(layers) : 0.0;
        } else {
            const RotationDiagnostics d = rotation_diagnostics(model);
            log.mean_cos_phi = d.mean_cos_phi;
            log.flip_fraction = d.flip_fraction;
        }

        Rng shuffle(derive_seed({cfg.seed, 0x5f, epoch}));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
        Rng drop(derive_seed({cfg.seed, 0xd4, epoch}));

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> batch(order.data() + start, end - start);
            const std::vector<int> labels = frame_labels(ds, batch);
            const Tensor logits = model.forward(frames_to_tensor(ds, batch), Mode::Train, drop);
            const XentResult xe = softmax_xent(logits, labels);
            if (!std::isfinite(xe.loss)) throw NumericError("training loss is not finite at epoch " + std::to_string(epoch));
            const std::vector<int> pred = argmax_rows(logits);
            for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i];
            loss_sum += xe.loss * static_cast<double>(labels.size());

            model.zero_grad();
            model.backward(xe.grad);
            for (std::size_t p = 0; p < params.size(); ++p)
                sgd_momentum_step(params[p].value, params[p].grad, velocity[p], log.lr, cfg.momentum,
                                  params[p].clip_to_unit);
        }
        model.clear_caches();
        log.loss = loss_sum / static_cast<double>(order.size());
        log.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
        log.test_acc = cfg.evaluate_test && !test_idx.empty() ? evaluate(model, ds, test_idx).accuracy() : kNaN;
        logs.push_back(log);
        if (on_epoch) on_epoch(log);
    }
    return logs;
}

std::vector<int> argmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("argmax: rank-2 logits required");
    std::vector<int> out(logits.dim(0));
    const std::size_t k = logits.dim(1);
    for (std::size_t r = 0; r < out.size(); ++r) {
        const double* row = logits.ptr() + r * k;
        out[r] = static_cast<int>(std::max_element(row, row + k) - row);
    }
    return out;
}

EvalReport make_report(const Dataset& ds, std::span<const std::size_t> indices, std::span<const int> predicted) {
    if (indices.size() != predicted.size()) throw ShapeError("report: prediction count differs from frame count");
    check_indices(ds, indices);
    const std::size_t k = ds.num_classes();
    EvalReport r;
    r.class_names = ds.class_names;
    r.confusion.assign(k, std::vector<std::size_t>(k, 0));
    std::map<int, SnrAccuracy> by_snr;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const Frame& f = ds.frames[indices[i]];
        const int p = predicted[i];
        if (p < 0 || static_cast<std::size_t>(p) >= k) throw DomainError("predicted class out of range");
        ++r.confusion[f.label][static_cast<std::size_t>(p)];
        SnrAccuracy& s = by_snr[f.snr_db];
        s.snr_db = f.snr_db;
        ++s.total;
        const bool hit = p == static_cast<int>(f.label);
        s.correct += hit;
        r.correct += hit;
        ++r.total;
    }
    for (const auto& [snr, s] : by_snr) r.per_snr.push_back(s);
    return r;
}

Tensor predict_logits(Model& model, const Tensor& input) {
    Rng unused(0);
    return model.forward(input, Mode::Infer, unused);
}

Tensor ensemble_predict(Ensemble& ensemble, const Tensor& input) {
    if (ensemble.members.empty()) throw DomainError("ensemble has no members");
    Tensor mean = predict_logits(ensemble.members.front(), input);
    for (std::size_t b = 1; b < ensemble.members.size(); ++b) {
        const Tensor x = predict_logits(ensemble.members[b], input);
        if (x.shape() != mean.shape()) throw ShapeError("ensemble members disagree on output shape");
        const double inv = 1.0 / static_cast<double>(b + 1);
        for (std::size_t i = 0; i < x.size(); ++i) mean.data()[i] += (x.data()[i] - mean.data()[i]) * inv;
    }
    return mean;
}

namespace {

template <class Predict>
EvalReport evaluate_with(const Dataset& ds, std::span<const std::size_t> indices, std::size_t batch,
                         Predict&& predict) {
    if (indices.empty()) throw DomainError("evaluation set is empty");
    if (batch == 0) throw DomainError("evaluation batch must be at least 1");
    std::vector<int> predicted;
    predicted.reserve(indices.size());
    for (std::size_t start = 0; start < indices.size(); start += batch) {
        const auto chunk = indices.subspan(start, std::min(batch, indices.size() - start));
        const std::vector<int> p = argmax_rows(predict(frames_to_tensor(ds, chunk)));
        predicted.insert(predicted.end(), p.begin(), p.end());
    }
    return make_report(ds, indices, predicted);
}

}  // namespace

EvalReport evaluate(Model& model, const Dataset& ds, std::span<const std::size_t> indices, std::size_t batch) {
    if (ds.num_classes() != model.arch().num_classes)
        throw DomainError("dataset has " + std::to_string(ds.num_classes()) + " classes, model outputs " +
                          std::to_string(model.arch().num_classes));
    return evaluate_with(ds, indices, batch, [&](const Tensor& x) { return predict_logits(model, x); });
}

EvalReport evaluate(Ensemble& ensemble, const Dataset& ds, std::span<const std::size_t> indices,
                    std::size_t batch) {
    if (ensemble.members.empty()) throw DomainError("ensemble has no members");
    for (const Model& m : ensemble.members)
        if (m.arch() != ensemble.members.front().arch())
            throw DomainError("ensemble members have different architectures");
    if (ds.num_classes() != ensemble.members.front().arch().num_classes)
        throw DomainError("dataset class count does not match the ensemble");
    return evaluate_with(ds, indices, batch, [&](const Tensor& x) { return ensemble_predict(ensemble, x); });
}

std::vector<std::size_t> bootstrap(std::span<const std::size_t> indices, std::uint64_t seed) {
    if (indices.empty()) throw DomainError("bootstrap: empty index set");
    Rng rng(seed);
    std::vector<std::size_t> out(indices.size());
    for (std::size_t& i : out) i = indices[rng.below(indices.size())];
    return out;
}

std::uint64_t member_seed(std::uint64_t seed, std::size_t member) { return derive_seed({seed, 0xba6, member}); }

BagMember bag_member(std::span<const std::size_t> train_idx, std::uint64_t seed, std::size_t member) {
    BagMember b;
    b.seed = member_seed(seed, member);
    b.sample = bootstrap(train_idx, derive_seed({b.seed, 0xb007}));
    return b;
}

Ensemble bag_train(std::size_t members, ModelVariant variant, const ArchSpec& arch, const Dataset& ds,
                   std::span<const std::size_t> train_idx, const TrainConfig& cfg,
                   std::vector<std::vector<EpochLog>>* logs) {
    if (members == 0) throw DomainError("an ensemble needs at least one member");
    Ensemble e;
    for (std::size_t b = 0; b < members; ++b) {
        const BagMember plan = bag_member(train_idx, cfg.seed, b);
        TrainConfig member_cfg = cfg;
        member_cfg.seed = plan.seed;
        Model m(variant, arch, plan.seed);
        auto log = train(m, ds, plan.sample, {}, member_cfg);
        if (logs) logs->push_back(std::move(log));
        e.members.push_back(std::move(m));
    }
    return e;
}

}  // namespace rbamc
