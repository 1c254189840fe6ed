#pragma once

// Minibatch training loop. Gradients for the items of a batch are computed
// in parallel into per-item slots and reduced in index order, and every
// random draw is keyed by (seed, epoch, trial), so a run's outputs depend
// only on its config and seed, never on the thread count.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "enk/data.hpp"
#include "enk/graph.hpp"
#include "enk/loss.hpp"
#include "enk/optim.hpp"
#include "enk/parallel.hpp"
#include "enk/rng.hpp"

namespace enk {

inline std::uint16_t argmax_class(const Tensor& scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return static_cast<std::uint16_t>(best);
}

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<std::uint16_t> labels;
    std::vector<std::uint16_t> predictions;
};

// Eval-mode pass over the given trials. Pure: no caching, no noise.
inline EvalResult evaluate(const ModelGraph& g, const EpochSet& e, const std::vector<std::size_t>& trials) {
    if (trials.empty()) throw ParamError("evaluate: empty trial list");
    EvalResult r;
    r.labels.resize(trials.size());
    r.predictions.resize(trials.size());
    std::vector<double> losses(trials.size());
    parallel_for(trials.size(), [&](std::size_t i) {
        const Tensor x = trial_tensor(e, trials[i]);
        const Tensor scores = graph_eval(g, x);
        const LossResult lr = cross_entropy_loss(scores, e.labels[trials[i]]);
        losses[i] = lr.loss;
        r.labels[i] = e.labels[trials[i]];
        r.predictions[i] = argmax_class(scores);
    });
    std::size_t hit = 0;
    for (std::size_t i = 0; i < trials.size(); ++i) {
        r.loss += losses[i];
        if (r.predictions[i] == r.labels[i]) ++hit;
    }
    r.loss /= static_cast<double>(trials.size());
    r.accuracy = static_cast<double>(hit) / static_cast<double>(trials.size());
    return r;
}

namespace detail {

struct ItemResult {
    GraphGrads grads;
    double loss = 0.0;
    bool correct = false;
};

}  // namespace detail

// One optimizer step per batch, averaging item gradients. epoch is part of
// the noise key so the additive-noise variant draws fresh noise each epoch.
inline EpochStats train_epoch(ModelGraph& g, const EpochSet& e,
                              const std::vector<std::vector<std::size_t>>& batches, AdamState& opt,
                              std::uint64_t seed, std::uint64_t epoch) {
    EpochStats stats;
    std::size_t seen = 0, hit = 0;
    double loss_sum = 0.0;

    // batch order varies per epoch; batch composition stays as split
    std::vector<std::size_t> order(batches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng order_rng(mix_seed(mix_seed(seed, 0xba7c0000u), epoch));
    order_rng.shuffle(order);

    const std::vector<std::span<double>> params = trainable_params(g);
    for (std::size_t bi : order) {
        const std::vector<std::size_t>& batch = batches[bi];
        std::vector<detail::ItemResult> items(batch.size());
        parallel_for(batch.size(), [&](std::size_t i) {
            const std::size_t t = batch[i];
            Rng noise_rng(mix_seed(mix_seed(seed, 0x401e0000u + epoch), t));
            Tape tape;
            const Tensor x = trial_tensor(e, t);
            const Tensor scores = graph_forward(g, x, tape, true, &noise_rng);
            const LossResult lr = cross_entropy_loss(scores, e.labels[t]);
            items[i].grads = graph_backward(g, tape, lr.d_scores);
            items[i].loss = lr.loss;
            items[i].correct = argmax_class(scores) == e.labels[t];
        });
        GraphGrads total = std::move(items[0].grads);
        for (std::size_t i = 1; i < items.size(); ++i) grads_accumulate(total, items[i].grads);
        grads_scale(total, 1.0 / static_cast<double>(batch.size()));
        adam_step(opt, params, trainable_grads(g, total));
        for (const detail::ItemResult& it : items) {
            loss_sum += it.loss;
            if (it.correct) ++hit;
        }
        seen += batch.size();
    }
    stats.loss = loss_sum / static_cast<double>(seen);
    stats.accuracy = static_cast<double>(hit) / static_cast<double>(seen);
    return stats;
}

struct TrainOptions {
    std::size_t epochs = 100;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    double val_fraction = 0.2;
    std::uint64_t seed = 1;
};

struct EpochRow {
    std::size_t epoch = 0;  // one-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochRow> history;
    EvalResult final_eval;  // validation split, or the train split if none
    std::vector<std::size_t> val_trials;
};

inline TrainResult train_model(ModelGraph& g, const EpochSet& e, const TrainOptions& opt) {
    if (opt.epochs == 0) throw ParamError("train: epochs must be positive");
    SplitBatches split = split_and_batch(e, opt.val_fraction, opt.batch_size, opt.seed);
    AdamState adam;
    adam.lr = opt.lr;

    TrainResult result;
    result.val_trials = split.val;
    for (std::size_t ep = 1; ep <= opt.epochs; ++ep) {
        const EpochStats ts = train_epoch(g, e, split.train_batches, adam, opt.seed, ep);
        EpochRow row;
        row.epoch = ep;
        row.train_loss = ts.loss;
        row.train_accuracy = ts.accuracy;
        if (!split.val.empty()) {
            const EvalResult ev = evaluate(g, e, split.val);
            row.val_loss = ev.loss;
            row.val_accuracy = ev.accuracy;
        }
        result.history.push_back(row);
    }

    if (!split.val.empty()) {
        result.final_eval = evaluate(g, e, split.val);
    } else {
        std::vector<std::size_t> all;
        for (const auto& b : split.train_batches) all.insert(all.end(), b.begin(), b.end());
        result.final_eval = evaluate(g, e, all);
    }
    return result;
}

}  // namespace enk
