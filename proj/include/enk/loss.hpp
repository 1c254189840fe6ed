#pragma once

#include <cmath>
#include <cstddef>

#include "enk/error.hpp"
#include "enk/tensor.hpp"

namespace enk {

struct LossResult {
    double loss = 0.0;
    Tensor d_scores;
};

// Softmax cross entropy on raw class scores:
//   loss = -log softmax(scores)[label],  d_scores = softmax(scores) - onehot.
// Computed against the max-shifted logits so large scores cannot overflow;
// d_scores sums to zero by construction.
inline LossResult cross_entropy_loss(const Tensor& scores, std::size_t label) {
    if (scores.rank() != 1) throw ParamError("scores must be rank 1 [classes]");
    const std::size_t classes = scores.size();
    if (label >= classes) {
        throw ParamError("label " + std::to_string(label) + " out of range for " +
                         std::to_string(classes) + " classes");
    }
    double m = scores[0];
    for (std::size_t i = 1; i < classes; ++i) m = std::max(m, scores[i]);
    double z = 0.0;
    LossResult r;
    r.d_scores = Tensor({classes});
    for (std::size_t i = 0; i < classes; ++i) {
        r.d_scores[i] = std::exp(scores[i] - m);
        z += r.d_scores[i];
    }
    for (std::size_t i = 0; i < classes; ++i) r.d_scores[i] /= z;
    // -log p[label] = log z - (scores[label] - m), kept in log space so the
    // tiny-loss regime (confident correct prediction) stays accurate
    r.loss = std::log(z) - (scores[label] - m);
    r.d_scores[label] -= 1.0;
    return r;
}

}  // namespace enk
