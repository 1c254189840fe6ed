#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "enk/error.hpp"

namespace enk {

// Adam with bias correction at the standard defaults. Moments live in one
// flat buffer laid out by the caller's view order; that order must stay
// fixed for the lifetime of the state (trainable_params pins it).
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
};

// One update over the parameter views. The moment buffer is sized on first
// use; afterwards a total-size change means the views no longer describe the
// same parameter set and is rejected.
inline void adam_step(AdamState& s, const std::vector<std::span<double>>& params,
                      const std::vector<std::span<const double>>& grads) {
    if (params.size() != grads.size()) throw ParamError("param/grad view count mismatch");
    std::size_t total = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != grads[i].size()) throw ParamError("param/grad view size mismatch");
        total += params[i].size();
    }
    if (s.m.empty()) {
        s.m.assign(total, 0.0);
        s.v.assign(total, 0.0);
    } else if (s.m.size() != total) {
        throw ParamError("optimizer state sized for a different parameter set");
    }

    s.step += 1;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));

    std::size_t k = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::span<double> p = params[i];
        std::span<const double> g = grads[i];
        for (std::size_t j = 0; j < p.size(); ++j, ++k) {
            s.m[k] = s.beta1 * s.m[k] + (1.0 - s.beta1) * g[j];
            s.v[k] = s.beta2 * s.v[k] + (1.0 - s.beta2) * g[j] * g[j];
            const double mhat = s.m[k] / c1;
            const double vhat = s.v[k] / c2;
            p[j] -= s.lr * mhat / (std::sqrt(vhat) + s.epsilon);
        }
    }
}

}  // namespace enk
