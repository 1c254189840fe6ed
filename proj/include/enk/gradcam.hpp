#pragma once

// Gradient-weighted class activation maps. The map is built on a chosen
// convolution layer's output A: per-filter weights are the spatial mean of
// the class-score gradient over that output, the weighted sum is rectified,
// upsampled nearest-neighbor to the input grid, and scaled so the peak is 1.
// Upsampling is nearest-neighbor on both axes because the sensor axis is not
// spatial; interpolating across sensors would invent mixtures.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "enk/format.hpp"
#include "enk/graph.hpp"
#include "enk/loss.hpp"

namespace enk {

struct HeatMap {
    Tensor values;  // [channels, samples], all in [0, 1]
    std::size_t layer_idx = 0;
    std::size_t class_idx = 0;
    double raw_max = 0.0;  // peak before normalization; 0 means the map is identically zero
};

inline HeatMap grad_cam(const ModelGraph& g, const Tensor& x, std::size_t class_idx,
                        std::size_t layer_idx) {
    if (layer_idx >= g.layers.size()) throw ParamError("grad_cam: layer index out of range");
    const Layer& target = g.layers[layer_idx];
    if (!std::holds_alternative<ConvLayer>(target) && !std::holds_alternative<EnkConvLayer>(target))
        throw ParamError("grad_cam: target layer must be a convolution");
    if (x.rank() != 3) throw ShapeError("grad_cam: input must be rank 3");

    Tape tape;
    const Tensor scores = graph_forward(g, x, tape, false, nullptr);
    if (class_idx >= scores.size()) throw ParamError("grad_cam: class index out of range");

    Tensor d_scores{scores.shape()};
    d_scores[class_idx] = 1.0;
    const Tensor dA = graph_backward_to(g, tape, d_scores, layer_idx);
    const Tensor& A = tape.acts[layer_idx + 1];

    const std::size_t filters = A.extent(0), h = A.extent(1), w = A.extent(2);
    const double spatial = static_cast<double>(h * w);

    // map[p][q] = relu(sum_f alpha_f A[f][p][q]) with alpha_f the mean
    // gradient over filter f
    Tensor coarse({h, w});
    for (std::size_t f = 0; f < filters; ++f) {
        double alpha = 0.0;
        for (std::size_t p = 0; p < h; ++p)
            for (std::size_t q = 0; q < w; ++q) alpha += dA(f, p, q);
        alpha /= spatial;
        for (std::size_t p = 0; p < h; ++p)
            for (std::size_t q = 0; q < w; ++q) coarse(p, q) += alpha * A(f, p, q);
    }
    for (double& v : coarse.values()) v = v > 0.0 ? v : 0.0;

    const std::size_t channels = x.extent(1), samples = x.extent(2);
    HeatMap map;
    map.layer_idx = layer_idx;
    map.class_idx = class_idx;
    map.values = Tensor({channels, samples});
    for (std::size_t i = 0; i < channels; ++i) {
        const std::size_t p = i * h / channels;
        for (std::size_t j = 0; j < samples; ++j) {
            const std::size_t q = j * w / samples;
            map.values(i, j) = coarse(p, q);
        }
    }

    for (double v : map.values.values()) map.raw_max = std::max(map.raw_max, v);
    if (map.raw_max > 0.0)
        for (double& v : map.values.values()) v /= map.raw_max;
    return map;
}

// Column sums: one value per sample, for locating the hot region in time.
inline std::vector<double> heatmap_time_marginal(const HeatMap& h) {
    const std::size_t channels = h.values.extent(0), samples = h.values.extent(1);
    std::vector<double> m(samples, 0.0);
    for (std::size_t i = 0; i < channels; ++i)
        for (std::size_t j = 0; j < samples; ++j) m[j] += h.values(i, j);
    return m;
}

inline std::size_t argmax_index(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

inline HeatMap heatmap_diff(const HeatMap& a, const HeatMap& b) {
    if (a.values.shape() != b.values.shape()) throw ParamError("heatmap_diff: grids differ");
    HeatMap d;
    d.layer_idx = a.layer_idx;
    d.class_idx = a.class_idx;
    d.values = Tensor(a.values.shape());
    for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] = std::abs(a.values[i] - b.values[i]);
    for (double v : d.values.values()) d.raw_max = std::max(d.raw_max, v);
    if (d.raw_max > 0.0)
        for (double& v : d.values.values()) v /= d.raw_max;
    return d;
}

inline void heatmap_export_csv(const HeatMap& h, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot open " + path.string() + " for writing");
    const std::size_t channels = h.values.extent(0), samples = h.values.extent(1);
    for (std::size_t i = 0; i < channels; ++i) {
        for (std::size_t j = 0; j < samples; ++j) {
            if (j) out << ',';
            out << format_g9(h.values(i, j));
        }
        out << '\n';
    }
    if (!out.flush()) throw FileError("short write to " + path.string());
}

inline void heatmap_export_pgm(const HeatMap& h, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileError("cannot open " + path.string() + " for writing");
    const std::size_t channels = h.values.extent(0), samples = h.values.extent(1);
    out << "P5 " << samples << " " << channels << " 255\n";
    std::vector<unsigned char> row(samples);
    for (std::size_t i = 0; i < channels; ++i) {
        for (std::size_t j = 0; j < samples; ++j)
            row[j] = static_cast<unsigned char>(std::lround(255.0 * h.values(i, j)));
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(samples));
    }
    if (!out.flush()) throw FileError("short write to " + path.string());
}

inline void heatmap_export(const HeatMap& h, const std::filesystem::path& path, const std::string& format) {
    if (format == "csv") {
        heatmap_export_csv(h, path);
    } else if (format == "pgm") {
        heatmap_export_pgm(h, path);
    } else {
        throw ParamError("heatmap format must be csv or pgm, got '" + format + "'");
    }
}

// Index of the first convolution layer, the default Grad-CAM target.
inline std::size_t first_conv_layer(const ModelGraph& g) {
    for (std::size_t i = 0; i < g.layers.size(); ++i)
        if (std::holds_alternative<ConvLayer>(g.layers[i]) || std::holds_alternative<EnkConvLayer>(g.layers[i]))
            return i;
    throw ParamError("graph has no convolution layer");
}

}  // namespace enk
