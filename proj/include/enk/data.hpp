#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "enk/binio.hpp"
#include "enk/error.hpp"
#include "enk/rng.hpp"
#include "enk/tensor.hpp"

namespace enk {

// Labeled trial collection, stored trial-major [trials, channels, samples]
// for batch-slicing locality even though acquisition conventions list
// channels first.
struct EpochSet {
    Tensor data;  // [trials, channels, samples]
    std::vector<std::uint16_t> labels;
    double sample_rate = 0.0;
    std::size_t class_count = 0;

    std::size_t trials() const { return data.rank() == 3 ? data.extent(0) : 0; }
    std::size_t channels() const { return data.rank() == 3 ? data.extent(1) : 0; }
    std::size_t samples() const { return data.rank() == 3 ? data.extent(2) : 0; }
};

// One class's event: a raised-cosine bump of the given latency and width on
// the listed channels. amplitude 0 or width 0 means the class carries no
// event (a pure-noise class).
struct ClassEvent {
    std::size_t latency = 0;  // samples from trial start
    std::size_t width = 0;    // samples
    double amplitude = 0.0;   // signal units, sign carries deflection polarity
    std::vector<std::size_t> channels;
};

struct SynthSpec {
    std::size_t channels = 0;
    std::size_t samples = 0;
    std::size_t trials = 0;
    std::size_t class_count = 0;
    double sample_rate = 0.0;
    std::vector<ClassEvent> events;  // one per class
    double noise_std = 0.0;
    std::uint64_t seed = 1;
};

namespace detail {

inline void validate_synth_spec(const SynthSpec& s) {
    if (s.channels == 0 || s.samples == 0 || s.trials == 0) {
        throw ParamError("channels, samples, and trials must be >= 1");
    }
    if (s.class_count < 2) throw ParamError("class_count must be >= 2");
    if (s.sample_rate <= 0.0) throw ParamError("sample_rate must be > 0");
    if (!(s.noise_std >= 0.0) || !std::isfinite(s.noise_std)) {
        throw ParamError("noise_std must be finite and >= 0");
    }
    if (s.events.size() != s.class_count) {
        throw ParamError("need exactly one event description per class");
    }
    for (std::size_t c = 0; c < s.events.size(); ++c) {
        const ClassEvent& e = s.events[c];
        if (!std::isfinite(e.amplitude)) throw ParamError("event amplitude must be finite");
        if (e.latency + e.width > s.samples) {
            throw ParamError("class " + std::to_string(c) + ": latency + width exceeds samples");
        }
        for (std::size_t ch : e.channels) {
            if (ch >= s.channels) {
                throw ParamError("class " + std::to_string(c) + ": event channel out of range");
            }
        }
    }
}

}  // namespace detail

// White noise plus the labeled class's event bump. Labels cycle through the
// classes so counts are balanced within one trial. Every value is passed
// through 32-bit float once, here, so that the epoch file (an f32 format)
// round-trips bit-exactly against what this function returned.
inline EpochSet synth_generate(const SynthSpec& spec) {
    detail::validate_synth_spec(spec);
    EpochSet e;
    e.data = Tensor({spec.trials, spec.channels, spec.samples});
    e.labels.resize(spec.trials);
    e.sample_rate = spec.sample_rate;
    e.class_count = spec.class_count;

    for (std::size_t t = 0; t < spec.trials; ++t) {
        const std::uint16_t label = static_cast<std::uint16_t>(t % spec.class_count);
        e.labels[t] = label;
        Rng rng(mix_seed(spec.seed, t));
        if (spec.noise_std > 0.0) {
            for (std::size_t ch = 0; ch < spec.channels; ++ch) {
                for (std::size_t s = 0; s < spec.samples; ++s) {
                    e.data(t, ch, s) = rng.normal(0.0, spec.noise_std);
                }
            }
        }
        const ClassEvent& ev = spec.events[label];
        if (ev.amplitude != 0.0 && ev.width > 0) {
            for (std::size_t ch : ev.channels) {
                for (std::size_t k = 0; k < ev.width; ++k) {
                    const double tau = static_cast<double>(k) / static_cast<double>(ev.width);
                    e.data(t, ch, ev.latency + k) +=
                        ev.amplitude * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * tau));
                }
            }
        }
    }
    for (std::size_t i = 0; i < e.data.size(); ++i) {
        e.data[i] = static_cast<double>(static_cast<float>(e.data[i]));
    }
    return e;
}

// Sum of squares the raised-cosine bump contributes per event channel in
// exact arithmetic: the W samples tile one full cosine period, so
// sum (A/2)^2 (1-cos)^2 = A^2 * 3W/8.
inline double raised_cosine_energy(double amplitude, std::size_t width) {
    return amplitude * amplitude * 3.0 * static_cast<double>(width) / 8.0;
}

// ---------------------------------------------------------------------------
// Epoch file, little-endian: magic "ENK1", version u32 = 1, trials u32,
// channels u32, samples u32, class_count u32, sample_rate f64, labels
// u16 x trials, payload f32 x (trials*channels*samples), trial-major.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kEpochFileVersion = 1;

inline void epochs_write(const EpochSet& e, const std::filesystem::path& path) {
    if (e.data.rank() != 3 || e.trials() == 0) {
        throw FormatError("refusing to write an epoch set without trials", 8);
    }
    if (e.labels.size() != e.trials()) throw FormatError("label count != trial count", 8);
    if (e.class_count < 1 || e.class_count > 0xffff) throw FormatError("bad class count", 20);
    for (std::uint16_t l : e.labels) {
        if (l >= e.class_count) throw FormatError("label exceeds class count", 20);
    }
    if (!(e.sample_rate > 0.0)) throw FormatError("sample rate must be > 0", 24);

    binio::Writer w(path);
    w.magic("ENK1");
    w.u32(kEpochFileVersion);
    w.u32(static_cast<std::uint32_t>(e.trials()));
    w.u32(static_cast<std::uint32_t>(e.channels()));
    w.u32(static_cast<std::uint32_t>(e.samples()));
    w.u32(static_cast<std::uint32_t>(e.class_count));
    w.f64(e.sample_rate);
    for (std::uint16_t l : e.labels) w.u16(l);
    for (std::size_t i = 0; i < e.data.size(); ++i) w.f32(static_cast<float>(e.data[i]));
    w.close();
}

inline EpochSet epochs_read(const std::filesystem::path& path) {
    binio::Reader r(path);
    r.expect_magic("ENK1");
    const std::uint32_t version = r.u32("version");
    if (version != kEpochFileVersion) {
        throw FormatError("unsupported epoch file version " + std::to_string(version), r.offset() - 4);
    }
    const std::uint32_t trials = r.u32("trials");
    const std::uint32_t channels = r.u32("channels");
    const std::uint32_t samples = r.u32("samples");
    const std::uint32_t class_count = r.u32("class count");
    if (trials == 0 || channels == 0 || samples == 0) {
        throw FormatError("all extents must be >= 1", 8);
    }
    if (class_count == 0) throw FormatError("class count must be >= 1", 20);
    EpochSet e;
    e.sample_rate = r.f64("sample rate");
    if (!(e.sample_rate > 0.0)) throw FormatError("sample rate must be > 0", 24);
    e.class_count = class_count;
    e.labels.resize(trials);
    for (std::uint32_t t = 0; t < trials; ++t) {
        const std::size_t at = r.offset();
        e.labels[t] = r.u16("label");
        if (e.labels[t] >= class_count) throw FormatError("label exceeds class count", at);
    }
    e.data = Tensor({trials, channels, samples});
    for (std::size_t i = 0; i < e.data.size(); ++i) {
        e.data[i] = static_cast<double>(r.f32("sample payload"));
    }
    return e;
}

// ---------------------------------------------------------------------------
// CSV import: data rows are trials*channels lines of comma-separated sample
// values; the labels file holds one integer per trial. Row numbers in errors
// are 1-based.
// ---------------------------------------------------------------------------

namespace detail {

inline double parse_cell(const std::string& cell, std::size_t row) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    // allow surrounding spaces, nothing else
    while (end && *end == ' ') ++end;
    const char* p = begin;
    while (*p == ' ') ++p;
    if (end == nullptr || *end != '\0' || end == p) {
        throw FormatError("row " + std::to_string(row) + ": non-numeric cell '" + cell + "'", row);
    }
    return v;
}

}  // namespace detail

inline EpochSet csv_import(const std::filesystem::path& data_path,
                           const std::filesystem::path& labels_path, std::size_t channels,
                           double sample_rate) {
    if (channels == 0) throw ParamError("channels must be >= 1");
    if (!(sample_rate > 0.0)) throw ParamError("sample_rate must be > 0");

    std::ifstream in(data_path);
    if (!in) throw FileError("cannot open for reading: " + data_path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t row_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++row_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            // blank lines are legal only at the end of the file
            std::string rest;
            while (std::getline(in, rest)) {
                if (!rest.empty() && rest != "\r") {
                    throw FormatError("row " + std::to_string(row_no) + ": blank row inside data",
                                      row_no);
                }
            }
            break;
        }
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) vals.push_back(detail::parse_cell(cell, row_no));
        if (width == 0) {
            width = vals.size();
        } else if (vals.size() != width) {
            throw FormatError("row " + std::to_string(row_no) + ": expected " + std::to_string(width) +
                                  " columns, got " + std::to_string(vals.size()),
                              row_no);
        }
        rows.push_back(std::move(vals));
    }
    if (rows.empty() || width == 0) throw FormatError("data file has no rows", 0);
    if (rows.size() % channels != 0) {
        throw FormatError("row count " + std::to_string(rows.size()) + " is not a multiple of " +
                              std::to_string(channels) + " channels",
                          rows.size());
    }
    const std::size_t trials = rows.size() / channels;

    std::ifstream lin(labels_path);
    if (!lin) throw FileError("cannot open for reading: " + labels_path.string());
    std::vector<std::uint16_t> labels;
    std::size_t lrow = 0;
    while (std::getline(lin, line)) {
        ++lrow;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const double v = detail::parse_cell(line, lrow);
        if (v < 0 || v > 0xffff || v != std::floor(v)) {
            throw FormatError("row " + std::to_string(lrow) + ": label must be a small non-negative integer",
                              lrow);
        }
        labels.push_back(static_cast<std::uint16_t>(v));
    }
    if (labels.size() != trials) {
        throw FormatError("label count " + std::to_string(labels.size()) + " != trial count " +
                              std::to_string(trials),
                          labels.size());
    }

    EpochSet e;
    e.data = Tensor({trials, channels, width});
    for (std::size_t t = 0; t < trials; ++t) {
        for (std::size_t ch = 0; ch < channels; ++ch) {
            const std::vector<double>& src = rows[t * channels + ch];
            for (std::size_t s = 0; s < width; ++s) e.data(t, ch, s) = src[s];
        }
    }
    e.labels = std::move(labels);
    e.sample_rate = sample_rate;
    std::uint16_t max_label = 0;
    for (std::uint16_t l : e.labels) max_label = std::max(max_label, l);
    e.class_count = static_cast<std::size_t>(max_label) + 1;
    return e;
}

// ---------------------------------------------------------------------------
// Stratified split + fixed batching.
// ---------------------------------------------------------------------------

struct SplitBatches {
    std::vector<std::vector<std::size_t>> train_batches;  // trial indices
    std::vector<std::size_t> val;                         // trial indices, ascending
};

// Per-class shuffle, per-class rounded validation take, then a seeded shuffle
// of the pooled training indices chunked into batches (last one may be
// short). Deterministic in (set, val_fraction, batch_size, seed).
inline SplitBatches split_and_batch(const EpochSet& e, double val_fraction, std::size_t batch_size,
                                    std::uint64_t seed) {
    if (!(val_fraction >= 0.0) || val_fraction >= 1.0) {
        throw ParamError("val_fraction must be in [0, 1)");
    }
    if (batch_size == 0) throw ParamError("batch_size must be >= 1");
    if (e.trials() == 0) throw ParamError("epoch set has no trials");

    std::vector<std::vector<std::size_t>> by_class(e.class_count);
    for (std::size_t t = 0; t < e.trials(); ++t) by_class[e.labels[t]].push_back(t);

    SplitBatches out;
    std::vector<std::size_t> train_pool;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        std::vector<std::size_t>& group = by_class[c];
        Rng rng(mix_seed(seed, 0x5B17 + c));
        rng.shuffle(group);
        const std::size_t take = static_cast<std::size_t>(
            std::llround(val_fraction * static_cast<double>(group.size())));
        for (std::size_t i = 0; i < group.size(); ++i) {
            (i < take ? out.val : train_pool).push_back(group[i]);
        }
    }
    std::sort(out.val.begin(), out.val.end());

    if (batch_size > train_pool.size()) {
        throw ParamError("batch_size " + std::to_string(batch_size) + " exceeds training size " +
                         std::to_string(train_pool.size()));
    }
    Rng rng(mix_seed(seed, 0xba7c4));
    rng.shuffle(train_pool);
    for (std::size_t at = 0; at < train_pool.size(); at += batch_size) {
        const std::size_t end = std::min(at + batch_size, train_pool.size());
        out.train_batches.emplace_back(train_pool.begin() + static_cast<std::ptrdiff_t>(at),
                                       train_pool.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

// One trial as a [1, channels, samples] tensor, the graph input layout.
inline Tensor trial_tensor(const EpochSet& e, std::size_t t) {
    if (t >= e.trials()) throw ParamError("trial index out of range");
    Tensor x({1, e.channels(), e.samples()});
    for (std::size_t ch = 0; ch < e.channels(); ++ch) {
        for (std::size_t s = 0; s < e.samples(); ++s) x(0, ch, s) = e.data(t, ch, s);
    }
    return x;
}

// ---------------------------------------------------------------------------
// Synthetic presets. The four acquisition-shaped ones take their channel,
// sample, class, rate, and batch figures from the datasets they stand in
// for; events sit at the latencies the corresponding responses are known
// for. timepos is the learnability probe: two classes that differ in event
// latency only.
// ---------------------------------------------------------------------------

struct DataPreset {
    std::string name;
    SynthSpec synth;
    std::size_t batch_size = 16;
};

inline std::vector<DataPreset> data_presets() {
    std::vector<DataPreset> out;

    auto central = [](std::size_t channels, std::size_t n) {
        // n consecutive channels centered in the montage
        std::vector<std::size_t> v(n);
        const std::size_t start = (channels - n) / 2;
        for (std::size_t i = 0; i < n; ++i) v[i] = start + i;
        return v;
    };

    {
        // conflict observation: frontal negativity 150-250 ms at 1 kHz
        DataPreset p;
        p.name = "cc";
        p.synth = SynthSpec{62, 1200, 120, 2, 1000.0,
                            {ClassEvent{},
                             ClassEvent{150, 100, -1.0, central(62, 8)}},
                            0.1, 1};
        p.batch_size = 16;
        out.push_back(std::move(p));
    }
    {
        DataPreset p;
        p.name = "phrc";
        p.synth = SynthSpec{32, 1200, 120, 2, 1000.0,
                            {ClassEvent{},
                             ClassEvent{150, 100, -1.0, central(32, 6)}},
                            0.1, 2};
        p.batch_size = 16;
        out.push_back(std::move(p));
    }
    {
        // oddball target: positive deflection at 0.3 * samples
        DataPreset p;
        p.name = "p300";
        p.synth = SynthSpec{64, 240, 160, 2, 240.0,
                            {ClassEvent{},
                             ClassEvent{72, 24, 1.0, central(64, 8)}},
                            0.1, 3};
        p.batch_size = 8;
        out.push_back(std::move(p));
    }
    {
        // four movement classes, staggered pre-movement latencies
        DataPreset p;
        p.name = "mrcp";
        p.synth = SynthSpec{28, 500, 160, 4, 1000.0,
                            {ClassEvent{60, 80, 1.0, central(28, 6)},
                             ClassEvent{160, 80, 1.0, central(28, 6)},
                             ClassEvent{260, 80, 1.0, central(28, 6)},
                             ClassEvent{360, 80, 1.0, central(28, 6)}},
                            0.1, 4};
        p.batch_size = 4;
        out.push_back(std::move(p));
    }
    {
        // time-position probe: identical events, different latencies
        DataPreset p;
        p.name = "timepos";
        p.synth = SynthSpec{6, 192, 200, 2, 250.0,
                            {ClassEvent{38, 24, 2.0, {1, 2, 3}},
                             ClassEvent{115, 24, 2.0, {1, 2, 3}}},
                            0.1, 5};
        p.batch_size = 16;
        out.push_back(std::move(p));
    }
    return out;
}

inline const DataPreset& find_data_preset(const std::string& name) {
    static const std::vector<DataPreset> presets = data_presets();
    for (const DataPreset& p : presets) {
        if (p.name == name) return p;
    }
    throw ParamError("unknown data preset '" + name + "'");
}

}  // namespace enk
