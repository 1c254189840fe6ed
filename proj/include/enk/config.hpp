#pragma once

// Flat key=value run configuration. Lines are `key = value`, `#` starts a
// comment, keys carry a section prefix (data., model., train., ...). Every
// key can also arrive as a command-line flag (--key value), which wins over
// the file. Unknown keys are rejected so typos fail loudly instead of
// silently running defaults.

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "enk/error.hpp"

namespace enk {

inline const std::set<std::string>& config_keys() {
    static const std::set<std::string> keys = {
        "data.preset", "data.trials", "data.noise_std", "data.seed", "data.file",
        "data.csv", "data.labels", "data.channels", "data.sample_rate",
        "model.family", "model.variant", "model.init_seed", "model.noise_sigma", "model.widths",
        "train.epochs", "train.batch_size", "train.lr", "train.seed", "train.val_fraction",
        "train.reproducible",
        "out.dir", "run.id",
        "eval.checkpoint",
        "benchmark.k", "benchmark.precision",
        "gradcam.trial", "gradcam.class", "gradcam.layer",
        "gradcam.org_checkpoint", "gradcam.enk_checkpoint",
    };
    return keys;
}

struct Config {
    std::map<std::string, std::string> kv;

    bool has(const std::string& key) const { return kv.count(key) != 0; }

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second;
    }

    std::string require(const std::string& key) const {
        auto it = kv.find(key);
        if (it == kv.end()) throw ParamError("config: missing required key '" + key + "'");
        return it->second;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        char* end = nullptr;
        const unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
        if (end == it->second.c_str() || *end != '\0')
            throw ParamError("config: " + key + " must be an unsigned integer, got '" + it->second + "'");
        return v;
    }

    std::size_t get_size(const std::string& key, std::size_t fallback) const {
        return static_cast<std::size_t>(get_u64(key, fallback));
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        char* end = nullptr;
        const double v = std::strtod(it->second.c_str(), &end);
        if (end == it->second.c_str() || *end != '\0')
            throw ParamError("config: " + key + " must be a number, got '" + it->second + "'");
        return v;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ParamError("config: " + key + " must be true or false, got '" + it->second + "'");
    }

    void set(const std::string& key, const std::string& value) {
        if (!config_keys().count(key)) throw ParamError("config: unknown key '" + key + "'");
        kv[key] = value;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace detail

inline Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open config " + path.string());
    Config c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ParamError("config " + path.string() + " line " + std::to_string(lineno) +
                             ": expected key=value");
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string value = detail::trim(t.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ParamError("config " + path.string() + " line " + std::to_string(lineno) +
                             ": empty key or value");
        c.set(key, value);
    }
    return c;
}

// --key value pairs, applied after the file so flags win
inline void apply_flag_overrides(Config& c, const std::vector<std::pair<std::string, std::string>>& flags) {
    for (const auto& [key, value] : flags) c.set(key, value);
}

}  // namespace enk
