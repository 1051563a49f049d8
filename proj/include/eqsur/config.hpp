#pragma once

#include <map>
#include <string>
#include <vector>

#include "eqsur/common.hpp"

namespace eqsur {

/// Plain-text run configuration: INI-style sections of key = value lines,
/// with command-line overrides of the form section.key=value. Every command
/// writes its resolved config beside its outputs, which (with the seed)
/// fully reproduces the run.
class RunConfig {
public:
    RunConfig() = default;
    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::string& path);

    void set(const std::string& section, const std::string& key, const std::string& value);
    void apply_override(const std::string& dotted); // "section.key=value"

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const;
    double get_num(const std::string& section, const std::string& key, double fallback) const;
    int64_t get_int(const std::string& section, const std::string& key, int64_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

    /// Canonical serialized form (sorted sections/keys) used for digests.
    std::string resolved() const;
    uint64_t digest() const { return fnv1a(resolved()); }
    void save(const std::string& path) const;

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

} // namespace eqsur
