#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pgx {

/// Flat key=value settings. Lines starting with '#' and blank lines are ignored.
///
/// Every typed read records the key and the value actually used (the default
/// when absent) in resolved(), which is what run manifests persist.
class Config {
public:
    static Config parse(const std::string& text, const std::string& origin = "config");
    static Config load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    /// Parses one "key=value" argument.
    void set_assignment(const std::string& assignment);
    /// Keys of `other` replace ours.
    void merge(const Config& other);

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Comma separated, empty items dropped.
    std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

    const std::map<std::string, std::string>& values() const noexcept { return values_; }
    const std::map<std::string, std::string>& resolved() const noexcept { return resolved_; }
    /// Keys that were set but never read.
    std::vector<std::string> unused() const;

    /// Sorted key=value lines; parse(serialize()) reproduces values().
    std::string serialize() const;
    static std::string serialize(const std::map<std::string, std::string>& values);

private:
    const std::string* find(const std::string& key) const;
    void record(const std::string& key, const std::string& value) const;

    std::map<std::string, std::string> values_;
    mutable std::map<std::string, std::string> resolved_;
};

/// Shortest text that parses back to the same double.
std::string format_double(double v);

} // namespace pgx
