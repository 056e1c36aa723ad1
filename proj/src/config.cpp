#include "pgx/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pgx/error.hpp"

namespace pgx {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
    throw FormatError("config key '" + key + "': '" + value + "' is not " + what);
}

} // namespace

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

Config Config::parse(const std::string& text, const std::string& origin) {
    Config c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos || trim(t.substr(0, eq)).empty()) {
            throw FormatError(origin + ":" + std::to_string(lineno) + ": expected key=value");
        }
        c.values_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.filename().string());
}

void Config::set(const std::string& key, const std::string& value) {
    if (key.empty()) throw FormatError("empty config key");
    values_[key] = value;
}

void Config::set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw FormatError("expected key=value, got '" + assignment + "'");
    }
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::merge(const Config& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string* Config::find(const std::string& key) const {
    const auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
}

void Config::record(const std::string& key, const std::string& value) const { resolved_[key] = value; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    const std::string* v = find(key);
    const std::string out = v ? *v : fallback;
    record(key, out);
    return out;
}

double Config::get_double(const std::string& key, double fallback) const {
    const std::string* v = find(key);
    double out = fallback;
    if (v) {
        const char* end = v->data() + v->size();
        const auto r = std::from_chars(v->data(), end, out);
        if (r.ec != std::errc{} || r.ptr != end || !std::isfinite(out)) bad_value(key, *v, "a finite number");
    }
    record(key, format_double(out));
    return out;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    const std::string* v = find(key);
    std::uint64_t out = fallback;
    if (v) {
        const char* end = v->data() + v->size();
        const auto r = std::from_chars(v->data(), end, out);
        if (r.ec != std::errc{} || r.ptr != end) bad_value(key, *v, "a nonnegative integer");
    }
    record(key, std::to_string(out));
    return out;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
    return static_cast<std::size_t>(get_u64(key, fallback));
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    const std::string* v = find(key);
    bool out = fallback;
    if (v) {
        if (*v == "true" || *v == "1" || *v == "yes") {
            out = true;
        } else if (*v == "false" || *v == "0" || *v == "no") {
            out = false;
        } else {
            bad_value(key, *v, "a boolean");
        }
    }
    record(key, out ? "true" : "false");
    return out;
}

std::vector<std::string> Config::get_list(const std::string& key, const std::vector<std::string>& fallback) const {
    const std::string* v = find(key);
    std::vector<std::string> out;
    if (!v) {
        out = fallback;
    } else {
        std::istringstream in(*v);
        std::string item;
        while (std::getline(in, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(item);
        }
    }
    std::string joined;
    for (std::size_t i = 0; i < out.size(); ++i) joined += (i ? "," : "") + out[i];
    record(key, joined);
    return out;
}

std::vector<std::string> Config::unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
        if (!resolved_.count(k)) out.push_back(k);
    }
    return out;
}

std::string Config::serialize(const std::map<std::string, std::string>& values) {
    std::string out;
    for (const auto& [k, v] : values) out += k + "=" + v + "\n";
    return out;
}

std::string Config::serialize() const { return serialize(values_); }

} // namespace pgx
