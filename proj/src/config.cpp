#include <fstream>
#include <sstream>

#include "eqsur/config.hpp"

namespace eqsur {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ValidationError("config: malformed section at line " +
                                      std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config: expected key = value at line " +
                                  std::to_string(lineno));
        if (section.empty())
            throw ValidationError("config: key outside any [section] at line " +
                                  std::to_string(lineno));
        cfg.sections_[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(text);
}

void RunConfig::set(const std::string& section, const std::string& key,
                    const std::string& value) {
    sections_[section][key] = value;
}

void RunConfig::apply_override(const std::string& dotted) {
    const size_t eq = dotted.find('=');
    const size_t dot = dotted.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw ValidationError("override must be section.key=value, got '" + dotted + "'");
    set(trim(dotted.substr(0, dot)), trim(dotted.substr(dot + 1, eq - dot - 1)),
        trim(dotted.substr(eq + 1)));
}

bool RunConfig::has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string RunConfig::get(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

double RunConfig::get_num(const std::string& section, const std::string& key,
                          double fallback) const {
    if (!has(section, key)) return fallback;
    try {
        return std::stod(get(section, key, ""));
    } catch (...) {
        throw ValidationError("config: " + section + "." + key + " is not a number");
    }
}

int64_t RunConfig::get_int(const std::string& section, const std::string& key,
                           int64_t fallback) const {
    if (!has(section, key)) return fallback;
    try {
        return std::stoll(get(section, key, ""));
    } catch (...) {
        throw ValidationError("config: " + section + "." + key + " is not an integer");
    }
}

bool RunConfig::get_bool(const std::string& section, const std::string& key,
                         bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get(section, key, "");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("config: " + section + "." + key + " is not a boolean");
}

std::string RunConfig::resolved() const {
    std::ostringstream out;
    for (const auto& [section, kv] : sections_) {
        out << "[" << section << "]\n";
        for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
        out << "\n";
    }
    return out.str();
}

void RunConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    out << resolved();
}

} // namespace eqsur
