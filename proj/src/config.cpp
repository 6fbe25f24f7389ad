#include "actsim/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace actsim {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

KVConfig KVConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
}

KVConfig KVConfig::parse(const std::string& text, const std::string& origin) {
    KVConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        cfg.kv_[key] = val;
    }
    return cfg;
}

double KVConfig::get_num(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("missing config key: " + key);
    try {
        size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not a number: " + it->second);
    }
}

double KVConfig::get_num(const std::string& key, double fallback) const {
    return has(key) ? get_num(key) : fallback;
}

long KVConfig::get_int(const std::string& key, long fallback) const {
    if (!has(key)) return fallback;
    double v = get_num(key);
    long i = static_cast<long>(v);
    if (static_cast<double>(i) != v)
        throw ConfigError("config key '" + key + "' is not an integer");
    return i;
}

std::string KVConfig::get_str(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

bool KVConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "' is not a boolean: " + v);
}

void KVConfig::set_num(const std::string& key, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    kv_[key] = buf;
}

void KVConfig::set_str(const std::string& key, const std::string& v) { kv_[key] = v; }

std::vector<std::string> KVConfig::keys() const {
    std::vector<std::string> out;
    out.reserve(kv_.size());
    for (const auto& [k, v] : kv_) out.push_back(k);
    return out;
}

std::vector<std::string> KVConfig::keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : kv_)
        if (k.rfind(prefix, 0) == 0) out.push_back(k);
    return out;
}

std::string KVConfig::serialize() const {
    std::string out;
    for (const auto& [k, v] : kv_) out += k + " = " + v + "\n";
    return out;
}

void KVConfig::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open config file for writing: " + path);
    f << serialize();
}

}  // namespace actsim
