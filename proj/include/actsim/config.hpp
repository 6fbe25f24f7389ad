#pragma once

#include <map>
#include <string>
#include <vector>

#include "actsim/common.hpp"

namespace actsim {

/// Flat key/value config with dotted keys for nesting, e.g.
///   # comment
///   v_max.HK = 2.92
///   policy.episodes = 200
class KVConfig {
  public:
    static KVConfig load(const std::string& path);
    static KVConfig parse(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    double get_num(const std::string& key) const;
    double get_num(const std::string& key, double fallback) const;
    long get_int(const std::string& key, long fallback) const;
    std::string get_str(const std::string& key, const std::string& fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    void set_num(const std::string& key, double v);
    void set_str(const std::string& key, const std::string& v);

    /// Keys sorted lexicographically (deterministic iteration/serialization).
    std::vector<std::string> keys() const;
    std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

    void save(const std::string& path) const;
    std::string serialize() const;

  private:
    std::map<std::string, std::string> kv_;
};

}  // namespace actsim
