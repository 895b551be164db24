#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace prolap {

// Flat key = value configuration files: one pair per line, '#' comments,
// blank lines ignored. Unknown keys are rejected by the consumers so typos
// fail loudly.
class ConfigFile {
public:
    ConfigFile() = default;
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_string(const std::string& text);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, std::string value);

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key,
                                    const std::vector<double>& fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }

    // Keys present in the file but not in `known`; used to reject typos.
    std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace prolap
