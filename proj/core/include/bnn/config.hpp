#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace bnn {

/// Plain-text config of dotted keys: one `key = value` per line, `#`
/// comments, values either scalars or comma-separated lists. Command-line
/// `key=value` overrides go through set_override().
class Config {
  public:
    Config() = default;

    static Config from_file(const std::string& path);
    static Config from_string(const std::string& text);

    void set_override(const std::string& assignment);  // "key=value"
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    std::vector<double> get_doubles(const std::string& key,
                                    std::vector<double> fallback) const;
    std::vector<std::uint64_t> get_u64s(const std::string& key,
                                        std::vector<std::uint64_t> fallback) const;
    std::vector<std::size_t> get_sizes(const std::string& key,
                                       std::vector<std::size_t> fallback) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace bnn
