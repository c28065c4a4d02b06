//
//  config.hpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace bicilab {

/// `key = value` text with optional `[section]` headers; keys inside a
/// section are addressed as "section.key". `#` starts a comment. Repeated
/// keys are kept in order.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::istream& is, const std::string& origin = "<input>");
    static KeyValueConfig load(const std::filesystem::path& path);

    bool has(const std::string& key) const;
    std::optional<std::string> get(const std::string& key) const;
    std::vector<std::string> get_all(const std::string& key) const;

    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long get_long(const std::string& key, long fallback) const;
    std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;

    /// Required value; throws UsageError naming the key when absent.
    std::string require(const std::string& key) const;

    void set(const std::string& key, const std::string& value);
    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
    std::string origin_;
    std::vector<std::pair<std::string, std::string>> entries_;
};

/// Parses "a,b,c" or a range "lo:step:hi" into numbers.
std::vector<double> parse_number_list(const std::string& text);

} // namespace bicilab
