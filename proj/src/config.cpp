//
//  config.cpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#include "bicilab/config.hpp"
#include "bicilab/error.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

namespace bicilab {

namespace {

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double to_double(const std::string& text, const std::string& what)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size())
            throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw UsageError(what + ": '" + text + "' is not a number");
    }
}

} // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& is, const std::string& origin)
{
    KeyValueConfig cfg;
    cfg.origin_ = origin;
    std::string section;
    std::string raw;
    for (int line_no = 1; std::getline(is, raw); ++line_no) {
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw UsageError(origin + ":" + std::to_string(line_no) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty())
            throw UsageError(origin + ":" + std::to_string(line_no) + ": empty key");
        cfg.entries_.emplace_back(section.empty() ? key : section + "." + key, trim(line.substr(eq + 1)));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is)
        throw UsageError("cannot open config file " + path.string());
    return parse(is, path.string());
}

bool KeyValueConfig::has(const std::string& key) const { return get(key).has_value(); }

std::optional<std::string> KeyValueConfig::get(const std::string& key) const
{
    std::optional<std::string> found;
    for (const auto& [k, v] : entries_)
        if (k == key)
            found = v;
    return found;
}

std::vector<std::string> KeyValueConfig::get_all(const std::string& key) const
{
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
        if (k == key)
            out.push_back(v);
    return out;
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const
{
    return get(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const
{
    const auto v = get(key);
    return v ? to_double(*v, origin_ + " key " + key) : fallback;
}

long KeyValueConfig::get_long(const std::string& key, long fallback) const
{
    const auto v = get(key);
    if (!v)
        return fallback;
    const double d = to_double(*v, origin_ + " key " + key);
    if (d != std::floor(d))
        throw UsageError(origin_ + " key " + key + ": expected an integer, got '" + *v + "'");
    return static_cast<long>(d);
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key, std::vector<double> fallback) const
{
    const auto v = get(key);
    return v ? parse_number_list(*v) : fallback;
}

std::string KeyValueConfig::require(const std::string& key) const
{
    const auto v = get(key);
    if (!v)
        throw UsageError(origin_ + ": missing required key '" + key + "'");
    return *v;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }

std::vector<double> parse_number_list(const std::string& text)
{
    const std::string t = trim(text);
    std::vector<double> out;
    if (t.empty())
        return out;
    if (t.find(':') != std::string::npos) {
        std::vector<double> parts;
        std::istringstream ss(t);
        for (std::string p; std::getline(ss, p, ':');)
            parts.push_back(to_double(trim(p), "range"));
        if (parts.size() != 3 || !(parts[1] > 0.0))
            throw UsageError("range '" + t + "' must be lo:step:hi with step > 0");
        for (int i = 0;; ++i) {
            const double v = parts[0] + parts[1] * i;
            if (v > parts[2] + 1e-9 * std::abs(parts[1]))
                break;
            out.push_back(v);
        }
        return out;
    }
    std::istringstream ss(t);
    for (std::string p; std::getline(ss, p, ',');)
        out.push_back(to_double(trim(p), "list"));
    return out;
}

} // namespace bicilab
