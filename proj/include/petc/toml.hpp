#pragma once

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "petc/errors.hpp"

namespace petc {

/// Value of one key in a config file. Supports the TOML subset this tool
/// uses: booleans, integers, floats, strings and flat arrays.
class TomlValue {
  public:
    using Array = std::vector<TomlValue>;
    using Storage = std::variant<bool, std::int64_t, double, std::string, Array>;

    TomlValue() : v_(false) {}
    explicit TomlValue(Storage v) : v_(std::move(v)) {}

    bool is_array() const { return std::holds_alternative<Array>(v_); }

    bool as_bool(const std::string& where) const {
        if (auto* p = std::get_if<bool>(&v_)) return *p;
        throw ConfigError("config key " + where + " must be a boolean");
    }
    std::int64_t as_int(const std::string& where) const {
        if (auto* p = std::get_if<std::int64_t>(&v_)) return *p;
        throw ConfigError("config key " + where + " must be an integer");
    }
    double as_double(const std::string& where) const {
        if (auto* p = std::get_if<double>(&v_)) return *p;
        if (auto* p = std::get_if<std::int64_t>(&v_)) return static_cast<double>(*p);
        throw ConfigError("config key " + where + " must be a number");
    }
    const std::string& as_string(const std::string& where) const {
        if (auto* p = std::get_if<std::string>(&v_)) return *p;
        throw ConfigError("config key " + where + " must be a string");
    }
    const Array& as_array(const std::string& where) const {
        if (auto* p = std::get_if<Array>(&v_)) return *p;
        throw ConfigError("config key " + where + " must be an array");
    }

  private:
    Storage v_;
};

using TomlTable = std::map<std::string, TomlValue>;

struct TomlDocument {
    std::map<std::string, TomlTable> sections;

    bool has(const std::string& section, const std::string& key) const {
        auto s = sections.find(section);
        return s != sections.end() && s->second.count(key) > 0;
    }

    const TomlValue& get(const std::string& section, const std::string& key) const {
        auto s = sections.find(section);
        if (s == sections.end() || s->second.count(key) == 0)
            throw ConfigError("missing config key " + section + "." + key);
        return s->second.at(key);
    }
};

namespace toml_detail {

inline void skip_ws(const std::string& s, std::size_t& i) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
}

inline ConfigError err(std::size_t line, const std::string& msg) {
    return ConfigError("config line " + std::to_string(line) + ": " + msg);
}

inline TomlValue parse_value(const std::string& s, std::size_t& i, std::size_t line);

inline TomlValue parse_scalar(const std::string& s, std::size_t& i, std::size_t line) {
    if (s[i] == '"') {
        std::string out;
        ++i;
        while (i < s.size() && s[i] != '"') {
            if (s[i] == '\\' && i + 1 < s.size()) {
                ++i;
                switch (s[i]) {
                    case 'n': out.push_back('\n'); break;
                    case 't': out.push_back('\t'); break;
                    case '"': out.push_back('"'); break;
                    case '\\': out.push_back('\\'); break;
                    default: throw err(line, "unsupported escape");
                }
            } else {
                out.push_back(s[i]);
            }
            ++i;
        }
        if (i >= s.size()) throw err(line, "unterminated string");
        ++i;
        return TomlValue(TomlValue::Storage(out));
    }
    std::size_t start = i;
    while (i < s.size() && s[i] != ',' && s[i] != ']' && s[i] != '#' && s[i] != ' ' &&
           s[i] != '\t')
        ++i;
    const std::string tok = s.substr(start, i - start);
    if (tok.empty()) throw err(line, "expected a value");
    if (tok == "true") return TomlValue(TomlValue::Storage(true));
    if (tok == "false") return TomlValue(TomlValue::Storage(false));
    // integer if it parses fully without '.', 'e', 'E', inf or nan
    const bool looks_int = tok.find_first_of(".eE") == std::string::npos &&
                           tok.find("inf") == std::string::npos &&
                           tok.find("nan") == std::string::npos;
    if (looks_int) {
        char* end = nullptr;
        const long long v = std::strtoll(tok.c_str(), &end, 10);
        if (end && *end == '\0') return TomlValue(TomlValue::Storage(static_cast<std::int64_t>(v)));
    }
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (!end || *end != '\0') throw err(line, "bad value '" + tok + "'");
    return TomlValue(TomlValue::Storage(v));
}

inline TomlValue parse_value(const std::string& s, std::size_t& i, std::size_t line) {
    skip_ws(s, i);
    if (i >= s.size()) throw err(line, "expected a value");
    if (s[i] == '[') {
        ++i;
        TomlValue::Array arr;
        skip_ws(s, i);
        if (i < s.size() && s[i] == ']') {
            ++i;
            return TomlValue(TomlValue::Storage(arr));
        }
        while (true) {
            arr.push_back(parse_value(s, i, line));
            skip_ws(s, i);
            if (i < s.size() && s[i] == ',') {
                ++i;
                skip_ws(s, i);
                continue;
            }
            if (i < s.size() && s[i] == ']') {
                ++i;
                return TomlValue(TomlValue::Storage(arr));
            }
            throw err(line, "expected ',' or ']' in array");
        }
    }
    return parse_scalar(s, i, line);
}

}  // namespace toml_detail

/// Parses the TOML subset used by the config files: [section] headers,
/// key = value pairs, '#' comments, scalar and flat array values.
inline TomlDocument parse_toml(const std::string& text) {
    using namespace toml_detail;
    TomlDocument doc;
    std::string section;
    std::size_t pos = 0, line_no = 0;
    while (pos <= text.size()) {
        const std::size_t eol = text.find('\n', pos);
        std::string line = text.substr(pos, eol == std::string::npos ? std::string::npos
                                                                     : eol - pos);
        pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();

        std::size_t i = 0;
        skip_ws(line, i);
        if (i >= line.size() || line[i] == '#') continue;
        if (line[i] == '[') {
            const std::size_t close = line.find(']', i);
            if (close == std::string::npos) throw err(line_no, "unterminated section header");
            section = line.substr(i + 1, close - i - 1);
            if (section.empty()) throw err(line_no, "empty section name");
            i = close + 1;
            skip_ws(line, i);
            if (i < line.size() && line[i] != '#') throw err(line_no, "trailing text after section");
            doc.sections[section];  // sections may be empty
            continue;
        }
        std::size_t start = i;
        while (i < line.size() &&
               (std::isalnum(static_cast<unsigned char>(line[i])) || line[i] == '_' ||
                line[i] == '-'))
            ++i;
        const std::string key = line.substr(start, i - start);
        if (key.empty()) throw err(line_no, "expected a key");
        skip_ws(line, i);
        if (i >= line.size() || line[i] != '=') throw err(line_no, "expected '=' after key");
        ++i;
        TomlValue value = parse_value(line, i, line_no);
        skip_ws(line, i);
        if (i < line.size() && line[i] != '#') throw err(line_no, "trailing text after value");
        if (section.empty()) throw err(line_no, "key outside any [section]");
        if (!doc.sections[section].emplace(key, std::move(value)).second)
            throw err(line_no, "duplicate key '" + key + "'");
    }
    return doc;
}

}  // namespace petc
