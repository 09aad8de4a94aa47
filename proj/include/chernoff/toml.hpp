#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace chernoff::toml {

// Strict parser for the TOML subset the experiment configs use: [table] and
// [[array-of-tables]] headers, bare/quoted keys, dotted keys, strings,
// numbers, booleans and (possibly nested, multi-line) arrays, '#' comments.
// Every value remembers its source line so validation can point at it.

struct Value;
using Table = std::map<std::string, Value>;

struct Value {
    enum class Kind { String, Float, Integer, Boolean, Array, Table };
    Kind kind = Kind::Table;
    std::string str;
    double num = 0.0;
    long long inum = 0;
    bool boolean = false;
    std::vector<Value> array;
    Table table;
    int line = 0;

    bool is_number() const { return kind == Kind::Float || kind == Kind::Integer; }
    double as_number() const { return kind == Kind::Integer ? static_cast<double>(inum) : num; }
};

struct ParseError : std::runtime_error {
    int line;
    ParseError(int line_, const std::string& msg) : std::runtime_error(msg), line(line_) {}
};

namespace detail_toml {

inline void skip_ws(const std::string& s, std::size_t& i) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
}

inline bool bare_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

inline std::string parse_basic_string(const std::string& s, std::size_t& i, int line) {
    std::string out;
    ++i;  // opening quote
    while (i < s.size() && s[i] != '"') {
        if (s[i] == '\\') {
            ++i;
            if (i >= s.size()) throw ParseError(line, "dangling escape in string");
            switch (s[i]) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default: throw ParseError(line, std::string("unsupported escape \\") + s[i]);
            }
        } else {
            out += s[i];
        }
        ++i;
    }
    if (i >= s.size()) throw ParseError(line, "unterminated string");
    ++i;  // closing quote
    return out;
}

inline std::vector<std::string> parse_key_path(const std::string& s, std::size_t& i, int line) {
    std::vector<std::string> path;
    while (true) {
        skip_ws(s, i);
        std::string part;
        if (i < s.size() && s[i] == '"') {
            part = parse_basic_string(s, i, line);
        } else {
            std::size_t start = i;
            while (i < s.size() && bare_key_char(s[i])) ++i;
            part = s.substr(start, i - start);
        }
        if (part.empty()) throw ParseError(line, "empty key");
        path.push_back(part);
        skip_ws(s, i);
        if (i < s.size() && s[i] == '.') {
            ++i;
            continue;
        }
        return path;
    }
}

inline Value parse_value(const std::string& s, std::size_t& i, int line);

inline Value parse_array(const std::string& s, std::size_t& i, int line) {
    Value v;
    v.kind = Value::Kind::Array;
    v.line = line;
    ++i;  // '['
    while (true) {
        skip_ws(s, i);
        if (i >= s.size()) throw ParseError(line, "unterminated array");
        if (s[i] == ']') {
            ++i;
            return v;
        }
        v.array.push_back(parse_value(s, i, line));
        skip_ws(s, i);
        if (i < s.size() && s[i] == ',') {
            ++i;
            continue;
        }
        if (i < s.size() && s[i] == ']') {
            ++i;
            return v;
        }
        throw ParseError(line, "expected ',' or ']' in array");
    }
}

inline Value parse_value(const std::string& s, std::size_t& i, int line) {
    skip_ws(s, i);
    if (i >= s.size()) throw ParseError(line, "missing value");
    Value v;
    v.line = line;
    const char c = s[i];
    if (c == '"') {
        v.kind = Value::Kind::String;
        v.str = parse_basic_string(s, i, line);
        return v;
    }
    if (c == '[') return parse_array(s, i, line);
    if (s.compare(i, 4, "true") == 0 && (i + 4 == s.size() || !bare_key_char(s[i + 4]))) {
        v.kind = Value::Kind::Boolean;
        v.boolean = true;
        i += 4;
        return v;
    }
    if (s.compare(i, 5, "false") == 0 && (i + 5 == s.size() || !bare_key_char(s[i + 5]))) {
        v.kind = Value::Kind::Boolean;
        v.boolean = false;
        i += 5;
        return v;
    }
    // number: scan to a delimiter, then try integer before float
    std::size_t start = i;
    while (i < s.size() && s[i] != ',' && s[i] != ']' && s[i] != ' ' && s[i] != '\t' && s[i] != '#') ++i;
    const std::string token = s.substr(start, i - start);
    if (token.empty()) throw ParseError(line, "missing value");
    try {
        std::size_t used = 0;
        if (token.find_first_of(".eE") == std::string::npos) {
            const long long iv = std::stoll(token, &used);
            if (used == token.size()) {
                v.kind = Value::Kind::Integer;
                v.inum = iv;
                return v;
            }
        }
        const double dv = std::stod(token, &used);
        if (used == token.size()) {
            v.kind = Value::Kind::Float;
            v.num = dv;
            return v;
        }
    } catch (const std::exception&) {
        // fall through to the error below
    }
    throw ParseError(line, "cannot parse value '" + token + "'");
}

/// Remove a '#' comment that is not inside a string.
inline std::string strip_comment(const std::string& s) {
    bool in_str = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_str = !in_str;
        if (s[i] == '#' && !in_str) return s.substr(0, i);
    }
    return s;
}

inline Table* descend(Table& root, const std::vector<std::string>& path, std::size_t upto, int line) {
    Table* cur = &root;
    for (std::size_t k = 0; k < upto; ++k) {
        Value& slot = (*cur)[path[k]];
        if (slot.kind == Value::Kind::Table && slot.table.empty() && slot.line == 0) slot.line = line;
        if (slot.kind == Value::Kind::Array) {
            if (slot.array.empty() || slot.array.back().kind != Value::Kind::Table)
                throw ParseError(line, "key '" + path[k] + "' is not a table");
            cur = &slot.array.back().table;
        } else if (slot.kind == Value::Kind::Table) {
            cur = &slot.table;
        } else {
            throw ParseError(line, "key '" + path[k] + "' is not a table");
        }
    }
    return cur;
}

}  // namespace detail_toml

inline Table parse_string(const std::string& text) {
    using namespace detail_toml;
    Table root;
    Table* current = &root;

    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    std::string pending;  // continuation buffer for multi-line arrays
    int pending_line = 0;

    while (std::getline(in, raw)) {
        ++line_no;
        std::string lineText = strip_comment(raw);

        if (!pending.empty()) {
            pending += " " + lineText;
            int depth = 0;
            bool in_str = false;
            for (char c : pending) {
                if (c == '"') in_str = !in_str;
                if (in_str) continue;
                if (c == '[') ++depth;
                if (c == ']') --depth;
            }
            if (depth > 0) continue;
            lineText = pending;
            pending.clear();
        }

        std::size_t i = 0;
        skip_ws(lineText, i);
        if (i >= lineText.size()) continue;

        if (lineText[i] == '[') {
            const bool array_table = i + 1 < lineText.size() && lineText[i + 1] == '[';
            i += array_table ? 2 : 1;
            std::vector<std::string> path = parse_key_path(lineText, i, line_no);
            skip_ws(lineText, i);
            if (array_table) {
                if (lineText.compare(i, 2, "]]") != 0) throw ParseError(line_no, "expected ']]'");
                i += 2;
            } else {
                if (i >= lineText.size() || lineText[i] != ']') throw ParseError(line_no, "expected ']'");
                ++i;
            }
            skip_ws(lineText, i);
            if (i != lineText.size()) throw ParseError(line_no, "trailing characters after table header");

            Table* parent = descend(root, path, path.size() - 1, line_no);
            Value& slot = (*parent)[path.back()];
            if (array_table) {
                if (slot.kind == Value::Kind::Table && slot.table.empty() && slot.line == 0) {
                    slot.kind = Value::Kind::Array;
                }
                if (slot.kind != Value::Kind::Array)
                    throw ParseError(line_no, "'" + path.back() + "' is already a non-array value");
                Value elem;
                elem.kind = Value::Kind::Table;
                elem.line = line_no;
                slot.array.push_back(std::move(elem));
                slot.line = slot.line ? slot.line : line_no;
                current = &slot.array.back().table;
            } else {
                if (slot.kind != Value::Kind::Table) throw ParseError(line_no, "'" + path.back() + "' is already defined");
                if (slot.line == 0) slot.line = line_no;
                current = &slot.table;
            }
            continue;
        }

        // key = value (arrays may continue over subsequent lines)
        std::vector<std::string> path = parse_key_path(lineText, i, line_no);
        skip_ws(lineText, i);
        if (i >= lineText.size() || lineText[i] != '=') throw ParseError(line_no, "expected '=' after key");
        ++i;
        skip_ws(lineText, i);
        if (i < lineText.size() && lineText[i] == '[') {
            int depth = 0;
            bool in_str = false;
            for (std::size_t k = i; k < lineText.size(); ++k) {
                char c = lineText[k];
                if (c == '"') in_str = !in_str;
                if (in_str) continue;
                if (c == '[') ++depth;
                if (c == ']') --depth;
            }
            if (depth > 0) {
                pending = lineText;
                pending_line = line_no;
                continue;
            }
        }
        Value v = parse_value(lineText, i, pending_line ? pending_line : line_no);
        pending_line = 0;
        skip_ws(lineText, i);
        if (i != lineText.size()) throw ParseError(line_no, "trailing characters after value");

        Table* parent = detail_toml::descend(*current, path, path.size() - 1, line_no);
        if (parent->count(path.back())) throw ParseError(line_no, "duplicate key '" + path.back() + "'");
        (*parent)[path.back()] = std::move(v);
    }
    if (!pending.empty()) throw ParseError(pending_line, "unterminated array");
    return root;
}

inline Table parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str());
}

// ---------------------------------------------------------------------------
// canonical serialization + FNV-1a hash; std::map keeps keys sorted, so the
// hash is stable under key reordering in the source file

namespace detail_toml {

inline void canonical(const Value& v, std::string& out) {
    switch (v.kind) {
        case Value::Kind::String: out += "s:" + v.str + ";"; break;
        case Value::Kind::Float: {
            char buf[40];
            std::snprintf(buf, sizeof buf, "f:%.17g;", v.num);
            out += buf;
            break;
        }
        case Value::Kind::Integer: out += "i:" + std::to_string(v.inum) + ";"; break;
        case Value::Kind::Boolean: out += v.boolean ? "b:1;" : "b:0;"; break;
        case Value::Kind::Array:
            out += "a[";
            for (const auto& e : v.array) canonical(e, out);
            out += "];";
            break;
        case Value::Kind::Table:
            out += "t{";
            for (const auto& [k, e] : v.table) {
                out += k + "=";
                canonical(e, out);
            }
            out += "};";
            break;
    }
}

}  // namespace detail_toml

inline std::uint64_t config_hash(const Table& t) {
    Value root;
    root.kind = Value::Kind::Table;
    root.table = t;
    std::string s;
    detail_toml::canonical(root, s);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace chernoff::toml
