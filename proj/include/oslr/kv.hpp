#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "oslr/errors.hpp"

namespace oslr {

// Flat "key = value" text with '#' comments. Insertion-ordered; later
// assignments overwrite earlier ones in place.
class KvMap {
  public:
    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    static KvMap parse(const std::string& text, const std::string& origin = "<string>") {
        KvMap kv;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            std::string t = trim(line);
            if (t.empty()) continue;
            size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw FormatError(origin + ":" + std::to_string(lineno) +
                                  ": expected key = value");
            std::string key = trim(t.substr(0, eq));
            std::string val = trim(t.substr(eq + 1));
            if (key.empty())
                throw FormatError(origin + ":" + std::to_string(lineno) + ": empty key");
            kv.set(key, val);
        }
        return kv;
    }

    static KvMap parse_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw FormatError("cannot open config file: " + path);
        std::stringstream buf;
        buf << f.rdbuf();
        return parse(buf.str(), path);
    }

    void set(const std::string& key, const std::string& value) {
        for (auto& kv : entries_)
            if (kv.first == key) {
                kv.second = value;
                return;
            }
        entries_.emplace_back(key, value);
    }

    bool has(const std::string& key) const {
        return std::any_of(entries_.begin(), entries_.end(),
                           [&](const auto& kv) { return kv.first == key; });
    }

    const std::string& get(const std::string& key) const {
        for (const auto& kv : entries_)
            if (kv.first == key) return kv.second;
        throw FormatError("missing config key: " + key);
    }

    std::string get_or(const std::string& key, const std::string& fallback) const {
        for (const auto& kv : entries_)
            if (kv.first == key) return kv.second;
        return fallback;
    }

    int64_t get_int(const std::string& key) const {
        try {
            return std::stoll(get(key));
        } catch (const std::logic_error&) {
            throw FormatError("config key " + key + " is not an integer: " + get(key));
        }
    }

    double get_double(const std::string& key) const {
        try {
            return std::stod(get(key));
        } catch (const std::logic_error&) {
            throw FormatError("config key " + key + " is not a number: " + get(key));
        }
    }

    bool get_bool(const std::string& key) const {
        const std::string& v = get(key);
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw FormatError("config key " + key + " is not a boolean: " + v);
    }

    std::vector<int> get_int_list(const std::string& key) const {
        std::vector<int> out;
        std::istringstream in(get(key));
        std::string item;
        while (std::getline(in, item, ',')) {
            std::string t = trim(item);
            if (t.empty()) continue;
            try {
                out.push_back(std::stoi(t));
            } catch (const std::logic_error&) {
                throw FormatError("config key " + key + " has a bad list entry: " + t);
            }
        }
        if (out.empty()) throw FormatError("config key " + key + " is an empty list");
        return out;
    }

    std::string to_text() const {
        std::string out;
        for (const auto& kv : entries_) out += kv.first + " = " + kv.second + "\n";
        return out;
    }

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

inline std::string int_list_to_string(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

} // namespace oslr
