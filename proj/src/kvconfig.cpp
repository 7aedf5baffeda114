#include "mdatrack/kvconfig.hpp"

#include "mdatrack/errors.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <system_error>

namespace mdt {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    double v = 0.0;
    const char* begin = t.data();
    const char* end = t.data() + t.size();
    if (!t.empty() && *begin == '+') ++begin;
    const auto res = std::from_chars(begin, end, v);
    if (t.empty() || res.ec != std::errc() || res.ptr != end) {
        throw ValidationError("cannot parse '" + text + "' as a number for " + what);
    }
    return v;
}

KeyValueConfig KeyValueConfig::parse(std::istream& in) {
    KeyValueConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'name = value'", line_no);
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw ParseError("empty key", line_no);
        cfg.values_[key] = trim(t.substr(eq + 1));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file '" + path + "'");
    return parse(in);
}

void KeyValueConfig::write(std::ostream& out) const {
    for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
}

void KeyValueConfig::save_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write config file '" + path + "'");
    write(out);
}

std::optional<std::string> KeyValueConfig::raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    return raw(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    const auto v = raw(key);
    return v ? parse_double(*v, key) : fallback;
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    std::int64_t out = 0;
    const auto res = std::from_chars(v->data(), v->data() + v->size(), out);
    if (res.ec != std::errc() || res.ptr != v->data() + v->size()) {
        throw ValidationError("cannot parse '" + *v + "' as an integer for " + key);
    }
    return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ValidationError("cannot parse '" + *v + "' as a boolean for " + key);
}

void KeyValueConfig::set_double(const std::string& key, double value) { values_[key] = format_double(value); }

void KeyValueConfig::set_int(const std::string& key, std::int64_t value) { values_[key] = std::to_string(value); }

void KeyValueConfig::merge(const KeyValueConfig& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
}

}  // namespace mdt
