#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

namespace mdt {

/// Flat `name = value` text file. Blank lines and lines starting with '#' are ignored.
/// Doubles are written in shortest round-trip form, so save/load is bit-exact.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::istream& in);
    static KeyValueConfig load_file(const std::string& path);
    void write(std::ostream& out) const;
    void save_file(const std::string& path) const;

    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    std::optional<std::string> raw(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    void set_double(const std::string& key, double value);
    void set_int(const std::string& key, std::int64_t value);

    /// Copies every entry of `other` over this one.
    void merge(const KeyValueConfig& other);

    const std::map<std::string, std::string>& entries() const noexcept { return values_; }

private:
    std::map<std::string, std::string> values_;
};

std::string format_double(double value);
/// Strict parse of a whole string as a double; throws ValidationError.
double parse_double(const std::string& text, const std::string& what);

}  // namespace mdt
