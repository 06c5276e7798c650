#pragma once

#include <initializer_list>
#include <set>
#include <string>
#include <vector>

#include "app.hpp"

namespace heatprobe::app {

/// Typed reader over one JSON object. Every accessor marks its key as
/// known; finish() rejects whatever is left. Errors name the JSON pointer.
class Fields {
public:
    Fields(const Json& obj, std::string pointer);

    bool has(const std::string& key) const;
    double number(const std::string& key, double def) const;
    double number(const std::string& key) const;  // required
    long long integer(const std::string& key, long long def, long long lo, long long hi) const;
    std::size_t count(const std::string& key, std::size_t def, std::size_t lo = 1) const;
    bool boolean(const std::string& key, bool def) const;
    std::string text(const std::string& key, const std::string& def,
                     std::initializer_list<const char*> allowed = {}) const;
    std::vector<double> numbers(const std::string& key, std::vector<double> def) const;
    std::vector<std::string> texts(const std::string& key, std::vector<std::string> def) const;
    /// Nested object (empty object when absent).
    Fields object(const std::string& key) const;
    /// Raw value; null when absent.
    const Json& raw(const std::string& key) const;
    std::string where(const std::string& key) const { return pointer_ + "/" + key; }

    /// Throws SchemaError listing keys never read.
    void finish() const;

    [[noreturn]] void fail(const std::string& key, const std::string& what) const;

private:
    const Json* obj_;
    std::string pointer_;
    mutable std::set<std::string> seen_;
};

}  // namespace heatprobe::app
