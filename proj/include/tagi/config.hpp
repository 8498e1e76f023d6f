#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace tagi::config {

// Invalid user input (bad config file, unknown key, malformed value, missing
// required argument). The CLI maps this to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Sectioned key = value configuration. Sections and keys are kept in sorted
// maps so rendering is canonical; values stay verbatim strings until typed
// accessors parse them.
class Config {
  public:
    bool has(const std::string& section, const std::string& key) const;
    void set(const std::string& section, const std::string& key, std::string value);

    // Typed accessors with defaults; malformed values throw UsageError naming
    // the offending section.key.
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    int get_int(const std::string& section, const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

  private:
    const std::string* find(const std::string& section, const std::string& key) const;
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

// Parse `key = value` lines with `[section]` headers; '#' and ';' start
// comments. Keys before any header land in [global]. Throws UsageError with
// a line number on malformed input.
Config parse_text(const std::string& text);
Config parse_file(const std::string& path);

// Reject unknown sections and unknown keys. Every section present must be
// [global] or a known subcommand section, and every key must belong to that
// section's whitelist (keys of inactive sections are checked too, so typos
// never pass silently).
void validate(const Config& config, const std::string& subcommand);

// Canonical rendering: sections and keys in sorted order, `key = value`
// lines, one blank line between sections.
std::string render(const Config& config);

}  // namespace tagi::config
