#include "tagi/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace tagi::config {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

[[noreturn]] void bad_value(const std::string& section, const std::string& key,
                            const std::string& value, const char* want) {
    throw UsageError("config: " + section + "." + key + " = '" + value + "' is not a valid " +
                     want);
}

const std::map<std::string, std::vector<std::string>>& whitelist() {
    static const std::map<std::string, std::vector<std::string>> table = {
        {"global", {"seed", "output_dir", "model_path", "threads"}},
        {"train",
         {"dataset_kind", "dataset", "labels", "subset", "toy_n", "arch", "epochs", "sigma_v",
          "batch"}},
        {"optimize", {"x0", "alpha", "epochs", "sigma_x0", "sigma_v", "toy_n", "arch"}},
        {"attack",
         {"dataset", "labels", "subset", "sigma_x", "max_epochs", "early_stop", "sigma_v",
          "step_cap", "per_image_csv"}},
        {"rl",
         {"env", "horizon", "sigma_v0", "decay", "sigma_v_min", "gamma", "batch", "epochs",
          "max_steps", "signed_action_step"}},
        {"oracle", {"sets", "samples", "mutate"}},
    };
    return table;
}

}  // namespace

bool Config::has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
}

void Config::set(const std::string& section, const std::string& key, std::string value) {
    sections_[section][key] = std::move(value);
}

const std::string* Config::find(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
}

std::string Config::get(const std::string& section, const std::string& key,
                        const std::string& fallback) const {
    const std::string* v = find(section, key);
    return v ? *v : fallback;
}

double Config::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
    const std::string* v = find(section, key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        const double d = std::stod(*v, &used);
        if (used != v->size()) bad_value(section, key, *v, "number");
        return d;
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception&) {
        bad_value(section, key, *v, "number");
    }
}

int Config::get_int(const std::string& section, const std::string& key, int fallback) const {
    const std::string* v = find(section, key);
    if (!v) return fallback;
    int out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) bad_value(section, key, *v, "integer");
    return out;
}

std::uint64_t Config::get_u64(const std::string& section, const std::string& key,
                              std::uint64_t fallback) const {
    const std::string* v = find(section, key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) {
        bad_value(section, key, *v, "unsigned integer");
    }
    return out;
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    const std::string* v = find(section, key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    bad_value(section, key, *v, "boolean");
}

Config parse_text(const std::string& text) {
    Config config;
    std::istringstream in(text);
    std::string line, section = "global";
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const std::size_t hash = line.find_first_of("#;"); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw UsageError("config: malformed section header at line " +
                                 std::to_string(line_no));
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) {
                throw UsageError("config: empty section name at line " + std::to_string(line_no));
            }
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config: expected key = value at line " + std::to_string(line_no));
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw UsageError("config: empty key at line " + std::to_string(line_no));
        }
        config.set(section, key, value);
    }
    return config;
}

Config parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

void validate(const Config& config, const std::string& subcommand) {
    const auto& table = whitelist();
    if (table.find(subcommand) == table.end()) {
        throw UsageError("config: unknown subcommand '" + subcommand + "'");
    }
    for (const auto& [section, keys] : config.sections()) {
        const auto entry = table.find(section);
        if (entry == table.end()) {
            throw UsageError("config: unknown section [" + section + "]");
        }
        for (const auto& [key, value] : keys) {
            (void)value;
            const auto& allowed = entry->second;
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
                throw UsageError("config: unknown key '" + key + "' in section [" + section +
                                 "]");
            }
        }
    }
}

std::string render(const Config& config) {
    std::string out;
    bool first = true;
    for (const auto& [section, keys] : config.sections()) {
        if (keys.empty()) continue;
        if (!first) out += "\n";
        first = false;
        out += "[" + section + "]\n";
        for (const auto& [key, value] : keys) {
            out += key + " = " + value + "\n";
        }
    }
    return out;
}

}  // namespace tagi::config
