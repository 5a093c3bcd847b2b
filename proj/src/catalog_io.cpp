#include "cilp/domain.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <variant>

namespace cilp {
namespace {

// The catalog format is a small TOML subset: top-level `key = value` pairs,
// then one `[[vm_type]]` table per type. Values are numbers, double-quoted
// strings, or flat arrays of numbers.
using Value = std::variant<double, std::string, std::vector<double>>;

struct Table {
    int line = 0;
    std::map<std::string, std::pair<Value, int>> entries;
};

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void fail(int line, const std::string& what) {
    throw ParseError("catalog line " + std::to_string(line) + ": " + what);
}

double parse_number(std::string_view s, int line) {
    s = trim(s);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) fail(line, "invalid number '" + std::string(s) + "'");
    return v;
}

std::string_view strip_comment(std::string_view s) {
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') in_string = !in_string;
        if (s[i] == '#' && !in_string) return s.substr(0, i);
    }
    return s;
}

Value parse_value(std::string_view s, int line) {
    s = trim(s);
    if (s.empty()) fail(line, "missing value");
    if (s.front() == '"') {
        if (s.size() < 2 || s.back() != '"') fail(line, "unterminated string");
        return std::string(s.substr(1, s.size() - 2));
    }
    if (s.front() == '[') {
        if (s.back() != ']') fail(line, "unterminated array");
        std::vector<double> values;
        auto body = trim(s.substr(1, s.size() - 2));
        while (!body.empty()) {
            const auto comma = body.find(',');
            values.push_back(parse_number(body.substr(0, comma), line));
            if (comma == std::string_view::npos) break;
            body = trim(body.substr(comma + 1));
        }
        return values;
    }
    return parse_number(s, line);
}

double number_field(const Table& t, const std::string& key) {
    auto it = t.entries.find(key);
    if (it == t.entries.end()) fail(t.line, "missing field '" + key + "'");
    if (auto* d = std::get_if<double>(&it->second.first)) return *d;
    fail(it->second.second, "field '" + key + "' must be a number");
}

}  // namespace

VmCatalog parse_catalog(std::string_view text) {
    Table globals;
    std::vector<Table> tables;
    Table* current = &globals;

    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        auto line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line == "[[vm_type]]") {
            tables.push_back(Table{line_no, {}});
            current = &tables.back();
            continue;
        }
        if (line.front() == '[') fail(line_no, "unknown table header '" + std::string(line) + "'");
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) fail(line_no, "expected 'key = value'");
        const std::string key(trim(line.substr(0, eq)));
        if (key.empty()) fail(line_no, "empty key");
        if (!current->entries.emplace(key, std::pair{parse_value(line.substr(eq + 1), line_no), line_no}).second) {
            fail(line_no, "duplicate key '" + key + "'");
        }
    }

    int max_hosts = VmCatalog::kDefaultMaxHosts;
    for (const auto& [key, entry] : globals.entries) {
        if (key != "max_hosts") fail(entry.second, "unknown top-level key '" + key + "'");
        max_hosts = static_cast<int>(number_field(globals, key));
    }

    static const std::vector<std::string> kKnown{
        "name", "cpu_ips", "ram_gb", "disk_gb", "cost_per_hour_usd", "provision_mean_s",
        "provision_std_s", "power_watts", "max_power_watts"};

    std::vector<VmType> types;
    for (const auto& t : tables) {
        for (const auto& [key, entry] : t.entries) {
            if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) {
                fail(entry.second, "unknown field '" + key + "'");
            }
        }
        VmType vm;
        auto name_it = t.entries.find("name");
        if (name_it == t.entries.end()) fail(t.line, "missing field 'name'");
        auto* name = std::get_if<std::string>(&name_it->second.first);
        if (name == nullptr) fail(name_it->second.second, "field 'name' must be a string");
        vm.name = *name;
        vm.cpu_ips = number_field(t, "cpu_ips");
        vm.ram_gb = number_field(t, "ram_gb");
        vm.disk_gb = number_field(t, "disk_gb");
        vm.cost_per_hour = number_field(t, "cost_per_hour_usd");
        vm.provision_delay = {number_field(t, "provision_mean_s"), number_field(t, "provision_std_s")};
        if (auto it = t.entries.find("power_watts"); it != t.entries.end()) {
            auto* arr = std::get_if<std::vector<double>>(&it->second.first);
            if (arr == nullptr || arr->size() != kPowerTablePoints) {
                fail(it->second.second, "field 'power_watts' must be an array of 11 numbers");
            }
            std::copy(arr->begin(), arr->end(), vm.power_watts.begin());
        } else if (t.entries.count("max_power_watts") != 0) {
            vm.power_watts = linear_power_table(number_field(t, "max_power_watts"));
        } else {
            fail(t.line, "missing field 'power_watts'");
        }
        types.push_back(std::move(vm));
    }
    return VmCatalog(std::move(types), max_hosts);
}

VmCatalog load_catalog(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open catalog file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_catalog(ss.str());
}

std::string serialize_catalog(const VmCatalog& catalog) {
    std::ostringstream out;
    out << "max_hosts = " << catalog.max_hosts() << "\n";
    for (const auto& t : catalog.types()) {
        out << "\n[[vm_type]]\n";
        out << "name = \"" << t->name << "\"\n";
        out << "cpu_ips = " << format_double(t->cpu_ips) << "\n";
        out << "ram_gb = " << format_double(t->ram_gb) << "\n";
        out << "disk_gb = " << format_double(t->disk_gb) << "\n";
        out << "cost_per_hour_usd = " << format_double(t->cost_per_hour) << "\n";
        out << "provision_mean_s = " << format_double(t->provision_delay.mean_s) << "\n";
        out << "provision_std_s = " << format_double(t->provision_delay.std_s) << "\n";
        out << "power_watts = [";
        for (std::size_t i = 0; i < kPowerTablePoints; ++i) {
            out << (i ? ", " : "") << format_double(t->power_watts[i]);
        }
        out << "]\n";
    }
    return out.str();
}

}  // namespace cilp
