#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cascade {

/// Shortest decimal form that round-trips to the same double.
std::string fmt_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

/// FNV-1a 64-bit hash; used for the config hash in run manifests.
uint64_t fnv1a64(const std::string& text);

// Minimal CSV reader: header row plus rows of string cells. Quoting is not
// needed by any of our schemas (no commas inside fields).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    int col(const std::string& name) const;  // -1 if absent
};
CsvTable read_csv(const std::string& path);

struct Manifest {
    std::map<std::string, std::string> entries;  // emitted in key order
    void set(const std::string& key, const std::string& value) { entries[key] = value; }
    std::string serialize() const;
    static Manifest parse(const std::string& text);
};

}  // namespace cascade
