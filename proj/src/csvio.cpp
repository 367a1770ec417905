#include "cascade/csvio.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "cascade/errors.hpp"

namespace cascade {

std::string fmt_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write file: " + path);
    out << content;
}

uint64_t fnv1a64(const std::string& text) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

int CsvTable::col(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

CsvTable read_csv(const std::string& path) {
    const std::string text = read_text_file(path);
    CsvTable t;
    size_t pos = 0;
    bool first = true;
    while (pos < text.size()) {
        size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::vector<std::string> cells;
        size_t p = pos;
        while (p <= nl) {
            size_t comma = text.find(',', p);
            if (comma == std::string::npos || comma > nl) comma = nl;
            cells.emplace_back(text.substr(p, comma - p));
            p = comma + 1;
            if (comma == nl) break;
        }
        if (!(cells.size() == 1 && cells[0].empty())) {
            if (first) {
                t.header = std::move(cells);
                first = false;
            } else {
                t.rows.push_back(std::move(cells));
            }
        }
        pos = nl + 1;
    }
    return t;
}

std::string Manifest::serialize() const {
    std::string out;
    for (const auto& [k, v] : entries) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    }
    return out;
}

Manifest Manifest::parse(const std::string& text) {
    Manifest m;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        const std::string line = text.substr(pos, nl - pos);
        const size_t eq = line.find(" = ");
        if (eq != std::string::npos)
            m.entries[line.substr(0, eq)] = line.substr(eq + 3);
        pos = nl + 1;
    }
    return m;
}

}  // namespace cascade
