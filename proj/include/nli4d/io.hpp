#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nli4d {

// Write to a sibling temporary and rename, so readers never see a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os)
            throw std::runtime_error("cannot write " + tmp.string());
        os << content;
        if (!os)
            throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

struct CsvTable {
    std::vector<std::string> comments; // leading '#' lines, without the '#'
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    size_t column(const std::string& name) const
    {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name)
                return i;
        throw std::out_of_range("no CSV column '" + name + "'");
    }
    double num(size_t row, const std::string& col) const { return std::stod(rows.at(row).at(column(col))); }
};

// Minimal reader for the unquoted CSV this library emits.
inline CsvTable parse_csv(const std::string& text)
{
    CsvTable t;
    std::istringstream is(text);
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream ls(s);
        while (std::getline(ls, cell, ','))
            out.push_back(cell);
        if (!s.empty() && s.back() == ',')
            out.emplace_back();
        return out;
    };
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        if (line[0] == '#') {
            t.comments.push_back(line.substr(1));
            continue;
        }
        if (t.header.empty())
            t.header = split(line);
        else
            t.rows.push_back(split(line));
    }
    return t;
}

inline std::string read_file(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw std::runtime_error("cannot read " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

} // namespace nli4d
