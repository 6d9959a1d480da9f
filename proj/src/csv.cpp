#include "cogsim/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

namespace cogsim {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    if (!cells.empty() && !cells.back().empty() && cells.back().back() == '\r') {
        cells.back().pop_back();
    }
    return cells;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw csv_parse_error("cannot open file: " + path);
    }
    CsvTable table;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line_number == 1) {
            table.header = split_line(line);
            continue;
        }
        if (line.empty()) {
            continue;
        }
        auto cells = split_line(line);
        if (cells.size() != table.header.size()) {
            throw csv_parse_error(path + ": line " +
                                  std::to_string(line_number) + " has " +
                                  std::to_string(cells.size()) +
                                  " cells, header has " +
                                  std::to_string(table.header.size()));
        }
        table.rows.push_back(std::move(cells));
        table.line_numbers.push_back(line_number);
    }
    if (table.header.empty()) {
        throw csv_parse_error(path + ": empty file, no header row");
    }
    return table;
}

std::string format_double(double value) {
    if (std::isnan(value)) {
        return "nan";
    }
    if (std::isinf(value)) {
        return value > 0 ? "inf" : "-inf";
    }
    char buf[40];
    auto result = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, result.ptr);
}

double parse_double(const std::string& cell, std::size_t line) {
    if (cell == "inf") {
        return std::numeric_limits<double>::infinity();
    }
    if (cell == "-inf") {
        return -std::numeric_limits<double>::infinity();
    }
    double value = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto result = std::from_chars(begin, end, value);
    if (result.ec != std::errc{} || result.ptr != end) {
        throw csv_parse_error("line " + std::to_string(line) +
                              ": not a number: '" + cell + "'");
    }
    return value;
}

std::optional<double> parse_optional_double(const std::string& cell,
                                            std::size_t line) {
    if (cell.empty()) {
        return std::nullopt;
    }
    return parse_double(cell, line);
}

}  // namespace cogsim
