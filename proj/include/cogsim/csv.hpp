#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cogsim {

class csv_parse_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// In-memory comma-separated table. Cells are unquoted tokens (the cohort
// schema never contains embedded commas); an empty cell means missing.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line per row
};

CsvTable read_csv(const std::string& path);

// Shortest round-trip decimal representation (std::to_chars), so
// write -> parse -> write is a fixed point bit for bit.
std::string format_double(double value);
double parse_double(const std::string& cell, std::size_t line);
std::optional<double> parse_optional_double(const std::string& cell,
                                            std::size_t line);

}  // namespace cogsim
