#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lanegame {

// Minimal comma-separated reader: no quoting, '#' lines and blank lines skipped.
// Every data row must have exactly as many fields as the header.
class CsvReader {
public:
    explicit CsvReader(const std::filesystem::path& path);

    const std::vector<std::string>& header() const { return header_; }
    bool has_column(std::string_view name) const;
    // Throws DataError if the column is missing.
    std::size_t column(std::string_view name) const;
    void require_columns(const std::vector<std::string>& names) const;

    // Returns false at end of file.
    bool next();
    std::size_t line_number() const { return line_no_; }

    const std::string& field(std::size_t i) const { return fields_[i]; }
    const std::string& field(std::string_view name) const { return fields_[column(name)]; }
    double real(std::string_view name) const;
    std::int64_t integer(std::string_view name) const;
    // Empty field yields NaN.
    double real_or_nan(std::string_view name) const;

    [[noreturn]] void fail(const std::string& what) const;

private:
    std::filesystem::path path_;
    std::ifstream in_;
    std::vector<std::string> header_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::string> fields_;
    std::size_t line_no_ = 0;
};

std::vector<std::string> split(std::string_view line, char sep);

// Shortest representation that parses back to the same double.
std::string format_real(double v);

// Random streams derived from one master seed and a stream name.
std::mt19937_64 make_rng(std::uint64_t master_seed, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view stream);

std::string sha256_file(const std::filesystem::path& path);

// Write through a temporary file and rename, so readers never see partial output.
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace lanegame
