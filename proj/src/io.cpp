#include "lanegame/io.hpp"

#include <charconv>
#include <cmath>
#include <array>
#include <limits>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "lanegame/types.hpp"

namespace lanegame {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t begin = 0;
    while (true) {
        auto pos = line.find(sep, begin);
        auto piece = line.substr(begin, pos == std::string_view::npos ? std::string_view::npos : pos - begin);
        out.emplace_back(trim(piece));
        if (pos == std::string_view::npos) break;
        begin = pos + 1;
    }
    return out;
}

CsvReader::CsvReader(const std::filesystem::path& path) : path_(path), in_(path) {
    if (!in_) throw DataError("cannot open " + path.string());
    std::string line;
    while (std::getline(in_, line)) {
        ++line_no_;
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        header_ = split(t, ',');
        break;
    }
    if (header_.empty()) throw DataError(path.string() + ": missing header");
    for (std::size_t i = 0; i < header_.size(); ++i) index_[header_[i]] = i;
}

bool CsvReader::has_column(std::string_view name) const { return index_.count(std::string(name)) > 0; }

std::size_t CsvReader::column(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw DataError(path_.string() + ": missing column '" + std::string(name) + "'");
    return it->second;
}

void CsvReader::require_columns(const std::vector<std::string>& names) const {
    for (const auto& n : names) column(n);
}

bool CsvReader::next() {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_no_;
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        fields_ = split(t, ',');
        if (fields_.size() != header_.size()) {
            fail("expected " + std::to_string(header_.size()) + " fields, got " + std::to_string(fields_.size()));
        }
        return true;
    }
    return false;
}

void CsvReader::fail(const std::string& what) const {
    throw DataError(path_.string() + ":" + std::to_string(line_no_) + ": " + what);
}

double CsvReader::real(std::string_view name) const {
    const auto& f = field(name);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || ptr != f.data() + f.size()) {
        // from_chars rejects "inf"/"nan" spellings used by some writers
        if (f == "inf") return std::numeric_limits<double>::infinity();
        if (f == "-inf") return -std::numeric_limits<double>::infinity();
        if (f == "nan") return std::numeric_limits<double>::quiet_NaN();
        fail("column '" + std::string(name) + "': not a number '" + f + "'");
    }
    return v;
}

double CsvReader::real_or_nan(std::string_view name) const {
    if (field(name).empty()) return std::numeric_limits<double>::quiet_NaN();
    return real(name);
}

std::int64_t CsvReader::integer(std::string_view name) const {
    const auto& f = field(name);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || ptr != f.data() + f.size()) {
        fail("column '" + std::string(name) + "': not an integer '" + f + "'");
    }
    return v;
}

std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return fmt::format("{}", v);
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(fnv1a(stream)), static_cast<std::uint32_t>(fnv1a(stream) >> 32)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::mt19937_64 make_rng(std::uint64_t master_seed, std::string_view stream) {
    return std::mt19937_64(derive_seed(master_seed, stream));
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md.data(), &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
    return hex;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace lanegame
