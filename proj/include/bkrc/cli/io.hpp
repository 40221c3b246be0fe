#pragma once

// Persistence formats: binary trajectory files, CSV tables and plain PGM heatmaps.
//
// Trajectory file layout (all little-endian):
//   char[4] magic "BKRC" | u32 version (1) | u32 nx | u32 ny | u32 n_vars (2)
//   | u64 n_steps | f64 dt | u64 config hash | f64 samples...
// Samples are time-major; within a step all U values (row-major) then all V values.

#include "../error.hpp"
#include "../field.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bkrc::cli {

inline constexpr char trajectory_magic[4] = {'B', 'K', 'R', 'C'};
inline constexpr std::uint32_t trajectory_version = 1;
inline constexpr std::size_t trajectory_header_bytes = 4 + 4 * 4 + 8 + 8 + 8;

struct trajectory_header {
    std::uint32_t version = trajectory_version;
    std::uint32_t nx = 0;
    std::uint32_t ny = 0;
    std::uint32_t n_vars = 2;
    std::uint64_t n_steps = 0;
    double dt = 0.01;
    std::uint64_t config_hash = 0;

    std::uint64_t payload_bytes() const noexcept
    {
        return static_cast<std::uint64_t>(nx) * ny * n_vars * n_steps * sizeof(double);
    }

    friend bool operator==(const trajectory_header&, const trajectory_header&) = default;
};

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
void put_le(std::string& buf, T value)
{
    static_assert(std::is_trivially_copyable_v<T> && (sizeof(T) == 4 || sizeof(T) == 8));
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
    buf.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(const unsigned char* p)
{
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

inline void ensure_parent(const std::filesystem::path& path)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

inline void write_bytes(const std::filesystem::path& path, std::string_view data)
{
    ensure_parent(path);
    std::ofstream out{path, std::ios::binary | std::ios::trunc};
    if (!out) throw io_error{"cannot open '" + path.string() + "' for writing"};
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw io_error{"write to '" + path.string() + "' failed"};
}

}  // namespace detail

/// Writes `states` (all of one shape) with the given step size and config hash.
inline void write_trajectory(const std::filesystem::path& path, std::span<const field_pair> states, double dt,
                             std::uint64_t config_hash)
{
    if (states.empty()) throw invalid_argument{"write_trajectory: no states"};
    const std::size_t nx = states.front().nx(), ny = states.front().ny();
    for (const auto& s : states)
        if (s.nx() != nx || s.ny() != ny) throw dimension_error{"write_trajectory: states differ in shape"};

    detail::ensure_parent(path);
    std::ofstream out{path, std::ios::binary | std::ios::trunc};
    if (!out) throw io_error{"cannot open '" + path.string() + "' for writing"};

    std::string buf;
    buf.append(trajectory_magic, 4);
    detail::put_le(buf, trajectory_version);
    detail::put_le(buf, static_cast<std::uint32_t>(nx));
    detail::put_le(buf, static_cast<std::uint32_t>(ny));
    detail::put_le(buf, std::uint32_t{2});
    detail::put_le(buf, static_cast<std::uint64_t>(states.size()));
    detail::put_le(buf, dt);
    detail::put_le(buf, config_hash);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));

    for (const auto& s : states) {
        buf.clear();
        for (double x : s.u.values()) detail::put_le(buf, x);
        for (double x : s.v.values()) detail::put_le(buf, x);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw io_error{"write to '" + path.string() + "' failed"};
}

struct trajectory_data {
    trajectory_header header;
    trajectory states;
};

inline trajectory_header read_trajectory_header(std::istream& in, const std::string& name)
{
    unsigned char raw[trajectory_header_bytes];
    if (!in.read(reinterpret_cast<char*>(raw), sizeof raw))
        throw io_error{"'" + name + "' is too short for a trajectory header"};
    if (std::memcmp(raw, trajectory_magic, 4) != 0) throw io_error{"'" + name + "' is not a trajectory file"};
    trajectory_header h;
    h.version = detail::get_le<std::uint32_t>(raw + 4);
    h.nx = detail::get_le<std::uint32_t>(raw + 8);
    h.ny = detail::get_le<std::uint32_t>(raw + 12);
    h.n_vars = detail::get_le<std::uint32_t>(raw + 16);
    h.n_steps = detail::get_le<std::uint64_t>(raw + 20);
    h.dt = detail::get_le<double>(raw + 28);
    h.config_hash = detail::get_le<std::uint64_t>(raw + 36);
    if (h.version != trajectory_version)
        throw io_error{"'" + name + "': unsupported trajectory version " + std::to_string(h.version)};
    if (h.n_vars != 2) throw io_error{"'" + name + "': expected 2 variables"};
    return h;
}

inline trajectory_data read_trajectory(const std::filesystem::path& path)
{
    std::ifstream in{path, std::ios::binary};
    if (!in) throw io_error{"cannot open '" + path.string() + "'"};
    trajectory_data d;
    d.header = read_trajectory_header(in, path.string());

    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec || size != trajectory_header_bytes + d.header.payload_bytes())
        throw io_error{"'" + path.string() + "': payload size does not match the header"};

    const std::size_t n = std::size_t{d.header.nx} * d.header.ny;
    std::vector<unsigned char> raw(2 * n * sizeof(double));
    d.states.reserve(d.header.n_steps);
    for (std::uint64_t t = 0; t < d.header.n_steps; ++t) {
        if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
            throw io_error{"'" + path.string() + "': truncated payload"};
        field_pair s{d.header.nx, d.header.ny};
        for (std::size_t k = 0; k < n; ++k) {
            s.u[k] = detail::get_le<double>(raw.data() + k * 8);
            s.v[k] = detail::get_le<double>(raw.data() + (n + k) * 8);
        }
        d.states.push_back(std::move(s));
    }
    return d;
}

// ---------------------------------------------------------------------------
// CSV

/// Shortest round-trip decimal representation.
inline std::string format_double(double x)
{
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

/// CSV table with a fixed column schema; the first line carries the config hash.
class csv_table {
public:
    csv_table(std::vector<std::string> columns, std::string config_hash)
      : columns_{std::move(columns)}, hash_{std::move(config_hash)}
    {
    }

    class row_builder {
    public:
        explicit row_builder(csv_table& t) : t_{t} {}
        row_builder& operator<<(const std::string& s) { return add(s); }
        row_builder& operator<<(const char* s) { return add(s); }
        row_builder& operator<<(std::string_view s) { return add(std::string{s}); }
        row_builder& operator<<(double x) { return add(format_double(x)); }
        row_builder& operator<<(bool b) { return add(b ? "1" : "0"); }
        template <class I>
            requires std::is_integral_v<I>
        row_builder& operator<<(I x)
        {
            return add(std::to_string(x));
        }
        ~row_builder() noexcept(false)
        {
            if (std::uncaught_exceptions() == 0) t_.commit(std::move(cells_));
        }

    private:
        row_builder& add(std::string s)
        {
            cells_.push_back(std::move(s));
            return *this;
        }
        csv_table& t_;
        std::vector<std::string> cells_;
    };

    /// Usage: table.row() << a << b << c;
    row_builder row() { return row_builder{*this}; }

    std::size_t rows() const noexcept { return rows_.size(); }
    const std::vector<std::string>& columns() const noexcept { return columns_; }

    std::string str() const
    {
        std::string s = "# config_hash=" + hash_ + "\n";
        s += join(columns_);
        for (const auto& r : rows_) s += join(r);
        return s;
    }

    void write(const std::filesystem::path& path) const { detail::write_bytes(path, str()); }

private:
    void commit(std::vector<std::string> cells)
    {
        if (cells.size() != columns_.size())
            throw dimension_error{"csv: row has " + std::to_string(cells.size()) + " cells, schema has "
                                  + std::to_string(columns_.size())};
        rows_.push_back(std::move(cells));
    }

    static std::string join(const std::vector<std::string>& cells)
    {
        std::string s;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) s += ',';
            const bool quote = cells[i].find_first_of(",\"\n") != std::string::npos;
            if (!quote) {
                s += cells[i];
                continue;
            }
            s += '"';
            for (char ch : cells[i]) {
                if (ch == '"') s += '"';
                s += ch;
            }
            s += '"';
        }
        return s + "\n";
    }

    std::vector<std::string> columns_;
    std::string hash_;
    std::vector<std::vector<std::string>> rows_;
};

// ---------------------------------------------------------------------------
// Heatmaps

/// Plain (P2) 8-bit graymap text; [lo, hi] maps linearly to [0, 255], clamped.
/// Image rows follow storage rows (row 0 is j = 0).
inline std::string heatmap_pgm(const grid2d& g, double lo, double hi, std::string_view comment = {})
{
    if (!(lo < hi)) throw invalid_argument{"render_heatmap: need lo < hi"};
    if (!g.all_finite()) throw invalid_argument{"render_heatmap: field contains non-finite values"};
    std::string s = "P2\n";
    if (!comment.empty()) s += "# " + std::string{comment} + "\n";
    s += std::to_string(g.nx()) + " " + std::to_string(g.ny()) + "\n255\n";
    for (std::size_t j = 0; j < g.ny(); ++j) {
        for (std::size_t i = 0; i < g.nx(); ++i) {
            const double t = std::clamp((g(i, j) - lo) / (hi - lo), 0.0, 1.0);
            s += std::to_string(static_cast<int>(std::lround(255.0 * t)));
            s += i + 1 == g.nx() ? '\n' : ' ';
        }
    }
    return s;
}

inline void render_heatmap(const grid2d& g, double lo, double hi, const std::filesystem::path& path,
                           std::string_view comment = {})
{
    detail::write_bytes(path, heatmap_pgm(g, lo, hi, comment));
}

/// Pixel values of a plain PGM produced by heatmap_pgm, in file order.
inline std::vector<int> read_pgm_pixels(const std::string& text)
{
    std::vector<int> tokens;
    std::size_t pos = 0;
    bool magic = false;
    while (pos < text.size()) {
        if (text[pos] == '#') {
            pos = text.find('\n', pos);
            if (pos == std::string::npos) break;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(text[pos]))) {
            ++pos;
            continue;
        }
        const std::size_t end = text.find_first_of(" \t\r\n", pos);
        const std::string tok = text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        pos = end == std::string::npos ? text.size() : end;
        if (!magic) {
            if (tok != "P2") throw io_error{"not a plain PGM"};
            magic = true;
            continue;
        }
        tokens.push_back(std::stoi(tok));
    }
    if (tokens.size() < 3) throw io_error{"truncated PGM"};
    return {tokens.begin() + 3, tokens.end()};
}

}  // namespace bkrc::cli
