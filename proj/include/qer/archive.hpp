#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "qer/eigensolver.hpp"
#include "qer/error.hpp"
#include "qer/trace.hpp"

namespace qer {

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
        throw std::runtime_error("archive: SHA-256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int k = 0; k < len; ++k) {
        out += hex[md[k] >> 4];
        out += hex[md[k] & 15];
    }
    return out;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DomainError("archive", "cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DomainError("archive", "cannot write " + p.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string file_sha256(const std::filesystem::path& p) { return sha256_hex(read_file(p)); }

// ---------------------------------------------------------------------------
// Binary containers
// ---------------------------------------------------------------------------
//
// All integers and doubles are little-endian native layout. A string is a
// u32 byte count followed by the bytes.
//
// Mode archive:
//   "QERMODES" u32 version
//   str domain_echo  f64 delta  f64 x0  f64 y0  i32 nx  i32 ny
//   u32 count, then per mode:
//   i32 id  f64 lambda2  f64 h  f64 rho  u8 complex  u64 n  f64[n] re  [f64[n] im]
//
// Trace archive (keyed by curve hash):
//   "QERTRACE" u32 version
//   str domain_echo  str curve_echo  str curve_hash
//   u32 count, then per trace:
//   i32 mode_id  f64 h  f64 length  u8 closed  u32 n  f64[n] s
//   f64[2n] dirichlet (re, im interleaved)  f64[2n] neumann

constexpr std::uint32_t kArchiveVersion = 1;

namespace detail {

class Writer {
public:
    template <typename T>
    void put(T v) {
        buf_.append(reinterpret_cast<const char*>(&v), sizeof v);
    }
    void put_str(const std::string& s) {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        buf_ += s;
    }
    void put_raw(const char* p, std::size_t n) { buf_.append(p, n); }
    void put_doubles(const double* p, std::size_t n) { put_raw(reinterpret_cast<const char*>(p), n * sizeof(double)); }
    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(std::string bytes, std::string what) : buf_(std::move(bytes)), what_(std::move(what)) {}
    template <typename T>
    T get() {
        T v;
        need(sizeof v);
        std::memcpy(&v, buf_.data() + pos_, sizeof v);
        pos_ += sizeof v;
        return v;
    }
    std::string get_str() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void get_doubles(double* p, std::size_t n) {
        need(n * sizeof(double));
        std::memcpy(p, buf_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
    }
    void expect_magic(const char* magic) {
        need(8);
        if (buf_.compare(pos_, 8, magic) != 0) throw DomainError("archive", what_ + ": bad magic header");
        pos_ += 8;
        const auto v = get<std::uint32_t>();
        if (v != kArchiveVersion)
            throw DomainError("archive", what_ + ": unsupported version " + std::to_string(v));
    }
    bool done() const { return pos_ == buf_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) throw DomainError("archive", what_ + ": truncated file");
    }
    std::string buf_;
    std::string what_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_modes(const std::string& domain_echo, const std::vector<EigenMode>& modes,
                                const Grid& grid) {
    detail::Writer w;
    w.put_raw("QERMODES", 8);
    w.put<std::uint32_t>(kArchiveVersion);
    w.put_str(domain_echo);
    w.put<double>(grid.delta());
    w.put<double>(grid.x0());
    w.put<double>(grid.y0());
    w.put<std::int32_t>(grid.nx());
    w.put<std::int32_t>(grid.ny());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(modes.size()));
    for (const auto& m : modes) {
        if (!m.field) throw DomainError("archive", "only grid modes can be archived");
        const auto& f = *m.field;
        if (static_cast<std::size_t>(f.real().size()) != grid.size())
            throw DomainError("archive", "mode field does not match the archive grid");
        w.put<std::int32_t>(m.id);
        w.put<double>(m.lambda2);
        w.put<double>(m.h);
        w.put<double>(m.residual);
        w.put<std::uint8_t>(f.is_real() ? 0 : 1);
        w.put<std::uint64_t>(static_cast<std::uint64_t>(f.real().size()));
        w.put_doubles(f.real().data(), static_cast<std::size_t>(f.real().size()));
        if (!f.is_real()) w.put_doubles(f.imag().data(), static_cast<std::size_t>(f.imag().size()));
    }
    return w.bytes();
}

// Decodes a mode archive onto `grid`, which must be the grid the archive was
// written from (rebuilt from the domain and spacing).
inline std::vector<EigenMode> decode_modes(const std::string& bytes, const std::string& domain_echo,
                                           std::shared_ptr<const Grid> grid, const std::string& what = "mode archive") {
    detail::Reader r(bytes, what);
    r.expect_magic("QERMODES");
    const std::string echo = r.get_str();
    if (echo != domain_echo)
        throw DomainError("archive", what + " belongs to domain '" + echo + "', expected '" + domain_echo + "'");
    const double delta = r.get<double>(), x0 = r.get<double>(), y0 = r.get<double>();
    const int nx = r.get<std::int32_t>(), ny = r.get<std::int32_t>();
    if (delta != grid->delta() || x0 != grid->x0() || y0 != grid->y0() || nx != grid->nx() || ny != grid->ny())
        throw DomainError("archive", what + ": grid metadata does not match");
    const auto count = r.get<std::uint32_t>();
    std::vector<EigenMode> modes;
    modes.reserve(count);
    for (std::uint32_t k = 0; k < count; ++k) {
        EigenMode m;
        m.id = r.get<std::int32_t>();
        m.lambda2 = r.get<double>();
        m.h = r.get<double>();
        m.residual = r.get<double>();
        const bool cplx_field = r.get<std::uint8_t>() != 0;
        const auto n = r.get<std::uint64_t>();
        if (n != grid->size()) throw DomainError("archive", what + ": sample count does not match the grid");
        Eigen::VectorXd re(static_cast<Eigen::Index>(n)), im;
        r.get_doubles(re.data(), n);
        if (cplx_field) {
            im.resize(static_cast<Eigen::Index>(n));
            r.get_doubles(im.data(), n);
        }
        m.field = GridField(grid, std::move(re), std::move(im));
        modes.push_back(std::move(m));
    }
    if (!r.done()) throw DomainError("archive", what + ": trailing bytes");
    return modes;
}

inline std::string encode_traces(const std::string& domain_echo, const std::string& curve_echo,
                                 const std::vector<CauchyTrace>& traces) {
    detail::Writer w;
    w.put_raw("QERTRACE", 8);
    w.put<std::uint32_t>(kArchiveVersion);
    w.put_str(domain_echo);
    w.put_str(curve_echo);
    w.put_str(sha256_hex(curve_echo));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(traces.size()));
    for (const auto& t : traces) {
        w.put<std::int32_t>(t.mode_id);
        w.put<double>(t.h);
        w.put<double>(t.length);
        w.put<std::uint8_t>(t.closed ? 1 : 0);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(t.size()));
        w.put_doubles(t.s.data(), t.s.size());
        w.put_doubles(reinterpret_cast<const double*>(t.dirichlet.data()), 2 * t.s.size());
        w.put_doubles(reinterpret_cast<const double*>(t.neumann.data()), 2 * t.s.size());
    }
    return w.bytes();
}

inline std::vector<CauchyTrace> decode_traces(const std::string& bytes, const std::string& domain_echo,
                                              const std::string& curve_echo,
                                              const std::string& what = "trace archive") {
    detail::Reader r(bytes, what);
    r.expect_magic("QERTRACE");
    const std::string d = r.get_str(), c = r.get_str(), hash = r.get_str();
    if (d != domain_echo) throw DomainError("archive", what + " belongs to domain '" + d + "'");
    if (c != curve_echo || hash != sha256_hex(curve_echo))
        throw DomainError("archive", what + " belongs to curve '" + c + "'");
    const auto count = r.get<std::uint32_t>();
    std::vector<CauchyTrace> out;
    out.reserve(count);
    for (std::uint32_t k = 0; k < count; ++k) {
        CauchyTrace t;
        t.mode_id = r.get<std::int32_t>();
        t.h = r.get<double>();
        t.length = r.get<double>();
        t.closed = r.get<std::uint8_t>() != 0;
        const auto n = r.get<std::uint32_t>();
        t.s.resize(n);
        t.dirichlet.resize(n);
        t.neumann.resize(n);
        r.get_doubles(t.s.data(), n);
        r.get_doubles(reinterpret_cast<double*>(t.dirichlet.data()), 2 * n);
        r.get_doubles(reinterpret_cast<double*>(t.neumann.data()), 2 * n);
        out.push_back(std::move(t));
    }
    if (!r.done()) throw DomainError("archive", what + ": trailing bytes");
    return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

// Quotes cells holding commas or quotes.
inline std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// CSV text: an optional '#' provenance line, a header, then rows.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header, std::string tag = {})
        : header_(std::move(header)), tag_(std::move(tag)) {}

    CsvTable& row(std::vector<std::string> cells) {
        if (cells.size() != header_.size()) throw std::logic_error("csv row width mismatch");
        rows_.push_back(std::move(cells));
        return *this;
    }

    std::string str() const {
        std::string out;
        if (!tag_.empty()) out += "# " + tag_ + "\n";
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t k = 0; k < cells.size(); ++k) out += (k ? "," : "") + csv_cell(cells[k]);
            out += "\n";
        };
        line(header_);
        for (const auto& r : rows_) line(r);
        return out;
    }

private:
    std::vector<std::string> header_;
    std::string tag_;
    std::vector<std::vector<std::string>> rows_;
};

struct CsvData {
    std::string tag;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t k = 0; k < header.size(); ++k)
            if (header[k] == name) return static_cast<int>(k);
        throw DomainError("archive", "CSV column '" + name + "' not found");
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells(1);
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char c = line[k];
        if (quoted) {
            if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
                cells.back() += '"';
                ++k;
            } else if (c == '"') {
                quoted = false;
            } else {
                cells.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.emplace_back();
        } else {
            cells.back() += c;
        }
    }
    return cells;
}

}  // namespace detail

inline CsvData parse_csv(const std::string& text, const std::string& what) {
    CsvData d;
    std::istringstream in(text);
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (!have_header && line.rfind("# ", 0) == 0) {
            d.tag = line.substr(2);
            continue;
        }
        auto cells = detail::split_csv_line(line);
        if (!have_header) {
            d.header = std::move(cells);
            have_header = true;
        } else {
            if (cells.size() != d.header.size())
                throw DomainError("archive", what + ": malformed row '" + line + "'");
            d.rows.push_back(std::move(cells));
        }
    }
    if (!have_header) throw DomainError("archive", what + ": missing header");
    return d;
}

inline double csv_double(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DomainError("archive", what + ": bad number '" + s + "'");
    }
}

}  // namespace qer
