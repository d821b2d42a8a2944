#include "dipct/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include <boost/uuid/detail/sha1.hpp>

static_assert(std::endian::native == std::endian::little,
              "serialisation code assumes a little-endian host");

namespace dipct::io {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

}  // namespace

void write_dipt(const std::string& path,
                const std::vector<std::uint32_t>& extents,
                const std::vector<float>& data) {
    std::size_t count = 1;
    for (auto e : extents) count *= e;
    if (extents.empty() || extents.size() > 4)
        throw IoError("write_dipt: ndims must be 1..4");
    if (count != data.size())
        throw IoError("write_dipt: payload size does not match extents");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("write_dipt: cannot open " + path);
    os.write("DIPT", 4);
    put_u32(os, 1);
    put_u32(os, static_cast<std::uint32_t>(extents.size()));
    for (auto e : extents) put_u32(os, e);
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!os) throw IoError("write_dipt: write failed for " + path);
}

DiptData read_dipt(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("read_dipt: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "DIPT", 4) != 0)
        throw IoError("read_dipt: bad magic in " + path);
    const std::uint32_t version = get_u32(is);
    if (version != 1)
        throw IoError("read_dipt: unsupported version in " + path);
    const std::uint32_t ndims = get_u32(is);
    if (!is || ndims == 0 || ndims > 4)
        throw IoError("read_dipt: bad ndims in " + path);
    DiptData out;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < ndims; ++i) {
        out.extents.push_back(get_u32(is));
        count *= out.extents.back();
    }
    out.data.resize(count);
    is.read(reinterpret_cast<char*>(out.data.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!is) throw IoError("read_dipt: truncated payload in " + path);
    return out;
}

void save_image(const std::string& path, const Image& img) {
    std::vector<float> data(static_cast<std::size_t>(img.size()));
    for (Eigen::Index i = 0; i < img.size(); ++i)
        data[static_cast<std::size_t>(i)] = static_cast<float>(img.data()[i]);
    write_dipt(path,
               {static_cast<std::uint32_t>(img.rows()),
                static_cast<std::uint32_t>(img.cols())},
               data);
}

Image load_image(const std::string& path) {
    const DiptData d = read_dipt(path);
    if (d.extents.size() != 2)
        throw IoError("load_image: expected 2-D DIPT in " + path);
    Image img(d.extents[0], d.extents[1]);
    for (Eigen::Index i = 0; i < img.size(); ++i)
        img.data()[i] = static_cast<Real>(d.data[static_cast<std::size_t>(i)]);
    return img;
}

void save_vector(const std::string& path, const Vec& v) {
    std::vector<float> data(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        data[static_cast<std::size_t>(i)] = static_cast<float>(v[i]);
    write_dipt(path, {static_cast<std::uint32_t>(v.size())}, data);
}

Vec load_vector(const std::string& path) {
    const DiptData d = read_dipt(path);
    if (d.extents.size() != 1)
        throw IoError("load_vector: expected 1-D DIPT in " + path);
    Vec v(d.extents[0]);
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = static_cast<Real>(d.data[static_cast<std::size_t>(i)]);
    return v;
}

void save_pgm16(const std::string& path, const Image& img) {
    const Real lo = img.minCoeff();
    const Real hi = img.maxCoeff();
    const Real scale = hi > lo ? 65535.0 / (hi - lo) : 0.0;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("save_pgm16: cannot open " + path);
    os << "P5\n" << img.cols() << " " << img.rows() << "\n65535\n";
    for (Eigen::Index i = 0; i < img.size(); ++i) {
        const Real t = (img.data()[i] - lo) * scale;
        auto q = static_cast<std::uint16_t>(std::lround(std::clamp(t, 0.0, 65535.0)));
        const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
        os.write(bytes, 2);
    }
    if (!os) throw IoError("save_pgm16: write failed for " + path);
    std::ofstream side(path + ".range");
    if (!side) throw IoError("save_pgm16: cannot open " + path + ".range");
    side << fmt_real(lo) << " " << fmt_real(hi) << "\n";
}

std::string fmt_real(Real x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        out += c;
        if (c == '"') out += '"';
    }
    out += '"';
    return out;
}

void write_csv(const std::string& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("write_csv: cannot open " + path);
    auto line = [&os](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) os << ",";
            os << csv_quote(fields[i]);
        }
        os << "\n";
    };
    line(header);
    for (const auto& r : rows) line(r);
    if (!os) throw IoError("write_csv: write failed for " + path);
}

std::string git_blob_hash(const std::string& bytes) {
    boost::uuids::detail::sha1 sha;
    const std::string header = "blob " + std::to_string(bytes.size());
    sha.process_bytes(header.data(), header.size() + 1);  // includes the NUL
    sha.process_bytes(bytes.data(), bytes.size());
    boost::uuids::detail::sha1::digest_type digest;
    sha.get_digest(digest);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int word : digest)
        for (int shift = 28; shift >= 0; shift -= 4)
            out += hex[(word >> shift) & 0xf];
    return out;
}

std::string hash_file(const std::string& path) {
    return git_blob_hash(read_file(path));
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("read_file: cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("write_file: cannot open " + path);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write_file: write failed for " + path);
}

}  // namespace dipct::io
