#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dipct/common.hpp"

namespace dipct::io {

/// DIPT container: magic "DIPT", u32 version = 1, u32 ndims, ndims u32
/// extents, then the float32 payload in row-major order.  All integers and
/// floats are little-endian.
struct DiptData {
    std::vector<std::uint32_t> extents;
    std::vector<float> data;
};

void write_dipt(const std::string& path,
                const std::vector<std::uint32_t>& extents,
                const std::vector<float>& data);
DiptData read_dipt(const std::string& path);

void save_image(const std::string& path, const Image& img);
Image load_image(const std::string& path);

void save_vector(const std::string& path, const Vec& v);
Vec load_vector(const std::string& path);

/// 16-bit binary PGM (maxval 65535, big-endian samples per the format).
/// Pixel values are rescaled linearly from [min, max] to [0, 65535]; the
/// original range is written to "<path>.range" as two numbers on one line
/// so the scaling is invertible.  A constant image maps to all zeros.
void save_pgm16(const std::string& path, const Image& img);

/// Shortest exact decimal representation (round-trips to the same double).
/// Used everywhere a real number is serialised so repeated runs emit
/// byte-identical text.
std::string fmt_real(Real x);

/// RFC-4180 field quoting: fields containing comma, quote, CR or LF are
/// wrapped in double quotes with embedded quotes doubled.
std::string csv_quote(const std::string& field);

void write_csv(const std::string& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Git-style content hash: SHA-1 of "blob <size>\0<bytes>", hex encoded.
std::string git_blob_hash(const std::string& bytes);
std::string hash_file(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace dipct::io
