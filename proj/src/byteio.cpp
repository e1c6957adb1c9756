#include "rbamc/byteio.hpp"

#include <fstream>
#include <system_error>

namespace rbamc {

void ByteWriter::str(std::string_view s) {
    if (s.size() > 0xffff) throw DomainError("string too long to encode");
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s);
}

void ByteWriter::patch_u64(std::size_t offset, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.at(offset + static_cast<std::size_t>(i)) = static_cast<std::uint8_t>(v >> (8 * i));
}

void ByteReader::fail(const std::string& what) const {
    throw FormatError(what + " (at byte offset " + std::to_string(pos_) + ")");
}

void ByteReader::need(std::size_t n) const {
    if (data_.size() - pos_ < n)
        throw TruncationError("truncated: need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                              ", " + std::to_string(data_.size() - pos_) + " left");
}

std::string ByteReader::bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
}

std::string ByteReader::str() { return bytes(u16()); }

std::vector<double> ByteReader::f64s(std::size_t n) {
    need(n * 8);
    std::vector<double> v(n);
    for (double& x : v) x = f64();
    return v;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> data, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (std::uint8_t b : data) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    if (size < 0) throw IoError("cannot size " + path.string());
    in.seekg(0);
    std::vector<std::uint8_t> data(static_cast<std::size_t>(size));
    if (size > 0 && !in.read(reinterpret_cast<char*>(data.data()), size))
        throw IoError("short read on " + path.string());
    return data;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
        out.flush();
        if (!out) throw IoError("write failed on " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

}  // namespace rbamc
