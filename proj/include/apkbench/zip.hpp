#pragma once

// Minimal ZIP reader for APK containers: central directory walk, stored and
// deflated entries, CRC check. ZIP64 and encryption are rejected.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "common.hpp"

namespace apkbench {

namespace detail {
inline std::uint16_t rd16(std::span<const std::uint8_t> b, std::size_t off)
{
    return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}
inline std::uint32_t rd32(std::span<const std::uint8_t> b, std::size_t off)
{
    return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) |
           (static_cast<std::uint32_t>(b[off + 3]) << 24);
}
} // namespace detail

class ZipArchive {
public:
    struct Entry {
        std::string name;
        std::uint16_t method = 0;
        std::uint32_t crc = 0;
        std::uint32_t compressed_size = 0;
        std::uint32_t uncompressed_size = 0;
        std::uint32_t local_header_offset = 0;
    };

    static constexpr std::uint32_t max_entry_size = 256u << 20;

    /// The archive keeps a view of `bytes`; the caller keeps them alive.
    explicit ZipArchive(std::span<const std::uint8_t> bytes) : bytes_(bytes)
    {
        using detail::rd16;
        using detail::rd32;
        if (bytes.size() < 22) {
            throw ParseError("not a zip archive: too short");
        }
        // The end-of-central-directory record sits within the last 64 KiB + 22.
        std::size_t eocd = std::string::npos;
        const std::size_t lowest = bytes.size() > 65557 ? bytes.size() - 65557 : 0;
        for (std::size_t i = bytes.size() - 22 + 1; i-- > lowest;) {
            if (rd32(bytes, i) == 0x06054b50) {
                eocd = i;
                break;
            }
        }
        if (eocd == std::string::npos) {
            throw ParseError("not a zip archive: no end of central directory");
        }
        const std::uint16_t count = rd16(bytes, eocd + 10);
        const std::uint32_t cd_size = rd32(bytes, eocd + 12);
        const std::uint32_t cd_off = rd32(bytes, eocd + 16);
        if (cd_off == 0xffffffff || count == 0xffff) {
            throw ParseError("zip64 archives are not supported");
        }
        if (static_cast<std::uint64_t>(cd_off) + cd_size > eocd) {
            throw ParseError("zip central directory out of bounds");
        }
        std::size_t p = cd_off;
        for (std::uint16_t i = 0; i < count; ++i) {
            if (p + 46 > eocd || rd32(bytes, p) != 0x02014b50) {
                throw ParseError("corrupt zip central directory entry " + std::to_string(i));
            }
            Entry e;
            const std::uint16_t flags = rd16(bytes, p + 8);
            e.method = rd16(bytes, p + 10);
            e.crc = rd32(bytes, p + 16);
            e.compressed_size = rd32(bytes, p + 20);
            e.uncompressed_size = rd32(bytes, p + 24);
            const std::uint16_t name_len = rd16(bytes, p + 28);
            const std::uint16_t extra_len = rd16(bytes, p + 30);
            const std::uint16_t comment_len = rd16(bytes, p + 32);
            e.local_header_offset = rd32(bytes, p + 42);
            if (p + 46 + name_len > eocd) {
                throw ParseError("corrupt zip entry name");
            }
            e.name.assign(reinterpret_cast<const char*>(bytes.data() + p + 46), name_len);
            if (flags & 0x1) {
                throw ParseError("encrypted zip entry '" + e.name + "'");
            }
            p += 46u + name_len + extra_len + comment_len;
            entries_.emplace(e.name, e);
        }
    }

    const std::map<std::string, Entry>& entries() const { return entries_; }

    bool contains(const std::string& name) const { return entries_.contains(name); }

    std::vector<std::uint8_t> read(const std::string& name) const
    {
        using detail::rd16;
        using detail::rd32;
        const auto it = entries_.find(name);
        if (it == entries_.end()) {
            throw ParseError("zip entry not found: " + name);
        }
        const Entry& e = it->second;
        const std::size_t lh = e.local_header_offset;
        if (lh + 30 > bytes_.size() || rd32(bytes_, lh) != 0x04034b50) {
            throw ParseError("corrupt zip local header for '" + name + "'");
        }
        const std::size_t data_off = lh + 30 + rd16(bytes_, lh + 26) + rd16(bytes_, lh + 28);
        if (data_off + e.compressed_size > bytes_.size()) {
            throw ParseError("zip entry data out of bounds: " + name);
        }
        if (e.uncompressed_size > max_entry_size) {
            throw ParseError("zip entry too large: " + name);
        }
        const auto data = bytes_.subspan(data_off, e.compressed_size);
        std::vector<std::uint8_t> out;
        if (e.method == 0) {
            out.assign(data.begin(), data.end());
        }
        else if (e.method == 8) {
            out.resize(e.uncompressed_size);
            z_stream zs{};
            if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) {
                throw RuntimeError("zlib inflateInit2 failed");
            }
            zs.next_in = const_cast<Bytef*>(data.data());
            zs.avail_in = static_cast<uInt>(data.size());
            zs.next_out = out.data();
            zs.avail_out = static_cast<uInt>(out.size());
            const int rc = inflate(&zs, Z_FINISH);
            const auto produced = zs.total_out;
            inflateEnd(&zs);
            if (rc != Z_STREAM_END || produced != e.uncompressed_size) {
                throw ParseError("corrupt deflate stream in zip entry '" + name + "'");
            }
        }
        else {
            throw ParseError("unsupported zip compression method " + std::to_string(e.method) +
                             " for '" + name + "'");
        }
        if (out.size() != e.uncompressed_size) {
            throw ParseError("zip entry size mismatch: " + name);
        }
        const auto crc = crc32(0L, out.data(), static_cast<uInt>(out.size()));
        if (crc != e.crc) {
            throw ParseError("zip entry crc mismatch: " + name);
        }
        return out;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::map<std::string, Entry> entries_;
};

} // namespace apkbench
