#pragma once

// Test-only ZIP writer (stored or raw-deflate entries).

#include <cstdint>
#include <string>
#include <vector>

#include <zlib.h>

namespace testsupport {

class ZipWriter {
public:
    void add(const std::string& name, const std::vector<std::uint8_t>& data, bool deflate = true)
    {
        entries_.push_back({name, data, deflate});
    }
    void add(const std::string& name, const std::string& text, bool deflate = true)
    {
        add(name, std::vector<std::uint8_t>(text.begin(), text.end()), deflate);
    }

    std::vector<std::uint8_t> build() const
    {
        std::vector<std::uint8_t> out;
        std::vector<std::uint8_t> cd;
        for (const auto& e : entries_) {
            const auto crc = static_cast<std::uint32_t>(crc32(0L, e.data.data(), static_cast<uInt>(e.data.size())));
            std::vector<std::uint8_t> body = e.deflate ? raw_deflate(e.data) : e.data;
            const std::uint16_t method = e.deflate ? 8 : 0;
            const auto local = static_cast<std::uint32_t>(out.size());
            put32(out, 0x04034b50);
            put16(out, 20);
            put16(out, 0);
            put16(out, method);
            put16(out, 0);
            put16(out, 0x21);
            put32(out, crc);
            put32(out, static_cast<std::uint32_t>(body.size()));
            put32(out, static_cast<std::uint32_t>(e.data.size()));
            put16(out, static_cast<std::uint16_t>(e.name.size()));
            put16(out, 0);
            out.insert(out.end(), e.name.begin(), e.name.end());
            out.insert(out.end(), body.begin(), body.end());

            put32(cd, 0x02014b50);
            put16(cd, 20);
            put16(cd, 20);
            put16(cd, 0);
            put16(cd, method);
            put16(cd, 0);
            put16(cd, 0x21);
            put32(cd, crc);
            put32(cd, static_cast<std::uint32_t>(body.size()));
            put32(cd, static_cast<std::uint32_t>(e.data.size()));
            put16(cd, static_cast<std::uint16_t>(e.name.size()));
            put16(cd, 0);
            put16(cd, 0);
            put16(cd, 0);
            put16(cd, 0);
            put32(cd, 0);
            put32(cd, local);
            cd.insert(cd.end(), e.name.begin(), e.name.end());
        }
        const auto cd_off = static_cast<std::uint32_t>(out.size());
        out.insert(out.end(), cd.begin(), cd.end());
        put32(out, 0x06054b50);
        put16(out, 0);
        put16(out, 0);
        put16(out, static_cast<std::uint16_t>(entries_.size()));
        put16(out, static_cast<std::uint16_t>(entries_.size()));
        put32(out, static_cast<std::uint32_t>(cd.size()));
        put32(out, cd_off);
        put16(out, 0);
        return out;
    }

private:
    struct Item {
        std::string name;
        std::vector<std::uint8_t> data;
        bool deflate;
    };

    static void put16(std::vector<std::uint8_t>& b, std::uint16_t v)
    {
        b.push_back(v & 0xff);
        b.push_back(v >> 8);
    }
    static void put32(std::vector<std::uint8_t>& b, std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i) {
            b.push_back((v >> (8 * i)) & 0xff);
        }
    }

    static std::vector<std::uint8_t> raw_deflate(const std::vector<std::uint8_t>& in)
    {
        z_stream zs{};
        deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY);
        std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(in.size())) + 16);
        zs.next_in = const_cast<Bytef*>(in.data());
        zs.avail_in = static_cast<uInt>(in.size());
        zs.next_out = out.data();
        zs.avail_out = static_cast<uInt>(out.size());
        deflate(&zs, Z_FINISH);
        out.resize(zs.total_out);
        deflateEnd(&zs);
        return out;
    }

    std::vector<Item> entries_;
};

} // namespace testsupport
