#pragma once

// DEX reader: header and id tables, class data, code items, instruction
// decoding with branch-target resolution. Every offset and index is checked
// before use; violations raise ParseError naming the section and offset.

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "app_ir.hpp"
#include "axml.hpp"
#include "common.hpp"
#include "dalvik_opcodes.hpp"

namespace apkbench {

inline constexpr std::uint32_t dex_no_index = 0xffffffff;
inline constexpr std::uint32_t dex_header_size = 0x70;
inline constexpr std::uint32_t dex_endian_constant = 0x12345678;

struct DexHeader {
    std::string version; // three digits, e.g. "035"
    std::uint32_t file_size = 0;
    std::uint32_t string_ids_size = 0, string_ids_off = 0;
    std::uint32_t type_ids_size = 0, type_ids_off = 0;
    std::uint32_t proto_ids_size = 0, proto_ids_off = 0;
    std::uint32_t field_ids_size = 0, field_ids_off = 0;
    std::uint32_t method_ids_size = 0, method_ids_off = 0;
    std::uint32_t class_defs_size = 0, class_defs_off = 0;
};

struct DexProto {
    std::uint32_t shorty_idx = 0;
    std::uint32_t return_type_idx = 0;
    std::vector<std::uint16_t> parameters;
};

struct DexFieldId {
    std::uint16_t class_idx = 0;
    std::uint16_t type_idx = 0;
    std::uint32_t name_idx = 0;
};

struct DexMethodId {
    std::uint16_t class_idx = 0;
    std::uint16_t proto_idx = 0;
    std::uint32_t name_idx = 0;
};

struct DexInstruction {
    std::uint8_t opcode = 0;
    std::uint32_t offset = 0;             // in code units from the start of insns
    std::uint32_t ref = dex_no_index;     // string/type/field/method index when present
    std::vector<std::uint32_t> targets;   // branch and switch targets, in code units
};

struct DexMethod {
    std::uint32_t method_idx = 0;
    std::uint32_t access_flags = 0;
    std::uint32_t code_off = 0;
    std::vector<DexInstruction> code; // empty for abstract/native or empty bodies
};

struct DexClass {
    std::uint32_t class_idx = 0;
    std::uint32_t superclass_idx = dex_no_index;
    std::vector<DexMethod> methods; // direct then virtual
};

struct DexFile {
    DexHeader header;
    std::vector<std::string> strings;
    std::vector<std::uint32_t> type_ids; // descriptor string index
    std::vector<DexProto> protos;
    std::vector<DexFieldId> fields;
    std::vector<DexMethodId> methods;
    std::vector<DexClass> classes;

    const std::string& type_name(std::uint32_t type_idx) const { return strings[type_ids[type_idx]]; }

    /// "Lpkg/Cls;->name", the IR's method naming (no prototype).
    std::string method_name(std::uint32_t method_idx) const
    {
        const auto& m = methods[method_idx];
        return type_name(m.class_idx) + "->" + strings[m.name_idx];
    }
};

namespace dex_detail {

[[noreturn]] inline void fail(std::string_view section, std::size_t offset, const std::string& what)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%zx", offset);
    throw ParseError("dex structural error in " + std::string(section) + " at offset " + buf + ": " +
                     what);
}

class Cursor {
public:
    Cursor(std::span<const std::uint8_t> b, std::string_view section) : b_(b), section_(section) {}

    void need(std::size_t off, std::size_t n) const
    {
        if (off > b_.size() || n > b_.size() - off) {
            fail(section_, off, "read of " + std::to_string(n) + " bytes past end of file");
        }
    }
    std::uint8_t u8(std::size_t off) const
    {
        need(off, 1);
        return b_[off];
    }
    std::uint16_t u16(std::size_t off) const
    {
        need(off, 2);
        return static_cast<std::uint16_t>(b_[off] | (b_[off + 1] << 8));
    }
    std::uint32_t u32(std::size_t off) const
    {
        need(off, 4);
        return detail::rd32(b_, off);
    }
    std::uint32_t uleb(std::size_t& off) const
    {
        std::uint32_t result = 0;
        for (int i = 0; i < 5; ++i) {
            const auto byte = u8(off++);
            result |= static_cast<std::uint32_t>(byte & 0x7f) << (7 * i);
            if (!(byte & 0x80)) {
                if (i == 4 && (byte & 0xf0)) {
                    fail(section_, off - 1, "uleb128 value overflows 32 bits");
                }
                return result;
            }
        }
        fail(section_, off - 1, "uleb128 longer than 5 bytes");
    }
    void section(std::string_view s) { section_ = s; }
    std::string_view section() const { return section_; }

private:
    std::span<const std::uint8_t> b_;
    std::string_view section_;
};

/// Decodes MUTF-8 (modified UTF-8 with CESU-style surrogates) into UTF-8.
inline std::string decode_mutf8(const Cursor& c, std::size_t off, std::uint32_t utf16_size)
{
    std::string out;
    std::uint32_t units = 0;
    std::uint32_t pending_high = 0;
    auto emit = [&](std::uint32_t cu, std::size_t at) {
        if (cu >= 0xd800 && cu <= 0xdbff) {
            if (pending_high) {
                fail("string_data", at, "malformed utf-16 surrogate pair");
            }
            pending_high = cu;
            return;
        }
        if (cu >= 0xdc00 && cu <= 0xdfff) {
            if (!pending_high) {
                fail("string_data", at, "malformed utf-16 surrogate pair");
            }
            axml::append_utf8(out, 0x10000 + ((pending_high - 0xd800) << 10) + (cu - 0xdc00));
            pending_high = 0;
            return;
        }
        if (pending_high) {
            fail("string_data", at, "malformed utf-16 surrogate pair");
        }
        axml::append_utf8(out, cu);
    };
    for (;;) {
        const std::size_t at = off;
        const auto b0 = c.u8(off++);
        if (b0 == 0) {
            break;
        }
        std::uint32_t cu;
        if (b0 < 0x80) {
            cu = b0;
        }
        else if ((b0 & 0xe0) == 0xc0) {
            const auto b1 = c.u8(off++);
            if ((b1 & 0xc0) != 0x80) {
                fail("string_data", at, "malformed mutf-8 sequence");
            }
            cu = ((b0 & 0x1fu) << 6) | (b1 & 0x3fu);
        }
        else if ((b0 & 0xf0) == 0xe0) {
            const auto b1 = c.u8(off++);
            const auto b2 = c.u8(off++);
            if ((b1 & 0xc0) != 0x80 || (b2 & 0xc0) != 0x80) {
                fail("string_data", at, "malformed mutf-8 sequence");
            }
            cu = ((b0 & 0x0fu) << 12) | ((b1 & 0x3fu) << 6) | (b2 & 0x3fu);
        }
        else {
            fail("string_data", at, "malformed mutf-8 sequence");
        }
        emit(cu, at);
        ++units;
    }
    if (pending_high) {
        fail("string_data", off, "malformed utf-16 surrogate pair");
    }
    if (units != utf16_size) {
        fail("string_data", off, "string length " + std::to_string(units) +
                                     " does not match declared " + std::to_string(utf16_size));
    }
    return out;
}

inline void check_table(const DexHeader& h, std::string_view name, std::uint32_t size,
                        std::uint32_t off, std::uint32_t item)
{
    if (size == 0) {
        return;
    }
    if (off < dex_header_size ||
        static_cast<std::uint64_t>(off) + static_cast<std::uint64_t>(size) * item > h.file_size) {
        fail(name, off, "section (" + std::to_string(size) + " items) lies outside the file");
    }
}

inline std::int32_t s32(const std::vector<std::uint16_t>& u, std::size_t i)
{
    return static_cast<std::int32_t>(static_cast<std::uint32_t>(u[i]) |
                                     (static_cast<std::uint32_t>(u[i + 1]) << 16));
}

/// Decodes a method body. `base` is the file offset of insns, for messages.
inline std::vector<DexInstruction> decode_code(const DexFile& dex, const std::vector<std::uint16_t>& u,
                                               std::size_t base)
{
    using dalvik::Format;
    using dalvik::Ref;
    const std::size_t n = u.size();
    std::vector<DexInstruction> out;
    // code-unit offset -> instruction index (or payload marker)
    std::map<std::uint32_t, std::size_t> starts;
    std::map<std::uint32_t, std::uint16_t> payloads; // offset -> ident
    std::vector<std::int32_t> rel_targets;
    auto code_fail = [&](std::size_t unit, const std::string& what) -> void {
        fail("code_item", base + 2 * unit, what);
    };
    std::size_t pc = 0;
    std::vector<std::pair<std::size_t, std::int64_t>> pending; // (instr, absolute payload offset)
    while (pc < n) {
        const std::uint16_t unit = u[pc];
        const std::uint8_t op = unit & 0xff;
        if (op == 0x00 && (unit >> 8) >= 1 && (unit >> 8) <= 3) {
            std::size_t len = 0;
            if (unit == 0x0100) {
                if (pc + 2 > n) {
                    code_fail(pc, "truncated packed-switch payload");
                }
                len = 4 + 2 * static_cast<std::size_t>(u[pc + 1]);
            }
            else if (unit == 0x0200) {
                if (pc + 2 > n) {
                    code_fail(pc, "truncated sparse-switch payload");
                }
                len = 2 + 4 * static_cast<std::size_t>(u[pc + 1]);
            }
            else {
                if (pc + 4 > n) {
                    code_fail(pc, "truncated fill-array-data payload");
                }
                const std::uint64_t width = u[pc + 1];
                const std::uint64_t count = static_cast<std::uint32_t>(s32(u, pc + 2));
                len = static_cast<std::size_t>(4 + (width * count + 1) / 2);
                if (width * count > 2ull * n) {
                    code_fail(pc, "fill-array-data payload exceeds code");
                }
            }
            if (pc + len > n) {
                code_fail(pc, "payload exceeds code item");
            }
            payloads[static_cast<std::uint32_t>(pc)] = unit;
            pc += len;
            continue;
        }
        const auto& inf = dalvik::info(op);
        if (!inf.valid()) {
            char buf[8];
            std::snprintf(buf, sizeof buf, "%02x", op);
            code_fail(pc, std::string("unknown opcode 0x") + buf);
        }
        const std::size_t w = inf.units();
        if (pc + w > n) {
            code_fail(pc, "instruction '" + std::string(inf.name) + "' runs past end of code");
        }
        DexInstruction ins;
        ins.opcode = op;
        ins.offset = static_cast<std::uint32_t>(pc);
        // reference operand
        if (inf.ref != Ref::none) {
            std::uint32_t idx = inf.format == Format::f31c ? static_cast<std::uint32_t>(s32(u, pc + 1))
                                                           : u[pc + 1];
            auto check = [&](std::string_view table, std::size_t size) {
                if (idx >= size) {
                    fail(table, base + 2 * pc,
                         "index " + std::to_string(idx) + " exceeds table size " +
                             std::to_string(size));
                }
            };
            switch (inf.ref) {
            case Ref::string:
                check("string_ids", dex.strings.size());
                break;
            case Ref::type:
                check("type_ids", dex.type_ids.size());
                break;
            case Ref::field:
                check("field_ids", dex.fields.size());
                break;
            case Ref::method:
                check("method_ids", dex.methods.size());
                if (inf.format == Format::f45cc || inf.format == Format::f4rcc) {
                    if (u[pc + 3] >= dex.protos.size()) {
                        fail("proto_ids", base + 2 * pc,
                             "index " + std::to_string(u[pc + 3]) + " exceeds table size " +
                                 std::to_string(dex.protos.size()));
                    }
                }
                break;
            case Ref::proto:
                check("proto_ids", dex.protos.size());
                break;
            default:
                break; // call sites and method handles are not tracked
            }
            ins.ref = idx;
        }
        // branch operand
        std::int64_t rel = 0;
        bool has_branch = false;
        bool is_payload_ref = false;
        switch (inf.format) {
        case Format::f10t:
            rel = static_cast<std::int8_t>(unit >> 8);
            has_branch = true;
            break;
        case Format::f20t:
        case Format::f21t:
        case Format::f22t:
            rel = static_cast<std::int16_t>(u[pc + 1]);
            has_branch = true;
            break;
        case Format::f30t:
            rel = s32(u, pc + 1);
            has_branch = true;
            break;
        case Format::f31t:
            rel = s32(u, pc + 1);
            is_payload_ref = true;
            break;
        default:
            break;
        }
        if (has_branch) {
            const std::int64_t t = static_cast<std::int64_t>(pc) + rel;
            if (t < 0 || t >= static_cast<std::int64_t>(n)) {
                code_fail(pc, "branch target out of code bounds");
            }
            ins.targets.push_back(static_cast<std::uint32_t>(t));
        }
        starts[static_cast<std::uint32_t>(pc)] = out.size();
        if (is_payload_ref) {
            pending.emplace_back(out.size(), static_cast<std::int64_t>(pc) + rel);
        }
        out.push_back(std::move(ins));
        pc += w;
    }
    // switch / fill-array payloads
    for (const auto& [i, at] : pending) {
        auto& ins = out[i];
        const auto pit = at < 0 ? payloads.end() : payloads.find(static_cast<std::uint32_t>(at));
        const std::uint16_t want = ins.opcode == 0x2b ? 0x0100 : ins.opcode == 0x2c ? 0x0200 : 0x0300;
        if (pit == payloads.end() || pit->second != want) {
            code_fail(ins.offset, "payload reference does not point at a matching payload");
        }
        if (want == 0x0300) {
            continue;
        }
        const std::size_t p = pit->first;
        const std::size_t size = u[p + 1];
        const std::size_t first = want == 0x0100 ? p + 4 : p + 2 + 2 * size;
        for (std::size_t k = 0; k < size; ++k) {
            const std::int64_t t = static_cast<std::int64_t>(ins.offset) + s32(u, first + 2 * k);
            if (t < 0 || t >= static_cast<std::int64_t>(n)) {
                code_fail(ins.offset, "switch target out of code bounds");
            }
            ins.targets.push_back(static_cast<std::uint32_t>(t));
        }
    }
    for (const auto& ins : out) {
        for (auto t : ins.targets) {
            if (!starts.contains(t)) {
                code_fail(ins.offset, "branch target is not an instruction boundary");
            }
        }
    }
    return out;
}

} // namespace dex_detail

/// Parses and validates a DEX image.
inline DexFile parse_dex(std::span<const std::uint8_t> bytes)
{
    using dex_detail::fail;
    DexFile dex;
    dex_detail::Cursor c(bytes, "header");
    if (bytes.size() < dex_header_size) {
        fail("header", 0, "file shorter than the 0x70-byte header");
    }
    if (!(bytes[0] == 'd' && bytes[1] == 'e' && bytes[2] == 'x' && bytes[3] == '\n' &&
          std::isdigit(bytes[4]) && std::isdigit(bytes[5]) && std::isdigit(bytes[6]) &&
          bytes[7] == 0)) {
        fail("header", 0, "bad magic (expected \"dex\\n\" + 3 digits + NUL)");
    }
    auto& h = dex.header;
    h.version.assign(reinterpret_cast<const char*>(bytes.data() + 4), 3);
    h.file_size = c.u32(32);
    if (h.file_size != bytes.size()) {
        fail("header", 32, "file_size " + std::to_string(h.file_size) + " does not match " +
                               std::to_string(bytes.size()) + " bytes");
    }
    if (c.u32(36) != dex_header_size) {
        fail("header", 36, "unexpected header_size");
    }
    if (c.u32(40) != dex_endian_constant) {
        fail("header", 40, "unsupported endian tag");
    }
    h.string_ids_size = c.u32(56);
    h.string_ids_off = c.u32(60);
    h.type_ids_size = c.u32(64);
    h.type_ids_off = c.u32(68);
    h.proto_ids_size = c.u32(72);
    h.proto_ids_off = c.u32(76);
    h.field_ids_size = c.u32(80);
    h.field_ids_off = c.u32(84);
    h.method_ids_size = c.u32(88);
    h.method_ids_off = c.u32(92);
    h.class_defs_size = c.u32(96);
    h.class_defs_off = c.u32(100);
    dex_detail::check_table(h, "string_ids", h.string_ids_size, h.string_ids_off, 4);
    dex_detail::check_table(h, "type_ids", h.type_ids_size, h.type_ids_off, 4);
    dex_detail::check_table(h, "proto_ids", h.proto_ids_size, h.proto_ids_off, 12);
    dex_detail::check_table(h, "field_ids", h.field_ids_size, h.field_ids_off, 8);
    dex_detail::check_table(h, "method_ids", h.method_ids_size, h.method_ids_off, 8);
    dex_detail::check_table(h, "class_defs", h.class_defs_size, h.class_defs_off, 32);
    if (h.type_ids_size > 65536) {
        fail("type_ids", h.type_ids_off, "more than 65536 types");
    }
    if (h.proto_ids_size > 65536) {
        fail("proto_ids", h.proto_ids_off, "more than 65536 prototypes");
    }

    auto in_range = [&](std::string_view table, std::size_t at, std::uint32_t idx, std::size_t size) {
        if (idx >= size) {
            fail(table, at, "index " + std::to_string(idx) + " exceeds table size " +
                                std::to_string(size));
        }
    };

    c.section("string_ids");
    dex.strings.reserve(h.string_ids_size);
    for (std::uint32_t i = 0; i < h.string_ids_size; ++i) {
        const std::size_t at = h.string_ids_off + 4ull * i;
        std::size_t data = c.u32(at);
        c.section("string_data");
        const auto utf16_size = c.uleb(data);
        dex.strings.push_back(dex_detail::decode_mutf8(c, data, utf16_size));
        c.section("string_ids");
    }

    c.section("type_ids");
    for (std::uint32_t i = 0; i < h.type_ids_size; ++i) {
        const std::size_t at = h.type_ids_off + 4ull * i;
        const auto idx = c.u32(at);
        in_range("string_ids", at, idx, dex.strings.size());
        dex.type_ids.push_back(idx);
    }

    c.section("proto_ids");
    for (std::uint32_t i = 0; i < h.proto_ids_size; ++i) {
        const std::size_t at = h.proto_ids_off + 12ull * i;
        DexProto p;
        p.shorty_idx = c.u32(at);
        p.return_type_idx = c.u32(at + 4);
        const auto params_off = c.u32(at + 8);
        in_range("string_ids", at, p.shorty_idx, dex.strings.size());
        in_range("type_ids", at + 4, p.return_type_idx, dex.type_ids.size());
        if (params_off != 0) {
            c.section("type_list");
            const auto count = c.u32(params_off);
            c.need(params_off + 4ull, 2ull * count);
            for (std::uint32_t k = 0; k < count; ++k) {
                const auto t = c.u16(params_off + 4ull + 2ull * k);
                in_range("type_ids", params_off + 4ull + 2ull * k, t, dex.type_ids.size());
                p.parameters.push_back(t);
            }
            c.section("proto_ids");
        }
        dex.protos.push_back(std::move(p));
    }

    c.section("field_ids");
    for (std::uint32_t i = 0; i < h.field_ids_size; ++i) {
        const std::size_t at = h.field_ids_off + 8ull * i;
        DexFieldId f{c.u16(at), c.u16(at + 2), c.u32(at + 4)};
        in_range("type_ids", at, f.class_idx, dex.type_ids.size());
        in_range("type_ids", at + 2, f.type_idx, dex.type_ids.size());
        in_range("string_ids", at + 4, f.name_idx, dex.strings.size());
        dex.fields.push_back(f);
    }

    c.section("method_ids");
    for (std::uint32_t i = 0; i < h.method_ids_size; ++i) {
        const std::size_t at = h.method_ids_off + 8ull * i;
        DexMethodId m{c.u16(at), c.u16(at + 2), c.u32(at + 4)};
        in_range("type_ids", at, m.class_idx, dex.type_ids.size());
        in_range("proto_ids", at + 2, m.proto_idx, dex.protos.size());
        in_range("string_ids", at + 4, m.name_idx, dex.strings.size());
        dex.methods.push_back(m);
    }

    for (std::uint32_t i = 0; i < h.class_defs_size; ++i) {
        c.section("class_defs");
        const std::size_t at = h.class_defs_off + 32ull * i;
        DexClass cls;
        cls.class_idx = c.u32(at);
        cls.superclass_idx = c.u32(at + 8);
        in_range("type_ids", at, cls.class_idx, dex.type_ids.size());
        if (cls.superclass_idx != dex_no_index) {
            in_range("type_ids", at + 8, cls.superclass_idx, dex.type_ids.size());
        }
        std::size_t data = c.u32(at + 24);
        if (data != 0) {
            c.section("class_data");
            const auto static_fields = c.uleb(data);
            const auto instance_fields = c.uleb(data);
            const auto direct = c.uleb(data);
            const auto virtual_ = c.uleb(data);
            for (std::uint64_t k = 0, total = std::uint64_t{static_fields} + instance_fields;
                 k < total; ++k) {
                c.uleb(data);
                c.uleb(data);
            }
            for (int group = 0; group < 2; ++group) {
                const auto count = group == 0 ? direct : virtual_;
                std::uint64_t idx = 0;
                for (std::uint32_t k = 0; k < count; ++k) {
                    const std::size_t entry = data;
                    idx += c.uleb(data);
                    DexMethod m;
                    m.access_flags = c.uleb(data);
                    m.code_off = c.uleb(data);
                    if (idx >= dex.methods.size()) {
                        fail("method_ids", entry,
                             "index " + std::to_string(idx) + " exceeds table size " +
                                 std::to_string(dex.methods.size()));
                    }
                    m.method_idx = static_cast<std::uint32_t>(idx);
                    if (m.code_off != 0) {
                        c.section("code_item");
                        const std::size_t co = m.code_off;
                        const auto insns_size = c.u32(co + 12);
                        c.need(co + 16, 2ull * insns_size);
                        std::vector<std::uint16_t> units(insns_size);
                        for (std::uint32_t q = 0; q < insns_size; ++q) {
                            units[q] = c.u16(co + 16 + 2ull * q);
                        }
                        m.code = dex_detail::decode_code(dex, units, co + 16);
                        c.section("class_data");
                    }
                    cls.methods.push_back(std::move(m));
                }
            }
        }
        dex.classes.push_back(std::move(cls));
    }
    return dex;
}

/// Code facts gathered from one or more DEX files.
struct CodeFacts {
    std::set<std::string> strings;
    std::map<std::string, std::uint32_t> api_calls;
    std::set<std::string> user_methods;
    std::vector<OpcodeSequence> opcode_sequences;
    std::map<std::string, std::uint32_t> basic_blocks;
    std::set<CallEdge> call_edges;
};

/// Class descriptors defined by a DEX file.
inline std::set<std::string> defined_classes(const DexFile& dex)
{
    std::set<std::string> out;
    for (const auto& cls : dex.classes) {
        out.insert(dex.type_name(cls.class_idx));
    }
    return out;
}

/// Adds the call edges, opcode sequences, blocks and strings of `dex` to
/// `facts`. Callees whose class is in `app_classes` are user calls.
inline void collect_code_facts(const DexFile& dex, const std::set<std::string>& app_classes,
                               CodeFacts& facts)
{
    for (const auto& cls : dex.classes) {
        for (const auto& m : cls.methods) {
            const std::string caller = dex.method_name(m.method_idx);
            facts.user_methods.insert(caller);
            if (m.code.empty()) {
                continue;
            }
            OpcodeSequence seq;
            seq.method = caller;
            std::map<std::uint32_t, std::uint32_t> index_of;
            for (std::size_t i = 0; i < m.code.size(); ++i) {
                index_of[m.code[i].offset] = static_cast<std::uint32_t>(i);
            }
            std::set<std::uint32_t> leaders;
            for (const auto& ins : m.code) {
                const auto& inf = dalvik::info(ins.opcode);
                seq.opcodes.emplace_back(inf.name);
                for (auto t : ins.targets) {
                    leaders.insert(index_of.at(t));
                }
                if (inf.ref == dalvik::Ref::string) {
                    facts.strings.insert(dex.strings[ins.ref]);
                }
                else if ((inf.flags & dalvik::invoke) && inf.ref == dalvik::Ref::method) {
                    const auto& callee_id = dex.methods[ins.ref];
                    const std::string callee = dex.method_name(ins.ref);
                    const bool user = app_classes.contains(dex.type_name(callee_id.class_idx));
                    if (!user) {
                        ++facts.api_calls[callee];
                    }
                    facts.call_edges.insert({caller, callee, user ? CalleeKind::user : CalleeKind::api});
                }
            }
            leaders.erase(0);
            seq.leaders.assign(leaders.begin(), leaders.end());
            for (const auto& [b, e] : split_blocks(seq)) {
                ++facts.basic_blocks[block_fingerprint(
                    std::span<const std::string>(seq.opcodes.data() + b, e - b))];
            }
            facts.opcode_sequences.push_back(std::move(seq));
        }
    }
}

/// Call graph and block multiset of a single DEX, classifying callees
/// against the classes that DEX itself defines.
inline CodeFacts build_call_graph(const DexFile& dex)
{
    CodeFacts facts;
    collect_code_facts(dex, defined_classes(dex), facts);
    return facts;
}

} // namespace apkbench
