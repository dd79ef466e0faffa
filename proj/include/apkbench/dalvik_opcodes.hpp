#pragma once

// Dalvik instruction set: mnemonic, encoding format and operand kinds for
// every opcode byte. Mnemonics are the published smali names; the IR stores
// opcodes by these names.

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <unordered_map>

namespace apkbench::dalvik {

enum class Format : std::uint8_t {
    f10x, f12x, f11n, f11x, f10t, f20t, f22x, f21t, f21s, f21h, f21c,
    f23x, f22b, f22t, f22s, f22c, f32x, f30t, f31t, f31i, f31c, f35c,
    f3rc, f45cc, f4rcc, f51l, unused
};

/// Instruction width in 16-bit code units.
constexpr std::uint8_t format_units(Format f)
{
    switch (f) {
    case Format::f10x: case Format::f12x: case Format::f11n:
    case Format::f11x: case Format::f10t:
        return 1;
    case Format::f20t: case Format::f22x: case Format::f21t: case Format::f21s:
    case Format::f21h: case Format::f21c: case Format::f23x: case Format::f22b:
    case Format::f22t: case Format::f22s: case Format::f22c:
        return 2;
    case Format::f32x: case Format::f30t: case Format::f31t: case Format::f31i:
    case Format::f31c: case Format::f35c: case Format::f3rc:
        return 3;
    case Format::f45cc: case Format::f4rcc:
        return 4;
    case Format::f51l:
        return 5;
    case Format::unused:
        return 0;
    }
    return 0;
}

enum class Ref : std::uint8_t { none, string, type, field, method, proto, call_site, method_handle };

enum Flags : std::uint8_t {
    branch = 1 << 0,  // if-*, goto*
    switch_ = 1 << 1, // packed-/sparse-switch
    ret = 1 << 2,
    throw_ = 1 << 3,
    invoke = 1 << 4,
};

struct OpcodeInfo {
    std::string_view name;
    Format format = Format::unused;
    Ref ref = Ref::none;
    std::uint8_t flags = 0;

    constexpr bool valid() const { return format != Format::unused; }
    constexpr std::uint8_t units() const { return format_units(format); }
    constexpr bool ends_block() const
    {
        return (flags & (branch | switch_ | ret | throw_)) != 0;
    }
};

namespace detail {

constexpr std::array<OpcodeInfo, 256> build_table()
{
    std::array<OpcodeInfo, 256> t{};
    auto set = [&](int op, std::string_view name, Format f, Ref r = Ref::none,
                   std::uint8_t flags = 0) { t[op] = OpcodeInfo{name, f, r, flags}; };
    using F = Format;

    set(0x00, "nop", F::f10x);
    set(0x01, "move", F::f12x);
    set(0x02, "move/from16", F::f22x);
    set(0x03, "move/16", F::f32x);
    set(0x04, "move-wide", F::f12x);
    set(0x05, "move-wide/from16", F::f22x);
    set(0x06, "move-wide/16", F::f32x);
    set(0x07, "move-object", F::f12x);
    set(0x08, "move-object/from16", F::f22x);
    set(0x09, "move-object/16", F::f32x);
    set(0x0a, "move-result", F::f11x);
    set(0x0b, "move-result-wide", F::f11x);
    set(0x0c, "move-result-object", F::f11x);
    set(0x0d, "move-exception", F::f11x);
    set(0x0e, "return-void", F::f10x, Ref::none, ret);
    set(0x0f, "return", F::f11x, Ref::none, ret);
    set(0x10, "return-wide", F::f11x, Ref::none, ret);
    set(0x11, "return-object", F::f11x, Ref::none, ret);
    set(0x12, "const/4", F::f11n);
    set(0x13, "const/16", F::f21s);
    set(0x14, "const", F::f31i);
    set(0x15, "const/high16", F::f21h);
    set(0x16, "const-wide/16", F::f21s);
    set(0x17, "const-wide/32", F::f31i);
    set(0x18, "const-wide", F::f51l);
    set(0x19, "const-wide/high16", F::f21h);
    set(0x1a, "const-string", F::f21c, Ref::string);
    set(0x1b, "const-string/jumbo", F::f31c, Ref::string);
    set(0x1c, "const-class", F::f21c, Ref::type);
    set(0x1d, "monitor-enter", F::f11x);
    set(0x1e, "monitor-exit", F::f11x);
    set(0x1f, "check-cast", F::f21c, Ref::type);
    set(0x20, "instance-of", F::f22c, Ref::type);
    set(0x21, "array-length", F::f12x);
    set(0x22, "new-instance", F::f21c, Ref::type);
    set(0x23, "new-array", F::f22c, Ref::type);
    set(0x24, "filled-new-array", F::f35c, Ref::type);
    set(0x25, "filled-new-array/range", F::f3rc, Ref::type);
    set(0x26, "fill-array-data", F::f31t);
    set(0x27, "throw", F::f11x, Ref::none, throw_);
    set(0x28, "goto", F::f10t, Ref::none, branch);
    set(0x29, "goto/16", F::f20t, Ref::none, branch);
    set(0x2a, "goto/32", F::f30t, Ref::none, branch);
    set(0x2b, "packed-switch", F::f31t, Ref::none, switch_);
    set(0x2c, "sparse-switch", F::f31t, Ref::none, switch_);

    constexpr std::string_view cmps[] = {"cmpl-float", "cmpg-float", "cmpl-double",
                                         "cmpg-double", "cmp-long"};
    for (int i = 0; i < 5; ++i) {
        set(0x2d + i, cmps[i], F::f23x);
    }
    constexpr std::string_view ifs[] = {"if-eq", "if-ne", "if-lt", "if-ge", "if-gt", "if-le"};
    for (int i = 0; i < 6; ++i) {
        set(0x32 + i, ifs[i], F::f22t, Ref::none, branch);
    }
    constexpr std::string_view ifzs[] = {"if-eqz", "if-nez", "if-ltz",
                                         "if-gez", "if-gtz", "if-lez"};
    for (int i = 0; i < 6; ++i) {
        set(0x38 + i, ifzs[i], F::f21t, Ref::none, branch);
    }

    constexpr std::string_view arrayops[] = {
        "aget", "aget-wide", "aget-object", "aget-boolean", "aget-byte",
        "aget-char", "aget-short", "aput", "aput-wide", "aput-object",
        "aput-boolean", "aput-byte", "aput-char", "aput-short"};
    for (int i = 0; i < 14; ++i) {
        set(0x44 + i, arrayops[i], F::f23x);
    }
    constexpr std::string_view iops[] = {
        "iget", "iget-wide", "iget-object", "iget-boolean", "iget-byte",
        "iget-char", "iget-short", "iput", "iput-wide", "iput-object",
        "iput-boolean", "iput-byte", "iput-char", "iput-short"};
    for (int i = 0; i < 14; ++i) {
        set(0x52 + i, iops[i], F::f22c, Ref::field);
    }
    constexpr std::string_view sops[] = {
        "sget", "sget-wide", "sget-object", "sget-boolean", "sget-byte",
        "sget-char", "sget-short", "sput", "sput-wide", "sput-object",
        "sput-boolean", "sput-byte", "sput-char", "sput-short"};
    for (int i = 0; i < 14; ++i) {
        set(0x60 + i, sops[i], F::f21c, Ref::field);
    }

    constexpr std::string_view invokes[] = {"invoke-virtual", "invoke-super",
                                            "invoke-direct", "invoke-static",
                                            "invoke-interface"};
    for (int i = 0; i < 5; ++i) {
        set(0x6e + i, invokes[i], F::f35c, Ref::method, invoke);
    }
    constexpr std::string_view invoke_ranges[] = {
        "invoke-virtual/range", "invoke-super/range", "invoke-direct/range",
        "invoke-static/range", "invoke-interface/range"};
    for (int i = 0; i < 5; ++i) {
        set(0x74 + i, invoke_ranges[i], F::f3rc, Ref::method, invoke);
    }

    constexpr std::string_view unops[] = {
        "neg-int", "not-int", "neg-long", "not-long", "neg-float", "neg-double",
        "int-to-long", "int-to-float", "int-to-double", "long-to-int",
        "long-to-float", "long-to-double", "float-to-int", "float-to-long",
        "float-to-double", "double-to-int", "double-to-long", "double-to-float",
        "int-to-byte", "int-to-char", "int-to-short"};
    for (int i = 0; i < 21; ++i) {
        set(0x7b + i, unops[i], F::f12x);
    }

    constexpr std::string_view binops[] = {
        "add-int", "sub-int", "mul-int", "div-int", "rem-int", "and-int",
        "or-int", "xor-int", "shl-int", "shr-int", "ushr-int",
        "add-long", "sub-long", "mul-long", "div-long", "rem-long", "and-long",
        "or-long", "xor-long", "shl-long", "shr-long", "ushr-long",
        "add-float", "sub-float", "mul-float", "div-float", "rem-float",
        "add-double", "sub-double", "mul-double", "div-double", "rem-double"};
    constexpr std::string_view binops_2addr[] = {
        "add-int/2addr", "sub-int/2addr", "mul-int/2addr", "div-int/2addr",
        "rem-int/2addr", "and-int/2addr", "or-int/2addr", "xor-int/2addr",
        "shl-int/2addr", "shr-int/2addr", "ushr-int/2addr",
        "add-long/2addr", "sub-long/2addr", "mul-long/2addr", "div-long/2addr",
        "rem-long/2addr", "and-long/2addr", "or-long/2addr", "xor-long/2addr",
        "shl-long/2addr", "shr-long/2addr", "ushr-long/2addr",
        "add-float/2addr", "sub-float/2addr", "mul-float/2addr",
        "div-float/2addr", "rem-float/2addr",
        "add-double/2addr", "sub-double/2addr", "mul-double/2addr",
        "div-double/2addr", "rem-double/2addr"};
    for (int i = 0; i < 32; ++i) {
        set(0x90 + i, binops[i], F::f23x);
        set(0xb0 + i, binops_2addr[i], F::f12x);
    }

    constexpr std::string_view lit16[] = {
        "add-int/lit16", "rsub-int", "mul-int/lit16", "div-int/lit16",
        "rem-int/lit16", "and-int/lit16", "or-int/lit16", "xor-int/lit16"};
    for (int i = 0; i < 8; ++i) {
        set(0xd0 + i, lit16[i], F::f22s);
    }
    constexpr std::string_view lit8[] = {
        "add-int/lit8", "rsub-int/lit8", "mul-int/lit8", "div-int/lit8",
        "rem-int/lit8", "and-int/lit8", "or-int/lit8", "xor-int/lit8",
        "shl-int/lit8", "shr-int/lit8", "ushr-int/lit8"};
    for (int i = 0; i < 11; ++i) {
        set(0xd8 + i, lit8[i], F::f22b);
    }

    set(0xfa, "invoke-polymorphic", F::f45cc, Ref::method, invoke);
    set(0xfb, "invoke-polymorphic/range", F::f4rcc, Ref::method, invoke);
    set(0xfc, "invoke-custom", F::f35c, Ref::call_site);
    set(0xfd, "invoke-custom/range", F::f3rc, Ref::call_site);
    set(0xfe, "const-method-handle", F::f21c, Ref::method_handle);
    set(0xff, "const-method-type", F::f21c, Ref::proto);
    return t;
}

} // namespace detail

inline constexpr std::array<OpcodeInfo, 256> opcode_table = detail::build_table();

inline const OpcodeInfo& info(std::uint8_t op) { return opcode_table[op]; }

/// Opcode byte for a mnemonic, if it names a valid instruction.
inline std::optional<std::uint8_t> opcode_by_name(std::string_view name)
{
    static const auto index = [] {
        std::unordered_map<std::string_view, std::uint8_t> m;
        for (int op = 0; op < 256; ++op) {
            if (opcode_table[op].valid()) {
                m.emplace(opcode_table[op].name, static_cast<std::uint8_t>(op));
            }
        }
        return m;
    }();
    const auto it = index.find(name);
    if (it == index.end()) {
        return std::nullopt;
    }
    return it->second;
}

inline bool is_mnemonic(std::string_view name) { return opcode_by_name(name).has_value(); }

/// True for mnemonics after which a basic block ends.
inline bool ends_block(std::string_view name)
{
    const auto op = opcode_by_name(name);
    return op && info(*op).ends_block();
}

inline bool is_conditional(std::string_view name) { return name.rfind("if-", 0) == 0; }

/// if-eq <-> if-ne, if-lt <-> if-ge, if-gt <-> if-le (and the -z forms).
inline std::string_view inverse_conditional(std::string_view name)
{
    static constexpr std::pair<std::string_view, std::string_view> pairs[] = {
        {"if-eq", "if-ne"},   {"if-lt", "if-ge"},   {"if-gt", "if-le"},
        {"if-eqz", "if-nez"}, {"if-ltz", "if-gez"}, {"if-gtz", "if-lez"}};
    for (const auto& [a, b] : pairs) {
        if (name == a) {
            return b;
        }
        if (name == b) {
            return a;
        }
    }
    return name;
}

} // namespace apkbench::dalvik
