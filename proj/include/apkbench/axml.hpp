#pragma once

// AndroidManifest.xml reader. Accepts the compiled binary form (chunked
// string pool + element tree) as found inside APKs, and plain-text XML for
// hand-written fixtures. Both forms are reduced to the same element event
// stream before the manifest facts are picked out.

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "app_ir.hpp"
#include "common.hpp"
#include "zip.hpp"

namespace apkbench {

struct ManifestModel {
    std::string package;
    std::set<std::string> permissions;
    std::set<AppComponent> components;
    std::set<std::string> intent_actions;
    std::set<std::string> features;
    bool operator==(const ManifestModel&) const = default;
};

namespace axml {

inline constexpr std::uint16_t res_string_pool = 0x0001;
inline constexpr std::uint16_t res_xml = 0x0003;
inline constexpr std::uint16_t res_xml_start_namespace = 0x0100;
inline constexpr std::uint16_t res_xml_end_namespace = 0x0101;
inline constexpr std::uint16_t res_xml_start_element = 0x0102;
inline constexpr std::uint16_t res_xml_end_element = 0x0103;
inline constexpr std::uint16_t res_xml_cdata = 0x0104;
inline constexpr std::uint16_t res_xml_resource_map = 0x0180;
inline constexpr std::uint32_t no_index = 0xffffffff;
inline constexpr std::uint32_t utf8_flag = 1u << 8;

/// One element event: attribute names are local (namespace prefix dropped).
struct ElementEvent {
    bool start = true;
    std::string name;
    std::map<std::string, std::string> attributes;
};

inline void append_utf8(std::string& out, std::uint32_t cp)
{
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    }
    else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    }
    else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    }
    else {
        out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    }
}

/// Checks that `s` is well-formed UTF-8 (no overlongs, no surrogates).
inline bool valid_utf8(std::string_view s)
{
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len;
        std::uint32_t cp;
        if (c < 0x80) {
            ++i;
            continue;
        }
        if ((c & 0xe0) == 0xc0) {
            len = 2;
            cp = c & 0x1f;
        }
        else if ((c & 0xf0) == 0xe0) {
            len = 3;
            cp = c & 0x0f;
        }
        else if ((c & 0xf8) == 0xf0) {
            len = 4;
            cp = c & 0x07;
        }
        else {
            return false;
        }
        if (i + len > s.size()) {
            return false;
        }
        for (std::size_t k = 1; k < len; ++k) {
            const auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xc0) != 0x80) {
                return false;
            }
            cp = (cp << 6) | (cc & 0x3f);
        }
        if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
            cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) {
            return false;
        }
        i += len;
    }
    return true;
}

class BinaryReader {
public:
    explicit BinaryReader(std::span<const std::uint8_t> bytes) : b_(bytes) {}

    std::vector<ElementEvent> events()
    {
        if (b_.size() < 8) {
            throw ParseError("axml: file too short");
        }
        const auto type = u16(0);
        const auto header_size = u16(2);
        const auto size = u32(4);
        if (type != res_xml) {
            throw ParseError("axml: unknown chunk type 0x" + hex(type) + " at offset 0");
        }
        if (header_size < 8 || size > b_.size() || size < header_size) {
            throw ParseError("axml: bad xml chunk header");
        }
        std::vector<ElementEvent> out;
        std::size_t p = header_size;
        while (p < size) {
            if (p + 8 > size) {
                throw ParseError("axml: truncated chunk at offset " + std::to_string(p));
            }
            const auto ctype = u16(p);
            const auto chdr = u16(p + 2);
            const auto csize = u32(p + 4);
            if (csize < 8 || chdr < 8 || chdr > csize || p + csize > size) {
                throw ParseError("axml: bad chunk size at offset " + std::to_string(p));
            }
            switch (ctype) {
            case res_string_pool:
                read_string_pool(p, chdr, csize);
                break;
            case res_xml_resource_map:
            case res_xml_start_namespace:
            case res_xml_end_namespace:
            case res_xml_cdata:
                break;
            case res_xml_start_element:
                out.push_back(read_start(p, chdr, csize));
                break;
            case res_xml_end_element: {
                if (csize < chdr + 8u) {
                    throw ParseError("axml: truncated end element");
                }
                ElementEvent ev;
                ev.start = false;
                ev.name = str(u32(p + chdr + 4));
                out.push_back(std::move(ev));
                break;
            }
            default:
                throw ParseError("axml: unknown chunk type 0x" + hex(ctype) + " at offset " +
                                 std::to_string(p));
            }
            p += csize;
        }
        return out;
    }

private:
    std::uint16_t u16(std::size_t off) const
    {
        if (off + 2 > b_.size()) {
            throw ParseError("axml: read past end at offset " + std::to_string(off));
        }
        return detail::rd16(b_, off);
    }
    std::uint32_t u32(std::size_t off) const
    {
        if (off + 4 > b_.size()) {
            throw ParseError("axml: read past end at offset " + std::to_string(off));
        }
        return detail::rd32(b_, off);
    }
    static std::string hex(std::uint32_t v)
    {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04x", v);
        return buf;
    }

    const std::string& str(std::uint32_t idx) const
    {
        if (idx >= strings_.size()) {
            throw ParseError("axml: string pool index " + std::to_string(idx) +
                             " out of range (pool size " + std::to_string(strings_.size()) + ")");
        }
        return strings_[idx];
    }

    void read_string_pool(std::size_t p, std::uint16_t hdr, std::uint32_t csize)
    {
        if (hdr < 28) {
            throw ParseError("axml: string pool header too small");
        }
        const auto count = u32(p + 8);
        const auto flags = u32(p + 16);
        const auto strings_start = u32(p + 20);
        const std::size_t end = p + csize;
        if (static_cast<std::uint64_t>(p) + hdr + 4ull * count > end ||
            p + static_cast<std::uint64_t>(strings_start) > end) {
            throw ParseError("axml: string pool offsets out of bounds");
        }
        strings_.clear();
        strings_.reserve(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::size_t at = p + strings_start + u32(p + hdr + 4 * i);
            if (at >= end) {
                throw ParseError("axml: string " + std::to_string(i) + " out of bounds");
            }
            strings_.push_back((flags & utf8_flag) ? read_utf8(at, end) : read_utf16(at, end));
        }
    }

    std::string read_utf8(std::size_t at, std::size_t end) const
    {
        auto len_byte = [&](std::size_t& q) -> std::size_t {
            if (q >= end) {
                throw ParseError("axml: truncated utf-8 string length");
            }
            std::size_t len = b_[q++];
            if (len & 0x80) {
                if (q >= end) {
                    throw ParseError("axml: truncated utf-8 string length");
                }
                len = ((len & 0x7f) << 8) | b_[q++];
            }
            return len;
        };
        std::size_t q = at;
        len_byte(q); // utf-16 length, unused
        const std::size_t n = len_byte(q);
        if (q + n > end) {
            throw ParseError("axml: utf-8 string overruns pool");
        }
        std::string s(reinterpret_cast<const char*>(b_.data() + q), n);
        if (!valid_utf8(s)) {
            throw ParseError("axml: malformed utf-8 sequence in string pool");
        }
        return s;
    }

    std::string read_utf16(std::size_t at, std::size_t end) const
    {
        std::size_t q = at;
        if (q + 2 > end) {
            throw ParseError("axml: truncated utf-16 string length");
        }
        std::size_t n = u16(q);
        q += 2;
        if (n & 0x8000) {
            if (q + 2 > end) {
                throw ParseError("axml: truncated utf-16 string length");
            }
            n = ((n & 0x7fff) << 16) | u16(q);
            q += 2;
        }
        if (q + 2 * n > end) {
            throw ParseError("axml: utf-16 string overruns pool");
        }
        std::string out;
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t cu = u16(q + 2 * i);
            if (cu >= 0xd800 && cu <= 0xdbff) {
                if (i + 1 >= n) {
                    throw ParseError("axml: malformed utf-16 sequence (unpaired surrogate)");
                }
                const std::uint32_t lo = u16(q + 2 * (i + 1));
                if (lo < 0xdc00 || lo > 0xdfff) {
                    throw ParseError("axml: malformed utf-16 sequence (unpaired surrogate)");
                }
                cu = 0x10000 + ((cu - 0xd800) << 10) + (lo - 0xdc00);
                ++i;
            }
            else if (cu >= 0xdc00 && cu <= 0xdfff) {
                throw ParseError("axml: malformed utf-16 sequence (unpaired surrogate)");
            }
            append_utf8(out, cu);
        }
        return out;
    }

    std::string attribute_value(std::size_t a) const
    {
        const auto raw = u32(a + 8);
        if (raw != no_index) {
            return str(raw);
        }
        const auto data_type = b_[a + 15];
        const auto data = u32(a + 16);
        switch (data_type) {
        case 0x03:
            return str(data);
        case 0x12:
            return data ? "true" : "false";
        case 0x10:
            return std::to_string(static_cast<std::int32_t>(data));
        case 0x01:
            return "@0x" + hex(data);
        default:
            return "0x" + hex(data);
        }
    }

    ElementEvent read_start(std::size_t p, std::uint16_t hdr, std::uint32_t csize)
    {
        const std::size_t ext = p + hdr;
        if (csize < hdr + 20u) {
            throw ParseError("axml: truncated start element");
        }
        ElementEvent ev;
        ev.name = str(u32(ext + 4));
        const auto attr_start = u16(ext + 8);
        const auto attr_size = u16(ext + 10);
        const auto attr_count = u16(ext + 12);
        if (attr_size < 20 ||
            ext + attr_start + static_cast<std::size_t>(attr_size) * attr_count > p + csize) {
            throw ParseError("axml: attributes overrun element chunk");
        }
        for (std::uint16_t i = 0; i < attr_count; ++i) {
            const std::size_t a = ext + attr_start + static_cast<std::size_t>(i) * attr_size;
            ev.attributes[str(u32(a + 4))] = attribute_value(a);
        }
        return ev;
    }

    std::span<const std::uint8_t> b_;
    std::vector<std::string> strings_;
};

inline std::vector<ElementEvent> text_events(std::string_view text)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream is{std::string(text)};
        pt::read_xml(is, tree);
    }
    catch (const pt::xml_parser_error& e) {
        throw ParseError(std::string("manifest xml: ") + e.what());
    }
    std::vector<ElementEvent> out;
    std::function<void(const std::string&, const pt::ptree&)> walk =
        [&](const std::string& name, const pt::ptree& node) {
            ElementEvent ev;
            ev.name = name;
            if (const auto attrs = node.get_child_optional("<xmlattr>")) {
                for (const auto& [k, v] : *attrs) {
                    const auto colon = k.find(':');
                    const std::string local = colon == std::string::npos ? k : k.substr(colon + 1);
                    if (colon != std::string::npos && k.substr(0, colon) == "xmlns") {
                        continue;
                    }
                    ev.attributes[local] = v.data();
                }
            }
            out.push_back(ev);
            for (const auto& [child_name, child] : node) {
                if (child_name == "<xmlattr>" || child_name == "<xmlcomment>") {
                    continue;
                }
                walk(child_name, child);
            }
            out.push_back(ElementEvent{false, name, {}});
        };
    for (const auto& [name, node] : tree) {
        if (name == "<xmlcomment>") {
            continue;
        }
        walk(name, node);
    }
    return out;
}

inline std::string resolve_class_name(const std::string& package, const std::string& name)
{
    if (!name.empty() && name.front() == '.') {
        return package + name;
    }
    if (name.find('.') == std::string::npos && !package.empty()) {
        return package + "." + name;
    }
    return name;
}

inline ManifestModel interpret(const std::vector<ElementEvent>& events)
{
    ManifestModel m;
    std::vector<std::string> stack;
    auto attr = [](const ElementEvent& ev, const char* key) -> std::string {
        const auto it = ev.attributes.find(key);
        return it == ev.attributes.end() ? std::string() : it->second;
    };
    for (const auto& ev : events) {
        if (!ev.start) {
            if (!stack.empty()) {
                stack.pop_back();
            }
            continue;
        }
        const std::string parent = stack.empty() ? std::string() : stack.back();
        stack.push_back(ev.name);
        const std::string& tag = ev.name;
        if (tag == "manifest") {
            m.package = attr(ev, "package");
        }
        else if (tag == "uses-permission" || tag == "uses-permission-sdk-23" ||
                 tag == "uses-permission-sdk-m") {
            if (auto n = attr(ev, "name"); !n.empty()) {
                m.permissions.insert(n);
            }
        }
        else if (tag == "activity" || tag == "activity-alias" || tag == "service" ||
                 tag == "receiver" || tag == "provider") {
            const auto kind = tag == "service"    ? ComponentKind::service
                              : tag == "receiver" ? ComponentKind::receiver
                              : tag == "provider" ? ComponentKind::provider
                                                  : ComponentKind::activity;
            if (auto n = attr(ev, "name"); !n.empty()) {
                m.components.insert({kind, resolve_class_name(m.package, n)});
            }
        }
        else if (tag == "action" && parent == "intent-filter") {
            if (auto n = attr(ev, "name"); !n.empty()) {
                m.intent_actions.insert(n);
            }
        }
        else if (tag == "uses-feature") {
            if (auto n = attr(ev, "name"); !n.empty()) {
                m.features.insert(n);
            }
        }
    }
    return m;
}

} // namespace axml

/// Parses a manifest in binary AXML or plain-text XML form.
inline ManifestModel parse_axml(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() >= 2 && detail::rd16(bytes, 0) == axml::res_xml) {
        axml::BinaryReader reader(bytes);
        return axml::interpret(reader.events());
    }
    std::size_t i = 0;
    if (bytes.size() >= 3 && bytes[0] == 0xef && bytes[1] == 0xbb && bytes[2] == 0xbf) {
        i = 3;
    }
    while (i < bytes.size() && std::isspace(bytes[i])) {
        ++i;
    }
    if (i < bytes.size() && bytes[i] == '<') {
        const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        if (!axml::valid_utf8(text)) {
            throw ParseError("manifest xml: malformed utf-8 sequence");
        }
        return axml::interpret(axml::text_events(text));
    }
    if (bytes.size() < 2) {
        throw ParseError("axml: file too short");
    }
    char buf[8];
    std::snprintf(buf, sizeof buf, "%04x", detail::rd16(bytes, 0));
    throw ParseError(std::string("axml: unknown chunk type 0x") + buf + " at offset 0");
}

inline ManifestModel parse_axml(std::string_view text)
{
    return parse_axml(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace apkbench
