#pragma once

// Test-only encoder for Android binary XML, plus a plain-text renderer of the
// same element tree so both manifest forms can be compared.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace testsupport {

struct XmlElement {
    std::string name;
    std::vector<std::pair<std::string, std::string>> attrs; // android:-namespaced names
    std::vector<XmlElement> children;
};

inline XmlElement el(std::string name, std::vector<std::pair<std::string, std::string>> attrs = {},
                     std::vector<XmlElement> children = {})
{
    return {std::move(name), std::move(attrs), std::move(children)};
}

/// A manifest root carrying `package` (un-namespaced) and the android xmlns.
inline XmlElement manifest(std::string package, std::vector<XmlElement> children)
{
    XmlElement m{"manifest", {{"package", std::move(package)}}, std::move(children)};
    return m;
}

inline std::string to_text_xml(const XmlElement& root)
{
    std::string out = "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n";
    auto esc = [](const std::string& s) {
        std::string r;
        for (char c : s) {
            switch (c) {
            case '&': r += "&amp;"; break;
            case '<': r += "&lt;"; break;
            case '"': r += "&quot;"; break;
            default: r += c;
            }
        }
        return r;
    };
    auto rec = [&](auto&& self, const XmlElement& e, int depth, bool root_el) -> void {
        out += std::string(depth * 2, ' ') + "<" + e.name;
        if (root_el) {
            out += " xmlns:android=\"http://schemas.android.com/apk/res/android\"";
        }
        for (const auto& [k, v] : e.attrs) {
            out += " " + (k == "package" ? k : "android:" + k) + "=\"" + esc(v) + "\"";
        }
        if (e.children.empty()) {
            out += "/>\n";
            return;
        }
        out += ">\n";
        for (const auto& c : e.children) {
            self(self, c, depth + 1, false);
        }
        out += std::string(depth * 2, ' ') + "</" + e.name + ">\n";
    };
    rec(rec, root, 0, true);
    return out;
}

class AxmlWriter {
public:
    bool utf8 = false;
    bool with_resource_map = true;

    std::vector<std::uint8_t> encode(const XmlElement& root)
    {
        strings_.clear();
        index_.clear();
        const auto ns_prefix = intern("android");
        const auto ns_uri = intern("http://schemas.android.com/apk/res/android");
        collect(root);

        std::vector<std::uint8_t> body;
        append(body, string_pool());
        if (with_resource_map) {
            std::vector<std::uint8_t> rm;
            put16(rm, 0x0180);
            put16(rm, 8);
            put32(rm, 8 + 4);
            put32(rm, 0x01010003); // android:name
            append(body, rm);
        }
        append(body, ns_chunk(0x0100, ns_prefix, ns_uri));
        element(body, root, ns_uri);
        append(body, ns_chunk(0x0101, ns_prefix, ns_uri));

        std::vector<std::uint8_t> out;
        put16(out, 0x0003);
        put16(out, 8);
        put32(out, static_cast<std::uint32_t>(8 + body.size()));
        append(out, body);
        return out;
    }

    /// Index of a string in the pool of the last encode() call.
    std::uint32_t index_of(const std::string& s) const { return index_.at(s); }

private:
    std::uint32_t intern(const std::string& s)
    {
        const auto it = index_.find(s);
        if (it != index_.end()) {
            return it->second;
        }
        const auto i = static_cast<std::uint32_t>(strings_.size());
        strings_.push_back(s);
        index_[s] = i;
        return i;
    }

    void collect(const XmlElement& e)
    {
        intern(e.name);
        for (const auto& [k, v] : e.attrs) {
            intern(k);
            intern(v);
        }
        for (const auto& c : e.children) {
            collect(c);
        }
    }

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
    static void append(std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b)
    {
        a.insert(a.end(), b.begin(), b.end());
    }

    static std::vector<std::uint16_t> to_utf16(const std::string& s)
    {
        std::vector<std::uint16_t> out;
        for (std::size_t i = 0; i < s.size();) {
            const auto c = static_cast<unsigned char>(s[i]);
            std::uint32_t cp;
            std::size_t len;
            if (c < 0x80) { cp = c; len = 1; }
            else if (c < 0xe0) { cp = c & 0x1f; len = 2; }
            else if (c < 0xf0) { cp = c & 0x0f; len = 3; }
            else { cp = c & 0x07; len = 4; }
            for (std::size_t k = 1; k < len; ++k) {
                cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3f);
            }
            i += len;
            if (cp >= 0x10000) {
                cp -= 0x10000;
                out.push_back(static_cast<std::uint16_t>(0xd800 + (cp >> 10)));
                out.push_back(static_cast<std::uint16_t>(0xdc00 + (cp & 0x3ff)));
            }
            else {
                out.push_back(static_cast<std::uint16_t>(cp));
            }
        }
        return out;
    }

    std::vector<std::uint8_t> string_pool() const
    {
        std::vector<std::uint8_t> data;
        std::vector<std::uint32_t> offsets;
        for (const auto& s : strings_) {
            offsets.push_back(static_cast<std::uint32_t>(data.size()));
            if (utf8) {
                const auto u16len = to_utf16(s).size();
                auto len = [&](std::size_t n) {
                    if (n > 0x7f) {
                        data.push_back(static_cast<std::uint8_t>(0x80 | (n >> 8)));
                    }
                    data.push_back(static_cast<std::uint8_t>(n & 0xff));
                };
                len(u16len);
                len(s.size());
                data.insert(data.end(), s.begin(), s.end());
                data.push_back(0);
            }
            else {
                const auto u = to_utf16(s);
                put16(data, static_cast<std::uint16_t>(u.size()));
                for (auto cu : u) {
                    put16(data, cu);
                }
                put16(data, 0);
            }
        }
        while (data.size() % 4) {
            data.push_back(0);
        }
        std::vector<std::uint8_t> out;
        const std::uint32_t header = 28;
        const auto strings_start = header + 4 * static_cast<std::uint32_t>(strings_.size());
        put16(out, 0x0001);
        put16(out, header);
        put32(out, strings_start + static_cast<std::uint32_t>(data.size()));
        put32(out, static_cast<std::uint32_t>(strings_.size()));
        put32(out, 0);
        put32(out, utf8 ? (1u << 8) : 0);
        put32(out, strings_start);
        put32(out, 0);
        for (auto o : offsets) {
            put32(out, o);
        }
        append(out, data);
        return out;
    }

    static std::vector<std::uint8_t> ns_chunk(std::uint16_t type, std::uint32_t prefix, std::uint32_t uri)
    {
        std::vector<std::uint8_t> out;
        put16(out, type);
        put16(out, 16);
        put32(out, 24);
        put32(out, 1);
        put32(out, 0xffffffff);
        put32(out, prefix);
        put32(out, uri);
        return out;
    }

    void element(std::vector<std::uint8_t>& out, const XmlElement& e, std::uint32_t ns_uri)
    {
        std::vector<std::uint8_t> st;
        put16(st, 0x0102);
        put16(st, 16);
        put32(st, static_cast<std::uint32_t>(36 + 20 * e.attrs.size()));
        put32(st, 1);
        put32(st, 0xffffffff);
        put32(st, 0xffffffff);
        put32(st, index_.at(e.name));
        put16(st, 20);
        put16(st, 20);
        put16(st, static_cast<std::uint16_t>(e.attrs.size()));
        put16(st, 0);
        put16(st, 0);
        put16(st, 0);
        for (const auto& [k, v] : e.attrs) {
            put32(st, k == "package" ? 0xffffffff : ns_uri);
            put32(st, index_.at(k));
            put32(st, index_.at(v));
            put16(st, 8);
            st.push_back(0);
            st.push_back(0x03);
            put32(st, index_.at(v));
        }
        append(out, st);
        for (const auto& c : e.children) {
            element(out, c, ns_uri);
        }
        std::vector<std::uint8_t> en;
        put16(en, 0x0103);
        put16(en, 16);
        put32(en, 24);
        put32(en, 1);
        put32(en, 0xffffffff);
        put32(en, 0xffffffff);
        put32(en, index_.at(e.name));
        append(out, en);
    }

    std::vector<std::string> strings_;
    std::map<std::string, std::uint32_t> index_;
};

} // namespace testsupport
