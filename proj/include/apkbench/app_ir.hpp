#pragma once

// Canonical intermediate representation of one app and its line-delimited
// corpus format. Parsed APKs, synthetic apps and obfuscated variants all
// meet here; nothing downstream can tell them apart.
//
// Corpus file layout (one JSON object per line, UTF-8):
//   line 1     {"format":"apkbench-corpus","version":1}
//   line 2..n  one AppRecord per line, keys sorted, sets as sorted arrays:
//     id, timestamp ("YYYY-MM"), source, vtd, permissions,
//     components ([[kind, name], ...]), intent_actions, hw_sw_features,
//     strings, api_calls ({name: count}), user_methods,
//     opcode_sequences ([{method, opcodes, leaders}, ...]),
//     basic_blocks ({fingerprint: count}),
//     call_edges ([[caller, callee, "api"|"user"], ...]),
//     family_id (string or null), obfuscation_tags

#include <compare>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "dalvik_opcodes.hpp"

namespace apkbench {

struct YearMonth {
    int year = 1970;
    int month = 1;

    auto operator<=>(const YearMonth&) const = default;

    /// Months since year 0; consecutive months differ by one.
    int index() const { return year * 12 + (month - 1); }
    static YearMonth from_index(int idx) { return {idx / 12, idx % 12 + 1}; }

    std::string str() const
    {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
        return buf;
    }

    /// Parses "YYYY-MM". The month range is checked by `validate`, not here.
    static YearMonth parse(std::string_view s)
    {
        YearMonth ym;
        const auto dash = s.find('-');
        if (dash == std::string_view::npos || dash == 0 || dash + 1 >= s.size()) {
            throw ParseError("timestamp must be YYYY-MM, got '" + std::string(s) + "'");
        }
        try {
            std::size_t used = 0;
            ym.year = std::stoi(std::string(s.substr(0, dash)), &used);
            if (used != dash) {
                throw std::invalid_argument("year");
            }
            const std::string m(s.substr(dash + 1));
            ym.month = std::stoi(m, &used);
            if (used != m.size()) {
                throw std::invalid_argument("month");
            }
        }
        catch (const std::logic_error&) {
            throw ParseError("timestamp must be YYYY-MM, got '" + std::string(s) + "'");
        }
        return ym;
    }
};

enum class Source { market, malware_repo, synthetic };
enum class ComponentKind { activity, service, receiver, provider };
enum class CalleeKind { api, user };
enum class ObfuscationTag { renaming, code_structure, encryption };

/// goodware=0 and malware=1 are the only values a binary classifier sees.
enum class ClassLabel { goodware = 0, malware = 1, greyware = 2 };

inline std::string_view to_string(Source s)
{
    switch (s) {
    case Source::market: return "market";
    case Source::malware_repo: return "malware-repo";
    case Source::synthetic: return "synthetic";
    }
    return "?";
}

inline std::string_view to_string(ComponentKind k)
{
    switch (k) {
    case ComponentKind::activity: return "activity";
    case ComponentKind::service: return "service";
    case ComponentKind::receiver: return "receiver";
    case ComponentKind::provider: return "provider";
    }
    return "?";
}

inline std::string_view to_string(CalleeKind k) { return k == CalleeKind::api ? "api" : "user"; }

inline std::string_view to_string(ObfuscationTag t)
{
    switch (t) {
    case ObfuscationTag::renaming: return "renaming";
    case ObfuscationTag::code_structure: return "code-structure";
    case ObfuscationTag::encryption: return "encryption";
    }
    return "?";
}

inline std::string_view to_string(ClassLabel c)
{
    switch (c) {
    case ClassLabel::goodware: return "goodware";
    case ClassLabel::malware: return "malware";
    case ClassLabel::greyware: return "greyware";
    }
    return "?";
}

namespace detail {
template <typename E, std::size_t N>
E enum_from(std::string_view s, const E (&values)[N], std::string_view what)
{
    for (E v : values) {
        if (to_string(v) == s) {
            return v;
        }
    }
    throw ParseError("unknown " + std::string(what) + " '" + std::string(s) + "'");
}
} // namespace detail

inline Source source_from(std::string_view s)
{
    static constexpr Source all[] = {Source::market, Source::malware_repo, Source::synthetic};
    return detail::enum_from(s, all, "source");
}
inline ComponentKind component_kind_from(std::string_view s)
{
    static constexpr ComponentKind all[] = {ComponentKind::activity, ComponentKind::service,
                                            ComponentKind::receiver, ComponentKind::provider};
    return detail::enum_from(s, all, "component kind");
}
inline CalleeKind callee_kind_from(std::string_view s)
{
    static constexpr CalleeKind all[] = {CalleeKind::api, CalleeKind::user};
    return detail::enum_from(s, all, "callee kind");
}
inline ObfuscationTag obfuscation_tag_from(std::string_view s)
{
    static constexpr ObfuscationTag all[] = {ObfuscationTag::renaming,
                                             ObfuscationTag::code_structure,
                                             ObfuscationTag::encryption};
    return detail::enum_from(s, all, "obfuscation tag");
}
inline ClassLabel class_label_from(std::string_view s)
{
    static constexpr ClassLabel all[] = {ClassLabel::goodware, ClassLabel::malware,
                                         ClassLabel::greyware};
    return detail::enum_from(s, all, "class label");
}

struct AppComponent {
    ComponentKind kind = ComponentKind::activity;
    std::string name;
    auto operator<=>(const AppComponent&) const = default;
};

struct CallEdge {
    std::string caller;
    std::string callee;
    CalleeKind kind = CalleeKind::api;
    auto operator<=>(const CallEdge&) const = default;
};

/// Opcode mnemonics of one method body. `leaders` lists instruction indices
/// that start a basic block because a branch lands there; blocks also start
/// at index 0 and after every block-ending instruction.
struct OpcodeSequence {
    std::string method;
    std::vector<std::string> opcodes;
    std::vector<std::uint32_t> leaders;
    bool operator==(const OpcodeSequence&) const = default;
};

struct AppRecord {
    std::string id;
    YearMonth timestamp;
    Source source = Source::synthetic;
    int vtd = 0;
    std::set<std::string> permissions;
    std::set<AppComponent> app_components;
    std::set<std::string> intent_actions;
    std::set<std::string> hw_sw_features;
    std::set<std::string> strings;
    std::map<std::string, std::uint32_t> api_calls;
    std::set<std::string> user_methods;
    std::vector<OpcodeSequence> opcode_sequences;
    std::map<std::string, std::uint32_t> basic_blocks;
    std::set<CallEdge> call_edges;
    std::optional<std::string> family_id;
    std::set<ObfuscationTag> obfuscation_tags;

    bool operator==(const AppRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Basic blocks

/// Fingerprint of a block: FNV-1a over its mnemonics (operands never enter).
inline std::string block_fingerprint(std::span<const std::string> opcodes)
{
    std::uint64_t h = fnv_offset;
    for (const auto& op : opcodes) {
        h = fnv1a64(op, h);
        h = fnv1a64("\n", h);
    }
    return hex64(h);
}

/// Splits one method body into its basic blocks (as index ranges).
inline std::vector<std::pair<std::size_t, std::size_t>>
split_blocks(const OpcodeSequence& seq)
{
    const std::size_t n = seq.opcodes.size();
    std::vector<bool> leader(n + 1, false);
    if (n == 0) {
        return {};
    }
    leader[0] = true;
    for (auto l : seq.leaders) {
        if (l < n) {
            leader[l] = true;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (dalvik::ends_block(seq.opcodes[i])) {
            leader[i + 1] = true;
        }
    }
    std::vector<std::pair<std::size_t, std::size_t>> blocks;
    std::size_t start = 0;
    for (std::size_t i = 1; i <= n; ++i) {
        if (i == n || leader[i]) {
            blocks.emplace_back(start, i);
            start = i;
        }
    }
    return blocks;
}

inline std::map<std::string, std::uint32_t>
derive_basic_blocks(std::span<const OpcodeSequence> sequences)
{
    std::map<std::string, std::uint32_t> blocks;
    for (const auto& seq : sequences) {
        for (const auto& [b, e] : split_blocks(seq)) {
            const std::span<const std::string> ops(seq.opcodes.data() + b, e - b);
            ++blocks[block_fingerprint(ops)];
        }
    }
    return blocks;
}

inline void refresh_basic_blocks(AppRecord& app)
{
    app.basic_blocks = derive_basic_blocks(app.opcode_sequences);
}

// ---------------------------------------------------------------------------
// Validation

/// Throws ValidationError naming the record and the violated invariant.
inline void validate(const AppRecord& app)
{
    auto fail = [&](const std::string& what) {
        throw ValidationError("record '" + app.id + "': " + what);
    };
    if (app.id.empty()) {
        throw ValidationError("record with empty id");
    }
    if (app.timestamp.month < 1 || app.timestamp.month > 12) {
        fail("month must be in [1,12], got " + std::to_string(app.timestamp.month));
    }
    if (app.vtd < 0) {
        fail("vtd must be >= 0, got " + std::to_string(app.vtd));
    }
    for (const auto& [name, count] : app.api_calls) {
        if (count < 1) {
            fail("api call '" + name + "' has count 0");
        }
    }
    for (const auto& c : app.app_components) {
        if (c.name.empty()) {
            fail("component with empty name");
        }
    }
    for (const auto& e : app.call_edges) {
        if (e.kind == CalleeKind::api && !app.api_calls.contains(e.callee)) {
            fail("api callee '" + e.callee + "' of a call edge is missing from api_calls");
        }
    }
    for (const auto& seq : app.opcode_sequences) {
        if (!app.user_methods.contains(seq.method)) {
            fail("opcode sequence of '" + seq.method + "' which is not a user method");
        }
        for (const auto& op : seq.opcodes) {
            if (!dalvik::is_mnemonic(op)) {
                fail("unknown opcode mnemonic '" + op + "' in '" + seq.method + "'");
            }
        }
        for (auto l : seq.leaders) {
            if (l >= seq.opcodes.size()) {
                fail("block leader " + std::to_string(l) + " out of range in '" +
                     seq.method + "'");
            }
        }
    }
    if (derive_basic_blocks(app.opcode_sequences) != app.basic_blocks) {
        fail("basic_blocks do not match the blocks derived from opcode_sequences");
    }
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr std::string_view corpus_format = "apkbench-corpus";
inline constexpr int corpus_version = 1;

inline nlohmann::json to_json(const AppRecord& app)
{
    using nlohmann::json;
    json j;
    j["id"] = app.id;
    j["timestamp"] = app.timestamp.str();
    j["source"] = to_string(app.source);
    j["vtd"] = app.vtd;
    j["permissions"] = app.permissions;
    json comps = json::array();
    for (const auto& c : app.app_components) {
        comps.push_back({to_string(c.kind), c.name});
    }
    j["components"] = std::move(comps);
    j["intent_actions"] = app.intent_actions;
    j["hw_sw_features"] = app.hw_sw_features;
    j["strings"] = app.strings;
    j["api_calls"] = app.api_calls;
    j["user_methods"] = app.user_methods;
    json seqs = json::array();
    for (const auto& s : app.opcode_sequences) {
        seqs.push_back({{"method", s.method}, {"opcodes", s.opcodes}, {"leaders", s.leaders}});
    }
    j["opcode_sequences"] = std::move(seqs);
    j["basic_blocks"] = app.basic_blocks;
    json edges = json::array();
    for (const auto& e : app.call_edges) {
        edges.push_back({e.caller, e.callee, to_string(e.kind)});
    }
    j["call_edges"] = std::move(edges);
    j["family_id"] = app.family_id ? json(*app.family_id) : json(nullptr);
    json tags = json::array();
    for (auto t : app.obfuscation_tags) {
        tags.push_back(to_string(t));
    }
    j["obfuscation_tags"] = std::move(tags);
    return j;
}

/// Builds a record from its JSON form. Structural problems throw ParseError;
/// invariants are checked separately by `validate`.
inline AppRecord from_json(const nlohmann::json& j)
{
    AppRecord app;
    try {
        app.id = j.at("id").get<std::string>();
        app.timestamp = YearMonth::parse(j.at("timestamp").get<std::string>());
        app.source = source_from(j.at("source").get<std::string>());
        app.vtd = j.at("vtd").get<int>();
        app.permissions = j.at("permissions").get<std::set<std::string>>();
        for (const auto& c : j.at("components")) {
            app.app_components.insert(
                {component_kind_from(c.at(0).get<std::string>()), c.at(1).get<std::string>()});
        }
        app.intent_actions = j.at("intent_actions").get<std::set<std::string>>();
        app.hw_sw_features = j.at("hw_sw_features").get<std::set<std::string>>();
        app.strings = j.at("strings").get<std::set<std::string>>();
        for (const auto& [name, count] : j.at("api_calls").items()) {
            const auto c = count.get<std::int64_t>();
            if (c < 0 || c > UINT32_MAX) {
                throw ParseError("api call count out of range for '" + name + "'");
            }
            app.api_calls[name] = static_cast<std::uint32_t>(c);
        }
        app.user_methods = j.at("user_methods").get<std::set<std::string>>();
        for (const auto& s : j.at("opcode_sequences")) {
            OpcodeSequence seq;
            seq.method = s.at("method").get<std::string>();
            seq.opcodes = s.at("opcodes").get<std::vector<std::string>>();
            if (s.contains("leaders")) {
                seq.leaders = s.at("leaders").get<std::vector<std::uint32_t>>();
            }
            app.opcode_sequences.push_back(std::move(seq));
        }
        for (const auto& [fp, count] : j.at("basic_blocks").items()) {
            app.basic_blocks[fp] = count.get<std::uint32_t>();
        }
        for (const auto& e : j.at("call_edges")) {
            app.call_edges.insert({e.at(0).get<std::string>(), e.at(1).get<std::string>(),
                                   callee_kind_from(e.at(2).get<std::string>())});
        }
        if (j.contains("family_id") && !j.at("family_id").is_null()) {
            app.family_id = j.at("family_id").get<std::string>();
        }
        for (const auto& t : j.at("obfuscation_tags")) {
            app.obfuscation_tags.insert(obfuscation_tag_from(t.get<std::string>()));
        }
    }
    catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed record: ") + e.what());
    }
    return app;
}

inline std::string corpus_header_line()
{
    nlohmann::json h;
    h["format"] = corpus_format;
    h["version"] = corpus_version;
    return h.dump();
}

/// Writes the header line and one line per record. Returns bytes written.
inline std::size_t serialize_corpus(std::span<const AppRecord> records, std::ostream& out)
{
    if (records.empty()) {
        throw ValidationError("cannot serialize an empty corpus");
    }
    std::unordered_set<std::string_view> ids;
    for (const auto& r : records) {
        if (!ids.insert(r.id).second) {
            throw ValidationError("duplicate record id '" + r.id + "'");
        }
    }
    std::size_t bytes = 0;
    auto emit = [&](const std::string& line) {
        out << line << '\n';
        bytes += line.size() + 1;
    };
    emit(corpus_header_line());
    for (const auto& r : records) {
        emit(to_json(r).dump());
    }
    out.flush();
    if (!out) {
        throw IoError("failed writing corpus stream");
    }
    return bytes;
}

inline std::string serialize_corpus(std::span<const AppRecord> records)
{
    std::ostringstream os;
    serialize_corpus(records, os);
    return os.str();
}

/// Reads a corpus stream; every record is validated on load.
inline std::vector<AppRecord> parse_corpus(std::istream& in)
{
    std::vector<AppRecord> records;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    std::unordered_set<std::string> ids;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        }
        catch (const nlohmann::json::exception& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!header_seen) {
            if (!j.is_object() || j.value("format", "") != corpus_format) {
                throw ParseError("line " + std::to_string(lineno) +
                                 ": missing corpus header line");
            }
            if (j.value("version", 0) != corpus_version) {
                throw ParseError("line " + std::to_string(lineno) +
                                 ": unsupported corpus version");
            }
            header_seen = true;
            continue;
        }
        AppRecord app;
        try {
            app = from_json(j);
        }
        catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
        validate(app);
        if (!ids.insert(app.id).second) {
            throw ValidationError("line " + std::to_string(lineno) + ": duplicate record id '" +
                                  app.id + "'");
        }
        records.push_back(std::move(app));
    }
    if (!header_seen) {
        throw ParseError("empty corpus stream");
    }
    return records;
}

inline std::vector<AppRecord> parse_corpus(std::string_view text)
{
    std::istringstream is{std::string(text)};
    return parse_corpus(is);
}

inline std::vector<AppRecord> load_corpus(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open corpus: " + path.string());
    }
    return parse_corpus(in);
}

inline void save_corpus(std::span<const AppRecord> records, const std::filesystem::path& path)
{
    write_file_atomic(path, serialize_corpus(records));
}

} // namespace apkbench
