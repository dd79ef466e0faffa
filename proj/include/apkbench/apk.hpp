#pragma once

// APK -> AppRecord: manifest facts plus the merged code facts of every
// classes*.dex entry.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "app_ir.hpp"
#include "axml.hpp"
#include "common.hpp"
#include "dex.hpp"
#include "zip.hpp"

namespace apkbench {

inline std::string sha256_hex(std::span<const std::uint8_t> bytes)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw RuntimeError("sha256 digest failed");
    }
    std::string out;
    char buf[3];
    for (unsigned i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        out += buf;
    }
    return out;
}

/// Values not recoverable from the APK itself, filled in by the caller.
struct ApkAnnotation {
    std::string id; // empty: SHA-256 of the APK bytes
    YearMonth timestamp{1970, 1};
    Source source = Source::market;
    int vtd = 0;
};

/// Ordered list of dex entries: classes.dex, classes2.dex, classes3.dex, ...
inline std::vector<std::string> dex_entries(const ZipArchive& zip)
{
    std::vector<std::pair<int, std::string>> found;
    for (const auto& [name, entry] : zip.entries()) {
        if (name == "classes.dex") {
            found.emplace_back(1, name);
            continue;
        }
        if (name.size() > 11 && name.starts_with("classes") && name.ends_with(".dex")) {
            const std::string digits = name.substr(7, name.size() - 11);
            if (!digits.empty() && digits.front() != '0' && digits.size() < 6 &&
                std::all_of(digits.begin(), digits.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
                found.emplace_back(std::stoi(digits), name);
            }
        }
    }
    std::sort(found.begin(), found.end());
    std::vector<std::string> out;
    for (auto& [n, name] : found) {
        out.push_back(std::move(name));
    }
    return out;
}

inline AppRecord parse_apk(std::span<const std::uint8_t> bytes, const ApkAnnotation& note = {})
{
    const ZipArchive zip(bytes);
    if (!zip.contains("AndroidManifest.xml")) {
        throw ParseError("apk: missing AndroidManifest.xml");
    }
    const auto manifest_bytes = zip.read("AndroidManifest.xml");
    const ManifestModel manifest = parse_axml(manifest_bytes);

    std::vector<DexFile> dexes;
    for (const auto& name : dex_entries(zip)) {
        const auto data = zip.read(name);
        try {
            dexes.push_back(parse_dex(data));
        }
        catch (const ParseError& e) {
            throw ParseError(name + ": " + e.what());
        }
    }
    std::set<std::string> app_classes;
    for (const auto& d : dexes) {
        app_classes.merge(defined_classes(d));
    }
    CodeFacts facts;
    for (const auto& d : dexes) {
        collect_code_facts(d, app_classes, facts);
    }

    AppRecord app;
    app.id = note.id.empty() ? sha256_hex(bytes) : note.id;
    app.timestamp = note.timestamp;
    app.source = note.source;
    app.vtd = note.vtd;
    app.permissions = manifest.permissions;
    app.app_components = manifest.components;
    app.intent_actions = manifest.intent_actions;
    app.hw_sw_features = manifest.features;
    app.strings = std::move(facts.strings);
    app.api_calls = std::move(facts.api_calls);
    app.user_methods = std::move(facts.user_methods);
    app.opcode_sequences = std::move(facts.opcode_sequences);
    app.basic_blocks = std::move(facts.basic_blocks);
    app.call_edges = std::move(facts.call_edges);
    validate(app);
    return app;
}

} // namespace apkbench
