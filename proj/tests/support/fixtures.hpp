#pragma once

// Randomized APK fixtures with builder-declared ground truth. Each fixture
// records the facts it put into the bytes; the parser must recover exactly
// those.

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "apkbench/app_ir.hpp"
#include "axml_writer.hpp"
#include "dex_builder.hpp"
#include "zip_writer.hpp"

namespace testsupport {

struct ApkFixture {
    std::vector<std::uint8_t> bytes;
    apkbench::AppRecord expected; // id/timestamp/vtd left for the caller
    std::string description;
};

namespace detail {

inline const std::vector<std::string>& api_pool()
{
    static const std::vector<std::string> pool = {
        "Landroid/net/Uri;->parse",
        "Landroid/telephony/TelephonyManager;->getDeviceId",
        "Landroid/telephony/SmsManager;->sendTextMessage",
        "Ljava/net/URL;->openConnection",
        "Ljava/lang/Runtime;->exec",
        "Landroid/app/WallpaperManager;->setBitmap",
        "Ljava/lang/StringBuilder;->append",
        "Landroid/util/Log;->d",
        "Ljavax/crypto/Cipher;->getInstance",
        "Landroid/content/Context;->startService",
    };
    return pool;
}

inline std::pair<std::string, std::string> split_method(const std::string& full)
{
    const auto p = full.find("->");
    return {full.substr(0, p), full.substr(p + 2)};
}

} // namespace detail

/// Builds fixture number `variant`. Variants differ in manifest encoding,
/// dex count, compression and code shape.
inline ApkFixture make_apk_fixture(unsigned variant)
{
    std::mt19937 rng(1000 + variant);
    auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
    ApkFixture fx;
    auto& exp = fx.expected;

    const std::string package = "com.fixture.app" + std::to_string(variant);
    const std::vector<std::string> perm_pool = {
        "android.permission.INTERNET", "android.permission.READ_SMS", "android.permission.SEND_SMS",
        "android.permission.SET_WALLPAPER", "android.permission.READ_PHONE_STATE"};
    std::vector<XmlElement> children;
    for (const auto& p : perm_pool) {
        if (rng() % 2) {
            children.push_back(el("uses-permission", {{"name", p}}));
            exp.permissions.insert(p);
        }
    }
    if (variant % 3 == 0) {
        children.push_back(el("uses-feature", {{"name", "android.hardware.telephony"}}));
        exp.hw_sw_features.insert("android.hardware.telephony");
    }
    std::vector<XmlElement> app_children;
    const char* kinds[] = {"activity", "service", "receiver", "provider"};
    const apkbench::ComponentKind kind_enum[] = {apkbench::ComponentKind::activity, apkbench::ComponentKind::service,
                                                 apkbench::ComponentKind::receiver, apkbench::ComponentKind::provider};
    const std::size_t ncomp = 1 + pick(4);
    for (std::size_t i = 0; i < ncomp; ++i) {
        const auto k = pick(4);
        // alternate the three naming styles: ".Rel", "Bare", fully qualified
        std::string written, resolved;
        switch (i % 3) {
        case 0:
            written = ".Comp" + std::to_string(i);
            resolved = package + written;
            break;
        case 1:
            written = "Comp" + std::to_string(i);
            resolved = package + "." + written;
            break;
        default:
            written = "org.other.Comp" + std::to_string(i);
            resolved = written;
        }
        std::vector<XmlElement> filters;
        if (k != 3 && pick(2)) {
            const std::string action = "android.intent.action.ACTION_" + std::to_string(pick(5));
            filters.push_back(el("intent-filter", {}, {el("action", {{"name", action}}),
                                                       el("category", {{"name", "android.intent.category.DEFAULT"}})}));
            exp.intent_actions.insert(action);
        }
        app_children.push_back(el(kinds[k], {{"name", written}}, filters));
        exp.app_components.insert({kind_enum[k], resolved});
    }
    children.push_back(el("application", {{"label", "Fixture"}}, app_children));
    const XmlElement root = manifest(package, children);

    std::vector<std::uint8_t> manifest_bytes;
    if (variant % 4 == 1) {
        const auto text = to_text_xml(root);
        manifest_bytes.assign(text.begin(), text.end());
    }
    else {
        AxmlWriter w;
        w.utf8 = variant % 4 == 2;
        w.with_resource_map = variant % 2 == 0;
        manifest_bytes = w.encode(root);
    }

    // Code: 0 dex for variant%8==7, 2 dex for variant%5==4, else 1.
    const std::size_t ndex = variant % 8 == 7 ? 0 : variant % 5 == 4 ? 2 : 1;
    std::vector<std::vector<std::string>> classes_per_dex(ndex);
    std::set<std::string> all_classes;
    for (std::size_t d = 0; d < ndex; ++d) {
        const std::size_t nc = 1 + pick(3);
        for (std::size_t c = 0; c < nc; ++c) {
            const std::string cls = "Lcom/fixture/app" + std::to_string(variant) + "/C" + std::to_string(d) + "_" +
                                    std::to_string(c) + ";";
            classes_per_dex[d].push_back(cls);
            all_classes.insert(cls);
        }
    }
    std::vector<std::string> all_class_list(all_classes.begin(), all_classes.end());

    ZipWriter zip;
    zip.add("AndroidManifest.xml", manifest_bytes, variant % 2 == 1);
    zip.add("res/raw/blob.bin", std::string("not code"), false);
    for (std::size_t d = 0; d < ndex; ++d) {
        DexBuilder b;
        std::vector<std::string> string_values;
        for (const auto& cls : classes_per_dex[d]) {
            std::vector<std::pair<std::uint32_t, std::vector<std::uint16_t>>> methods;
            std::vector<std::pair<std::uint32_t, apkbench::OpcodeSequence>> ordered;
            const std::size_t nm = 1 + pick(3);
            for (std::size_t m = 0; m < nm; ++m) {
                const std::string mname = "m" + std::to_string(m);
                const std::string full = cls + "->" + mname;
                exp.user_methods.insert(full);
                const auto midx = b.method(cls, mname);
                if (m == 2 && pick(2)) {
                    methods.emplace_back(midx, std::vector<std::uint16_t>{}); // abstract
                    continue;
                }
                Asm a;
                const std::size_t segments = 1 + pick(4);
                for (std::size_t s = 0; s < segments; ++s) {
                    switch (pick(7)) {
                    case 0: {
                        const std::string v = "str-" + std::to_string(variant) + "-" + std::to_string(pick(6)) +
                                              (pick(4) == 0 ? " \xc3\xa9\xe2\x82\xac" : "");
                        if (pick(3) == 0) {
                            a.const_string_jumbo(0, b.string(v));
                        }
                        else {
                            a.const_string(0, b.string(v));
                        }
                        exp.strings.insert(v);
                        break;
                    }
                    case 1:
                    case 2: {
                        const auto& api = detail::api_pool()[pick(detail::api_pool().size())];
                        const auto [c, n] = detail::split_method(api);
                        if (pick(4) == 0) {
                            a.invoke_range("static", b.method(c, n), 1);
                        }
                        else {
                            a.invoke(pick(2) ? "virtual" : "static", b.method(c, n));
                        }
                        a.move_result_object(1);
                        ++exp.api_calls[api];
                        exp.call_edges.insert({full, api, apkbench::CalleeKind::api});
                        break;
                    }
                    case 3: {
                        const auto& target = all_class_list[pick(all_class_list.size())];
                        const std::string callee_name = "m" + std::to_string(pick(2));
                        a.invoke("direct", b.method(target, callee_name));
                        exp.call_edges.insert({full, target + "->" + callee_name, apkbench::CalleeKind::user});
                        break;
                    }
                    case 4: { // if/else diamond
                        const int other = a.label();
                        const int join = a.label();
                        a.if_eqz(0, other);
                        a.const4(1, 1);
                        a.goto_(join);
                        a.bind(other);
                        a.const4(1, 2);
                        a.bind(join);
                        a.add_int(2, 1, 1);
                        break;
                    }
                    case 5: { // switch with two arms
                        const int arm0 = a.label();
                        const int arm1 = a.label();
                        const int done = a.label();
                        if (pick(2)) {
                            a.packed_switch(0, {arm0, arm1});
                        }
                        else {
                            a.sparse_switch(0, {arm0, arm1});
                        }
                        a.bind(arm0);
                        a.const16(1, 300);
                        a.goto16(done);
                        a.bind(arm1);
                        a.const16(1, 301);
                        a.bind(done);
                        a.nop();
                        break;
                    }
                    default: { // loop back-edge and a fill-array
                        const int top = a.label();
                        a.bind(top);
                        a.add_int(0, 0, 1);
                        if (pick(2)) {
                            a.fill_array_data(3, {1, 2, 3});
                        }
                        a.if_lt(0, 1, top);
                        break;
                    }
                    }
                }
                if (pick(5) == 0) {
                    a.throw_(0);
                }
                else {
                    a.return_void();
                }
                auto units = a.finish();
                apkbench::OpcodeSequence seq;
                seq.method = full;
                seq.opcodes = a.mnemonics();
                for (const auto& block : a.blocks()) {
                    ++exp.basic_blocks[apkbench::block_fingerprint(block)];
                }
                for (auto l : a.target_indices()) {
                    if (l != 0) {
                        seq.leaders.push_back(l);
                    }
                }
                ordered.emplace_back(midx, std::move(seq));
                methods.emplace_back(midx, std::move(units));
            }
            std::sort(ordered.begin(), ordered.end(),
                      [](const auto& x, const auto& y) { return x.first < y.first; });
            for (auto& [i, seq] : ordered) {
                exp.opcode_sequences.push_back(std::move(seq));
            }
            b.add_class(cls, std::move(methods));
        }
        const std::string entry = d == 0 ? "classes.dex" : "classes" + std::to_string(d + 1) + ".dex";
        zip.add(entry, b.build(), variant % 3 != 2);
    }
    fx.bytes = zip.build();
    fx.description = "variant " + std::to_string(variant) + " (" + std::to_string(ndex) + " dex, " +
                     (variant % 4 == 1 ? "text" : "binary") + " manifest)";
    return fx;
}

} // namespace testsupport
