#include <gtest/gtest.h>

#include <random>

#include "apkbench/apk.hpp"
#include "support/axml_writer.hpp"
#include "support/dex_builder.hpp"
#include "support/fixtures.hpp"
#include "support/zip_writer.hpp"

using namespace apkbench;
using testsupport::el;

namespace {

std::span<const std::uint8_t> view(const std::vector<std::uint8_t>& v) { return {v.data(), v.size()}; }

testsupport::XmlElement sms_manifest()
{
    return testsupport::manifest(
        "com.example.sms",
        {el("uses-permission", {{"name", "android.permission.READ_SMS"}}),
         el("uses-permission", {{"name", "android.permission.SEND_SMS"}}),
         el("application", {}, {el("activity", {{"name", ".Main"}})})});
}

/// One class, one method: const-string, invoke-virtual Uri.parse, return-void.
testsupport::DexBuilder uri_parse_dex()
{
    testsupport::DexBuilder b;
    testsupport::Asm a;
    a.const_string(0, b.string("http://example.com"));
    a.invoke("virtual", b.method("Landroid/net/Uri;", "parse"));
    a.return_void();
    b.add_class("Lcom/example/Main;", {{b.method("Lcom/example/Main;", "onCreate"), a.finish()}});
    return b;
}

} // namespace

TEST(Axml, TextManifestWallpaperExample)
{
    const auto text = testsupport::to_text_xml(sms_manifest());
    const auto m = parse_axml(text);
    EXPECT_EQ(m.package, "com.example.sms");
    EXPECT_EQ(m.permissions, (std::set<std::string>{"android.permission.READ_SMS", "android.permission.SEND_SMS"}));
    ASSERT_EQ(m.components.size(), 1u);
    EXPECT_EQ(m.components.begin()->kind, ComponentKind::activity);
    EXPECT_EQ(m.components.begin()->name, "com.example.sms.Main");
}

TEST(Axml, BinaryEqualsText)
{
    const auto root = sms_manifest();
    const auto from_text = parse_axml(testsupport::to_text_xml(root));
    for (bool utf8 : {false, true}) {
        testsupport::AxmlWriter w;
        w.utf8 = utf8;
        const auto bin = w.encode(root);
        EXPECT_EQ(parse_axml(view(bin)), from_text) << "utf8=" << utf8;
    }
}

TEST(Axml, EmptyElementSet)
{
    testsupport::AxmlWriter w;
    const auto bin = w.encode(testsupport::manifest("", {}));
    const auto m = parse_axml(view(bin));
    EXPECT_TRUE(m.permissions.empty());
    EXPECT_TRUE(m.components.empty());
    EXPECT_TRUE(m.intent_actions.empty());
    EXPECT_TRUE(m.features.empty());
}

TEST(Axml, UnknownChunkType)
{
    testsupport::AxmlWriter w;
    auto bin = w.encode(sms_manifest());
    bin[8] = 0x77; // first inner chunk (string pool) type
    try {
        parse_axml(view(bin));
        FAIL();
    }
    catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("unknown chunk type"), std::string::npos) << e.what();
    }
}

TEST(Axml, StringIndexOutOfRange)
{
    testsupport::AxmlWriter w;
    w.with_resource_map = false;
    auto bin = w.encode(sms_manifest());
    // locate the first start-element chunk and corrupt its name index
    std::size_t p = 8;
    while (detail::rd16(view(bin), p) != 0x0102) {
        p += detail::rd32(view(bin), p + 4);
    }
    bin[p + 20] = 0xff;
    bin[p + 21] = 0x7f;
    try {
        parse_axml(view(bin));
        FAIL();
    }
    catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("out of range"), std::string::npos) << e.what();
    }
}

TEST(Axml, MalformedUtf)
{
    testsupport::AxmlWriter w;
    w.utf8 = true;
    auto bin = w.encode(testsupport::manifest("com.abc", {}));
    // corrupt the first byte of the string "manifest" into a lone continuation byte
    const std::string needle = "manifest";
    auto it = std::search(bin.begin(), bin.end(), needle.begin(), needle.end());
    ASSERT_NE(it, bin.end());
    *it = 0x80;
    EXPECT_THROW(parse_axml(view(bin)), ParseError);

    testsupport::AxmlWriter w16;
    auto bin16 = w16.encode(testsupport::manifest("com.abc", {}));
    // first string's first code unit -> lone low surrogate
    const std::size_t pool = 8;
    const std::size_t strings_start = detail::rd32(view(bin16), pool + 20);
    const std::size_t first = pool + strings_start + detail::rd32(view(bin16), pool + 28) + 2;
    bin16[first] = 0x00;
    bin16[first + 1] = 0xdc;
    try {
        parse_axml(view(bin16));
        FAIL();
    }
    catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("malformed"), std::string::npos) << e.what();
    }
}

TEST(Axml, IntentActionsOnlyInsideFilters)
{
    const auto root = testsupport::manifest(
        "p", {el("uses-feature", {{"name", "android.hardware.camera"}}),
              el("application", {},
                 {el("receiver", {{"name", "p.R"}},
                     {el("intent-filter", {}, {el("action", {{"name", "android.provider.Telephony.SMS_RECEIVED"}})})}),
                  el("service", {{"name", "S"}}), el("provider", {{"name", "p.Prov"}}),
                  el("activity-alias", {{"name", ".Alias"}})})});
    testsupport::AxmlWriter w;
    const auto m = parse_axml(view(w.encode(root)));
    EXPECT_EQ(m.intent_actions, (std::set<std::string>{"android.provider.Telephony.SMS_RECEIVED"}));
    EXPECT_EQ(m.features, (std::set<std::string>{"android.hardware.camera"}));
    EXPECT_EQ(m.components.size(), 4u);
    EXPECT_TRUE(m.components.contains({ComponentKind::service, "p.S"}));
    EXPECT_TRUE(m.components.contains({ComponentKind::activity, "p.Alias"}));
}

TEST(Dex, MinimalApkFixture)
{
    testsupport::ZipWriter zip;
    testsupport::AxmlWriter w;
    const auto root = testsupport::manifest(
        "com.example", {el("uses-permission", {{"name", "android.permission.INTERNET"}}),
                        el("application", {}, {el("activity", {{"name", ".Main"}})})});
    zip.add("AndroidManifest.xml", w.encode(root));
    zip.add("classes.dex", uri_parse_dex().build());
    const auto apk = zip.build();
    const auto r = parse_apk(view(apk));
    EXPECT_EQ(r.id, sha256_hex(view(apk)));
    EXPECT_EQ(r.permissions, (std::set<std::string>{"android.permission.INTERNET"}));
    EXPECT_EQ(r.app_components, (std::set<AppComponent>{{ComponentKind::activity, "com.example.Main"}}));
    EXPECT_EQ(r.api_calls, (std::map<std::string, std::uint32_t>{{"Landroid/net/Uri;->parse", 1}}));
    EXPECT_EQ(r.user_methods, (std::set<std::string>{"Lcom/example/Main;->onCreate"}));
    EXPECT_EQ(r.call_edges, (std::set<CallEdge>{{"Lcom/example/Main;->onCreate", "Landroid/net/Uri;->parse", CalleeKind::api}}));
    EXPECT_EQ(r.strings, (std::set<std::string>{"http://example.com"}));
    ASSERT_EQ(r.opcode_sequences.size(), 1u);
    EXPECT_EQ(r.opcode_sequences[0].opcodes,
              (std::vector<std::string>{"const-string", "invoke-virtual", "return-void"}));
    EXPECT_EQ(r.basic_blocks.size(), 1u);
    EXPECT_EQ(r.vtd, 0);
}

TEST(Dex, ManifestWithoutDex)
{
    testsupport::ZipWriter zip;
    zip.add("AndroidManifest.xml", testsupport::to_text_xml(sms_manifest()));
    const auto r = parse_apk(view(zip.build()));
    EXPECT_EQ(r.permissions.size(), 2u);
    EXPECT_TRUE(r.api_calls.empty());
    EXPECT_TRUE(r.opcode_sequences.empty());
    EXPECT_TRUE(r.call_edges.empty());
    EXPECT_TRUE(r.basic_blocks.empty());
}

TEST(Dex, NotAZipAndMissingManifest)
{
    const std::vector<std::uint8_t> junk(100, 0x41);
    EXPECT_THROW(parse_apk(view(junk)), ParseError);
    testsupport::ZipWriter zip;
    zip.add("classes.dex", uri_parse_dex().build());
    try {
        parse_apk(view(zip.build()));
        FAIL();
    }
    catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("AndroidManifest.xml"), std::string::npos);
    }
}

TEST(Dex, MethodIndexOutOfRangeNamesMethodIds)
{
    auto b = uri_parse_dex();
    auto bytes = b.build();
    // the invoke's method operand: find the code unit 0x106e then bump its index
    const auto parsed = parse_dex(view(bytes));
    ASSERT_EQ(parsed.methods.size(), b.method_count());
    for (std::size_t i = 0; i + 3 < bytes.size(); ++i) {
        if (bytes[i] == 0x6e && bytes[i + 1] == 0x10) {
            bytes[i + 2] = 0x50;
            bytes[i + 3] = 0x00;
            break;
        }
    }
    try {
        parse_dex(view(bytes));
        FAIL();
    }
    catch (const ParseError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("method_ids"), std::string::npos) << msg;
        EXPECT_NE(msg.find("offset 0x"), std::string::npos) << msg;
    }
}

TEST(Dex, HeaderChecks)
{
    auto bytes = uri_parse_dex().build();
    auto bad = bytes;
    bad[3] = 'x';
    EXPECT_THROW(parse_dex(view(bad)), ParseError);
    bad = bytes;
    bad[40] = 0x21;
    EXPECT_THROW(parse_dex(view(bad)), ParseError);
    bad = bytes;
    bad.push_back(0);
    EXPECT_THROW(parse_dex(view(bad)), ParseError); // file_size mismatch
    bad = bytes;
    bad[60] = 0xf0; // string_ids_off far out of bounds
    bad[61] = 0xff;
    try {
        parse_dex(view(bad));
        FAIL();
    }
    catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("string_ids"), std::string::npos) << e.what();
    }
}

TEST(CallGraph, SingleApiCallOneBlock)
{
    const auto dex = parse_dex(view(uri_parse_dex().build()));
    const auto g = build_call_graph(dex);
    ASSERT_EQ(g.call_edges.size(), 1u);
    EXPECT_EQ(g.call_edges.begin()->kind, CalleeKind::api);
    EXPECT_EQ(g.basic_blocks.size(), 1u);
    EXPECT_EQ(g.basic_blocks.begin()->second, 1u);
}

TEST(CallGraph, DiamondHasFourBlocks)
{
    testsupport::DexBuilder b;
    testsupport::Asm a;
    const int other = a.label();
    const int join = a.label();
    a.if_eqz(0, other); // entry
    a.const4(1, 1);     // then-arm
    a.goto_(join);
    a.bind(other);
    a.const4(1, 2); // else-arm
    a.bind(join);
    a.nop(); // join
    a.return_void();
    b.add_class("LD;", {{b.method("LD;", "f"), a.finish()}});
    const auto dex = parse_dex(view(b.build()));
    const auto g = build_call_graph(dex);
    std::uint32_t total = 0;
    for (const auto& [fp, n] : g.basic_blocks) {
        total += n;
    }
    EXPECT_EQ(total, 4u);
    ASSERT_EQ(g.opcode_sequences.size(), 1u);
    EXPECT_EQ(g.opcode_sequences[0].opcodes.size(), 6u);
    EXPECT_TRUE(g.call_edges.empty());
}

TEST(CallGraph, EmptyCodeItem)
{
    testsupport::DexBuilder b;
    b.add_class("LE;", {{b.method("LE;", "abstractOne"), {}}});
    const auto g = build_call_graph(parse_dex(view(b.build())));
    EXPECT_TRUE(g.call_edges.empty());
    EXPECT_TRUE(g.basic_blocks.empty());
    EXPECT_EQ(g.user_methods, (std::set<std::string>{"LE;->abstractOne"}));
}

TEST(CallGraph, UserCallsAndDedupedEdges)
{
    testsupport::DexBuilder b;
    testsupport::Asm a;
    const auto helper = b.method("LA;", "helper");
    const auto api = b.method("Ljava/lang/Object;", "toString");
    a.invoke("direct", helper);
    a.invoke("direct", helper);
    a.invoke("virtual", api);
    a.invoke("virtual", api);
    a.return_void();
    testsupport::Asm h;
    h.return_void();
    b.add_class("LA;", {{b.method("LA;", "main"), a.finish()}, {helper, h.finish()}});
    const auto g = build_call_graph(parse_dex(view(b.build())));
    EXPECT_EQ(g.call_edges.size(), 2u);
    EXPECT_TRUE(g.call_edges.contains({"LA;->main", "LA;->helper", CalleeKind::user}));
    EXPECT_EQ(g.api_calls.at("Ljava/lang/Object;->toString"), 2u);
    EXPECT_FALSE(g.api_calls.contains("LA;->helper"));
}

TEST(Fixtures, TwentyFiveBuilderFixturesMatchGroundTruth)
{
    for (unsigned v = 0; v < 25; ++v) {
        const auto fx = testsupport::make_apk_fixture(v);
        ApkAnnotation note;
        note.id = "fx" + std::to_string(v);
        auto got = parse_apk(view(fx.bytes), note);
        auto want = fx.expected;
        want.id = note.id;
        want.timestamp = note.timestamp;
        want.source = note.source;
        EXPECT_EQ(got.permissions, want.permissions) << fx.description;
        EXPECT_EQ(got.app_components, want.app_components) << fx.description;
        EXPECT_EQ(got.intent_actions, want.intent_actions) << fx.description;
        EXPECT_EQ(got.strings, want.strings) << fx.description;
        EXPECT_EQ(got.api_calls, want.api_calls) << fx.description;
        EXPECT_EQ(got.call_edges, want.call_edges) << fx.description;
        EXPECT_EQ(got.opcode_sequences, want.opcode_sequences) << fx.description;
        EXPECT_EQ(got.basic_blocks, want.basic_blocks) << fx.description;
        EXPECT_EQ(got, want) << fx.description;
    }
}

TEST(Fixtures, DeterministicExtraction)
{
    const auto fx = testsupport::make_apk_fixture(4);
    EXPECT_EQ(parse_apk(view(fx.bytes)), parse_apk(view(fx.bytes)));
}

TEST(Fuzz, MutatedDexNeverCrashes)
{
    const auto seed_fx = testsupport::make_apk_fixture(3);
    const ZipArchive zip(view(seed_fx.bytes));
    const auto base = zip.read("classes.dex");
    std::mt19937_64 rng(77);
    int ok = 0, rejected = 0;
    for (int it = 0; it < 2000; ++it) {
        auto bytes = base;
        const int flips = 1 + static_cast<int>(rng() % 8);
        for (int k = 0; k < flips; ++k) {
            bytes[rng() % bytes.size()] = static_cast<std::uint8_t>(rng());
        }
        try {
            parse_dex(view(bytes));
            ++ok;
        }
        catch (const ParseError&) {
            ++rejected;
        }
    }
    EXPECT_EQ(ok + rejected, 2000);
    EXPECT_GT(rejected, 0);
}
