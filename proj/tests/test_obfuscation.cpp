#include <gtest/gtest.h>

#include "apkbench/obfuscation.hpp"
#include "support/random_records.hpp"

using namespace apkbench;

namespace {

AppRecord ten_edge_app()
{
    AppRecord r;
    r.id = "ten";
    r.timestamp = {2013, 5};
    r.user_methods = {"Lcom/a/Mal;->pay", "Lcom/a/Mal;-><init>", "Lcom/a/Net;->send"};
    r.app_components = {{ComponentKind::activity, "com.a.Mal"},
                        {ComponentKind::service, "com.a.Svc"},
                        {ComponentKind::activity, "com.google.android.gms.ads.AdActivity"}};
    r.strings = {"com.a.Mal", "http://m4lw4.re", "0x3d93cb"};
    for (int i = 0; i < 10; ++i) {
        const std::string api = "Landroid/x/Api" + std::to_string(i) + ";->call";
        r.api_calls[api] = 1 + static_cast<std::uint32_t>(i % 3);
        r.call_edges.insert({i % 2 ? "Lcom/a/Mal;->pay" : "Lcom/a/Net;->send", api, CalleeKind::api});
    }
    r.call_edges.insert({"Lcom/a/Mal;->pay", "Lcom/a/Net;->send", CalleeKind::user});
    r.opcode_sequences = {{"Lcom/a/Mal;->pay", {"const-string", "if-eqz", "invoke-virtual", "if-lt", "return-void"}, {4}},
                          {"Lcom/a/Net;->send", {"const/4", "if-nez", "add-int", "return-void"}, {3}}};
    refresh_basic_blocks(r);
    return r;
}

ObfuscationPlan zero_plan()
{
    ObfuscationPlan p;
    p.seed = 9;
    p.transforms = {ObfuscationTag::renaming, ObfuscationTag::code_structure, ObfuscationTag::encryption};
    p.set_all_fractions(0.0);
    return p;
}

AppRecord strip_tags(AppRecord r)
{
    r.obfuscation_tags.clear();
    return r;
}

} // namespace

TEST(Obfuscation, RenameRewritesUserNamesConsistently)
{
    const auto app = ten_edge_app();
    const auto out = rename(app, 5);
    validate(out);
    EXPECT_TRUE(out.obfuscation_tags.contains(ObfuscationTag::renaming));
    EXPECT_FALSE(out.user_methods.contains("Lcom/a/Mal;->pay"));
    EXPECT_EQ(out.user_methods.size(), app.user_methods.size());
    EXPECT_EQ(out.api_calls, app.api_calls);
    EXPECT_EQ(out.call_edges.size(), app.call_edges.size());
    for (const auto& e : out.call_edges) {
        EXPECT_TRUE(out.user_methods.contains(e.caller)) << e.caller;
        if (e.kind == CalleeKind::user) {
            EXPECT_TRUE(out.user_methods.contains(e.callee));
        }
        else {
            EXPECT_TRUE(app.api_calls.contains(e.callee));
        }
    }
    // constructors keep their names, classes do not
    EXPECT_EQ(std::count_if(out.user_methods.begin(), out.user_methods.end(),
                            [](const std::string& m) { return m.ends_with("-><init>"); }),
              1);
    // user components renamed, library component untouched
    EXPECT_FALSE(out.app_components.contains({ComponentKind::activity, "com.a.Mal"}));
    EXPECT_FALSE(out.app_components.contains({ComponentKind::service, "com.a.Svc"}));
    EXPECT_TRUE(out.app_components.contains({ComponentKind::activity, "com.google.android.gms.ads.AdActivity"}));
    EXPECT_EQ(out.app_components.size(), 3u);
    // class-name string follows the class, others stay
    EXPECT_FALSE(out.strings.contains("com.a.Mal"));
    EXPECT_TRUE(out.strings.contains("http://m4lw4.re"));
    const std::string mal_desc = obf_detail::class_of(*std::find_if(
        out.user_methods.begin(), out.user_methods.end(), [](const std::string& m) { return m.ends_with("<init>"); }));
    EXPECT_TRUE(out.strings.contains(obf_detail::dotted(mal_desc)));
    // opcode sequences moved with their methods
    for (const auto& s : out.opcode_sequences) {
        EXPECT_TRUE(out.user_methods.contains(s.method));
    }
    EXPECT_EQ(out.basic_blocks, app.basic_blocks);
}

TEST(Obfuscation, RenameIsDeterministicAndFractionZeroIsIdentity)
{
    const auto app = ten_edge_app();
    EXPECT_EQ(rename(app, 5), rename(app, 5));
    EXPECT_NE(rename(app, 5).user_methods, rename(app, 6).user_methods);
    EXPECT_EQ(strip_tags(rename(app, 5, 0.0)), app);
}

TEST(Obfuscation, RenameWithoutUserMethodsOnlyTags)
{
    AppRecord r;
    r.id = "bare";
    r.permissions = {"android.permission.INTERNET"};
    const auto out = rename(r, 1);
    EXPECT_EQ(strip_tags(out), r);
    EXPECT_EQ(out.obfuscation_tags, std::set<ObfuscationTag>{ObfuscationTag::renaming});
}

TEST(Obfuscation, IndirectionHalfOnTenEdges)
{
    auto plan = zero_plan();
    plan.indirection_fraction = 0.5;
    const auto app = ten_edge_app();
    const auto out = restructure(app, plan);
    validate(out);
    EXPECT_EQ(out.user_methods.size(), app.user_methods.size() + 5);
    int wrapped = 0;
    for (const auto& e : app.call_edges) {
        if (e.kind != CalleeKind::api) {
            continue;
        }
        if (out.call_edges.contains(e)) {
            continue;
        }
        ++wrapped;
        // caller -> wrapper -> api
        bool found = false;
        for (const auto& w : out.call_edges) {
            if (w.caller == e.caller && w.kind == CalleeKind::user && !app.user_methods.contains(w.callee) &&
                out.call_edges.contains({w.callee, e.callee, CalleeKind::api})) {
                found = true;
            }
        }
        EXPECT_TRUE(found) << e.callee;
    }
    EXPECT_EQ(wrapped, 5);
    EXPECT_EQ(out.api_calls, app.api_calls);
}

TEST(Obfuscation, FullReflectionLeavesOnlyReflectionApis)
{
    auto plan = zero_plan();
    plan.reflection_fraction = 1.0;
    plan.indirection_fraction = 0.3;
    const auto out = restructure(ten_edge_app(), plan);
    validate(out);
    ASSERT_FALSE(out.api_calls.empty());
    for (const auto& [api, n] : out.api_calls) {
        EXPECT_TRUE(obf_detail::is_reflection_api(api)) << api;
    }
    EXPECT_EQ(out.api_calls.at("Ljava/lang/reflect/Method;->invoke"), 10u);
}

TEST(Obfuscation, ZeroKnobsPreserveOpcodesAndEdgesUpToInversion)
{
    auto plan = zero_plan();
    plan.inversion_fraction = 1.0;
    const auto app = ten_edge_app();
    const auto out = restructure(app, plan);
    validate(out);
    EXPECT_EQ(out.call_edges, app.call_edges);
    ASSERT_EQ(out.opcode_sequences.size(), app.opcode_sequences.size());
    for (std::size_t i = 0; i < app.opcode_sequences.size(); ++i) {
        const auto& a = app.opcode_sequences[i].opcodes;
        const auto& b = out.opcode_sequences[i].opcodes;
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t k = 0; k < a.size(); ++k) {
            if (dalvik::is_conditional(a[k])) {
                EXPECT_EQ(b[k], dalvik::inverse_conditional(a[k]));
            }
            else {
                EXPECT_EQ(b[k], a[k]);
            }
        }
    }
}

TEST(Obfuscation, JunkInsertionKeepsLeadersOnOriginalInstructions)
{
    auto plan = zero_plan();
    plan.junk_rate = 2.0;
    const auto app = ten_edge_app();
    const auto out = restructure(app, plan);
    validate(out);
    for (std::size_t i = 0; i < app.opcode_sequences.size(); ++i) {
        const auto& a = app.opcode_sequences[i];
        const auto& b = out.opcode_sequences[i];
        EXPECT_EQ(b.opcodes.size(), 3 * a.opcodes.size());
        std::vector<std::string> kept;
        for (const auto& op : b.opcodes) {
            if (op != "nop" && op != "goto") {
                kept.push_back(op);
            }
        }
        EXPECT_EQ(kept, a.opcodes);
        ASSERT_EQ(b.leaders.size(), a.leaders.size());
        for (std::size_t k = 0; k < a.leaders.size(); ++k) {
            // leader now points at the first junk instruction in front of the original
            EXPECT_EQ(b.leaders[k], 3 * a.leaders[k]);
        }
    }
}

TEST(Obfuscation, EncryptionRemovesPlainStringsAndAddsDecryptor)
{
    auto plan = zero_plan();
    plan.string_fraction = 1.0;
    const auto app = ten_edge_app();
    const auto out = encrypt_strings(app, plan);
    validate(out);
    EXPECT_FALSE(out.strings.contains("http://m4lw4.re"));
    for (const auto& s : app.strings) {
        EXPECT_FALSE(out.strings.contains(s));
    }
    EXPECT_EQ(out.strings.size(), app.strings.size());
    EXPECT_TRUE(out.api_calls.contains("Ljavax/crypto/Cipher;->init"));
    EXPECT_TRUE(out.api_calls.contains("Ljavax/crypto/spec/SecretKeySpec;-><init>"));
    EXPECT_TRUE(out.api_calls.contains("Landroid/util/Base64;->decode"));
    // the method with const-string calls the decryptor
    bool edge = false;
    for (const auto& e : out.call_edges) {
        edge |= e.caller == "Lcom/a/Mal;->pay" && e.kind == CalleeKind::user && e.callee.ends_with("->decrypt");
    }
    EXPECT_TRUE(edge);
}

TEST(Obfuscation, EncryptionFractionZeroIsNoOp)
{
    auto plan = zero_plan();
    const auto app = ten_edge_app();
    EXPECT_EQ(strip_tags(encrypt_strings(app, plan)), app);
}

TEST(Obfuscation, AllKnobsZeroIsIdentityOnFeatures)
{
    const auto recs = testsupport::random_records(50, 21);
    for (const auto& r : recs) {
        EXPECT_EQ(strip_tags(obfuscate(r, zero_plan())), strip_tags(r));
    }
}

TEST(Obfuscation, PropertiesOnRandomRecords)
{
    ObfuscationPlan plan;
    plan.seed = 4;
    plan.transforms = {ObfuscationTag::renaming, ObfuscationTag::code_structure, ObfuscationTag::encryption};
    plan.set_all_fractions(0.6);
    plan.junk_rate = 1.5;
    const auto recs = testsupport::random_records(200, 33);
    for (const auto& r : recs) {
        const auto once = obfuscate(r, plan);
        ASSERT_NO_THROW(validate(once));
        const auto twice = obfuscate(once, plan);
        ASSERT_NO_THROW(validate(twice));
        EXPECT_EQ(once.vtd, r.vtd);
        EXPECT_EQ(once.timestamp, r.timestamp);
        EXPECT_EQ(once.family_id, r.family_id);
        EXPECT_EQ(once.permissions, r.permissions);
        EXPECT_EQ(once, obfuscate(r, plan));
        for (const auto& e : once.call_edges) {
            if (e.kind == CalleeKind::user) {
                EXPECT_TRUE(once.user_methods.contains(e.callee));
            }
        }
    }
}

TEST(Obfuscation, PlanValidation)
{
    ObfuscationPlan p;
    EXPECT_THROW(p.validate(), ValidationError);
    p.transforms = {ObfuscationTag::renaming};
    EXPECT_NO_THROW(p.validate());
    p.string_fraction = 1.5;
    EXPECT_THROW(p.validate(), ValidationError);
    p.string_fraction = 1.0;
    p.junk_rate = -1;
    EXPECT_THROW(p.validate(), ValidationError);
    const auto j = nlohmann::json::parse(R"({"seed":3,"transforms":["rn","co"],"fraction":0.25})");
    const auto q = plan_from_json(j);
    EXPECT_EQ(q.transforms.size(), 2u);
    EXPECT_DOUBLE_EQ(q.reflection_fraction, 0.25);
    EXPECT_EQ(plan_to_json(plan_from_json(plan_to_json(q))), plan_to_json(q));
    EXPECT_THROW(transform_from_short("xx"), UsageError);
}
