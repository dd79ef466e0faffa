#include <gtest/gtest.h>

#include <sstream>

#include "apkbench/app_ir.hpp"
#include "support/random_records.hpp"

using namespace apkbench;

namespace {

AppRecord minimal()
{
    AppRecord r;
    r.id = "min";
    r.timestamp = {2014, 3};
    r.permissions = {"android.permission.INTERNET"};
    return r;
}

std::string replace_once(std::string s, const std::string& from, const std::string& to)
{
    const auto p = s.find(from);
    EXPECT_NE(p, std::string::npos) << from;
    return s.replace(p, from.size(), to);
}

} // namespace

TEST(AppIr, MinimalRecordRoundTrips)
{
    const std::vector<AppRecord> one{minimal()};
    const std::string text = serialize_corpus(one);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2); // header + 1 record
    const auto back = parse_corpus(text);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0], one[0]);
}

TEST(AppIr, DuplicateIdRejected)
{
    std::vector<AppRecord> two{minimal(), minimal()};
    two[0].id = two[1].id = "a";
    try {
        serialize_corpus(two);
        FAIL();
    }
    catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("'a'"), std::string::npos);
    }
}

TEST(AppIr, EmptyCorpusRejected)
{
    EXPECT_THROW(serialize_corpus(std::vector<AppRecord>{}), ValidationError);
}

TEST(AppIr, ByteCountMatchesStream)
{
    const auto recs = testsupport::random_records(20, 3);
    std::ostringstream os;
    const auto n = serialize_corpus(recs, os);
    EXPECT_EQ(n, os.str().size());
}

TEST(AppIr, ThousandRecordsReserializeBitwise)
{
    const auto recs = testsupport::random_records(1000, 11);
    const std::string a = serialize_corpus(recs);
    const auto back = parse_corpus(a);
    EXPECT_EQ(back, recs);
    EXPECT_EQ(serialize_corpus(back), a);
}

TEST(AppIr, MonthThirteenCitesRange)
{
    const std::vector<AppRecord> one{minimal()};
    const auto text = replace_once(serialize_corpus(one), "\"2014-03\"", "\"2014-13\"");
    try {
        parse_corpus(text);
        FAIL();
    }
    catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("month"), std::string::npos) << e.what();
    }
}

TEST(AppIr, EdgeToMissingApiRejected)
{
    auto r = minimal();
    r.user_methods = {"Lcom/a/A;->f"};
    r.api_calls = {{"Landroid/net/Uri;->parse", 1}};
    r.call_edges = {{"Lcom/a/A;->f", "Landroid/net/Uri;->parse", CalleeKind::api}};
    const std::vector<AppRecord> one{r};
    const auto good = serialize_corpus(one);
    EXPECT_NO_THROW(parse_corpus(good));
    const auto bad = replace_once(good, "\"api_calls\":{\"Landroid/net/Uri;->parse\":1}", "\"api_calls\":{}");
    try {
        parse_corpus(bad);
        FAIL();
    }
    catch (const ValidationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("'min'"), std::string::npos) << msg;
        EXPECT_NE(msg.find("api_calls"), std::string::npos) << msg;
    }
}

TEST(AppIr, MalformedLineReportsLineNumber)
{
    const std::vector<AppRecord> recs = testsupport::random_records(3, 5);
    std::string text = serialize_corpus(recs);
    text += "{not json\n";
    try {
        parse_corpus(text);
        FAIL();
    }
    catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 5"), std::string::npos) << e.what();
    }
}

TEST(AppIr, ValidationChecksEveryInvariant)
{
    auto base = testsupport::random_records(1, 9)[0];
    base.opcode_sequences = {{"Lcom/x/Main;->run", {"const/4", "return-void"}, {}}};
    refresh_basic_blocks(base);
    EXPECT_NO_THROW(validate(base));

    auto r = base;
    r.vtd = -1;
    EXPECT_THROW(validate(r), ValidationError);
    r = base;
    r.opcode_sequences[0].method = "Lcom/x/Other;->f";
    EXPECT_THROW(validate(r), ValidationError);
    r = base;
    r.opcode_sequences[0].opcodes.push_back("not-an-opcode");
    EXPECT_THROW(validate(r), ValidationError);
    r = base;
    r.basic_blocks.begin()->second += 1;
    EXPECT_THROW(validate(r), ValidationError);
    r = base;
    r.api_calls["Lx;->y"] = 0;
    EXPECT_THROW(validate(r), ValidationError);
    r = base;
    r.app_components.insert({ComponentKind::service, ""});
    EXPECT_THROW(validate(r), ValidationError);
}

TEST(AppIr, BasicBlocksSplitAtTerminatorsAndLeaders)
{
    OpcodeSequence seq{"m", {"if-eqz", "const/4", "goto", "const/4", "add-int", "return-void"}, {3, 4}};
    const auto blocks = split_blocks(seq);
    ASSERT_EQ(blocks.size(), 4u);
    EXPECT_EQ(blocks[0], (std::pair<std::size_t, std::size_t>{0, 1}));
    EXPECT_EQ(blocks[1], (std::pair<std::size_t, std::size_t>{1, 3}));
    EXPECT_EQ(blocks[2], (std::pair<std::size_t, std::size_t>{3, 4}));
    EXPECT_EQ(blocks[3], (std::pair<std::size_t, std::size_t>{4, 6}));
}

TEST(AppIr, FingerprintIgnoresEverythingButMnemonics)
{
    const std::vector<std::string> a{"const/4", "return-void"};
    const std::vector<std::string> b{"const/4", "return-void"};
    const std::vector<std::string> c{"const/16", "return-void"};
    EXPECT_EQ(block_fingerprint(a), block_fingerprint(b));
    EXPECT_NE(block_fingerprint(a), block_fingerprint(c));
}
