#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include "apkbench/corpus_synth.hpp"

using namespace apkbench;

namespace {

GeneratorConfig small_config()
{
    GeneratorConfig cfg;
    cfg.seed = 42;
    cfg.start = {2012, 1};
    cfg.months = 6;
    cfg.quota = {{ClassLabel::goodware, 8}, {ClassLabel::greyware, 4}, {ClassLabel::malware, 8}};
    FamilyProfile g;
    g.id = "g1";
    g.tendency = ClassLabel::goodware;
    g.birth = {2012, 1};
    g.death = {2012, 6};
    FamilyProfile x = g;
    x.id = "x1";
    x.tendency = ClassLabel::greyware;
    x.malice = 0.5;
    FamilyProfile m = g;
    m.id = "m1";
    m.tendency = ClassLabel::malware;
    FamilyProfile late = m;
    late.id = "m2";
    late.birth = {2012, 4};
    cfg.families = {g, x, m, late};
    return cfg;
}

std::string content_key(AppRecord r)
{
    r.id.clear();
    return to_json(r).dump();
}

} // namespace

TEST(CorpusSynth, SameSeedSameBytes)
{
    const auto cfg = small_config();
    set_default_jobs(1);
    const auto a = serialize_corpus(generate(cfg));
    set_default_jobs(4);
    const auto b = serialize_corpus(generate(cfg));
    set_default_jobs(0);
    EXPECT_EQ(a, b);
    auto other = cfg;
    other.seed = 43;
    EXPECT_NE(serialize_corpus(generate(other)), a);
}

TEST(CorpusSynth, QuotasAndValidity)
{
    GeneratorConfig cfg = small_config();
    cfg.months = 96;
    cfg.quota = {{ClassLabel::goodware, 100}, {ClassLabel::greyware, 100}, {ClassLabel::malware, 100}};
    for (auto& f : cfg.families) {
        f.death = {2019, 12};
    }
    const auto recs = generate(cfg);
    ASSERT_EQ(recs.size(), 28800u);
    std::map<std::pair<int, std::string>, int> counts;
    std::set<std::string> ids;
    for (const auto& r : recs) {
        ASSERT_NO_THROW(validate(r));
        ASSERT_TRUE(ids.insert(r.id).second);
        counts[{r.timestamp.index(), *r.family_id}]++;
        EXPECT_EQ(r.source, Source::synthetic);
    }
    int g_first = 0;
    for (const auto& [k, n] : counts) {
        if (k.first == YearMonth{2012, 1}.index() && k.second == "g1") {
            g_first = n;
        }
        if (k.second == "m2") {
            EXPECT_GE(k.first, YearMonth(2012, 4).index());
        }
    }
    EXPECT_EQ(g_first, 100);
    EXPECT_NO_THROW(serialize_corpus(recs));
}

TEST(CorpusSynth, BurstSizesFollowConfiguredDistribution)
{
    GeneratorConfig cfg;
    cfg.seed = 7;
    cfg.months = 1;
    cfg.quota = {{ClassLabel::malware, 1000}};
    cfg.duplicate_fraction = 0.5;
    FamilyProfile m;
    m.id = "burst";
    m.tendency = ClassLabel::malware;
    m.birth = m.death = cfg.start;
    m.burst_sizes = {{2, 0.5}, {3, 0.3}, {5, 0.2}};
    cfg.families = {m};
    const auto recs = generate(cfg);
    ASSERT_EQ(recs.size(), 1000u);

    std::map<std::string, int> groups;
    for (const auto& r : recs) {
        groups[content_key(r)]++;
    }
    std::map<int, double> observed;
    for (const auto& [k, n] : groups) {
        observed[n] += 1;
    }
    // the final group may be cut short by the quota; drop one observation of its size
    const double n_groups = static_cast<double>(groups.size());
    const std::map<int, double> expected_p{{1, 0.5}, {2, 0.25}, {3, 0.15}, {5, 0.1}};
    double chi2 = 0.0;
    for (const auto& [size, p] : expected_p) {
        const double e = p * n_groups;
        const double o = observed.count(size) ? observed[size] : 0.0;
        chi2 += (o - e) * (o - e) / e;
    }
    for (const auto& [size, o] : observed) {
        EXPECT_TRUE(expected_p.count(size) || o <= 1.0) << "unexpected group size " << size;
    }
    const boost::math::chi_squared dist(3.0);
    const double p_value = 1.0 - boost::math::cdf(dist, chi2);
    EXPECT_GT(p_value, 0.001) << "chi2=" << chi2;

    // bursts are exact copies under fresh ids
    std::set<std::string> ids;
    for (const auto& r : recs) {
        EXPECT_TRUE(ids.insert(r.id).second);
    }
}

TEST(CorpusSynth, NoBurstsWithoutBurstDistribution)
{
    auto cfg = small_config();
    cfg.duplicate_fraction = 1.0;
    const auto recs = generate(cfg);
    std::set<std::string> keys;
    for (const auto& r : recs) {
        keys.insert(content_key(r));
    }
    EXPECT_EQ(keys.size(), recs.size());
}

TEST(CorpusSynth, DriftRowsAreDistributions)
{
    const auto cfg = load_generator_config(APKBENCH_SOURCE_DIR "/configs/desk.json");
    const auto rows = drift_schedule(cfg);
    EXPECT_EQ(rows.size(), 24u * 3u);
    for (const auto& row : rows) {
        double s = 0.0;
        for (const auto& [id, w] : row.weights) {
            EXPECT_GE(w, 0.0);
            s += w;
            const auto& f = find_family(cfg, id);
            EXPECT_EQ(f.tendency, row.tendency);
            if (!f.active(row.month)) {
                EXPECT_EQ(w, 0.0);
            }
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(CorpusSynth, DeskProfileHalfOfMalwareFamiliesAreLate)
{
    const auto cfg = load_generator_config(APKBENCH_SOURCE_DIR "/configs/desk.json");
    EXPECT_EQ(cfg.families.size(), 12u);
    int mal = 0, late = 0;
    for (const auto& f : cfg.families) {
        if (f.tendency == ClassLabel::malware) {
            ++mal;
            late += f.birth.index() > YearMonth(2012, 12).index();
        }
    }
    EXPECT_EQ(late * 2, mal);
}

TEST(CorpusSynth, NoActiveFamilyIsAnError)
{
    auto cfg = small_config();
    cfg.families.erase(cfg.families.begin()); // no goodware
    EXPECT_THROW(generate(cfg), ValidationError);
    cfg = small_config();
    cfg.families[0].birth = {2013, 1};
    cfg.families[0].death = {2012, 1};
    EXPECT_THROW(generate(cfg), ValidationError);
    cfg = small_config();
    cfg.families[1].id = cfg.families[0].id;
    EXPECT_THROW(generate(cfg), ValidationError);
    cfg = small_config();
    cfg.families[2].vtd_weights = {{71, 1.0}};
    EXPECT_THROW(generate(cfg), ValidationError);
}

TEST(CorpusSynth, VtdFollowsTendency)
{
    const auto recs = generate(load_generator_config(APKBENCH_SOURCE_DIR "/configs/desk.json"));
    std::map<std::string, double> sum, n;
    for (const auto& r : recs) {
        const std::string fam = *r.family_id;
        const std::string cls = fam.substr(0, fam.find('-'));
        sum[cls] += r.vtd;
        n[cls] += 1;
        if (cls == "good") {
            EXPECT_EQ(r.vtd, 0);
        }
        else if (cls == "grey") {
            EXPECT_GE(r.vtd, 1);
            EXPECT_LE(r.vtd, 6);
        }
        else {
            EXPECT_GE(r.vtd, 7);
        }
    }
    EXPECT_LT(sum["good"] / n["good"], sum["grey"] / n["grey"]);
    EXPECT_LT(sum["grey"] / n["grey"], sum["mal"] / n["mal"]);
}

TEST(CorpusSynth, RepackagedFamilyContainsItsHost)
{
    const auto cfg = load_generator_config(APKBENCH_SOURCE_DIR "/configs/desk.json");
    const World w = build_world(cfg.world_seed);
    const auto host = family_inclusion(w, cfg, find_family(cfg, "good-games"));
    const auto repack = family_inclusion(w, cfg, find_family(cfg, "mal-repack"));
    for (auto k : vocab_kinds) {
        for (std::size_t i = 0; i < host.at(k).size(); ++i) {
            EXPECT_GE(repack.at(k)[i], host.at(k)[i]);
        }
    }
}

TEST(CorpusSynth, MutationRateZeroGivesPrototypeCopies)
{
    auto cfg = small_config();
    cfg.mutation_rate = 0.0;
    cfg.families = {cfg.families[0], cfg.families[2]};
    cfg.quota = {{ClassLabel::goodware, 5}, {ClassLabel::malware, 5}};
    const auto recs = generate(cfg);
    std::map<std::string, std::set<std::set<std::string>>> perms;
    for (const auto& r : recs) {
        perms[*r.family_id].insert(r.permissions);
    }
    for (const auto& [fam, sets] : perms) {
        EXPECT_EQ(sets.size(), 1u) << fam;
    }
}

TEST(CorpusSynth, DiversityOneDecouplesAppsFromThePrototype)
{
    auto cfg = small_config();
    cfg.mutation_rate = 0.0;
    cfg.families = {cfg.families[0], cfg.families[2]};
    cfg.families[0].diversity = 1.0;
    cfg.quota = {{ClassLabel::goodware, 10}, {ClassLabel::malware, 10}};
    std::map<std::string, std::set<std::set<std::string>>> perms;
    for (const auto& r : generate(cfg)) {
        perms[*r.family_id].insert(r.permissions);
    }
    EXPECT_EQ(perms["m1"].size(), 1u);
    EXPECT_GT(perms["g1"].size(), 30u);
}

TEST(CorpusSynth, AppSignatureMakesComponentsUnique)
{
    auto cfg = small_config();
    cfg.families = {cfg.families[0], cfg.families[2]};
    cfg.families[0].app_signature = true;
    cfg.mutation_rate = 0.0;
    cfg.quota = {{ClassLabel::goodware, 5}, {ClassLabel::malware, 5}};
    std::map<std::string, std::set<std::set<AppComponent>>> pkgs;
    std::map<std::string, std::size_t> count;
    for (const auto& r : generate(cfg)) {
        pkgs[*r.family_id].insert(r.app_components);
        ++count[*r.family_id];
    }
    EXPECT_EQ(pkgs["g1"].size(), count["g1"]);
    EXPECT_EQ(pkgs["m1"].size(), 1u);
}

TEST(CorpusSynth, ConfigJsonRoundTrip)
{
    const auto cfg = load_generator_config(APKBENCH_SOURCE_DIR "/configs/desk.json");
    const auto j = generator_config_to_json(cfg);
    const auto back = generator_config_from_json(j);
    EXPECT_EQ(generator_config_to_json(back), j);
    EXPECT_EQ(serialize_corpus(generate(back)), serialize_corpus(generate(cfg)));
}
