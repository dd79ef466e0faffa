#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "apkbench/featurization.hpp"
#include "support/random_records.hpp"

using namespace apkbench;

namespace {

HmmModel random_model(int S, std::size_t V, std::uint64_t seed)
{
    std::vector<std::string> vocab;
    for (std::size_t i = 0; i < V; ++i) {
        vocab.push_back("op" + std::to_string(i));
    }
    std::vector<std::vector<std::uint32_t>> none{{0}};
    return random_hmm(S, vocab, none, seed);
}

TrainPartition partition(const std::vector<AppRecord>& recs, const std::vector<ClassLabel>& labels)
{
    std::vector<const AppRecord*> p;
    for (const auto& r : recs) {
        p.push_back(&r);
    }
    return TrainPartition(p, labels);
}

AppRecord bare(const std::string& id)
{
    AppRecord r;
    r.id = id;
    r.timestamp = {2013, 1};
    r.source = Source::synthetic;
    return r;
}

// three toy apps over strings, API calls and permissions
std::vector<AppRecord> wallpaper_apps()
{
    const std::string tm = "Landroid/telephony/TelephonyManager;->";
    auto a1 = bare("app1");
    a1.strings = {"SUBSCRIBE"};
    a1.api_calls = {{"Lcom/sms/Reader;->getSmsDetails", 1}, {tm + "getDeviceId", 1},
                    {"Landroid/app/WallpaperManager;->setWallpaper", 1},
                    {"Landroid/net/wifi/WifiManager;->getConnectionInfo", 1}};
    a1.permissions = {"android.permission.SEND_SMS", "android.permission.READ_SMS"};
    auto a2 = bare("app2");
    a2.strings = {"http://m4lw4.re", "0x3d93cb"};
    a2.api_calls = {{"Landroid/content/pm/PackageManager;->getInstalledApps", 1},
                    {"Ljava/net/URL;->openConnection", 2}, {"Ljava/lang/Runtime;->exec", 1}};
    a2.permissions = {"android.permission.INTERNET"};
    auto a3 = bare("app3");
    a3.strings = {"wallpaper_dev", "0x3d93cb"};
    a3.api_calls = {{"Landroid/app/WallpaperManager;->setWallpaper", 1}, {tm + "getLine1Number", 1}};
    a3.permissions = {"android.permission.SET_WALLPAPER", "android.permission.INTERNET"};
    return {a1, a2, a3};
}

std::string short_name(const std::string& n)
{
    auto pos = n.rfind("->");
    if (pos != std::string::npos) {
        return n.substr(pos + 2);
    }
    pos = n.rfind("permission.");
    return pos == std::string::npos ? n : n.substr(pos + 11);
}

} // namespace

TEST(Hmm, SingleStateIsEmpiricalFrequency)
{
    std::vector<std::vector<std::uint32_t>> seqs{{0, 1, 1, 2}, {1, 1, 0}};
    HmmFitOptions opt;
    opt.states = 1;
    opt.emission_floor = 0.0;
    opt.tolerance = 1e-12;
    const auto fit = baum_welch(seqs, {"a", "b", "c"}, opt);
    // counts a=2 b=4 c=1 over 7 symbols; the unseen slot gets no mass
    const double expected = 2 * std::log(2.0 / 7) + 4 * std::log(4.0 / 7) + std::log(1.0 / 7);
    double ll = 0.0;
    for (const auto& s : seqs) {
        ll += log_likelihood(fit.model, s);
    }
    EXPECT_NEAR(ll, expected, 1e-9);
    EXPECT_NEAR(fit.model.B(0, 1), 4.0 / 7, 1e-9);
}

TEST(Hmm, ForwardMatchesPathEnumeration)
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto m = random_model(3, 4, seed);
        const std::vector<std::uint32_t> obs{2, 0, 4, 1}; // 4 is the unseen slot
        double total = 0.0;
        for (int p = 0; p < 81; ++p) {
            int s[4] = {p % 3, p / 3 % 3, p / 9 % 3, p / 27 % 3};
            double v = m.pi[static_cast<std::size_t>(s[0])] * m.B(s[0], obs[0]);
            for (int t = 1; t < 4; ++t) {
                v *= m.A(s[t - 1], s[t]) * m.B(s[t], obs[static_cast<std::size_t>(t)]);
            }
            total += v;
        }
        EXPECT_NEAR(log_likelihood(m, obs), std::log(total), 1e-10);
    }
    EXPECT_EQ(log_likelihood(random_model(2, 2, 1), std::vector<std::uint32_t>{}), 0.0);
}

TEST(Hmm, BaumWelchNeverDecreasesLikelihood)
{
    std::mt19937_64 rng(7);
    std::vector<std::vector<std::uint32_t>> seqs(20);
    for (auto& s : seqs) {
        for (int t = 0; t < 30; ++t) {
            s.push_back(static_cast<std::uint32_t>(rng() % 6));
        }
    }
    HmmFitOptions opt;
    opt.states = 3;
    opt.emission_floor = 0.0;
    opt.max_iterations = 40;
    opt.tolerance = 0.0;
    const auto fit = baum_welch(seqs, {"a", "b", "c", "d", "e", "f"}, opt);
    ASSERT_GE(fit.log_likelihood.size(), 2u);
    for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i) {
        EXPECT_GE(fit.log_likelihood[i], fit.log_likelihood[i - 1] - 1e-8 * std::abs(fit.log_likelihood[i - 1]));
    }
}

TEST(Hmm, DeterministicAcrossJobsAndJson)
{
    std::mt19937_64 rng(3);
    std::vector<std::vector<std::uint32_t>> seqs(40);
    for (auto& s : seqs) {
        for (int t = 0; t < 15; ++t) {
            s.push_back(static_cast<std::uint32_t>(rng() % 4));
        }
    }
    HmmFitOptions opt;
    opt.states = 2;
    set_default_jobs(1);
    const auto a = baum_welch(seqs, {"w", "x", "y", "z"}, opt);
    set_default_jobs(4);
    const auto b = baum_welch(seqs, {"w", "x", "y", "z"}, opt);
    set_default_jobs(0);
    EXPECT_EQ(a.model.b, b.model.b);
    EXPECT_EQ(a.log_likelihood, b.log_likelihood);
    EXPECT_EQ(hmm_to_json(hmm_from_json(hmm_to_json(a.model))), hmm_to_json(a.model));
    auto bad = hmm_to_json(a.model);
    bad["pi"] = {1.0};
    EXPECT_THROW(hmm_from_json(bad), ValidationError);
}

TEST(Selection, MutualInformationMatchesJointTableOracle)
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 2 + rng() % 31, d = 1 + rng() % 5;
        std::vector<FeatureVector> rows(n);
        std::vector<int> y(n);
        std::vector<std::vector<int>> dense(n, std::vector<int>(d));
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = static_cast<int>(rng() % 2);
            for (std::size_t j = 0; j < d; ++j) {
                dense[i][j] = static_cast<int>(rng() % 3 == 0);
                if (dense[i][j]) {
                    rows[i].emplace_back(static_cast<std::uint32_t>(j), 1.0 + static_cast<double>(rng() % 3));
                }
            }
        }
        const auto mi = mutual_information(to_matrix(rows, d), y);
        for (std::size_t j = 0; j < d; ++j) {
            std::map<std::pair<int, int>, double> joint;
            std::map<int, double> pf, pc;
            for (std::size_t i = 0; i < n; ++i) {
                joint[{dense[i][j], y[i]}] += 1.0 / static_cast<double>(n);
                pf[dense[i][j]] += 1.0 / static_cast<double>(n);
                pc[y[i]] += 1.0 / static_cast<double>(n);
            }
            double want = 0.0;
            for (const auto& [fc, p] : joint) {
                want += p * std::log2(p / (pf[fc.first] * pc[fc.second]));
            }
            EXPECT_NEAR(mi[j], want, 1e-12);
        }
    }
}

TEST(Selection, IndependentFeatureHasZeroInformation)
{
    // f = (1,1,0,0), c = (1,0,1,0)
    std::vector<FeatureVector> rows{{{0, 1.0}}, {{0, 1.0}}, {}, {}};
    const std::vector<int> y{1, 0, 1, 0};
    EXPECT_NEAR(mutual_information(to_matrix(rows, 1), y)[0], 0.0, 1e-15);
    // f = c: one full bit
    const std::vector<int> y2{1, 1, 0, 0};
    EXPECT_NEAR(mutual_information(to_matrix(rows, 1), y2)[0], 1.0, 1e-15);
}

TEST(Selection, TfidfToy)
{
    // feature 0 only in malware (3 occurrences), feature 1 in both, feature 2 only in goodware (1)
    std::vector<FeatureVector> rows{{{0, 2.0}, {1, 1.0}}, {{0, 1.0}}, {{1, 4.0}, {2, 1.0}}};
    const std::vector<int> y{1, 1, 0};
    const auto s = tfidf_scores(to_matrix(rows, 3), y);
    EXPECT_NEAR(s[0], 3.0 * std::log(2.0), 1e-12);
    EXPECT_NEAR(s[1], 0.0, 1e-12);
    EXPECT_NEAR(s[2], std::log(2.0), 1e-12);
    const std::vector<int> one_class{1, 1, 1};
    EXPECT_THROW(tfidf_scores(to_matrix(rows, 3), one_class), ValidationError);
}

TEST(Selection, TopKTiesAndClamp)
{
    const std::vector<double> s{0.5, 0.9, 0.5, 0.9, 0.1};
    EXPECT_EQ(top_k(s, 3), (std::vector<std::uint32_t>{1, 3, 0}));
    std::string warned;
    auto saved = warning_sink();
    warning_sink() = [&](const std::string& m) { warned = m; };
    EXPECT_EQ(top_k(s, 9).size(), 5u);
    warning_sink() = saved;
    EXPECT_NE(warned.find("k=9"), std::string::npos);
}

TEST(Markov, PackageAndFamilyProfiles)
{
    auto app = bare("m");
    const std::string self = "Lcom/x/Main;->run";
    app.user_methods = {self, "Lcom/x/Util;->go"};
    app.call_edges = {{self, "Landroid/net/Uri;->parse", CalleeKind::api},
                      {self, "Landroid/net/ConnectivityManager;->getActiveNetworkInfo", CalleeKind::api},
                      {self, "Ljava/lang/String;->length", CalleeKind::api}};
    const auto pkg = markov_profile(app, MarkovAbstraction::package);
    ASSERT_EQ(pkg.size(), 2u);
    EXPECT_NEAR(pkg.at("self-defined -> android.net"), 2.0 / 3, 1e-12);
    EXPECT_NEAR(pkg.at("self-defined -> java.lang"), 1.0 / 3, 1e-12);
    const auto fam = markov_profile(app, MarkovAbstraction::family);
    EXPECT_NEAR(fam.at("self-defined -> android"), 2.0 / 3, 1e-12);

    app.call_edges.insert({self, "Lcom/x/Util;->go", CalleeKind::user});
    app.call_edges.insert({self, "La/b;->c", CalleeKind::api});
    const auto more = markov_profile(app, MarkovAbstraction::package);
    EXPECT_NEAR(more.at("self-defined -> self-defined"), 0.2, 1e-12);
    EXPECT_NEAR(more.at("self-defined -> obfuscated"), 0.2, 1e-12);
    double row = 0.0;
    for (const auto& [k, v] : more) {
        row += v;
    }
    EXPECT_NEAR(row, 1.0, 1e-12);
}

TEST(Markov, Abstraction)
{
    EXPECT_EQ(abstract_method("Lcom/google/ads/AdView;->load", false, MarkovAbstraction::package), "com.google.ads");
    EXPECT_EQ(abstract_method("Lcom/google/ads/AdView;->load", false, MarkovAbstraction::family), "google");
    EXPECT_EQ(abstract_method("Landroidx/core/A;->b", false, MarkovAbstraction::family), "obfuscated");
    EXPECT_EQ(abstract_method("Ljavax/crypto/Cipher;->init", false, MarkovAbstraction::family), "javax");
}

TEST(Featurize, ToyAppsBinaryMatrix)
{
    const auto apps = wallpaper_apps();
    const auto train = partition(apps, {ClassLabel::malware, ClassLabel::malware, ClassLabel::goodware});
    const std::vector<FeatureCategory> cats{FeatureCategory::string, FeatureCategory::api_call,
                                            FeatureCategory::permission};
    const auto space = build_space(train, cats, Encoding::binary);
    ASSERT_EQ(space.size(), 16u);
    const std::vector<std::string> columns{"wallpaper_dev",  "http://m4lw4.re", "0x3d93cb",        "SUBSCRIBE",
                                           "getInstalledApps", "openConnection", "getSmsDetails",   "getDeviceId",
                                           "setWallpaper",   "getLine1Number",  "getConnectionInfo", "exec",
                                           "SET_WALLPAPER",  "INTERNET",        "SEND_SMS",        "READ_SMS"};
    std::map<std::string, std::uint32_t> by_short;
    for (std::uint32_t j = 0; j < space.size(); ++j) {
        by_short[short_name(space.name(j).name)] = j;
    }
    const std::vector<std::string> expected{"0001001110100011", "0110110000010100", "1010000011001100"};
    for (std::size_t i = 0; i < apps.size(); ++i) {
        const auto v = encode(apps[i], space);
        std::string row(16, '0');
        for (std::size_t c = 0; c < columns.size(); ++c) {
            const auto idx = by_short.at(columns[c]);
            for (const auto& [j, val] : v) {
                if (j == idx) {
                    EXPECT_EQ(val, 1.0);
                    row[c] = '1';
                }
            }
        }
        EXPECT_EQ(row, expected[i]) << apps[i].id;
    }
}

TEST(Featurize, CanonicalOrderFrequencyAndDrop)
{
    const auto apps = wallpaper_apps();
    const auto train = partition(apps, {ClassLabel::malware, ClassLabel::malware, ClassLabel::goodware});
    const std::vector<FeatureCategory> cats{FeatureCategory::permission, FeatureCategory::api_call};
    const auto space = build_space(train, cats, Encoding::binary, {{FeatureCategory::api_call, Encoding::frequency}});
    for (std::size_t j = 1; j < space.size(); ++j) {
        EXPECT_LT(space.name(j - 1), space.name(j));
    }
    EXPECT_EQ(space.name(0).category, FeatureCategory::permission);
    const auto v = encode(apps[1], space);
    const auto idx = *space.find({FeatureCategory::api_call, "Ljava/net/URL;->openConnection"});
    bool found = false;
    for (const auto& [j, val] : v) {
        if (j == idx) {
            EXPECT_EQ(val, 2.0);
            found = true;
        }
    }
    EXPECT_TRUE(found);

    auto unseen = bare("new");
    unseen.permissions = {"android.permission.CAMERA"};
    unseen.api_calls = {{"Lfoo/Bar;->baz", 3}};
    EXPECT_TRUE(encode(unseen, space).empty());
}

TEST(Featurize, NetworkAndCodeStrings)
{
    EXPECT_TRUE(is_network_address("http://m4lw4.re"));
    EXPECT_TRUE(is_network_address("10.0.0.1:8080"));
    EXPECT_FALSE(is_network_address("0x3d93cb"));
    EXPECT_FALSE(is_network_address("SUBSCRIBE"));
    const auto apps = wallpaper_apps();
    const auto train = partition(apps, {ClassLabel::malware, ClassLabel::malware, ClassLabel::goodware});
    const std::vector<FeatureCategory> cats{FeatureCategory::network_address, FeatureCategory::code_string};
    const auto space = build_space(train, cats, Encoding::binary);
    EXPECT_EQ(space.size(), 4u);
    EXPECT_TRUE(space.find({FeatureCategory::network_address, "http://m4lw4.re"}));
}

TEST(Featurize, ComponentCountsAreFrequencies)
{
    auto app = bare("c");
    app.app_components = {{ComponentKind::activity, "a.A"}, {ComponentKind::activity, "a.B"},
                          {ComponentKind::service, "a.S"}};
    std::vector<AppRecord> recs{app};
    const auto train = partition(recs, {ClassLabel::goodware});
    const std::vector<FeatureCategory> cats{FeatureCategory::component, FeatureCategory::component_count};
    const auto space = build_space(train, cats, Encoding::binary, {{FeatureCategory::component_count, Encoding::frequency}});
    EXPECT_EQ(space.size(), 5u);
    const auto v = encode(app, space);
    EXPECT_EQ(v.at(*space.find({FeatureCategory::component_count, "activity"})).second, 2.0);
    EXPECT_TRUE(space.find({FeatureCategory::component, "activity:a.A"}));
}

TEST(Featurize, PipelineSelectionKeepsUnselectedCategories)
{
    auto recs = testsupport::random_records(80, 5, 30);
    std::vector<ClassLabel> labels;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        labels.push_back(i % 2 ? ClassLabel::malware : ClassLabel::goodware);
    }
    const auto train = partition(recs, labels);
    FeaturePipelineSpec spec;
    spec.categories = {FeatureCategory::permission, FeatureCategory::api_call};
    spec.selection = Selection::mutual_information;
    spec.k = 5;
    spec.selection_categories = {FeatureCategory::api_call};
    const auto f = fit_featurizer(spec, train);
    std::size_t perms = 0, apis = 0;
    for (const auto& n : f.space.names()) {
        (n.category == FeatureCategory::permission ? perms : apis)++;
    }
    EXPECT_EQ(apis, 5u);
    EXPECT_EQ(perms, 10u);

    const auto x = f.transform(train.records());
    EXPECT_EQ(static_cast<std::size_t>(x.cols()), f.space.size());
    const auto back = featurizer_from_json(featurizer_to_json(f));
    EXPECT_EQ(back.space, f.space);
    EXPECT_EQ(featurizer_to_json(back), featurizer_to_json(f));

    spec.selection = Selection::tfidf;
    spec.selection_categories.clear();
    EXPECT_EQ(fit_featurizer(spec, train).space.size(), 5u);
}

TEST(Featurize, HmmScoresDeterministicAndRoundTrip)
{
    auto recs = testsupport::random_records(40, 9);
    std::vector<ClassLabel> labels;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        labels.push_back(i % 2 ? ClassLabel::malware : ClassLabel::goodware);
    }
    const auto train = partition(recs, labels);
    FeaturePipelineSpec spec;
    spec.categories = {FeatureCategory::hmm_score};
    spec.hmm.states = 2;
    spec.hmm.max_iterations = 20;
    set_default_jobs(1);
    const auto a = fit_featurizer(spec, train);
    set_default_jobs(3);
    const auto b = fit_featurizer(spec, train);
    set_default_jobs(0);
    EXPECT_EQ(featurizer_to_json(a), featurizer_to_json(b));
    const auto v = a.transform(recs[0]);
    ASSERT_EQ(v.size(), 2u);
    EXPECT_LT(v[0].second, 0.0);
    EXPECT_EQ(featurizer_from_json(featurizer_to_json(a)).transform(recs[0]), v);

    spec.categories.push_back(FeatureCategory::permission);
    EXPECT_THROW(fit_featurizer(spec, train), ValidationError);
}

TEST(Featurize, PartitionRejectsGreyware)
{
    std::vector<AppRecord> recs{bare("g")};
    EXPECT_THROW(partition(recs, {ClassLabel::greyware}), ValidationError);
    EXPECT_THROW(partition(recs, {}), ValidationError);
}
