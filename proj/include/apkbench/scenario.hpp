#pragma once

// Experimental scenarios. Each derives its datasets from one corpus, trains the
// detector roster, and collects metric runs, report tables, plot series and
// directional checks.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "app_ir.hpp"
#include "common.hpp"
#include "corpus_synth.hpp"
#include "dataset_ops.hpp"
#include "detectors.hpp"
#include "metrics.hpp"
#include "obfuscation.hpp"

namespace apkbench {

enum class ScenarioKind { baseline, redundancy, labeling_sweep, greyware_probe, imbalance, evasion, evolution };

inline std::string_view to_string(ScenarioKind k)
{
    switch (k) {
    case ScenarioKind::baseline: return "baseline";
    case ScenarioKind::redundancy: return "redundancy";
    case ScenarioKind::labeling_sweep: return "labeling-sweep";
    case ScenarioKind::greyware_probe: return "greyware-probe";
    case ScenarioKind::imbalance: return "imbalance";
    case ScenarioKind::evasion: return "evasion";
    case ScenarioKind::evolution: return "evolution";
    }
    return "?";
}

inline ScenarioKind scenario_kind_from(std::string_view s)
{
    static constexpr ScenarioKind all[] = {ScenarioKind::baseline,       ScenarioKind::redundancy,
                                           ScenarioKind::labeling_sweep, ScenarioKind::greyware_probe,
                                           ScenarioKind::imbalance,      ScenarioKind::evasion,
                                           ScenarioKind::evolution};
    return detail::enum_from(s, all, "scenario");
}

struct CorpusSource {
    std::optional<std::filesystem::path> file; // serialized corpus
    std::optional<GeneratorConfig> generator;
};

/// Synthetic second scan: every vtd moves by a rounded normal step.
struct RescanConfig {
    std::uint64_t seed = 1;
    double stddev = 2.0;
};

struct SecondLabels {
    std::optional<std::filesystem::path> file; // JSON object: id -> vtd
    std::optional<RescanConfig> rescan;
};

struct AssertConfig {
    bool enabled = false;
    double margin = 0.0;
    double min_share = 0.75; // share of detectors a per-detector check needs
};

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::baseline;
    std::string name;
    std::uint64_t seed = 1;
    CorpusSource corpus;
    LabelingPolicy labeling;
    std::vector<int> thresholds{1, 2, 3, 4, 5, 6};
    std::optional<SecondLabels> second_labels;
    SamplingConfig sampling;
    Period train_period, test_period;
    bool has_test_period = false;
    DedupConfig dedup;
    std::vector<std::string> minority_families; // empty: malware families dedup left untouched
    ObfuscationPlan obfuscation;                // transform set is chosen per run
    double evasion_fraction = 0.1;
    int bucket_months = 3;
    std::vector<DetectorSpec> detectors = default_detectors();
    AssertConfig assertions;
    nlohmann::json source; // config as given, after overrides

    void validate() const
    {
        if (!corpus.file && !corpus.generator) {
            throw ValidationError("scenario: corpus source missing (need corpus.file or corpus.generator)");
        }
        if (detectors.empty()) {
            throw ValidationError("scenario: empty detector roster");
        }
        std::set<std::string> names;
        for (const auto& d : detectors) {
            if (!names.insert(d.name).second) {
                throw ValidationError("scenario: detector '" + d.name + "' listed twice");
            }
        }
        if (kind == ScenarioKind::labeling_sweep) {
            if (thresholds.empty()) {
                throw ValidationError("scenario: labeling-sweep needs thresholds");
            }
            for (std::size_t i = 0; i < thresholds.size(); ++i) {
                if (thresholds[i] <= labeling.goodware_max_vtd || (i > 0 && thresholds[i] <= thresholds[i - 1])) {
                    throw ValidationError("scenario: thresholds must be strictly increasing and above goodware_max_vtd");
                }
            }
        }
        if (kind == ScenarioKind::evolution) {
            if (!has_test_period || !train_period.to || !test_period.from) {
                throw ValidationError("scenario: evolution needs train_period.to and test_period.from");
            }
            if (!(*train_period.to < *test_period.from)) {
                throw ValidationError("scenario: evolution test period must start after the training period");
            }
        }
        if (!(evasion_fraction > 0.0 && evasion_fraction <= 1.0)) {
            throw ValidationError("scenario: evasion_fraction must lie in (0,1]");
        }
        if (bucket_months < 1) {
            throw ValidationError("scenario: bucket_months must be >= 1");
        }
        if (!(assertions.min_share >= 0.0 && assertions.min_share <= 1.0)) {
            throw ValidationError("scenario: assert.min_share must lie in [0,1]");
        }
    }
};

namespace scenario_detail {

inline Period period_from_json(const nlohmann::json& j)
{
    Period p;
    if (j.contains("from")) {
        p.from = YearMonth::parse(j.at("from").get<std::string>());
    }
    if (j.contains("to")) {
        p.to = YearMonth::parse(j.at("to").get<std::string>());
    }
    for (const auto& [k, v] : j.items()) {
        if (k != "from" && k != "to") {
            throw ValidationError("period: unknown key '" + k + "'");
        }
    }
    if (p.from && p.to && *p.to < *p.from) {
        throw ValidationError("period: 'to' precedes 'from'");
    }
    return p;
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p)
{
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

} // namespace scenario_detail

inline constexpr std::string_view scenario_format = "apkbench-scenario";

/// Relative paths resolve against `base_dir`. Component seeds absent from the
/// file derive from the scenario seed.
inline ScenarioConfig scenario_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {})
{
    using namespace scenario_detail;
    static const std::set<std::string> known = {
        "format",     "version",     "scenario",  "name",          "seed",       "corpus",
        "labeling",   "thresholds",  "second_labels", "sampling",   "train_period", "test_period",
        "dedup",      "minority_families", "obfuscation", "evasion_fraction", "bucket_months", "detectors",
        "assert"};
    ScenarioConfig c;
    try {
        if (!j.is_object()) {
            throw ValidationError("scenario config must be a JSON object");
        }
        for (const auto& [k, v] : j.items()) {
            if (!known.contains(k)) {
                throw ValidationError("scenario config: unknown key '" + k + "'");
            }
        }
        if (j.contains("format") && j.at("format") != scenario_format) {
            throw ValidationError("scenario config: unexpected format tag");
        }
        if (j.contains("version") && j.at("version") != 1) {
            throw ValidationError("scenario config: unsupported version " + j.at("version").dump());
        }
        c.kind = scenario_kind_from(j.at("scenario").get<std::string>());
        c.name = j.value("name", std::string(to_string(c.kind)));
        c.seed = j.value("seed", c.seed);

        const auto& cj = j.at("corpus");
        for (const auto& [k, v] : cj.items()) {
            if (k != "file" && k != "generator" && k != "generator_overrides") {
                throw ValidationError("scenario corpus: unknown key '" + k + "'");
            }
        }
        if (cj.contains("file") == cj.contains("generator")) {
            throw ValidationError("scenario corpus: give exactly one of 'file' and 'generator'");
        }
        if (cj.contains("file")) {
            c.corpus.file = resolve(base_dir, cj.at("file").get<std::string>());
        }
        else {
            nlohmann::json g = cj.at("generator").is_string()
                                   ? nlohmann::json::parse(read_file(resolve(base_dir, cj.at("generator").get<std::string>())))
                                   : cj.at("generator");
            if (cj.contains("generator_overrides")) {
                g.merge_patch(cj.at("generator_overrides"));
            }
            c.corpus.generator = generator_config_from_json(g);
        }

        if (j.contains("labeling")) {
            c.labeling = policy_from_json(j.at("labeling"));
        }
        if (j.contains("thresholds")) {
            c.thresholds = j.at("thresholds").get<std::vector<int>>();
        }
        if (j.contains("second_labels")) {
            const auto& sj = j.at("second_labels");
            SecondLabels s;
            if (sj.contains("file") == sj.contains("rescan")) {
                throw ValidationError("second_labels: give exactly one of 'file' and 'rescan'");
            }
            if (sj.contains("file")) {
                s.file = resolve(base_dir, sj.at("file").get<std::string>());
            }
            else {
                RescanConfig r;
                r.seed = derive_seed(c.seed, "rescan");
                r.seed = sj.at("rescan").value("seed", r.seed);
                r.stddev = sj.at("rescan").value("stddev", r.stddev);
                if (!(r.stddev >= 0.0)) {
                    throw ValidationError("second_labels: rescan stddev must be >= 0");
                }
                s.rescan = r;
            }
            c.second_labels = s;
        }
        nlohmann::json sj = j.value("sampling", nlohmann::json::object());
        if (!sj.contains("seed")) {
            sj["seed"] = derive_seed(c.seed, "sampling");
        }
        c.sampling = sampling_from_json(sj);
        if (j.contains("train_period")) {
            c.train_period = period_from_json(j.at("train_period"));
        }
        if (j.contains("test_period")) {
            c.test_period = period_from_json(j.at("test_period"));
            c.has_test_period = true;
        }
        c.dedup.seed = derive_seed(c.seed, "dedup");
        if (j.contains("dedup")) {
            c.dedup.epsilon = j.at("dedup").value("epsilon", c.dedup.epsilon);
            c.dedup.seed = j.at("dedup").value("seed", c.dedup.seed);
            c.dedup.validate();
        }
        if (j.contains("minority_families")) {
            c.minority_families = j.at("minority_families").get<std::vector<std::string>>();
        }
        nlohmann::json oj = j.value("obfuscation", nlohmann::json::object());
        if (!oj.contains("seed")) {
            oj["seed"] = derive_seed(c.seed, "obfuscation");
        }
        oj["transforms"] = {"rn", "co", "enc"};
        c.obfuscation = plan_from_json(oj);
        c.evasion_fraction = j.value("evasion_fraction", c.evasion_fraction);
        c.bucket_months = j.value("bucket_months", c.bucket_months);
        if (j.contains("detectors")) {
            c.detectors.clear();
            for (const auto& d : j.at("detectors")) {
                c.detectors.push_back(d.is_string() ? default_detector(d.get<std::string>()) : detector_spec_from_json(d));
            }
        }
        if (j.contains("assert")) {
            const auto& aj = j.at("assert");
            for (const auto& [k, v] : aj.items()) {
                if (k != "enabled" && k != "margin" && k != "min_share") {
                    throw ValidationError("scenario assert: unknown key '" + k + "'");
                }
            }
            c.assertions.enabled = aj.value("enabled", c.assertions.enabled);
            c.assertions.margin = aj.value("margin", c.assertions.margin);
            c.assertions.min_share = aj.value("min_share", c.assertions.min_share);
        }
    }
    catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("scenario config: ") + e.what());
    }
    std::sort(c.detectors.begin(), c.detectors.end(),
              [](const DetectorSpec& a, const DetectorSpec& b) { return a.name < b.name; });
    c.source = j;
    c.validate();
    return c;
}

inline ScenarioConfig load_scenario_config(const std::filesystem::path& path)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    }
    catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return scenario_config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Results

/// Cells are strings, numbers or null (absent).
struct ReportTable {
    std::string name; // file stem
    std::string title;
    std::vector<std::string> header;
    std::vector<std::vector<nlohmann::json>> rows;
};

struct PlotSeries {
    std::string name; // file stem
    std::string x_label;
    std::vector<nlohmann::json> x;
    std::vector<std::string> labels;
    std::vector<std::vector<std::optional<double>>> y; // one column per label
};

struct Annotation {
    std::string check;
    bool holds = false;
    std::string detail;
};

struct ScenarioResult {
    ScenarioKind kind = ScenarioKind::baseline;
    std::string name;
    std::uint64_t seed = 0;
    std::string config_hash;
    nlohmann::json config;
    std::vector<std::string> detectors;
    std::map<std::string, std::map<std::string, MetricsReport>> runs; // run -> detector -> metrics
    std::map<std::string, std::map<std::string, std::optional<double>>> measures;
    std::vector<ReportTable> tables;
    std::vector<PlotSeries> series;
    std::vector<Annotation> annotations;
    nlohmann::json data = nlohmann::json::object();
    bool assertions_enabled = false;

    const ReportTable& table(const std::string& n) const
    {
        for (const auto& t : tables) {
            if (t.name == n) {
                return t;
            }
        }
        throw ValidationError("result: no table '" + n + "'");
    }

    std::vector<const Annotation*> failed() const
    {
        std::vector<const Annotation*> out;
        for (const auto& a : annotations) {
            if (!a.holds) {
                out.push_back(&a);
            }
        }
        return out;
    }
};

inline std::optional<double> optional_from_json(const nlohmann::json& j)
{
    return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

inline MetricsReport metrics_from_json(const nlohmann::json& j)
{
    MetricsReport r;
    r.counts = {j.at("tp").get<std::uint64_t>(), j.at("fp").get<std::uint64_t>(), j.at("tn").get<std::uint64_t>(),
                j.at("fn").get<std::uint64_t>()};
    r.tpr = optional_from_json(j.at("tpr"));
    r.fpr = optional_from_json(j.at("fpr"));
    r.precision = optional_from_json(j.at("precision"));
    r.f1 = optional_from_json(j.at("f1"));
    r.a_mean = optional_from_json(j.at("a_mean"));
    r.kappa = optional_from_json(j.at("kappa"));
    return r;
}

inline constexpr std::string_view result_format = "apkbench-result";

inline nlohmann::json result_to_json(const ScenarioResult& r)
{
    nlohmann::json j;
    j["format"] = result_format;
    j["version"] = 1;
    j["scenario"] = to_string(r.kind);
    j["name"] = r.name;
    j["seed"] = r.seed;
    j["config_hash"] = r.config_hash;
    j["config"] = r.config;
    j["detectors"] = r.detectors;
    j["assertions_enabled"] = r.assertions_enabled;
    j["runs"] = nlohmann::json::object();
    for (const auto& [run, rows] : r.runs) {
        for (const auto& [det, m] : rows) {
            j["runs"][run][det] = metrics_to_json(m);
        }
    }
    j["measures"] = nlohmann::json::object();
    for (const auto& [m, rows] : r.measures) {
        j["measures"][m] = nlohmann::json::object();
        for (const auto& [det, v] : rows) {
            j["measures"][m][det] = optional_json(v);
        }
    }
    j["tables"] = nlohmann::json::array();
    for (const auto& t : r.tables) {
        j["tables"].push_back({{"name", t.name}, {"title", t.title}, {"header", t.header}, {"rows", t.rows}});
    }
    j["series"] = nlohmann::json::array();
    for (const auto& s : r.series) {
        nlohmann::json ys = nlohmann::json::array();
        for (const auto& col : s.y) {
            nlohmann::json c = nlohmann::json::array();
            for (const auto& v : col) {
                c.push_back(optional_json(v));
            }
            ys.push_back(std::move(c));
        }
        j["series"].push_back(
            {{"name", s.name}, {"x_label", s.x_label}, {"x", s.x}, {"labels", s.labels}, {"y", std::move(ys)}});
    }
    j["annotations"] = nlohmann::json::array();
    for (const auto& a : r.annotations) {
        j["annotations"].push_back({{"check", a.check}, {"holds", a.holds}, {"detail", a.detail}});
    }
    j["data"] = r.data;
    return j;
}

inline ScenarioResult result_from_json(const nlohmann::json& j)
{
    ScenarioResult r;
    try {
        if (j.at("format") != result_format || j.at("version") != 1) {
            throw ValidationError("result: unexpected format tag or version");
        }
        r.kind = scenario_kind_from(j.at("scenario").get<std::string>());
        r.name = j.at("name").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.config_hash = j.at("config_hash").get<std::string>();
        r.config = j.at("config");
        r.detectors = j.at("detectors").get<std::vector<std::string>>();
        r.assertions_enabled = j.at("assertions_enabled").get<bool>();
        for (const auto& [run, rows] : j.at("runs").items()) {
            for (const auto& [det, m] : rows.items()) {
                r.runs[run][det] = metrics_from_json(m);
            }
        }
        for (const auto& [m, rows] : j.at("measures").items()) {
            auto& dst = r.measures[m];
            for (const auto& [det, v] : rows.items()) {
                dst[det] = optional_from_json(v);
            }
        }
        for (const auto& t : j.at("tables")) {
            r.tables.push_back({t.at("name").get<std::string>(), t.at("title").get<std::string>(),
                                t.at("header").get<std::vector<std::string>>(),
                                t.at("rows").get<std::vector<std::vector<nlohmann::json>>>()});
        }
        for (const auto& s : j.at("series")) {
            PlotSeries p{s.at("name").get<std::string>(), s.at("x_label").get<std::string>(),
                         s.at("x").get<std::vector<nlohmann::json>>(), s.at("labels").get<std::vector<std::string>>(),
                         {}};
            for (const auto& col : s.at("y")) {
                std::vector<std::optional<double>> c;
                for (const auto& v : col) {
                    c.push_back(optional_from_json(v));
                }
                if (c.size() != p.x.size()) {
                    throw ValidationError("result: series '" + p.name + "' column length mismatch");
                }
                p.y.push_back(std::move(c));
            }
            if (p.y.size() != p.labels.size()) {
                throw ValidationError("result: series '" + p.name + "' label count mismatch");
            }
            r.series.push_back(std::move(p));
        }
        for (const auto& a : j.at("annotations")) {
            r.annotations.push_back(
                {a.at("check").get<std::string>(), a.at("holds").get<bool>(), a.at("detail").get<std::string>()});
        }
        r.data = j.at("data");
    }
    catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("result: ") + e.what());
    }
    return r;
}

// ---------------------------------------------------------------------------
// Runner

namespace scenario_detail {

inline std::vector<AppRecord> load_corpus(const CorpusSource& src)
{
    if (src.file) {
        std::ifstream in(*src.file, std::ios::binary);
        if (!in) {
            throw IoError("cannot open for reading: " + src.file->string());
        }
        return parse_corpus(in);
    }
    return generate(*src.generator);
}

struct Context {
    const ScenarioConfig& cfg;
    std::vector<AppRecord> records;
    std::map<std::string, std::size_t> index;
    ScenarioResult result;

    const AppRecord& at(const std::string& id) const
    {
        const auto it = index.find(id);
        if (it == index.end()) {
            throw ValidationError("scenario: id '" + id + "' not in corpus");
        }
        return records[it->second];
    }

    std::vector<const AppRecord*> ptrs(const std::vector<std::string>& ids) const
    {
        std::vector<const AppRecord*> out;
        out.reserve(ids.size());
        for (const auto& id : ids) {
            out.push_back(&at(id));
        }
        return out;
    }

    std::vector<AppRecord> copies(const std::vector<std::string>& ids) const
    {
        std::vector<AppRecord> out;
        out.reserve(ids.size());
        for (const auto& id : ids) {
            out.push_back(at(id));
        }
        return out;
    }

    double margin() const { return cfg.assertions.margin; }
};

inline std::vector<int> truth(const std::vector<std::string>& ids, const std::map<std::string, ClassLabel>& labels)
{
    std::vector<int> y;
    y.reserve(ids.size());
    for (const auto& id : ids) {
        y.push_back(labels.at(id) == ClassLabel::malware ? 1 : 0);
    }
    return y;
}

/// One trained model per roster entry, in roster order.
inline std::vector<TrainedDetector> fit_roster(const Context& ctx, const SplitPlan& plan)
{
    const auto train = TrainPartition(ctx.ptrs(plan.train), [&] {
        std::vector<ClassLabel> l;
        for (const auto& id : plan.train) {
            l.push_back(plan.labels.at(id));
        }
        return l;
    }());
    const auto views = fold_views(plan);
    std::vector<TrainedDetector> out(ctx.cfg.detectors.size());
    parallel_for(out.size(), [&](std::size_t i) {
        const auto& spec = ctx.cfg.detectors[i];
        out[i] = fit_detector(spec, train, views, derive_seed(ctx.cfg.seed, "fit:" + spec.name), plan.time_aware);
    });
    return out;
}

inline std::vector<Prediction> predict_roster(const std::vector<TrainedDetector>& dets,
                                              const std::vector<const AppRecord*>& apps)
{
    std::vector<Prediction> out(dets.size());
    parallel_for(dets.size(), [&](std::size_t i) { out[i] = predict(dets[i], apps); });
    return out;
}

inline std::vector<int> take(const std::vector<int>& v, const std::vector<std::size_t>& idx)
{
    std::vector<int> out;
    for (auto i : idx) {
        out.push_back(v[i]);
    }
    return out;
}

inline std::map<std::string, MetricsReport> score(const Context& ctx, const std::vector<Prediction>& preds,
                                                  const std::vector<int>& y)
{
    std::map<std::string, MetricsReport> out;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        out[ctx.cfg.detectors[i].name] = metrics(confusion(y, preds[i].labels));
    }
    return out;
}

inline nlohmann::json cell(const std::optional<double>& v) { return optional_json(v); }

inline ReportTable metrics_table(const std::string& name, const std::string& title,
                                 const std::map<std::string, MetricsReport>& rows)
{
    ReportTable t{name, title, {"Method", "TPR", "FPR", "Precision", "F1", "A_mean", "Kappa"}, {}};
    for (const auto& [det, m] : rows) {
        t.rows.push_back({det, cell(m.tpr), cell(m.fpr), cell(m.precision), cell(m.f1), cell(m.a_mean), cell(m.kappa)});
    }
    return t;
}

/// Mean over detectors, skipping absent values.
template <class F>
std::optional<double> mean_of(const std::map<std::string, MetricsReport>& rows, F field)
{
    double s = 0.0;
    int n = 0;
    for (const auto& [det, m] : rows) {
        if (const auto v = field(m)) {
            s += *v;
            ++n;
        }
    }
    return n ? std::optional<double>(s / n) : std::nullopt;
}

inline std::string show(const std::optional<double>& v) { return v ? format_double(*v, 4) : "absent"; }

inline void expect_less(Context& ctx, const std::string& check, const std::optional<double>& lo,
                        const std::optional<double>& hi)
{
    const bool holds = lo && hi && *lo < *hi - ctx.margin();
    ctx.result.annotations.push_back({check, holds, show(lo) + " vs " + show(hi)});
}

inline std::size_t count_class(const std::vector<std::string>& ids, const std::map<std::string, ClassLabel>& labels,
                               ClassLabel c)
{
    return static_cast<std::size_t>(
        std::count_if(ids.begin(), ids.end(), [&](const std::string& id) { return labels.at(id) == c; }));
}

inline std::vector<nlohmann::json> composition_row(const std::string& what, const std::vector<std::string>& ids,
                                                   const std::map<std::string, ClassLabel>& labels)
{
    const auto m = count_class(ids, labels, ClassLabel::malware);
    const auto g = count_class(ids, labels, ClassLabel::goodware);
    return {what, m, g, g ? nlohmann::json(static_cast<double>(m) / static_cast<double>(g)) : nlohmann::json()};
}

inline ReportTable composition_table() { return {"composition", "Dataset composition", {"Set", "Malware", "Goodware", "Malware/Goodware"}, {}}; }

inline std::vector<ClassLabel> labels_of(const Context& ctx, const LabelingPolicy& p) { return label(ctx.records, p); }

inline std::map<std::string, ClassLabel> label_map(const Context& ctx, const std::vector<ClassLabel>& labels)
{
    std::map<std::string, ClassLabel> m;
    for (std::size_t i = 0; i < ctx.records.size(); ++i) {
        m[ctx.records[i].id] = labels[i];
    }
    return m;
}

/// Training plan over an explicit id list, with fresh folds.
inline SplitPlan plan_over(const Context& ctx, const std::vector<std::string>& train, const std::vector<std::string>& test,
                           const std::map<std::string, ClassLabel>& labels, bool time_aware)
{
    SplitPlan p;
    p.train = train;
    p.test = test;
    p.k = ctx.cfg.sampling.folds;
    p.time_aware = time_aware;
    std::vector<YearMonth> months;
    std::vector<ClassLabel> l;
    for (const auto& id : train) {
        months.push_back(ctx.at(id).timestamp);
        l.push_back(labels.at(id));
        p.labels[id] = labels.at(id);
    }
    for (const auto& id : test) {
        p.labels[id] = labels.at(id);
    }
    p.folds = make_folds(p.train, months, l, p.k, time_aware, ctx.cfg.sampling.seed);
    return p;
}

/// Per-month sample (every sampled id) of the given records under `cfg`.
inline std::vector<std::string> sampled_ids(const Context& ctx, const std::vector<std::string>& pool,
                                            const std::map<std::string, ClassLabel>& labels, const SamplingConfig& cfg,
                                            const Period& period = {})
{
    const auto recs = ctx.copies(pool);
    std::vector<ClassLabel> l;
    for (const auto& id : pool) {
        l.push_back(labels.at(id));
    }
    std::vector<std::string> out;
    for (const auto& ms : sample_months(recs, l, cfg, period)) {
        for (auto i : ms.goodware) {
            out.push_back(recs[i].id);
        }
        for (auto i : ms.malware) {
            out.push_back(recs[i].id);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

struct Baseline {
    std::vector<ClassLabel> labels;
    std::map<std::string, ClassLabel> label_of;
    SplitPlan plan;
    std::vector<TrainedDetector> dets;
    std::vector<int> y;
    std::vector<Prediction> preds;
    std::map<std::string, MetricsReport> rows;
};

inline Baseline run_baseline_core(Context& ctx)
{
    Baseline b;
    b.labels = labels_of(ctx, ctx.cfg.labeling);
    b.label_of = label_map(ctx, b.labels);
    b.plan = sample_split(ctx.records, b.labels, ctx.cfg.sampling, ctx.cfg.train_period);
    b.dets = fit_roster(ctx, b.plan);
    b.y = truth(b.plan.test, b.plan.labels);
    b.preds = predict_roster(b.dets, ctx.ptrs(b.plan.test));
    b.rows = score(ctx, b.preds, b.y);
    return b;
}

inline void baseline(Context& ctx)
{
    auto b = run_baseline_core(ctx);
    auto comp = composition_table();
    comp.rows.push_back(composition_row("train", b.plan.train, b.plan.labels));
    comp.rows.push_back(composition_row("test", b.plan.test, b.plan.labels));
    ctx.result.tables.push_back(std::move(comp));
    ctx.result.tables.push_back(metrics_table("metrics", "Baseline performance", b.rows));
    ctx.result.runs["baseline"] = b.rows;
    std::size_t above = 0;
    for (const auto& [det, m] : b.rows) {
        above += m.a_mean && *m.a_mean > 0.5 + ctx.margin();
    }
    ctx.result.annotations.push_back({"every detector beats chance (A_mean > 0.5)", above == b.rows.size(),
                                      std::to_string(above) + "/" + std::to_string(b.rows.size())});
}

inline void redundancy(Context& ctx)
{
    const auto& cfg = ctx.cfg;
    auto b = run_baseline_core(ctx);

    // dedup within the scenario period
    std::vector<AppRecord> in_period;
    std::vector<ClassLabel> in_labels;
    for (std::size_t i = 0; i < ctx.records.size(); ++i) {
        if (cfg.train_period.contains(ctx.records[i].timestamp)) {
            in_period.push_back(ctx.records[i]);
            in_labels.push_back(b.labels[i]);
        }
    }
    const auto dd = dedup(in_period, in_labels, cfg.dedup);
    std::set<std::string> kept;
    for (const auto& r : dd.kept) {
        kept.insert(r.id);
    }

    // filtered training: the baseline training set minus duplicates, rebalanced per month
    std::map<YearMonth, std::pair<std::vector<std::string>, std::vector<std::string>>> by_month;
    for (const auto& id : b.plan.train) {
        if (kept.contains(id)) {
            auto& cellv = by_month[ctx.at(id).timestamp];
            (b.plan.labels.at(id) == ClassLabel::goodware ? cellv.first : cellv.second).push_back(id);
        }
    }
    std::set<std::string> keep_train;
    for (auto& [month, cellv] : by_month) {
        auto& [g, m] = cellv;
        Rng rng(derive_seed(cfg.sampling.seed, "rebalance:" + month.str()));
        const auto n = std::min(g.size(), m.size());
        for (auto* v : {&g, &m}) {
            if (v->size() > n) {
                std::sort(v->begin(), v->end());
                rng.shuffle(*v);
                v->resize(n);
            }
            keep_train.insert(v->begin(), v->end());
        }
    }
    std::vector<std::string> ftrain, ftest;
    for (const auto& id : b.plan.train) {
        if (keep_train.contains(id)) {
            ftrain.push_back(id);
        }
    }
    for (const auto& id : b.plan.test) {
        if (kept.contains(id)) {
            ftest.push_back(id);
        }
    }
    const bool same = ftrain == b.plan.train;
    const auto fplan = same ? b.plan : plan_over(ctx, ftrain, b.plan.test, b.plan.labels, b.plan.time_aware);
    const auto fdets = same ? b.dets : fit_roster(ctx, fplan);
    const auto fpreds = same ? b.preds : predict_roster(fdets, ctx.ptrs(b.plan.test));
    const auto frows = score(ctx, fpreds, b.y);

    // filtered test: a sub-sequence of the baseline test set
    std::vector<std::size_t> fidx;
    for (std::size_t i = 0; i < b.plan.test.size(); ++i) {
        if (kept.contains(b.plan.test[i])) {
            fidx.push_back(i);
        }
    }
    std::map<std::string, MetricsReport> ffrows;
    for (std::size_t d = 0; d < fdets.size(); ++d) {
        ffrows[cfg.detectors[d].name] = metrics(confusion(take(b.y, fidx), take(fpreds[d].labels, fidx)));
    }

    // minority families: named, or malware families dedup left untouched
    std::set<std::string> minority(cfg.minority_families.begin(), cfg.minority_families.end());
    if (minority.empty()) {
        std::set<std::string> touched, all;
        for (std::size_t i = 0; i < in_period.size(); ++i) {
            if (in_labels[i] == ClassLabel::malware && in_period[i].family_id) {
                all.insert(*in_period[i].family_id);
                if (!kept.contains(in_period[i].id)) {
                    touched.insert(*in_period[i].family_id);
                }
            }
        }
        std::set_difference(all.begin(), all.end(), touched.begin(), touched.end(),
                            std::inserter(minority, minority.end()));
    }
    std::vector<std::size_t> midx;
    for (std::size_t i = 0; i < b.plan.test.size(); ++i) {
        const auto& r = ctx.at(b.plan.test[i]);
        if (b.y[i] == 1 && r.family_id && minority.contains(*r.family_id)) {
            midx.push_back(i);
        }
    }
    auto minority_recall = [&](const Prediction& p, const std::vector<std::size_t>& idx) -> std::optional<double> {
        if (idx.empty()) {
            return std::nullopt;
        }
        std::size_t hit = 0;
        for (auto i : idx) {
            hit += p.labels[i] == 1;
        }
        return static_cast<double>(hit) / static_cast<double>(idx.size());
    };
    std::vector<std::size_t> mfidx;
    for (auto i : midx) {
        if (kept.contains(b.plan.test[i])) {
            mfidx.push_back(i);
        }
    }
    auto& mu = ctx.result.measures["minority_recall:unfiltered-train"];
    auto& mf = ctx.result.measures["minority_recall:filtered-train"];
    auto& mff = ctx.result.measures["minority_recall:filtered-train-filtered-test"];
    ReportTable mt{"minority_recall", "Recall on minority malware families",
                   {"Method", "Unfiltered train", "Filtered train", "Filtered train, filtered test"}, {}};
    std::size_t improved = 0;
    for (std::size_t d = 0; d < cfg.detectors.size(); ++d) {
        const auto& name = cfg.detectors[d].name;
        mu[name] = minority_recall(b.preds[d], midx);
        mf[name] = minority_recall(fpreds[d], midx);
        mff[name] = minority_recall(fpreds[d], mfidx);
        improved += mu[name] && mf[name] && *mf[name] > *mu[name] + ctx.margin();
        mt.rows.push_back({name, cell(mu[name]), cell(mf[name]), cell(mff[name])});
    }

    ctx.result.runs["unfiltered-train"] = b.rows;
    ctx.result.runs["filtered-train"] = frows;
    ctx.result.runs["filtered-train-filtered-test"] = ffrows;

    auto comp = composition_table();
    std::vector<std::string> all_ids, kept_ids;
    std::map<std::string, ClassLabel> period_labels;
    for (std::size_t i = 0; i < in_period.size(); ++i) {
        if (in_labels[i] == ClassLabel::greyware) {
            continue;
        }
        all_ids.push_back(in_period[i].id);
        period_labels[in_period[i].id] = in_labels[i];
        if (kept.contains(in_period[i].id)) {
            kept_ids.push_back(in_period[i].id);
        }
    }
    comp.rows.push_back(composition_row("original", all_ids, period_labels));
    comp.rows.push_back(composition_row("filtered", kept_ids, period_labels));
    comp.rows.push_back(composition_row("unfiltered train", b.plan.train, b.plan.labels));
    comp.rows.push_back(composition_row("filtered train", ftrain, b.plan.labels));
    comp.rows.push_back(composition_row("unfiltered test", b.plan.test, b.plan.labels));
    comp.rows.push_back(composition_row("filtered test", ftest, b.plan.labels));
    ctx.result.tables.push_back(std::move(comp));
    ctx.result.tables.push_back(metrics_table("unfiltered_train", "Unfiltered train, unfiltered test", b.rows));
    ctx.result.tables.push_back(metrics_table("filtered_train", "Filtered train, unfiltered test", frows));
    ctx.result.tables.push_back(metrics_table("filtered_both", "Filtered train, filtered test", ffrows));
    ctx.result.tables.push_back(std::move(mt));

    // group-size histogram per class
    std::map<std::size_t, std::pair<std::size_t, std::size_t>> hist; // size -> (malware, goodware)
    std::map<std::string, ClassLabel> lab;
    for (std::size_t i = 0; i < in_period.size(); ++i) {
        lab[in_period[i].id] = in_labels[i];
    }
    for (const auto& g : dd.groups) {
        const auto c = lab.at(g.representative);
        if (c == ClassLabel::malware) {
            hist[g.members.size()].first++;
        }
        else if (c == ClassLabel::goodware) {
            hist[g.members.size()].second++;
        }
    }
    ReportTable ht{"group_sizes", "Duplicate groups per group size", {"Group size", "Malware groups", "Goodware groups"}, {}};
    PlotSeries hs{"group_sizes", "group_size", {}, {"malware", "goodware"}, {{}, {}}};
    for (const auto& [size, c] : hist) {
        ht.rows.push_back({size, c.first, c.second});
        hs.x.push_back(size);
        hs.y[0].push_back(static_cast<double>(c.first));
        hs.y[1].push_back(static_cast<double>(c.second));
    }
    ctx.result.tables.push_back(std::move(ht));
    ctx.result.series.push_back(std::move(hs));
    ctx.result.data["minority_families"] = minority;
    ctx.result.data["minority_test_samples"] = midx.size();
    ctx.result.data["same_split"] = same;

    const auto need = static_cast<std::size_t>(std::ceil(cfg.assertions.min_share * static_cast<double>(cfg.detectors.size())));
    ctx.result.annotations.push_back({"filtered training raises minority-family recall", !midx.empty() && improved >= need,
                                      std::to_string(improved) + "/" + std::to_string(cfg.detectors.size()) +
                                          " detectors improved, need " + std::to_string(need)});
}

inline void labeling_sweep(Context& ctx)
{
    const auto& cfg = ctx.cfg;
    ReportTable sweep{"sweep", "TPR and FPR per malware threshold", {"Method"}, {}};
    ReportTable counts{"class_counts", "Class counts per malware threshold", {"Threshold", "Malware", "Goodware", "Greyware"}, {}};
    PlotSeries amean{"amean_by_threshold", "malware_min_vtd", {}, {}, {}};
    for (const auto& d : cfg.detectors) {
        amean.labels.push_back(d.name);
        amean.y.emplace_back();
    }
    std::map<std::string, std::vector<nlohmann::json>> sweep_rows;
    std::vector<std::size_t> malware_counts;
    std::vector<std::optional<double>> means;
    for (int t : cfg.thresholds) {
        LabelingPolicy p = cfg.labeling;
        p.malware_min_vtd = t;
        const auto labels = labels_of(ctx, p);
        std::size_t n[3] = {0, 0, 0};
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (cfg.train_period.contains(ctx.records[i].timestamp)) {
                n[swap_index(labels[i])]++;
            }
        }
        counts.rows.push_back({t, n[2], n[0], n[1]});
        malware_counts.push_back(n[2]);
        const auto plan = sample_split(ctx.records, labels, cfg.sampling, cfg.train_period);
        const auto dets = fit_roster(ctx, plan);
        const auto rows = score(ctx, predict_roster(dets, ctx.ptrs(plan.test)), truth(plan.test, plan.labels));
        const std::string run = "vtd>=" + std::to_string(t);
        sweep.header.push_back("TPR " + run);
        sweep.header.push_back("FPR " + run);
        amean.x.push_back(t);
        std::size_t d = 0;
        for (const auto& [name, m] : rows) {
            sweep_rows[name].push_back(cell(m.tpr));
            sweep_rows[name].push_back(cell(m.fpr));
            amean.y[d++].push_back(m.a_mean);
        }
        means.push_back(mean_of(rows, [](const MetricsReport& m) { return m.a_mean; }));
        ctx.result.runs[run] = rows;
    }
    for (auto& [name, cells] : sweep_rows) {
        std::vector<nlohmann::json> row{name};
        row.insert(row.end(), cells.begin(), cells.end());
        sweep.rows.push_back(std::move(row));
    }
    ctx.result.tables.push_back(std::move(sweep));
    ctx.result.tables.push_back(std::move(counts));
    ctx.result.series.push_back(std::move(amean));
    ctx.result.data["malware_counts"] = malware_counts;

    bool monotone = true;
    for (std::size_t i = 1; i < malware_counts.size(); ++i) {
        monotone = monotone && malware_counts[i] <= malware_counts[i - 1];
    }
    ctx.result.annotations.push_back({"malware count non-increasing in the threshold", monotone,
                                      nlohmann::json(malware_counts).dump()});
    expect_less(ctx, "mean A_mean rises from the lowest to the highest threshold", means.front(), means.back());
}

inline std::map<std::string, int> second_vtd(const Context& ctx, const SecondLabels& s)
{
    std::map<std::string, int> out;
    if (s.file) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(*s.file));
            for (const auto& [id, v] : j.items()) {
                out[id] = v.get<int>();
            }
        }
        catch (const nlohmann::json::exception& e) {
            throw ParseError(s.file->string() + ": " + e.what());
        }
        return out;
    }
    for (const auto& r : ctx.records) {
        Rng rng(derive_seed(s.rescan->seed, r.id));
        const auto step = std::llround(rng.normal(0.0, s.rescan->stddev));
        out[r.id] = static_cast<int>(std::clamp<long long>(r.vtd + step, 0, 99));
    }
    return out;
}

inline void greyware_probe_scenario(Context& ctx)
{
    const auto& cfg = ctx.cfg;
    auto b = run_baseline_core(ctx);
    std::vector<std::string> grey;
    std::vector<int> vtd;
    for (std::size_t i = 0; i < ctx.records.size(); ++i) {
        if (b.labels[i] == ClassLabel::greyware && cfg.train_period.contains(ctx.records[i].timestamp)) {
            grey.push_back(ctx.records[i].id);
            vtd.push_back(ctx.records[i].vtd);
        }
    }
    if (grey.empty()) {
        throw ValidationError("scenario: no greyware records in the period");
    }
    const auto preds = predict_roster(b.dets, ctx.ptrs(grey));
    ReportTable t{"greyware", "Decisions on greyware by VTD (G: goodware ratio, M: malware ratio)", {"Method"}, {}};
    for (int v = 1; v <= 6; ++v) {
        t.header.push_back("G vtd=" + std::to_string(v));
        t.header.push_back("M vtd=" + std::to_string(v));
    }
    t.header.push_back("G total");
    t.header.push_back("M total");
    std::array<double, 6> m_sum{};
    std::array<int, 6> m_n{};
    for (std::size_t d = 0; d < preds.size(); ++d) {
        const auto& name = cfg.detectors[d].name;
        const auto probe = greyware_probe(vtd, preds[d].labels);
        std::vector<nlohmann::json> row{name};
        for (std::size_t v = 0; v < 6; ++v) {
            row.push_back(cell(probe.by_vtd[v].g));
            row.push_back(cell(probe.by_vtd[v].m));
            ctx.result.measures["greyware_m:vtd=" + std::to_string(v + 1)][name] = probe.by_vtd[v].m;
            if (probe.by_vtd[v].m) {
                m_sum[v] += *probe.by_vtd[v].m;
                m_n[v]++;
            }
        }
        row.push_back(cell(probe.overall.g));
        row.push_back(cell(probe.overall.m));
        ctx.result.measures["greyware_g"][name] = probe.overall.g;
        ctx.result.measures["greyware_m"][name] = probe.overall.m;
        t.rows.push_back(std::move(row));
    }
    ctx.result.tables.push_back(std::move(t));
    ctx.result.runs["baseline"] = b.rows;
    ctx.result.tables.push_back(metrics_table("metrics", "Baseline performance", b.rows));
    std::array<std::size_t, 6> bucket{};
    for (int v : vtd) {
        if (v >= 1 && v <= 6) {
            bucket[static_cast<std::size_t>(v - 1)]++;
        }
    }
    ctx.result.data["greyware_per_vtd"] = bucket;

    std::optional<double> lo, hi;
    for (std::size_t v = 0; v < 6; ++v) {
        if (m_n[v]) {
            const double mean = m_sum[v] / m_n[v];
            if (!lo) {
                lo = mean;
            }
            hi = mean;
        }
    }
    expect_less(ctx, "malware share of greyware predictions rises with VTD", lo, hi);

    if (cfg.second_labels) {
        const auto vtd2 = second_vtd(ctx, *cfg.second_labels);
        std::map<std::string, ClassLabel> a, c;
        for (const auto& r : ctx.records) {
            if (!cfg.train_period.contains(r.timestamp)) {
                continue;
            }
            const auto it = vtd2.find(r.id);
            if (it == vtd2.end()) {
                throw ValidationError("second labels: id '" + r.id + "' missing");
            }
            a[r.id] = label(r.vtd, cfg.labeling);
            c[r.id] = label(it->second, cfg.labeling);
        }
        const auto m = label_swap_matrix(a, c);
        ReportTable st{"label_swaps", "Label swaps between the two labelings (rows: first, columns: second)",
                       {"From", "G", "X", "M", "G share", "X share", "M share"}, {}};
        const char* names[3] = {"G", "X", "M"};
        nlohmann::json mj = nlohmann::json::array();
        for (std::size_t i = 0; i < 3; ++i) {
            const double row = static_cast<double>(m[i][0] + m[i][1] + m[i][2]);
            std::vector<nlohmann::json> r{names[i], m[i][0], m[i][1], m[i][2]};
            for (std::size_t k = 0; k < 3; ++k) {
                r.push_back(row > 0 ? nlohmann::json(static_cast<double>(m[i][k]) / row) : nlohmann::json());
            }
            st.rows.push_back(std::move(r));
            mj.push_back(m[i]);
        }
        ctx.result.tables.push_back(std::move(st));
        ctx.result.data["label_swaps"] = mj;
    }
}

inline void imbalance(Context& ctx)
{
    const auto& cfg = ctx.cfg;
    auto b = run_baseline_core(ctx);
    SamplingConfig u = cfg.sampling;
    u.mode = SamplingMode::unbalanced;
    u.per_month_cap = 0;
    u.seed = derive_seed(cfg.sampling.seed, "imbalance-train");
    const auto utrain = sampled_ids(ctx, b.plan.train, b.plan.labels, u);
    u.seed = derive_seed(cfg.sampling.seed, "imbalance-test");
    const auto utest = sampled_ids(ctx, b.plan.test, b.plan.labels, u);
    // keep the baseline test order for the unbalanced subset
    const std::set<std::string> in_utest(utest.begin(), utest.end());
    std::vector<std::size_t> uidx;
    for (std::size_t i = 0; i < b.plan.test.size(); ++i) {
        if (in_utest.contains(b.plan.test[i])) {
            uidx.push_back(i);
        }
    }
    std::vector<std::string> utrain_ordered;
    const std::set<std::string> in_utrain(utrain.begin(), utrain.end());
    for (const auto& id : b.plan.train) {
        if (in_utrain.contains(id)) {
            utrain_ordered.push_back(id);
        }
    }
    const auto uplan = plan_over(ctx, utrain_ordered, b.plan.test, b.plan.labels, b.plan.time_aware);
    const auto udets = fit_roster(ctx, uplan);
    const auto upreds = predict_roster(udets, ctx.ptrs(b.plan.test));
    const auto u_bal = score(ctx, upreds, b.y);
    std::map<std::string, MetricsReport> u_unb, b_unb;
    for (std::size_t d = 0; d < udets.size(); ++d) {
        const auto yu = take(b.y, uidx);
        u_unb[cfg.detectors[d].name] = metrics(confusion(yu, take(upreds[d].labels, uidx)));
        b_unb[cfg.detectors[d].name] = metrics(confusion(yu, take(b.preds[d].labels, uidx)));
    }
    ctx.result.runs["balanced-train"] = b.rows;
    ctx.result.runs["unbalanced-train"] = u_bal;
    ctx.result.runs["unbalanced-train-unbalanced-test"] = u_unb;
    ctx.result.runs["balanced-train-unbalanced-test"] = b_unb;

    std::vector<std::string> utest_ordered;
    for (auto i : uidx) {
        utest_ordered.push_back(b.plan.test[i]);
    }
    auto comp = composition_table();
    comp.rows.push_back(composition_row("balanced train", b.plan.train, b.plan.labels));
    comp.rows.push_back(composition_row("balanced test", b.plan.test, b.plan.labels));
    comp.rows.push_back(composition_row("unbalanced train", utrain_ordered, b.plan.labels));
    comp.rows.push_back(composition_row("unbalanced test", utest_ordered, b.plan.labels));
    ctx.result.tables.push_back(std::move(comp));
    ctx.result.tables.push_back(metrics_table("unbalanced", "1:10 training, 1:10 test", u_unb));
    ReportTable cmp{"ratio_comparison", "1:1 versus 1:10 training on the balanced test set",
                    {"Method", "TPR 1:1", "TPR 1:10", "A_mean 1:1", "A_mean 1:10", "Kappa 1:1", "Kappa 1:10"}, {}};
    for (const auto& [name, m] : b.rows) {
        const auto& n = u_bal.at(name);
        cmp.rows.push_back({name, cell(m.tpr), cell(n.tpr), cell(m.a_mean), cell(n.a_mean), cell(m.kappa), cell(n.kappa)});
    }
    ctx.result.tables.push_back(std::move(cmp));
    auto kappa = [](const MetricsReport& m) { return m.kappa; };
    auto tpr = [](const MetricsReport& m) { return m.tpr; };
    expect_less(ctx, "1:10 training lowers mean kappa on the same test set", mean_of(u_bal, kappa), mean_of(b.rows, kappa));
    expect_less(ctx, "1:10 training lowers mean TPR on the same test set", mean_of(u_bal, tpr), mean_of(b.rows, tpr));
}

inline void evasion(Context& ctx)
{
    const auto& cfg = ctx.cfg;
    auto b = run_baseline_core(ctx);
    // stratified sample of the test set
    Rng rng(derive_seed(cfg.seed, "evasion-sample"));
    std::vector<std::size_t> pos[2];
    for (std::size_t i = 0; i < b.y.size(); ++i) {
        pos[b.y[i]].push_back(i);
    }
    std::vector<std::size_t> idx;
    for (auto& p : pos) {
        rng.shuffle(p);
        const auto n = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(cfg.evasion_fraction * static_cast<double>(p.size()))));
        p.resize(std::min(n, p.size()));
        idx.insert(idx.end(), p.begin(), p.end());
    }
    std::sort(idx.begin(), idx.end());
    std::vector<std::string> ids;
    for (auto i : idx) {
        ids.push_back(b.plan.test[i]);
    }
    const auto y = take(b.y, idx);
    const auto originals = ctx.copies(ids);

    const std::vector<std::pair<std::string, std::set<ObfuscationTag>>> variants = {
        {"renaming", {ObfuscationTag::renaming}},
        {"code-structure", {ObfuscationTag::code_structure}},
        {"encryption", {ObfuscationTag::encryption}},
        {"combined", {ObfuscationTag::renaming, ObfuscationTag::code_structure, ObfuscationTag::encryption}}};
    std::map<std::string, std::map<std::string, MetricsReport>> runs;
    {
        std::vector<const AppRecord*> p;
        for (const auto& r : originals) {
            p.push_back(&r);
        }
        runs["original"] = score(ctx, predict_roster(b.dets, p), y);
    }
    for (const auto& [vname, tags] : variants) {
        auto plan = cfg.obfuscation;
        plan.transforms = tags;
        const auto obf = obfuscate(originals, plan);
        std::vector<const AppRecord*> p;
        for (const auto& r : obf) {
            p.push_back(&r);
        }
        runs[vname] = score(ctx, predict_roster(b.dets, p), y);
    }
    ReportTable t{"evasion", "TPR, FPR and A_mean on the obfuscated test sample", {"Method"}, {}};
    const std::vector<std::string> order = {"original", "renaming", "code-structure", "encryption", "combined"};
    for (const auto& v : order) {
        t.header.push_back("TPR " + v);
        t.header.push_back("FPR " + v);
        t.header.push_back("A_mean " + v);
    }
    for (const auto& d : cfg.detectors) {
        std::vector<nlohmann::json> row{d.name};
        for (const auto& v : order) {
            const auto& m = runs.at(v).at(d.name);
            row.push_back(cell(m.tpr));
            row.push_back(cell(m.fpr));
            row.push_back(cell(m.a_mean));
        }
        t.rows.push_back(std::move(row));
    }
    for (auto& [k, v] : runs) {
        ctx.result.runs[k] = v;
    }
    ctx.result.runs["baseline"] = b.rows;
    ctx.result.tables.push_back(metrics_table("metrics", "Baseline performance (full test set)", b.rows));
    ctx.result.tables.push_back(std::move(t));
    ctx.result.data["sample_size"] = ids.size();
    ctx.result.data["sample_malware"] = std::count(y.begin(), y.end(), 1);
    auto tpr = [](const MetricsReport& m) { return m.tpr; };
    expect_less(ctx, "combined obfuscation lowers mean TPR", mean_of(runs.at("combined"), tpr),
                mean_of(runs.at("original"), tpr));
}

inline void evolution(Context& ctx)
{
    const auto& cfg = ctx.cfg;
    const auto labels = labels_of(ctx, cfg.labeling);
    const auto label_of = label_map(ctx, labels);
    SamplingConfig s = cfg.sampling;
    s.time_aware = true;
    const auto plan = sample_split(ctx.records, labels, s, cfg.train_period);

    std::vector<std::string> all_ids;
    for (const auto& r : ctx.records) {
        all_ids.push_back(r.id);
    }
    SamplingConfig ts = cfg.sampling;
    ts.seed = derive_seed(cfg.sampling.seed, "evolution-test");
    bool any = false;
    for (const auto& r : ctx.records) {
        any = any || (cfg.test_period.contains(r.timestamp) && labels[&r - ctx.records.data()] != ClassLabel::greyware);
    }
    if (!any) {
        throw ValidationError("scenario: corpus has no labeled records in the evolution test period");
    }
    auto test = sampled_ids(ctx, all_ids, label_of, ts, cfg.test_period);
    std::sort(test.begin(), test.end(), [&](const std::string& a, const std::string& b) {
        const auto ma = ctx.at(a).timestamp, mb = ctx.at(b).timestamp;
        return ma < mb || (ma == mb && a < b);
    });
    const auto dets = fit_roster(ctx, plan);
    const auto y = truth(test, label_of);
    const auto preds = predict_roster(dets, ctx.ptrs(test));
    const auto rows = score(ctx, preds, y);

    // buckets of bucket_months from the start of the test period
    const int first = cfg.test_period.from->index();
    std::map<int, std::vector<std::size_t>> buckets;
    for (std::size_t i = 0; i < test.size(); ++i) {
        buckets[(ctx.at(test[i]).timestamp.index() - first) / cfg.bucket_months].push_back(i);
    }
    PlotSeries tpr{"evolution_tpr", "period", {}, {}, {}}, fpr{"evolution_fpr", "period", {}, {}, {}},
        am{"evolution_amean", "period", {}, {}, {}};
    for (auto* ps : {&tpr, &fpr, &am}) {
        for (const auto& d : cfg.detectors) {
            ps->labels.push_back(d.name);
            ps->y.emplace_back();
        }
    }
    ReportTable pt{"period_amean", "A_mean per test period", {"Method"}, {}};
    std::map<std::string, std::vector<nlohmann::json>> prow;
    for (const auto& [bk, idx] : buckets) {
        const auto from = YearMonth::from_index(first + bk * cfg.bucket_months);
        const auto to = YearMonth::from_index(first + (bk + 1) * cfg.bucket_months - 1);
        const std::string period = cfg.bucket_months == 1 ? from.str() : from.str() + ".." + to.str();
        for (auto* ps : {&tpr, &fpr, &am}) {
            ps->x.push_back(period);
        }
        pt.header.push_back(period);
        std::map<std::string, MetricsReport> brow;
        for (std::size_t d = 0; d < dets.size(); ++d) {
            const auto m = metrics(confusion(take(y, idx), take(preds[d].labels, idx)));
            brow[cfg.detectors[d].name] = m;
            tpr.y[d].push_back(m.tpr);
            fpr.y[d].push_back(m.fpr);
            am.y[d].push_back(m.a_mean);
            prow[cfg.detectors[d].name].push_back(cell(m.a_mean));
        }
        ctx.result.runs["period:" + period] = brow;
    }
    for (auto& [name, cells] : prow) {
        std::vector<nlohmann::json> r{name};
        r.insert(r.end(), cells.begin(), cells.end());
        pt.rows.push_back(std::move(r));
    }

    // control: random split over the union of both periods
    SamplingConfig cs = cfg.sampling;
    cs.time_aware = false;
    const Period both{cfg.train_period.from, cfg.test_period.to};
    const auto cplan = sample_split(ctx.records, labels, cs, both);
    const auto cdets = fit_roster(ctx, cplan);
    const auto crows = score(ctx, predict_roster(cdets, ctx.ptrs(cplan.test)), truth(cplan.test, cplan.labels));

    ctx.result.runs["time-split"] = rows;
    ctx.result.runs["random-split"] = crows;
    auto comp = composition_table();
    comp.rows.push_back(composition_row("time-split train", plan.train, plan.labels));
    comp.rows.push_back(composition_row("time-split test", test, label_of));
    comp.rows.push_back(composition_row("random-split train", cplan.train, cplan.labels));
    comp.rows.push_back(composition_row("random-split test", cplan.test, cplan.labels));
    ctx.result.tables.push_back(std::move(comp));
    ctx.result.tables.push_back(metrics_table("evolution", "Time-split performance (later test period)", rows));
    ctx.result.tables.push_back(metrics_table("random_split", "Random-split control", crows));
    ctx.result.tables.push_back(std::move(pt));
    ctx.result.series.push_back(std::move(am));
    ctx.result.series.push_back(std::move(fpr));
    ctx.result.series.push_back(std::move(tpr));
    auto a = [](const MetricsReport& m) { return m.a_mean; };
    expect_less(ctx, "time-split mean A_mean below the random-split control", mean_of(rows, a), mean_of(crows, a));
}

} // namespace scenario_detail

inline std::string config_hash(const ScenarioConfig& cfg) { return hex64(fnv1a64(cfg.source.dump())); }

inline ScenarioResult run_scenario(const ScenarioConfig& cfg)
{
    using namespace scenario_detail;
    cfg.validate();
    Context ctx{cfg, load_corpus(cfg.corpus), {}, {}};
    for (std::size_t i = 0; i < ctx.records.size(); ++i) {
        if (!ctx.index.emplace(ctx.records[i].id, i).second) {
            throw ValidationError("scenario: duplicate record id '" + ctx.records[i].id + "'");
        }
    }
    auto& r = ctx.result;
    r.kind = cfg.kind;
    r.name = cfg.name;
    r.seed = cfg.seed;
    r.config = cfg.source;
    r.config_hash = config_hash(cfg);
    r.assertions_enabled = cfg.assertions.enabled;
    for (const auto& d : cfg.detectors) {
        r.detectors.push_back(d.name);
    }
    r.data["corpus_records"] = ctx.records.size();
    switch (cfg.kind) {
    case ScenarioKind::baseline: baseline(ctx); break;
    case ScenarioKind::redundancy: redundancy(ctx); break;
    case ScenarioKind::labeling_sweep: labeling_sweep(ctx); break;
    case ScenarioKind::greyware_probe: greyware_probe_scenario(ctx); break;
    case ScenarioKind::imbalance: imbalance(ctx); break;
    case ScenarioKind::evasion: evasion(ctx); break;
    case ScenarioKind::evolution: evolution(ctx); break;
    }
    return std::move(ctx.result);
}

} // namespace apkbench
