// apkbench command-line entry point.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "apkbench/apk.hpp"
#include "apkbench/corpus_synth.hpp"
#include "apkbench/dataset_ops.hpp"
#include "apkbench/detectors.hpp"
#include "apkbench/metrics.hpp"
#include "apkbench/obfuscation.hpp"
#include "apkbench/report.hpp"
#include "apkbench/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace apkbench;

namespace {

// --- shared plumbing --------------------------------------------------------

json read_json(const fs::path& p)
{
    try {
        return json::parse(read_file(p));
    }
    catch (const json::parse_error& e) {
        throw ParseError(p.string() + ": " + e.what());
    }
}

void write_json(const fs::path& p, const json& j) { write_file_atomic(p, j.dump(2) + "\n"); }

std::vector<AppRecord> read_corpus(const fs::path& p) { return parse_corpus(read_file(p)); }

void write_corpus(const fs::path& p, std::span<const AppRecord> records)
{
    write_file_atomic(p, serialize_corpus(records));
}

/// `a.b.c=value`; the value is JSON when it parses as JSON, else a string.
void apply_override(json& j, const std::string& spec)
{
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw UsageError("--set expects key=value, got '" + spec + "'");
    }
    const std::string key = spec.substr(0, eq), text = spec.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    }
    catch (const json::parse_error&) {
        value = text;
    }
    json* node = &j;
    std::stringstream path(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(path, part, '.')) {
        if (part.empty()) {
            throw UsageError("--set: empty path segment in '" + key + "'");
        }
        parts.push_back(part);
    }
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->is_object()) {
            throw UsageError("--set: '" + parts[i] + "' is not an object in '" + key + "'");
        }
        node = &(*node)[parts[i]];
        if (node->is_null()) {
            *node = json::object();
        }
    }
    if (!node->is_object()) {
        throw UsageError("--set: cannot set '" + key + "'");
    }
    (*node)[parts.back()] = std::move(value);
}

void apply_overrides(json& j, const std::vector<std::string>& sets)
{
    for (const auto& s : sets) {
        apply_override(j, s);
    }
}

struct Common {
    unsigned jobs = 0;
};

void add_jobs(CLI::App* cmd, Common& c)
{
    cmd->add_option("--jobs,-j", c.jobs, "Worker threads for parallel stages (default: all cores)")
        ->check(CLI::NonNegativeNumber);
}

struct PolicyFlags {
    int goodware_max = 0;
    int malware_min = 7;
    LabelingPolicy policy() const
    {
        LabelingPolicy p{goodware_max, malware_min};
        p.validate();
        return p;
    }
};

void add_policy(CLI::App* cmd, PolicyFlags& f)
{
    cmd->add_option("--goodware-max", f.goodware_max, "Largest VTD labeled goodware")->capture_default_str();
    cmd->add_option("--malware-min", f.malware_min, "Smallest VTD labeled malware")->capture_default_str();
}

std::map<std::string, const AppRecord*> index_of(std::span<const AppRecord> records)
{
    std::map<std::string, const AppRecord*> by;
    for (const auto& r : records) {
        by[r.id] = &r;
    }
    return by;
}

std::vector<const AppRecord*> lookup(const std::map<std::string, const AppRecord*>& by,
                                     const std::vector<std::string>& ids)
{
    std::vector<const AppRecord*> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        const auto it = by.find(id);
        if (it == by.end()) {
            throw ValidationError("id '" + id + "' not in corpus");
        }
        out.push_back(it->second);
    }
    return out;
}

fs::path results_root()
{
    if (const char* env = std::getenv("APKBENCH_RESULTS"); env && *env) {
        return env;
    }
    return "results";
}

std::set<ReportFormat> parse_formats(const std::vector<std::string>& names)
{
    if (names.empty()) {
        return all_report_formats();
    }
    std::set<ReportFormat> out;
    for (const auto& n : names) {
        out.insert(report_format_from(n));
    }
    return out;
}

// --- extract ----------------------------------------------------------------

struct ExtractArgs {
    std::vector<std::string> inputs;
    std::string out;
    std::string annotations;
    std::string timestamp = "1970-01";
    std::string source = "market";
    int vtd = 0;
    bool skip_invalid = false;
};

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs)
{
    std::vector<fs::path> out;
    for (const auto& in : inputs) {
        if (fs::is_directory(in)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::recursive_directory_iterator(in)) {
                if (e.is_regular_file() && e.path().extension() == ".apk") {
                    found.push_back(e.path());
                }
            }
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        }
        else if (fs::is_regular_file(in)) {
            out.emplace_back(in);
        }
        else {
            throw IoError("extract: no such file or directory '" + in + "'");
        }
    }
    return out;
}

int run_extract(const ExtractArgs& a)
{
    const auto files = expand_inputs(a.inputs);
    if (files.empty()) {
        throw ValidationError("extract: no APK files found");
    }
    ApkAnnotation base;
    base.timestamp = YearMonth::parse(a.timestamp);
    base.source = source_from(a.source);
    base.vtd = a.vtd;
    json notes = json::object();
    if (!a.annotations.empty()) {
        notes = read_json(a.annotations);
        if (!notes.is_object()) {
            throw ValidationError("extract: annotations must be an object keyed by file name");
        }
    }
    std::vector<ApkAnnotation> per_file(files.size(), base);
    for (std::size_t i = 0; i < files.size(); ++i) {
        const auto key = files[i].filename().string();
        if (!notes.contains(key)) {
            continue;
        }
        const auto& n = notes.at(key);
        try {
            per_file[i].id = n.value("id", std::string());
            if (n.contains("timestamp")) per_file[i].timestamp = YearMonth::parse(n.at("timestamp").get<std::string>());
            if (n.contains("source")) per_file[i].source = source_from(n.at("source").get<std::string>());
            per_file[i].vtd = n.value("vtd", base.vtd);
        }
        catch (const json::exception& e) {
            throw ValidationError("extract: annotation for '" + key + "': " + e.what());
        }
    }
    std::vector<std::optional<AppRecord>> parsed(files.size());
    std::vector<std::string> errors(files.size());
    parallel_for(files.size(), [&](std::size_t i) {
        try {
            parsed[i] = parse_apk(read_bytes(files[i]), per_file[i]);
        }
        catch (const Error& e) {
            errors[i] = files[i].string() + ": " + e.what();
        }
    });
    std::vector<AppRecord> records;
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (parsed[i]) {
            records.push_back(std::move(*parsed[i]));
            continue;
        }
        if (!a.skip_invalid) {
            throw ParseError(errors[i]);
        }
        warn("extract: skipped " + errors[i]);
        ++skipped;
    }
    if (records.empty()) {
        throw ValidationError("extract: every input failed to parse");
    }
    write_corpus(a.out, records);
    std::cout << "extracted " << records.size() << " records (" << skipped << " skipped) -> " << a.out << '\n';
    return 0;
}

// --- gen --------------------------------------------------------------------

struct GenArgs {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    std::vector<std::string> sets;
};

int run_gen(const GenArgs& a)
{
    auto j = read_json(a.config);
    apply_overrides(j, a.sets);
    j["seed"] = a.seed;
    const auto cfg = generator_config_from_json(j);
    const auto records = generate(cfg);
    write_corpus(a.out, records);
    std::cout << "generated " << records.size() << " records -> " << a.out << '\n';
    return 0;
}

// --- obfuscate --------------------------------------------------------------

struct ObfuscateArgs {
    std::string in, out, config;
    std::vector<std::string> transforms;
    std::optional<double> fraction;
    std::uint64_t seed = 0;
};

int run_obfuscate(const ObfuscateArgs& a)
{
    ObfuscationPlan plan;
    if (!a.config.empty()) {
        auto j = read_json(a.config);
        j["seed"] = a.seed;
        if (!j.contains("transforms")) {
            j["transforms"] = a.transforms;
        }
        plan = plan_from_json(j);
    }
    plan.seed = a.seed;
    if (!a.transforms.empty()) {
        plan.transforms.clear();
        for (const auto& t : a.transforms) {
            plan.transforms.insert(transform_from_short(t));
        }
    }
    if (a.fraction) {
        plan.set_all_fractions(*a.fraction);
    }
    plan.validate();
    const auto records = read_corpus(a.in);
    const auto out = obfuscate(records, plan);
    write_corpus(a.out, out);
    std::cout << "obfuscated " << out.size() << " records -> " << a.out << '\n';
    return 0;
}

// --- label ------------------------------------------------------------------

constexpr const char* labels_format = "apkbench-labels";

struct LabelArgs {
    std::string in, out, against;
    PolicyFlags policy;
};

std::map<std::string, ClassLabel> labels_from_json(const json& j)
{
    if (j.value("format", std::string()) != labels_format) {
        throw ParseError("labels: unexpected format tag");
    }
    std::map<std::string, ClassLabel> out;
    try {
        for (const auto& [id, l] : j.at("labels").items()) {
            out[id] = class_label_from(l.get<std::string>());
        }
    }
    catch (const json::exception& e) {
        throw ParseError(std::string("labels: ") + e.what());
    }
    return out;
}

int run_label(const LabelArgs& a)
{
    const auto records = read_corpus(a.in);
    const auto policy = a.policy.policy();
    const auto labels = label(records, policy);
    json j{{"format", labels_format}, {"version", 1}, {"policy", policy_to_json(policy)}};
    std::map<std::string, ClassLabel> mine;
    std::array<std::size_t, 3> counts{};
    for (std::size_t i = 0; i < records.size(); ++i) {
        mine[records[i].id] = labels[i];
        ++counts[swap_index(labels[i])];
    }
    j["counts"] = {{"goodware", counts[0]}, {"greyware", counts[1]}, {"malware", counts[2]}};
    j["labels"] = json::object();
    for (const auto& [id, l] : mine) {
        j["labels"][id] = to_string(l);
    }
    if (!a.against.empty()) {
        const auto other = labels_from_json(read_json(a.against));
        const auto m = label_swap_matrix(other, mine);
        j["swap_matrix"] = {{"rows", "against"}, {"columns", "this"}, {"order", {"G", "X", "M"}}, {"counts", m}};
        std::cout << "swap matrix (rows: against, columns: this; order G X M)\n";
        for (const auto& row : m) {
            std::cout << row[0] << '\t' << row[1] << '\t' << row[2] << '\n';
        }
    }
    write_json(a.out, j);
    std::cout << "labeled " << records.size() << " records: " << counts[0] << " goodware, " << counts[1]
              << " greyware, " << counts[2] << " malware -> " << a.out << '\n';
    return 0;
}

// --- dedup ------------------------------------------------------------------

struct DedupArgs {
    std::string in, out, groups;
    double epsilon = 0.0;
    std::uint64_t seed = 0;
    PolicyFlags policy;
};

int run_dedup(const DedupArgs& a)
{
    const auto records = read_corpus(a.in);
    const auto labels = label(records, a.policy.policy());
    const auto res = dedup(records, labels, DedupConfig{a.epsilon, a.seed});
    write_corpus(a.out, res.kept);
    if (!a.groups.empty()) {
        json g = json::array();
        for (const auto& grp : res.groups) {
            g.push_back({{"representative", grp.representative}, {"members", grp.members}});
        }
        write_json(a.groups, {{"format", "apkbench-dedup-groups"},
                              {"version", 1},
                              {"epsilon", a.epsilon},
                              {"seed", a.seed},
                              {"groups", g}});
    }
    std::cout << "kept " << res.kept.size() << " of " << records.size() << " records in " << res.groups.size()
              << " groups -> " << a.out << '\n';
    return 0;
}

// --- split ------------------------------------------------------------------

struct SplitArgs {
    std::string in, out, config, from, to;
    std::uint64_t seed = 0;
    std::vector<std::string> sets;
    PolicyFlags policy;
};

int run_split(const SplitArgs& a)
{
    json j = a.config.empty() ? json::object() : read_json(a.config);
    apply_overrides(j, a.sets);
    j["seed"] = a.seed;
    const auto cfg = sampling_from_json(j);
    Period period;
    if (!a.from.empty()) period.from = YearMonth::parse(a.from);
    if (!a.to.empty()) period.to = YearMonth::parse(a.to);
    const auto records = read_corpus(a.in);
    const auto labels = label(records, a.policy.policy());
    const auto plan = sample_split(records, labels, cfg, period);
    auto out = split_to_json(plan);
    out["sampling"] = sampling_to_json(cfg);
    out["policy"] = policy_to_json(a.policy.policy());
    write_json(a.out, out);
    std::cout << "split " << plan.train.size() << " train / " << plan.test.size() << " test ids into " << plan.k
              << " folds -> " << a.out << '\n';
    return 0;
}

// --- featurize / train / predict -------------------------------------------

DetectorSpec load_spec(const std::string& name, const std::string& config, const std::vector<std::string>& sets)
{
    json j = config.empty() ? json::object() : read_json(config);
    if (!name.empty()) {
        j["name"] = name;
    }
    apply_overrides(j, sets);
    if (!j.contains("name")) {
        throw UsageError("a detector name is required (--detector or \"name\" in --config)");
    }
    return detector_spec_from_json(j);
}

std::string svmlight_row(const std::string& id, int y, const FeatureVector& row)
{
    std::ostringstream os;
    os << (y ? 1 : -1);
    for (const auto& [i, v] : row) {
        os << ' ' << (i + 1) << ':' << format_double(v, 6);
    }
    os << " # " << id << '\n';
    return os.str();
}

struct FeaturizeArgs {
    std::string detector, config, in, split, out, matrix;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> sets;
};

int run_featurize(const FeaturizeArgs& a)
{
    const auto spec = load_spec(a.detector, a.config, a.sets);
    auto features = spec.features;
    if (spec.features.uses_hmm() && !a.seed) {
        throw UsageError("featurize: --seed is required for " + spec.name);
    }
    features.hmm.seed = derive_seed(a.seed.value_or(0), "hmm");
    const auto records = read_corpus(a.in);
    const auto plan = split_from_json(read_json(a.split));
    const auto train = TrainPartition::from_plan(records, plan);
    const auto fz = fit_featurizer(features, train);
    write_json(a.out, featurizer_to_json(fz));
    if (!a.matrix.empty()) {
        const auto by = index_of(records);
        std::string text;
        for (const auto* ids : {&plan.train, &plan.test}) {
            for (const auto& id : *ids) {
                text += svmlight_row(id, plan.labels.at(id) == ClassLabel::malware, fz.transform(*lookup(by, {id})[0]));
            }
        }
        write_file_atomic(a.matrix, text);
    }
    std::cout << "featurized " << spec.name << ": " << fz.space.size() << " features from " << plan.train.size()
              << " training apps -> " << a.out << '\n';
    return 0;
}

struct TrainArgs {
    std::string detector, config, in, split, out;
    std::uint64_t seed = 0;
    std::vector<std::string> sets;
};

int run_train(const TrainArgs& a)
{
    const auto spec = load_spec(a.detector, a.config, a.sets);
    const auto records = read_corpus(a.in);
    const auto plan = split_from_json(read_json(a.split));
    const auto trained = fit_detector(spec, records, plan, a.seed);
    write_json(a.out, detector_to_json(trained));
    std::cout << "trained " << trained.name << " on " << plan.train.size() << " apps (grid point "
              << trained.chosen + 1 << " of " << trained.grid.size() << ") -> " << a.out << '\n';
    return 0;
}

struct PredictArgs {
    std::string model, in, split, out;
};

int run_predict(const PredictArgs& a)
{
    const auto d = load_detector(a.model);
    const auto records = read_corpus(a.in);
    const auto by = index_of(records);
    std::optional<SplitPlan> plan;
    std::vector<std::string> ids;
    if (!a.split.empty()) {
        plan = split_from_json(read_json(a.split));
        ids = plan->test;
    }
    else {
        for (const auto& r : records) {
            ids.push_back(r.id);
        }
    }
    const auto p = predict(d, lookup(by, ids));
    std::ostringstream os;
    os << "id,score,label\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        os << ids[i] << ',' << format_double(p.scores[i], 6) << ',' << (p.labels[i] ? "malware" : "goodware") << '\n';
    }
    write_file_atomic(a.out, os.str());
    std::cout << "predicted " << ids.size() << " apps -> " << a.out << '\n';
    if (plan) {
        std::vector<int> y;
        for (const auto& id : ids) {
            y.push_back(plan->labels.at(id) == ClassLabel::malware);
        }
        std::cout << metrics_to_json(metrics(confusion(y, p.labels))).dump() << '\n';
    }
    return 0;
}

// --- scenario run / report --------------------------------------------------

struct ScenarioArgs {
    std::string config, out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> sets, formats;
    bool assert_checks = false;
};

int finish_checks(const ScenarioResult& r)
{
    for (const auto& an : r.annotations) {
        std::cout << (an.holds ? "holds: " : "does not hold: ") << an.check << " (" << an.detail << ")\n";
    }
    if (r.assertions_enabled && !r.failed().empty()) {
        throw RuntimeError("scenario '" + r.name + "': a directional check does not hold");
    }
    return 0;
}

int run_scenario_cmd(const ScenarioArgs& a)
{
    auto j = read_json(a.config);
    apply_overrides(j, a.sets);
    if (a.seed) {
        j["seed"] = *a.seed;
    }
    if (a.assert_checks) {
        j["assert"]["enabled"] = true;
    }
    const auto cfg = scenario_config_from_json(j, fs::path(a.config).parent_path());
    const auto formats = parse_formats(a.formats);
    const fs::path dir = a.out.empty() ? results_root() / cfg.name : fs::path(a.out);
    const auto result = run_scenario(cfg);
    emit_report(result, dir, formats);
    std::cout << "scenario " << cfg.name << " (config " << result.config_hash << ") -> " << dir.string() << '\n';
    return finish_checks(result);
}

struct ReportArgs {
    std::string result, out;
    std::vector<std::string> formats;
};

int run_report(const ReportArgs& a)
{
    fs::path in = a.result;
    if (fs::is_directory(in)) {
        in /= "result.json";
    }
    const auto r = result_from_json(read_json(in));
    const fs::path dir = a.out.empty() ? in.parent_path() : fs::path(a.out);
    const auto manifest = emit_report(r, dir, parse_formats(a.formats));
    std::cout << "report " << r.name << ": " << manifest["files"].size() << " files -> " << dir.string() << '\n';
    return 0;
}

const char* kind_name(ErrorKind k)
{
    switch (k) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::validation: return "validation";
    case ErrorKind::runtime: return "runtime";
    }
    return "runtime";
}

void print_error(const char* kind, const std::string& msg)
{
    std::cerr << json{{"error", kind}, {"message", msg}}.dump() << '\n';
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"apkbench: Android malware detector benchmarking"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "apkbench 1.0");
    Common common;
    std::function<int()> action;

    ExtractArgs ex;
    auto* extract = app.add_subcommand("extract", "Static analysis of APK files into a corpus file");
    extract->add_option("inputs", ex.inputs, "APK files or directories (searched for *.apk)")->required();
    extract->add_option("--out,-o", ex.out, "Output corpus file")->required();
    extract->add_option("--annotations", ex.annotations, "JSON object: file name -> {id, timestamp, source, vtd}");
    extract->add_option("--timestamp", ex.timestamp, "Default timestamp (YYYY-MM)")->capture_default_str();
    extract->add_option("--source", ex.source, "Default source (market or malware-repo)")->capture_default_str();
    extract->add_option("--vtd", ex.vtd, "Default VirusTotal detection count")->capture_default_str();
    extract->add_flag("--skip-invalid", ex.skip_invalid, "Warn and continue on APKs that fail to parse");
    add_jobs(extract, common);
    extract->callback([&] { action = [&] { return run_extract(ex); }; });

    GenArgs gn;
    auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus");
    gen->add_option("--config,-c", gn.config, "Generator config (JSON)")->required()->check(CLI::ExistingFile);
    gen->add_option("--seed", gn.seed, "Generator seed")->required();
    gen->add_option("--out,-o", gn.out, "Output corpus file")->required();
    gen->add_option("--set", gn.sets, "Config override key.path=json (repeatable)");
    add_jobs(gen, common);
    gen->callback([&] { action = [&] { return run_gen(gn); }; });

    ObfuscateArgs ob;
    auto* obf = app.add_subcommand("obfuscate", "Apply obfuscation transforms to a corpus");
    obf->add_option("--in,-i", ob.in, "Input corpus file")->required()->check(CLI::ExistingFile);
    obf->add_option("--out,-o", ob.out, "Output corpus file")->required();
    obf->add_option("--transforms,-t", ob.transforms, "Comma-separated transforms: rn, co, enc")->delimiter(',');
    obf->add_option("--fraction", ob.fraction, "Fraction applied to every transform parameter")
        ->check(CLI::Range(0.0, 1.0));
    obf->add_option("--config,-c", ob.config, "Obfuscation plan (JSON); flags override it");
    obf->add_option("--seed", ob.seed, "Obfuscation seed")->required();
    add_jobs(obf, common);
    obf->callback([&] {
        if (ob.transforms.empty() && ob.config.empty()) {
            throw CLI::ValidationError("--transforms", "--transforms or --config is required");
        }
        action = [&] { return run_obfuscate(ob); };
    });

    LabelArgs lb;
    auto* lab = app.add_subcommand("label", "Label a corpus by VirusTotal detection count");
    lab->add_option("--in,-i", lb.in, "Input corpus file")->required()->check(CLI::ExistingFile);
    lab->add_option("--out,-o", lb.out, "Output labels file")->required();
    lab->add_option("--against", lb.against, "Earlier labels file; adds the label swap matrix");
    add_policy(lab, lb.policy);
    add_jobs(lab, common);
    lab->callback([&] { action = [&] { return run_label(lb); }; });

    DedupArgs dd;
    auto* ded = app.add_subcommand("dedup", "Epsilon-net deduplication within each class");
    ded->add_option("--in,-i", dd.in, "Input corpus file")->required()->check(CLI::ExistingFile);
    ded->add_option("--out,-o", dd.out, "Output corpus of kept records")->required();
    ded->add_option("--groups", dd.groups, "Optional output file listing every group");
    ded->add_option("--epsilon", dd.epsilon, "Euclidean radius on API-call frequencies")->capture_default_str();
    ded->add_option("--seed", dd.seed, "Representative selection seed")->required();
    add_policy(ded, dd.policy);
    add_jobs(ded, common);
    ded->callback([&] { action = [&] { return run_dedup(dd); }; });

    SplitArgs sp;
    auto* spl = app.add_subcommand("split", "Sample a train/test split with cross-validation folds");
    spl->add_option("--in,-i", sp.in, "Input corpus file")->required()->check(CLI::ExistingFile);
    spl->add_option("--out,-o", sp.out, "Output split plan")->required();
    spl->add_option("--config,-c", sp.config, "Sampling config (JSON)");
    spl->add_option("--set", sp.sets, "Sampling override key=json, e.g. mode=\"unbalanced\" (repeatable)");
    spl->add_option("--from", sp.from, "First month sampled (YYYY-MM)");
    spl->add_option("--to", sp.to, "Last month sampled (YYYY-MM)");
    spl->add_option("--seed", sp.seed, "Sampling seed")->required();
    add_policy(spl, sp.policy);
    add_jobs(spl, common);
    spl->callback([&] { action = [&] { return run_split(sp); }; });

    FeaturizeArgs fz;
    auto* fea = app.add_subcommand("featurize", "Fit a detector's feature pipeline on a split's training set");
    fea->add_option("--detector,-d", fz.detector, "Detector name");
    fea->add_option("--config,-c", fz.config, "Detector config (JSON)");
    fea->add_option("--set", fz.sets, "Detector override key.path=json (repeatable)");
    fea->add_option("--in,-i", fz.in, "Corpus file")->required()->check(CLI::ExistingFile);
    fea->add_option("--split,-s", fz.split, "Split plan")->required()->check(CLI::ExistingFile);
    fea->add_option("--out,-o", fz.out, "Output feature space file")->required();
    fea->add_option("--matrix", fz.matrix, "Optional svmlight dump of train and test rows");
    fea->add_option("--seed", fz.seed, "Seed (required for HMMDetector)");
    add_jobs(fea, common);
    fea->callback([&] { action = [&] { return run_featurize(fz); }; });

    TrainArgs tr;
    auto* trn = app.add_subcommand("train", "Train a detector with grid search over the split's folds");
    trn->add_option("--detector,-d", tr.detector, "Detector name");
    trn->add_option("--config,-c", tr.config, "Detector config (JSON)");
    trn->add_option("--set", tr.sets, "Detector override key.path=json (repeatable)");
    trn->add_option("--in,-i", tr.in, "Corpus file")->required()->check(CLI::ExistingFile);
    trn->add_option("--split,-s", tr.split, "Split plan")->required()->check(CLI::ExistingFile);
    trn->add_option("--out,-o", tr.out, "Output model file")->required();
    trn->add_option("--seed", tr.seed, "Training seed")->required();
    add_jobs(trn, common);
    trn->callback([&] { action = [&] { return run_train(tr); }; });

    PredictArgs pr;
    auto* pre = app.add_subcommand("predict", "Score apps with a trained model");
    pre->add_option("--model,-m", pr.model, "Model file")->required()->check(CLI::ExistingFile);
    pre->add_option("--in,-i", pr.in, "Corpus file")->required()->check(CLI::ExistingFile);
    pre->add_option("--split,-s", pr.split, "Split plan; predicts its test ids and prints metrics");
    pre->add_option("--out,-o", pr.out, "Output predictions (csv)")->required();
    add_jobs(pre, common);
    pre->callback([&] { action = [&] { return run_predict(pr); }; });

    ScenarioArgs sc;
    auto* scen = app.add_subcommand("scenario", "Experiment scenarios");
    scen->require_subcommand(1);
    auto* srun = scen->add_subcommand("run", "Run a scenario and write its results directory");
    srun->add_option("--config,-c", sc.config, "Scenario config (JSON)")->required()->check(CLI::ExistingFile);
    srun->add_option("--seed", sc.seed, "Scenario seed (overrides the config)");
    srun->add_option("--set", sc.sets, "Config override key.path=json (repeatable)");
    srun->add_option("--out,-o", sc.out, "Results directory (default: $APKBENCH_RESULTS/<name> or results/<name>)");
    srun->add_option("--format,-f", sc.formats, "Report formats: csv, markdown, plot-data (default: all)")
        ->delimiter(',');
    srun->add_flag("--assert", sc.assert_checks, "Exit 3 when a directional check does not hold");
    add_jobs(srun, common);
    srun->callback([&] { action = [&] { return run_scenario_cmd(sc); }; });

    ReportArgs rp;
    auto* rep = app.add_subcommand("report", "Render report files from a result.json");
    rep->add_option("--result,-r", rp.result, "result.json or a results directory")->required();
    rep->add_option("--out,-o", rp.out, "Output directory (default: next to the result)");
    rep->add_option("--format,-f", rp.formats, "Report formats: csv, markdown, plot-data (default: all)")
        ->delimiter(',');
    add_jobs(rep, common);
    rep->callback([&] { action = [&] { return run_report(rp); }; });

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::Success& e) {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e) {
        print_error("usage", e.what());
        CLI::App* deepest = &app;
        while (!deepest->get_subcommands().empty()) {
            deepest = deepest->get_subcommands().front();
        }
        std::cerr << deepest->help() << std::flush;
        return 1;
    }

    try {
        set_default_jobs(common.jobs);
        return action ? action() : 0;
    }
    catch (const Error& e) {
        print_error(kind_name(e.kind()), e.what());
        return e.exit_code();
    }
    catch (const json::exception& e) {
        print_error("validation", e.what());
        return 2;
    }
    catch (const std::exception& e) {
        print_error("runtime", e.what());
        return 3;
    }
}
