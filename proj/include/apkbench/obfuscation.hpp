#pragma once

// IR-level evasion transforms: identifier renaming, code restructuring
// (indirection wrappers, junk gotos/nops, inverted conditionals, reflection)
// and string encryption.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "app_ir.hpp"
#include "common.hpp"
#include "corpus_synth.hpp"

namespace apkbench {

struct ObfuscationPlan {
    std::uint64_t seed = 1;
    std::set<ObfuscationTag> transforms;
    double rename_fraction = 1.0;      // share of user classes renamed
    double indirection_fraction = 1.0; // share of api edges routed through a wrapper
    double junk_rate = 1.0;            // expected junk instructions per original instruction
    double inversion_fraction = 1.0;   // share of conditionals inverted
    double reflection_fraction = 1.0;  // share of api edges replaced by reflective calls
    double string_fraction = 1.0;      // share of strings encrypted

    void validate() const
    {
        if (transforms.empty()) {
            throw ValidationError("obfuscation plan: no transform enabled");
        }
        for (double f : {rename_fraction, indirection_fraction, inversion_fraction, reflection_fraction,
                         string_fraction}) {
            if (!(f >= 0.0 && f <= 1.0)) {
                throw ValidationError("obfuscation plan: fractions must lie in [0,1]");
            }
        }
        if (!(junk_rate >= 0.0 && junk_rate <= 64.0)) {
            throw ValidationError("obfuscation plan: junk rate must lie in [0,64]");
        }
    }

    void set_all_fractions(double f)
    {
        rename_fraction = indirection_fraction = inversion_fraction = reflection_fraction = string_fraction = f;
        junk_rate = f;
    }
};

inline ObfuscationTag transform_from_short(std::string_view s)
{
    if (s == "rn" || s == "renaming") {
        return ObfuscationTag::renaming;
    }
    if (s == "co" || s == "code-structure") {
        return ObfuscationTag::code_structure;
    }
    if (s == "enc" || s == "encryption") {
        return ObfuscationTag::encryption;
    }
    throw UsageError("unknown transform '" + std::string(s) + "' (expected rn, co or enc)");
}

inline nlohmann::json plan_to_json(const ObfuscationPlan& p)
{
    nlohmann::json j;
    j["seed"] = p.seed;
    j["transforms"] = nlohmann::json::array();
    for (auto t : p.transforms) {
        j["transforms"].push_back(to_string(t));
    }
    j["rename_fraction"] = p.rename_fraction;
    j["indirection_fraction"] = p.indirection_fraction;
    j["junk_rate"] = p.junk_rate;
    j["inversion_fraction"] = p.inversion_fraction;
    j["reflection_fraction"] = p.reflection_fraction;
    j["string_fraction"] = p.string_fraction;
    return j;
}

inline ObfuscationPlan plan_from_json(const nlohmann::json& j)
{
    ObfuscationPlan p;
    try {
        p.seed = j.value("seed", p.seed);
        if (j.contains("fraction")) {
            p.set_all_fractions(j.at("fraction").get<double>());
        }
        for (const auto& t : j.at("transforms")) {
            p.transforms.insert(transform_from_short(t.get<std::string>()));
        }
        p.rename_fraction = j.value("rename_fraction", p.rename_fraction);
        p.indirection_fraction = j.value("indirection_fraction", p.indirection_fraction);
        p.junk_rate = j.value("junk_rate", p.junk_rate);
        p.inversion_fraction = j.value("inversion_fraction", p.inversion_fraction);
        p.reflection_fraction = j.value("reflection_fraction", p.reflection_fraction);
        p.string_fraction = j.value("string_fraction", p.string_fraction);
    }
    catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("obfuscation plan: ") + e.what());
    }
    catch (const UsageError& e) {
        throw ValidationError(std::string("obfuscation plan: ") + e.what());
    }
    p.validate();
    return p;
}

namespace obf_detail {

inline std::string class_of(const std::string& method)
{
    const auto p = method.find("->");
    return p == std::string::npos ? method : method.substr(0, p);
}

inline std::string member_of(const std::string& method)
{
    const auto p = method.find("->");
    return p == std::string::npos ? std::string() : method.substr(p + 2);
}

/// "Lcom/a/B;" -> "com.a.B"
inline std::string dotted(const std::string& descriptor)
{
    if (descriptor.size() < 3 || descriptor.front() != 'L' || descriptor.back() != ';') {
        return descriptor;
    }
    std::string s = descriptor.substr(1, descriptor.size() - 2);
    std::replace(s.begin(), s.end(), '/', '.');
    return s;
}

inline std::string package_of_dotted(const std::string& name)
{
    const auto p = name.rfind('.');
    return p == std::string::npos ? std::string() : name.substr(0, p);
}

/// Lowercase identifier from a hash, at least `min_len` letters.
inline std::string token(std::uint64_t h, std::size_t min_len = 4)
{
    std::string s;
    do {
        s += static_cast<char>('a' + h % 26);
        h /= 26;
    } while (h != 0 && s.size() < 12);
    while (s.size() < min_len) {
        s += 'a';
    }
    s.resize(std::max(min_len, std::min<std::size_t>(s.size(), min_len + 2)));
    return s;
}

/// Opaque ciphertext-looking string (base64 alphabet).
inline std::string cipher_token(Rng& rng, std::size_t len)
{
    static constexpr char alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string s;
    for (std::size_t i = 0; i < len; ++i) {
        s += alphabet[rng.below(64)];
    }
    return s + "==";
}

/// Picks exactly round(fraction * n) of n indices.
inline std::vector<bool> choose(std::size_t n, double fraction, Rng& rng)
{
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        idx[i] = i;
    }
    rng.shuffle(idx);
    std::vector<bool> pick(n, false);
    for (std::size_t i = 0; i < std::min(k, n); ++i) {
        pick[idx[i]] = true;
    }
    return pick;
}

inline std::string fresh_method(const AppRecord& app, const std::string& cls, const std::string& stem)
{
    for (int i = 0;; ++i) {
        std::string m = cls + "->" + stem + (i ? std::to_string(i) : std::string());
        if (!app.user_methods.contains(m)) {
            return m;
        }
    }
}

inline std::string home_class(const AppRecord& app, const std::string& simple_name)
{
    if (app.user_methods.empty()) {
        return "L" + simple_name + ";";
    }
    const std::string cls = class_of(*app.user_methods.begin());
    const auto slash = cls.rfind('/');
    return slash == std::string::npos ? "L" + simple_name + ";" : cls.substr(0, slash + 1) + simple_name + ";";
}

inline bool is_reflection_api(const std::string& name)
{
    const auto& r = synth_detail::reflection_apis();
    return std::find(r.begin(), r.end(), name) != r.end();
}

} // namespace obf_detail

/// Renames user classes (and their methods), the user-defined components
/// that live in their packages, and strings naming those classes.
inline AppRecord rename(const AppRecord& in, std::uint64_t seed, double fraction = 1.0)
{
    using namespace obf_detail;
    AppRecord app = in;
    app.obfuscation_tags.insert(ObfuscationTag::renaming);
    Rng rng(derive_seed(seed, "rename:" + in.id));

    std::set<std::string> classes;
    for (const auto& m : in.user_methods) {
        classes.insert(class_of(m));
    }
    std::set<std::string> packages;
    for (const auto& c : classes) {
        packages.insert(package_of_dotted(dotted(c)));
    }
    const std::vector<std::string> class_list(classes.begin(), classes.end());
    const auto picked = choose(class_list.size(), fraction, rng);

    // identifiers are drawn per app, so the same class gets different names in different apps
    const std::uint64_t app_key = derive_seed(seed, in.id);
    std::set<std::string> used;
    auto fresh = [&](const std::string& what) {
        for (std::uint64_t salt = 0;; ++salt) {
            std::string t = token(derive_seed(app_key, what + "#" + std::to_string(salt)));
            if (used.insert(t).second) {
                return t;
            }
        }
    };
    std::map<std::string, std::string> class_map; // descriptor -> descriptor
    std::map<std::string, std::string> pkg_map;   // dotted -> dotted
    for (std::size_t i = 0; i < class_list.size(); ++i) {
        if (!picked[i]) {
            continue;
        }
        const std::string pkg = package_of_dotted(dotted(class_list[i]));
        if (!pkg_map.contains(pkg)) {
            pkg_map[pkg] = pkg.empty() ? std::string() : fresh("pkg:" + pkg);
        }
        const std::string np = pkg_map[pkg];
        std::string desc = "L" + (np.empty() ? std::string() : np + "/") + fresh("cls:" + class_list[i]) + ";";
        class_map[class_list[i]] = desc;
    }
    std::map<std::string, std::string> method_map;
    for (const auto& m : in.user_methods) {
        const auto it = class_map.find(class_of(m));
        if (it == class_map.end()) {
            continue;
        }
        const std::string member = member_of(m);
        const bool keep = member == "<init>" || member == "<clinit>";
        method_map[m] = it->second + "->" + (keep ? member : fresh("m:" + m));
    }
    auto map_method = [&](const std::string& m) {
        const auto it = method_map.find(m);
        return it == method_map.end() ? m : it->second;
    };

    app.user_methods.clear();
    for (const auto& m : in.user_methods) {
        app.user_methods.insert(map_method(m));
    }
    app.call_edges.clear();
    for (const auto& e : in.call_edges) {
        app.call_edges.insert({map_method(e.caller), e.kind == CalleeKind::user ? map_method(e.callee) : e.callee,
                               e.kind});
    }
    for (auto& seq : app.opcode_sequences) {
        seq.method = map_method(seq.method);
    }

    // user-defined components: same package as a renamed user class
    std::map<std::string, std::string> dotted_map;
    for (const auto& [from, to] : class_map) {
        dotted_map[dotted(from)] = dotted(to);
    }
    app.app_components.clear();
    for (const auto& c : in.app_components) {
        auto name = c.name;
        if (const auto it = dotted_map.find(name); it != dotted_map.end()) {
            name = it->second;
        }
        else if (const auto pit = pkg_map.find(package_of_dotted(name));
                 pit != pkg_map.end() && packages.contains(pit->first)) {
            std::string np = pit->second;
            std::replace(np.begin(), np.end(), '/', '.');
            name = (np.empty() ? std::string() : np + ".") + fresh("comp:" + name);
        }
        app.app_components.insert({c.kind, name});
    }
    app.strings.clear();
    for (const auto& s : in.strings) {
        if (const auto it = class_map.find(s); it != class_map.end()) {
            app.strings.insert(it->second);
        }
        else if (const auto dit = dotted_map.find(s); dit != dotted_map.end()) {
            app.strings.insert(dit->second);
        }
        else {
            app.strings.insert(s);
        }
    }
    return app;
}

/// Indirection wrappers, junk instructions, inverted conditionals and
/// reflective calls.
inline AppRecord restructure(const AppRecord& in, const ObfuscationPlan& plan)
{
    using namespace obf_detail;
    AppRecord app = in;
    app.obfuscation_tags.insert(ObfuscationTag::code_structure);
    Rng rng(derive_seed(plan.seed, "restructure:" + in.id));

    // indirection
    std::vector<CallEdge> api_edges;
    for (const auto& e : app.call_edges) {
        if (e.kind == CalleeKind::api) {
            api_edges.push_back(e);
        }
    }
    const auto wrap = choose(api_edges.size(), plan.indirection_fraction, rng);
    for (std::size_t i = 0; i < api_edges.size(); ++i) {
        if (!wrap[i]) {
            continue;
        }
        const auto& e = api_edges[i];
        const std::string w = fresh_method(app, class_of(e.caller), "access$" + std::to_string(i));
        app.user_methods.insert(w);
        app.call_edges.erase(e);
        app.call_edges.insert({e.caller, w, CalleeKind::user});
        app.call_edges.insert({w, e.callee, CalleeKind::api});
        app.opcode_sequences.push_back({w, {"invoke-virtual", "move-result-object", "return-object"}, {}});
    }

    // reflection
    api_edges.clear();
    for (const auto& e : app.call_edges) {
        if (e.kind == CalleeKind::api && !is_reflection_api(e.callee)) {
            api_edges.push_back(e);
        }
    }
    const auto reflect = choose(api_edges.size(), plan.reflection_fraction, rng);
    std::set<std::string> reflected_targets;
    for (std::size_t i = 0; i < api_edges.size(); ++i) {
        if (!reflect[i]) {
            continue;
        }
        const auto& e = api_edges[i];
        app.call_edges.erase(e);
        reflected_targets.insert(e.callee);
        for (const auto& r : synth_detail::reflection_apis()) {
            app.call_edges.insert({e.caller, r, CalleeKind::api});
            app.api_calls[r] += 1;
        }
    }
    std::set<std::string> still_called;
    for (const auto& e : app.call_edges) {
        if (e.kind == CalleeKind::api) {
            still_called.insert(e.callee);
        }
    }
    for (const auto& t : reflected_targets) {
        if (!still_called.contains(t)) {
            app.api_calls.erase(t);
        }
    }

    // junk instructions and inverted conditionals
    const double whole = std::floor(plan.junk_rate);
    const double part = plan.junk_rate - whole;
    for (auto& seq : app.opcode_sequences) {
        std::vector<std::string> ops;
        std::vector<std::uint32_t> new_index(seq.opcodes.size());
        for (std::size_t i = 0; i < seq.opcodes.size(); ++i) {
            const std::size_t n_junk = static_cast<std::size_t>(whole) + (rng.bernoulli(part) ? 1 : 0);
            new_index[i] = static_cast<std::uint32_t>(ops.size());
            for (std::size_t k = 0; k < n_junk; ++k) {
                ops.emplace_back(rng.bernoulli(0.5) ? "nop" : "goto");
            }
            std::string op = seq.opcodes[i];
            if (dalvik::is_conditional(op) && rng.bernoulli(plan.inversion_fraction)) {
                op = std::string(dalvik::inverse_conditional(op));
            }
            ops.push_back(std::move(op));
        }
        for (auto& l : seq.leaders) {
            l = new_index[l];
        }
        seq.opcodes = std::move(ops);
    }
    refresh_basic_blocks(app);
    return app;
}

/// Replaces strings with ciphertext and adds a decryptor reached from every
/// method that loads a string constant.
inline AppRecord encrypt_strings(const AppRecord& in, const ObfuscationPlan& plan)
{
    using namespace obf_detail;
    AppRecord app = in;
    app.obfuscation_tags.insert(ObfuscationTag::encryption);
    Rng rng(derive_seed(plan.seed, "encrypt:" + in.id));
    const std::vector<std::string> strs(in.strings.begin(), in.strings.end());
    const auto pick = choose(strs.size(), plan.string_fraction, rng);
    if (std::none_of(pick.begin(), pick.end(), [](bool b) { return b; })) {
        return app;
    }
    app.strings.clear();
    for (std::size_t i = 0; i < strs.size(); ++i) {
        if (!pick[i]) {
            app.strings.insert(strs[i]);
            continue;
        }
        std::string c;
        do {
            c = cipher_token(rng, 4 * ((strs[i].size() + 2) / 3) + 4);
        } while (app.strings.contains(c) || in.strings.contains(c));
        app.strings.insert(c);
    }

    const std::string dec = fresh_method(app, home_class(app, "StringCipher"), "decrypt");
    std::vector<std::string> owners;
    for (const auto& seq : in.opcode_sequences) {
        if (std::any_of(seq.opcodes.begin(), seq.opcodes.end(),
                        [](const std::string& op) { return op.rfind("const-string", 0) == 0; })) {
            owners.push_back(seq.method);
        }
    }
    if (owners.empty()) {
        owners.assign(in.user_methods.begin(), in.user_methods.end());
    }
    app.user_methods.insert(dec);
    for (const auto& o : owners) {
        app.call_edges.insert({o, dec, CalleeKind::user});
    }
    for (const auto& api : synth_detail::crypto_apis()) {
        app.api_calls[api] += 1;
        app.call_edges.insert({dec, api, CalleeKind::api});
    }
    app.opcode_sequences.push_back({dec,
                                    {"const-string", "invoke-static", "move-result-object", "invoke-static",
                                     "move-result-object", "new-instance", "invoke-direct", "invoke-virtual",
                                     "invoke-virtual", "move-result-object", "return-object"},
                                    {}});
    refresh_basic_blocks(app);
    return app;
}

/// Applies the enabled transforms: encryption, then restructuring, then renaming,
/// so scaffolding added by one step is covered by the later ones.
inline AppRecord obfuscate(const AppRecord& app, const ObfuscationPlan& plan)
{
    plan.validate();
    AppRecord out = app;
    if (plan.transforms.contains(ObfuscationTag::encryption)) {
        out = encrypt_strings(out, plan);
    }
    if (plan.transforms.contains(ObfuscationTag::code_structure)) {
        out = restructure(out, plan);
    }
    if (plan.transforms.contains(ObfuscationTag::renaming)) {
        out = rename(out, plan.seed, plan.rename_fraction);
    }
    return out;
}

inline std::vector<AppRecord> obfuscate(std::span<const AppRecord> apps, const ObfuscationPlan& plan)
{
    plan.validate();
    std::vector<AppRecord> out(apps.size());
    parallel_for(apps.size(), [&](std::size_t i) { out[i] = obfuscate(apps[i], plan); });
    return out;
}

} // namespace apkbench
