#pragma once

// Synthetic corpora. A fixed "world" vocabulary (permissions, intents,
// components, hardware features, strings, API methods, opcode motifs) is
// derived from the seed; every item leans benign, neutral or malicious.
// Families turn the leans into inclusion probabilities, sample one prototype,
// and emit apps as prototype copies with independent per-feature flips.
// Families with a burst distribution occasionally emit runs of exact copies.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "app_ir.hpp"
#include "common.hpp"

namespace apkbench {

enum class VocabKind { permission, intent, component, hw_feature, string, api_call, motif };
inline constexpr std::array<VocabKind, 7> vocab_kinds = {
    VocabKind::permission, VocabKind::intent,   VocabKind::component, VocabKind::hw_feature,
    VocabKind::string,     VocabKind::api_call, VocabKind::motif};

inline std::string_view to_string(VocabKind k)
{
    switch (k) {
    case VocabKind::permission: return "permission";
    case VocabKind::intent: return "intent";
    case VocabKind::component: return "component";
    case VocabKind::hw_feature: return "hw_feature";
    case VocabKind::string: return "string";
    case VocabKind::api_call: return "api_call";
    case VocabKind::motif: return "motif";
    }
    return "?";
}

inline VocabKind vocab_kind_from(std::string_view s)
{
    static constexpr VocabKind all[] = {VocabKind::permission, VocabKind::intent,   VocabKind::component,
                                        VocabKind::hw_feature, VocabKind::string,   VocabKind::api_call,
                                        VocabKind::motif};
    return detail::enum_from(s, all, "vocabulary category");
}

struct VocabItem {
    std::string name;
    int lean = 0; // -1 benign, 0 neutral, +1 malicious
    ComponentKind component_kind = ComponentKind::activity;
    std::vector<std::string> opcodes; // motifs only
};

struct World {
    std::map<VocabKind, std::vector<VocabItem>> items;
    const std::vector<VocabItem>& of(VocabKind k) const { return items.at(k); }
};

struct FamilyProfile {
    std::string id;
    ClassLabel tendency = ClassLabel::malware;
    YearMonth birth{2012, 1};
    YearMonth death{2019, 12};
    double popularity = 1.0;
    double signal = 1.0; // strength of class-typical features
    double malice = 0.0; // greyware: position between goodware (0) and malware (1)
    double mimicry = 0.0; // malware: how much benign-leaning code it carries, like goodware at 1
    std::optional<std::string> based_on; // repackaging: start from another family
    std::map<int, double> vtd_weights;   // empty: tendency default
    std::map<int, double> burst_sizes;   // size >= 2 -> weight; empty: never bursts
    std::map<VocabKind, std::map<std::string, double>> inclusion_overrides;
    double diversity = 0.0;     // per-item chance of a fresh draw instead of the prototype's value
    bool app_signature = false; // package, components and strings unique per app

    bool active(YearMonth m) const { return birth <= m && m <= death; }
};

struct GeneratorConfig {
    std::uint64_t seed = 1;
    YearMonth start{2012, 1};
    int months = 24;
    std::map<ClassLabel, int> quota{{ClassLabel::goodware, 30}, {ClassLabel::greyware, 10}, {ClassLabel::malware, 30}};
    std::vector<FamilyProfile> families;
    double mutation_rate = 0.03;
    double duplicate_fraction = 0.0; // probability that a draw from a bursting family is a burst
    std::uint64_t world_seed = 0x5eedULL;
};

// ---------------------------------------------------------------------------
// World vocabulary

namespace synth_detail {

inline const std::vector<std::string>& permission_names()
{
    static const std::vector<std::string> v = {
        "ACCESS_COARSE_LOCATION", "ACCESS_FINE_LOCATION", "ACCESS_NETWORK_STATE", "ACCESS_WIFI_STATE",
        "BLUETOOTH", "CALL_PHONE", "CAMERA", "CHANGE_WIFI_STATE", "DISABLE_KEYGUARD", "GET_ACCOUNTS",
        "GET_TASKS", "INSTALL_PACKAGES", "INTERNET", "KILL_BACKGROUND_PROCESSES", "MOUNT_UNMOUNT_FILESYSTEMS",
        "PROCESS_OUTGOING_CALLS", "READ_CALENDAR", "READ_CALL_LOG", "READ_CONTACTS", "READ_EXTERNAL_STORAGE",
        "READ_LOGS", "READ_PHONE_STATE", "READ_SMS", "RECEIVE_BOOT_COMPLETED", "RECEIVE_MMS", "RECEIVE_SMS",
        "RECORD_AUDIO", "SEND_SMS", "SET_WALLPAPER", "SYSTEM_ALERT_WINDOW", "VIBRATE", "WAKE_LOCK",
        "WRITE_CONTACTS", "WRITE_EXTERNAL_STORAGE", "WRITE_SETTINGS", "WRITE_SMS"};
    return v;
}

inline const std::vector<std::string>& intent_names()
{
    static const std::vector<std::string> v = {
        "android.intent.action.MAIN", "android.intent.action.VIEW", "android.intent.action.SEND",
        "android.intent.action.BOOT_COMPLETED", "android.intent.action.USER_PRESENT",
        "android.intent.action.PACKAGE_ADDED", "android.intent.action.PACKAGE_REMOVED",
        "android.intent.action.BATTERY_CHANGED", "android.intent.action.SCREEN_ON",
        "android.intent.action.SCREEN_OFF", "android.intent.action.NEW_OUTGOING_CALL",
        "android.intent.action.PHONE_STATE", "android.intent.action.TIME_SET",
        "android.intent.action.SEARCH", "android.intent.action.DIAL", "android.intent.action.PICK",
        "android.net.conn.CONNECTIVITY_CHANGE", "android.provider.Telephony.SMS_RECEIVED",
        "android.app.action.DEVICE_ADMIN_ENABLED", "android.intent.action.MEDIA_MOUNTED",
        "android.intent.action.ACTION_POWER_CONNECTED", "android.intent.action.SIG_STR",
        "com.android.vending.INSTALL_REFERRER", "android.appwidget.action.APPWIDGET_UPDATE"};
    return v;
}

inline const std::vector<std::string>& hw_names()
{
    static const std::vector<std::string> v = {
        "android.hardware.camera", "android.hardware.camera.autofocus", "android.hardware.location",
        "android.hardware.location.gps", "android.hardware.telephony", "android.hardware.touchscreen",
        "android.hardware.wifi", "android.hardware.bluetooth", "android.hardware.microphone",
        "android.hardware.sensor.accelerometer", "android.hardware.nfc", "android.software.live_wallpaper"};
    return v;
}

inline const std::vector<std::pair<std::string, std::vector<std::string>>>& api_classes()
{
    static const std::vector<std::pair<std::string, std::vector<std::string>>> v = {
        {"Landroid/telephony/TelephonyManager;", {"getDeviceId", "getLine1Number", "getSimSerialNumber", "getSubscriberId"}},
        {"Landroid/telephony/SmsManager;", {"sendTextMessage", "getDefault", "divideMessage", "sendMultipartTextMessage"}},
        {"Landroid/net/ConnectivityManager;", {"getActiveNetworkInfo", "getNetworkInfo", "isActiveNetworkMetered", "getAllNetworkInfo"}},
        {"Landroid/net/wifi/WifiManager;", {"getConnectionInfo", "isWifiEnabled", "setWifiEnabled", "getScanResults"}},
        {"Landroid/net/Uri;", {"parse", "encode", "getHost", "fromFile"}},
        {"Ljava/net/URL;", {"openConnection", "openStream", "<init>", "getHost"}},
        {"Ljava/net/HttpURLConnection;", {"connect", "getInputStream", "setRequestMethod", "getResponseCode"}},
        {"Ljava/lang/Runtime;", {"exec", "getRuntime", "loadLibrary", "availableProcessors"}},
        {"Ljava/lang/System;", {"loadLibrary", "currentTimeMillis", "getProperty", "arraycopy"}},
        {"Landroid/app/WallpaperManager;", {"setBitmap", "getInstance", "setResource", "getDrawable"}},
        {"Landroid/content/pm/PackageManager;", {"getInstalledPackages", "getInstalledApplications", "getPackageInfo", "setComponentEnabledSetting"}},
        {"Landroid/content/Context;", {"startService", "getSystemService", "registerReceiver", "getSharedPreferences"}},
        {"Landroid/app/Activity;", {"onCreate", "setContentView", "findViewById", "startActivity"}},
        {"Landroid/location/LocationManager;", {"getLastKnownLocation", "requestLocationUpdates", "isProviderEnabled", "getBestProvider"}},
        {"Landroid/media/AudioRecord;", {"startRecording", "read", "stop", "<init>"}},
        {"Landroid/hardware/Camera;", {"open", "takePicture", "startPreview", "release"}},
        {"Landroid/content/ContentResolver;", {"query", "delete", "insert", "registerContentObserver"}},
        {"Ldalvik/system/DexClassLoader;", {"<init>", "loadClass", "getParent", "findLibrary"}},
        {"Landroid/app/admin/DevicePolicyManager;", {"lockNow", "isAdminActive", "resetPassword", "wipeData"}},
        {"Landroid/util/Log;", {"d", "e", "i", "w"}},
        {"Landroid/widget/Toast;", {"makeText", "show", "setDuration", "setGravity"}},
        {"Landroid/os/Handler;", {"post", "postDelayed", "sendMessage", "removeCallbacks"}},
        {"Ljava/io/File;", {"exists", "delete", "mkdirs", "listFiles"}},
        {"Ljava/lang/StringBuilder;", {"append", "toString", "<init>", "length"}},
    };
    return v;
}

/// API methods the obfuscation transforms introduce. Present in the world
/// as neutral items so obfuscated apps stay inside the vocabulary.
inline const std::vector<std::string>& reflection_apis()
{
    static const std::vector<std::string> v = {"Ljava/lang/Class;->forName", "Ljava/lang/Class;->getMethod",
                                               "Ljava/lang/reflect/Method;->invoke"};
    return v;
}

inline const std::vector<std::string>& crypto_apis()
{
    static const std::vector<std::string> v = {"Ljavax/crypto/Cipher;->getInstance", "Ljavax/crypto/Cipher;->init",
                                               "Ljavax/crypto/Cipher;->doFinal",
                                               "Ljavax/crypto/spec/SecretKeySpec;-><init>",
                                               "Landroid/util/Base64;->decode"};
    return v;
}

inline int draw_lean(Rng& rng)
{
    const double u = rng.uniform();
    return u < 0.3 ? -1 : u < 0.7 ? 0 : 1;
}

} // namespace synth_detail

inline World build_world(std::uint64_t world_seed)
{
    using namespace synth_detail;
    Rng rng(derive_seed(world_seed, "world"));
    World w;
    auto& perms = w.items[VocabKind::permission];
    for (const auto& p : permission_names()) {
        perms.push_back({"android.permission." + p, draw_lean(rng), {}, {}});
    }
    auto& intents = w.items[VocabKind::intent];
    for (const auto& a : intent_names()) {
        intents.push_back({a, draw_lean(rng), {}, {}});
    }
    auto& hw = w.items[VocabKind::hw_feature];
    for (const auto& h : hw_names()) {
        hw.push_back({h, draw_lean(rng), {}, {}});
    }
    auto& comps = w.items[VocabKind::component];
    const char* lib_prefixes[] = {"com.google.android.gms.ads", "com.facebook.ads", "com.unity3d.player",
                                  "com.startapp.android", "com.airpush.android", "org.acra",
                                  "com.flurry.android", "com.mopub.mobileads", "com.umeng.update",
                                  "com.tapjoy"};
    const char* comp_suffix[] = {"AdActivity", "PushService", "BootReceiver", "DataProvider"};
    for (int i = 0; i < 20; ++i) {
        VocabItem it;
        const int k = i % 4;
        it.name = std::string(lib_prefixes[i / 2]) + "." + comp_suffix[(k + i / 4) % 4];
        it.component_kind = static_cast<ComponentKind>((k + i / 4) % 4);
        it.lean = draw_lean(rng);
        comps.push_back(std::move(it));
    }
    auto& strs = w.items[VocabKind::string];
    const char* words[] = {"alpha", "beacon", "cobalt", "delta", "ember", "falcon", "garnet", "harbor",
                           "indigo", "jasper", "kestrel", "lumen", "meadow", "nimbus", "onyx", "pixel"};
    for (int i = 0; i < 60; ++i) {
        VocabItem it;
        if (i % 4 == 0) {
            it.name = "http://" + std::string(words[i % 16]) + "-" + std::to_string(i) + ".example.com/api";
        }
        else if (i % 4 == 1) {
            it.name = std::to_string(10 + i) + "." + std::to_string(i * 7 % 250) + "." +
                      std::to_string(i * 13 % 250) + "." + std::to_string(i * 29 % 250);
        }
        else {
            it.name = std::string(words[i % 16]) + "_" + std::to_string(i);
        }
        it.lean = draw_lean(rng);
        strs.push_back(std::move(it));
    }
    auto& apis = w.items[VocabKind::api_call];
    for (const auto& [cls, methods] : api_classes()) {
        for (const auto& m : methods) {
            apis.push_back({cls + "->" + m, draw_lean(rng), {}, {}});
        }
    }
    for (const auto& a : reflection_apis()) {
        apis.push_back({a, 0, {}, {}});
    }
    for (const auto& a : crypto_apis()) {
        apis.push_back({a, 0, {}, {}});
    }
    auto& motifs = w.items[VocabKind::motif];
    static const char* body_ops[] = {
        "const/4", "const/16", "const-string", "move-result", "move-result-object", "move-object",
        "iget-object", "iput-object", "sget-object", "aget", "aput", "add-int", "add-int/lit8",
        "mul-int", "xor-int", "xor-int/lit8", "shl-int/lit8", "and-int", "or-int", "int-to-char",
        "array-length", "new-instance", "new-array", "check-cast", "invoke-virtual", "invoke-static",
        "invoke-direct", "invoke-interface", "iget", "iput", "cmp-long", "rem-int"};
    static const char* enders[] = {"if-eqz", "if-nez", "if-lt", "if-ge", "goto", "if-eq"};
    for (int i = 0; i < 120; ++i) {
        VocabItem it;
        const int len = 2 + static_cast<int>(rng.below(5));
        for (int k = 0; k < len; ++k) {
            it.opcodes.emplace_back(body_ops[rng.below(std::size(body_ops))]);
        }
        if (rng.bernoulli(0.6)) {
            it.opcodes.emplace_back(enders[rng.below(std::size(enders))]);
        }
        it.name = "motif" + std::to_string(i);
        it.lean = draw_lean(rng);
        motifs.push_back(std::move(it));
    }
    return w;
}

// ---------------------------------------------------------------------------
// Families

/// Family-specific items (signature strings, components, code package).
struct FamilySignature {
    std::string package; // dotted, e.g. com.fam.core
    std::vector<std::pair<ComponentKind, std::string>> components;
    std::vector<std::string> strings;
    std::vector<std::string> classes; // descriptors of user classes
};

inline FamilySignature family_signature(const FamilyProfile& f)
{
    FamilySignature s;
    std::string slug;
    for (char c : f.id) {
        slug += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(c)) : '_';
    }
    s.package = "com." + slug + ".app";
    s.components = {{ComponentKind::activity, s.package + ".MainActivity"},
                    {ComponentKind::service, s.package + ".CoreService"},
                    {ComponentKind::receiver, s.package + ".EventReceiver"}};
    s.strings = {"http://" + slug + ".example.net/gate", slug + "_config", slug + "_token"};
    std::string path = s.package;
    std::replace(path.begin(), path.end(), '.', '/');
    for (const char* cls : {"Main", "Core", "Util", "Net", "Store"}) {
        s.classes.push_back("L" + path + "/" + cls + ";");
    }
    return s;
}

inline double lean_probability(int lean, ClassLabel tendency, double signal, double malice, double mimicry = 0.0)
{
    auto for_class = [&](ClassLabel c, double sig) {
        if (lean == 0) {
            return 0.25;
        }
        const bool aligned = (lean > 0) == (c == ClassLabel::malware);
        if (!aligned && c == ClassLabel::malware) {
            return 0.05 + 0.35 * mimicry;
        }
        return aligned ? 0.05 + 0.35 * sig : 0.05;
    };
    if (tendency == ClassLabel::greyware) {
        return (1.0 - malice) * for_class(ClassLabel::goodware, 1.0) + malice * for_class(ClassLabel::malware, signal);
    }
    return for_class(tendency, signal);
}

inline const FamilyProfile& find_family(const GeneratorConfig& cfg, const std::string& id)
{
    for (const auto& f : cfg.families) {
        if (f.id == id) {
            return f;
        }
    }
    throw ValidationError("unknown family '" + id + "'");
}

/// Per-category inclusion probabilities over the world vocabulary.
inline std::map<VocabKind, std::vector<double>> family_inclusion(const World& w, const GeneratorConfig& cfg,
                                                                 const FamilyProfile& f, int depth = 0)
{
    if (depth > 8) {
        throw ValidationError("family '" + f.id + "': based_on chain too deep or cyclic");
    }
    std::map<VocabKind, std::vector<double>> out;
    std::map<VocabKind, std::vector<double>> base;
    if (f.based_on) {
        base = family_inclusion(w, cfg, find_family(cfg, *f.based_on), depth + 1);
    }
    for (auto k : vocab_kinds) {
        const auto& items = w.of(k);
        auto& p = out[k];
        p.resize(items.size());
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (f.based_on) {
                // repackaged: host app plus a payload of class-typical items
                const double payload = items[i].lean > 0 ? 0.05 + 0.35 * f.signal : 0.0;
                p[i] = std::max(base[k][i], payload);
            }
            else {
                p[i] = lean_probability(items[i].lean, f.tendency, f.signal, f.malice, f.mimicry);
            }
        }
        if (const auto ov = f.inclusion_overrides.find(k); ov != f.inclusion_overrides.end()) {
            for (std::size_t i = 0; i < items.size(); ++i) {
                if (const auto it = ov->second.find(items[i].name); it != ov->second.end()) {
                    p[i] = it->second;
                }
            }
        }
    }
    return out;
}

inline std::map<int, double> default_vtd_weights(const FamilyProfile& f)
{
    std::map<int, double> w;
    auto binom = [](int n, double p, int k) {
        return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
                        (n - k) * std::log1p(-p));
    };
    switch (f.tendency) {
    case ClassLabel::goodware:
        w[0] = 1.0;
        break;
    case ClassLabel::greyware: {
        const double m = std::clamp(f.malice, 0.02, 0.98);
        for (int k = 0; k <= 5; ++k) {
            w[1 + k] = binom(5, m, k);
        }
        break;
    }
    case ClassLabel::malware:
        for (int k = 0; k <= 40; ++k) {
            w[7 + k] = binom(40, 0.35, k);
        }
        break;
    }
    return w;
}

/// One family's frozen prototype: which vocabulary items it carries.
struct FamilyPrototype {
    std::map<VocabKind, std::vector<bool>> present;
    std::map<VocabKind, std::vector<double>> inclusion;
    FamilySignature signature;
    std::vector<std::pair<int, double>> vtd; // cumulative-free list of (value, weight)
};

inline FamilyPrototype make_prototype(const World& w, const GeneratorConfig& cfg, const FamilyProfile& f)
{
    FamilyPrototype proto;
    Rng rng(derive_seed(cfg.seed, "family:" + f.id));
    proto.inclusion = family_inclusion(w, cfg, f);
    for (auto k : vocab_kinds) {
        auto& v = proto.present[k];
        for (double p : proto.inclusion.at(k)) {
            v.push_back(rng.bernoulli(p));
        }
    }
    proto.signature = family_signature(f);
    const auto weights = f.vtd_weights.empty() ? default_vtd_weights(f) : f.vtd_weights;
    for (const auto& [v, wt] : weights) {
        proto.vtd.emplace_back(v, wt);
    }
    return proto;
}

// ---------------------------------------------------------------------------
// Validation and drift

inline void validate_config(const GeneratorConfig& cfg)
{
    if (cfg.families.empty()) {
        throw ValidationError("generator config: empty family roster");
    }
    if (cfg.months <= 0) {
        throw ValidationError("generator config: months must be positive");
    }
    if (cfg.mutation_rate < 0.0 || cfg.mutation_rate > 1.0) {
        throw ValidationError("generator config: mutation_rate must be in [0,1]");
    }
    if (cfg.duplicate_fraction < 0.0 || cfg.duplicate_fraction > 1.0) {
        throw ValidationError("generator config: duplicate_fraction must be in [0,1]");
    }
    for (const auto& [cls, q] : cfg.quota) {
        if (q < 0) {
            throw ValidationError("generator config: negative quota");
        }
    }
    std::set<std::string> ids;
    for (const auto& f : cfg.families) {
        if (f.id.empty() || !ids.insert(f.id).second) {
            throw ValidationError("generator config: family ids must be unique and non-empty ('" + f.id + "')");
        }
        if (f.death < f.birth) {
            throw ValidationError("family '" + f.id + "': birth after death");
        }
        if (f.popularity < 0.0 || f.signal < 0.0 || f.signal > 1.0 || f.malice < 0.0 || f.malice > 1.0) {
            throw ValidationError("family '" + f.id + "': popularity/signal/malice out of range");
        }
        if (f.diversity < 0.0 || f.diversity > 1.0) {
            throw ValidationError("family '" + f.id + "': diversity out of range");
        }
        if (f.mimicry < 0.0 || f.mimicry > 1.0) {
            throw ValidationError("family '" + f.id + "': mimicry out of range");
        }
        for (const auto& [v, wt] : f.vtd_weights) {
            if (v < 0 || v > 70 || wt < 0.0) {
                throw ValidationError("family '" + f.id + "': vtd support must lie in 0..70");
            }
        }
        for (const auto& [s, wt] : f.burst_sizes) {
            if (s < 2 || wt < 0.0) {
                throw ValidationError("family '" + f.id + "': burst sizes must be >= 2");
            }
        }
        for (const auto& [k, m] : f.inclusion_overrides) {
            for (const auto& [name, p] : m) {
                if (p < 0.0 || p > 1.0) {
                    throw ValidationError("family '" + f.id + "': inclusion probability out of [0,1]");
                }
            }
        }
        if (f.based_on) {
            find_family(cfg, *f.based_on);
        }
    }
}

struct DriftRow {
    YearMonth month;
    ClassLabel tendency;
    std::map<std::string, double> weights; // family id -> share, sums to 1
};

/// Family mixture per month and class tendency (only classes with quota > 0).
inline std::vector<DriftRow> drift_schedule(const GeneratorConfig& cfg)
{
    std::vector<DriftRow> rows;
    for (int mi = 0; mi < cfg.months; ++mi) {
        const auto month = YearMonth::from_index(cfg.start.index() + mi);
        for (auto cls : {ClassLabel::goodware, ClassLabel::greyware, ClassLabel::malware}) {
            const auto q = cfg.quota.find(cls);
            if (q == cfg.quota.end() || q->second == 0) {
                continue;
            }
            DriftRow row{month, cls, {}};
            double total = 0.0;
            for (const auto& f : cfg.families) {
                if (f.tendency == cls && f.active(month) && f.popularity > 0.0) {
                    total += f.popularity;
                }
            }
            if (total <= 0.0) {
                throw ValidationError("no active " + std::string(to_string(cls)) + " family in " + month.str());
            }
            for (const auto& f : cfg.families) {
                if (f.tendency == cls) {
                    row.weights[f.id] = f.active(month) ? f.popularity / total : 0.0;
                }
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Generation

namespace synth_detail {

/// Short lowercase token for per-app package names.
inline std::string app_token(std::uint64_t h)
{
    std::string t;
    for (int i = 0; i < 6; ++i, h /= 26) {
        t += static_cast<char>('a' + h % 26);
    }
    return t;
}

inline AppRecord make_app(const World& w, const FamilyProfile& f, const FamilyPrototype& proto, double mutation,
                          Rng& rng)
{
    AppRecord r;
    r.source = Source::synthetic;
    r.family_id = f.id;
    auto keep = [&](VocabKind k, std::size_t i) {
        if (f.diversity > 0.0 && rng.bernoulli(f.diversity)) {
            return rng.bernoulli(proto.inclusion.at(k)[i]);
        }
        return proto.present.at(k)[i] != rng.bernoulli(mutation);
    };
    FamilySignature own;
    if (f.app_signature) {
        FamilyProfile variant;
        variant.id = f.id + "-" + app_token(rng.next());
        own = family_signature(variant);
    }
    const FamilySignature& signature = f.app_signature ? own : proto.signature;

    for (std::size_t i = 0; i < w.of(VocabKind::permission).size(); ++i) {
        if (keep(VocabKind::permission, i)) {
            r.permissions.insert(w.of(VocabKind::permission)[i].name);
        }
    }
    for (std::size_t i = 0; i < w.of(VocabKind::intent).size(); ++i) {
        if (keep(VocabKind::intent, i)) {
            r.intent_actions.insert(w.of(VocabKind::intent)[i].name);
        }
    }
    for (std::size_t i = 0; i < w.of(VocabKind::hw_feature).size(); ++i) {
        if (keep(VocabKind::hw_feature, i)) {
            r.hw_sw_features.insert(w.of(VocabKind::hw_feature)[i].name);
        }
    }
    for (std::size_t i = 0; i < w.of(VocabKind::component).size(); ++i) {
        if (keep(VocabKind::component, i)) {
            const auto& it = w.of(VocabKind::component)[i];
            r.app_components.insert({it.component_kind, it.name});
        }
    }
    for (const auto& [kind, name] : signature.components) {
        if (!rng.bernoulli(mutation)) {
            r.app_components.insert({kind, name});
        }
    }
    for (std::size_t i = 0; i < w.of(VocabKind::string).size(); ++i) {
        if (keep(VocabKind::string, i)) {
            r.strings.insert(w.of(VocabKind::string)[i].name);
        }
    }
    for (const auto& s : signature.strings) {
        if (!rng.bernoulli(mutation)) {
            r.strings.insert(s);
        }
    }

    // user methods
    const auto& classes = signature.classes;
    const std::size_t n_methods = 2 + static_cast<std::size_t>(rng.below(5));
    std::vector<std::string> methods;
    for (std::size_t i = 0; i < n_methods; ++i) {
        methods.push_back(classes[i % classes.size()] + "->m" + std::to_string(i));
    }
    r.user_methods.insert(methods.begin(), methods.end());
    for (std::size_t i = 0; i + 1 < methods.size(); ++i) {
        r.call_edges.insert({methods[i], methods[i + 1], CalleeKind::user});
    }
    for (std::size_t i = 0; i < w.of(VocabKind::api_call).size(); ++i) {
        if (keep(VocabKind::api_call, i)) {
            const auto& name = w.of(VocabKind::api_call)[i].name;
            std::uint32_t count = 1;
            while (count < 12 && rng.bernoulli(0.45)) {
                ++count;
            }
            r.api_calls[name] = count;
            r.call_edges.insert({methods[rng.below(methods.size())], name, CalleeKind::api});
        }
    }

    // code: present motifs spread over the methods, one block per motif
    std::vector<std::size_t> motifs;
    for (std::size_t i = 0; i < w.of(VocabKind::motif).size(); ++i) {
        if (keep(VocabKind::motif, i)) {
            motifs.push_back(i);
        }
    }
    rng.shuffle(motifs);
    std::vector<OpcodeSequence> seqs(methods.size());
    for (std::size_t i = 0; i < methods.size(); ++i) {
        seqs[i].method = methods[i];
    }
    for (std::size_t j = 0; j < motifs.size(); ++j) {
        auto& s = seqs[j % seqs.size()];
        if (!s.opcodes.empty()) {
            s.leaders.push_back(static_cast<std::uint32_t>(s.opcodes.size()));
        }
        const auto& ops = w.of(VocabKind::motif)[motifs[j]].opcodes;
        s.opcodes.insert(s.opcodes.end(), ops.begin(), ops.end());
    }
    for (auto& s : seqs) {
        if (!s.opcodes.empty() && !dalvik::ends_block(s.opcodes.back())) {
            s.leaders.push_back(static_cast<std::uint32_t>(s.opcodes.size()));
        }
        s.opcodes.emplace_back("return-void");
        r.opcode_sequences.push_back(std::move(s));
    }
    refresh_basic_blocks(r);
    r.vtd = proto.vtd.empty() ? 0 : proto.vtd[rng.categorical([&] {
        std::vector<double> ws;
        for (const auto& [v, wt] : proto.vtd) {
            ws.push_back(wt);
        }
        return ws;
    }())].first;
    return r;
}

inline char class_letter(ClassLabel c)
{
    return c == ClassLabel::goodware ? 'g' : c == ClassLabel::greyware ? 'x' : 'm';
}

} // namespace synth_detail

/// Generates the corpus: months in order, classes goodware/greyware/malware
/// within a month, a running counter within (month, class).
inline std::vector<AppRecord> generate(const GeneratorConfig& cfg)
{
    validate_config(cfg);
    const auto schedule = drift_schedule(cfg);
    const World world = build_world(cfg.world_seed);
    std::map<std::string, FamilyPrototype> protos;
    for (const auto& f : cfg.families) {
        protos.emplace(f.id, make_prototype(world, cfg, f));
    }
    std::map<std::string, const FamilyProfile*> by_id;
    for (const auto& f : cfg.families) {
        by_id[f.id] = &f;
    }

    std::vector<std::vector<AppRecord>> per_row(schedule.size());
    parallel_for(schedule.size(), [&](std::size_t ri) {
        const auto& row = schedule[ri];
        const int quota = cfg.quota.at(row.tendency);
        Rng rng(derive_seed(cfg.seed, "month:" + row.month.str() + ":" + std::string(to_string(row.tendency))));
        std::vector<std::string> ids;
        std::vector<double> weights;
        for (const auto& [id, wt] : row.weights) {
            ids.push_back(id);
            weights.push_back(wt);
        }
        auto& out = per_row[ri];
        int counter = 0;
        auto next_id = [&] {
            char buf[64];
            std::snprintf(buf, sizeof buf, "syn-%04d%02d-%c-%05d", row.month.year, row.month.month,
                          synth_detail::class_letter(row.tendency), counter++);
            return std::string(buf);
        };
        while (static_cast<int>(out.size()) < quota) {
            const auto& fam = *by_id.at(ids[rng.categorical(weights)]);
            AppRecord app = synth_detail::make_app(world, fam, protos.at(fam.id), cfg.mutation_rate, rng);
            app.timestamp = row.month;
            std::size_t copies = 1;
            if (!fam.burst_sizes.empty() && rng.bernoulli(cfg.duplicate_fraction)) {
                std::vector<int> sizes;
                std::vector<double> ws;
                for (const auto& [s, wt] : fam.burst_sizes) {
                    sizes.push_back(s);
                    ws.push_back(wt);
                }
                copies = static_cast<std::size_t>(sizes[rng.categorical(ws)]);
            }
            for (std::size_t c = 0; c < copies && static_cast<int>(out.size()) < quota; ++c) {
                AppRecord copy = app;
                copy.id = next_id();
                out.push_back(std::move(copy));
            }
        }
    });
    std::vector<AppRecord> all;
    for (auto& rows : per_row) {
        for (auto& r : rows) {
            all.push_back(std::move(r));
        }
    }
    return all;
}

// ---------------------------------------------------------------------------
// Config file

inline GeneratorConfig generator_config_from_json(const nlohmann::json& j)
{
    GeneratorConfig cfg;
    try {
        if (j.contains("format") && j.at("format") != "apkbench-generator") {
            throw ValidationError("generator config: unexpected format tag");
        }
        if (j.value("version", 1) != 1) {
            throw ValidationError("generator config: unsupported version");
        }
        cfg.seed = j.value("seed", cfg.seed);
        cfg.world_seed = j.value("world_seed", cfg.world_seed);
        if (j.contains("start")) {
            cfg.start = YearMonth::parse(j.at("start").get<std::string>());
        }
        cfg.months = j.value("months", cfg.months);
        if (j.contains("quota")) {
            cfg.quota.clear();
            for (const auto& [k, v] : j.at("quota").items()) {
                cfg.quota[class_label_from(k)] = v.get<int>();
            }
        }
        cfg.mutation_rate = j.value("mutation_rate", cfg.mutation_rate);
        cfg.duplicate_fraction = j.value("duplicate_fraction", cfg.duplicate_fraction);
        for (const auto& fj : j.at("families")) {
            FamilyProfile f;
            f.id = fj.at("id").get<std::string>();
            f.tendency = class_label_from(fj.at("tendency").get<std::string>());
            if (fj.contains("birth")) {
                f.birth = YearMonth::parse(fj.at("birth").get<std::string>());
            }
            else {
                f.birth = cfg.start;
            }
            if (fj.contains("death")) {
                f.death = YearMonth::parse(fj.at("death").get<std::string>());
            }
            else {
                f.death = YearMonth::from_index(cfg.start.index() + cfg.months - 1);
            }
            f.popularity = fj.value("popularity", 1.0);
            f.signal = fj.value("signal", 1.0);
            f.malice = fj.value("malice", 0.0);
            f.diversity = fj.value("diversity", 0.0);
            f.mimicry = fj.value("mimicry", 0.0);
            f.app_signature = fj.value("app_signature", false);
            if (fj.contains("based_on")) {
                f.based_on = fj.at("based_on").get<std::string>();
            }
            if (fj.contains("vtd")) {
                for (const auto& [k, v] : fj.at("vtd").items()) {
                    f.vtd_weights[std::stoi(k)] = v.get<double>();
                }
            }
            if (fj.contains("burst")) {
                for (const auto& [k, v] : fj.at("burst").items()) {
                    f.burst_sizes[std::stoi(k)] = v.get<double>();
                }
            }
            if (fj.contains("inclusion")) {
                for (const auto& [cat, m] : fj.at("inclusion").items()) {
                    for (const auto& [name, p] : m.items()) {
                        f.inclusion_overrides[vocab_kind_from(cat)][name] = p.get<double>();
                    }
                }
            }
            cfg.families.push_back(std::move(f));
        }
    }
    catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("generator config: ") + e.what());
    }
    catch (const std::invalid_argument&) {
        throw ValidationError("generator config: non-numeric vtd or burst key");
    }
    validate_config(cfg);
    return cfg;
}

inline nlohmann::json generator_config_to_json(const GeneratorConfig& cfg)
{
    using nlohmann::json;
    json j;
    j["format"] = "apkbench-generator";
    j["version"] = 1;
    j["seed"] = cfg.seed;
    j["world_seed"] = cfg.world_seed;
    j["start"] = cfg.start.str();
    j["months"] = cfg.months;
    for (const auto& [k, v] : cfg.quota) {
        j["quota"][std::string(to_string(k))] = v;
    }
    j["mutation_rate"] = cfg.mutation_rate;
    j["duplicate_fraction"] = cfg.duplicate_fraction;
    j["families"] = json::array();
    for (const auto& f : cfg.families) {
        json fj;
        fj["id"] = f.id;
        fj["tendency"] = to_string(f.tendency);
        fj["birth"] = f.birth.str();
        fj["death"] = f.death.str();
        fj["popularity"] = f.popularity;
        fj["signal"] = f.signal;
        fj["malice"] = f.malice;
        fj["diversity"] = f.diversity;
        fj["mimicry"] = f.mimicry;
        fj["app_signature"] = f.app_signature;
        if (f.based_on) {
            fj["based_on"] = *f.based_on;
        }
        for (const auto& [v, wt] : f.vtd_weights) {
            fj["vtd"][std::to_string(v)] = wt;
        }
        for (const auto& [s, wt] : f.burst_sizes) {
            fj["burst"][std::to_string(s)] = wt;
        }
        for (const auto& [k, m] : f.inclusion_overrides) {
            for (const auto& [name, p] : m) {
                fj["inclusion"][std::string(to_string(k))][name] = p;
            }
        }
        j["families"].push_back(std::move(fj));
    }
    return j;
}

inline GeneratorConfig load_generator_config(const std::filesystem::path& path)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    }
    catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("generator config " + path.string() + ": " + e.what());
    }
    return generator_config_from_json(j);
}

} // namespace apkbench
