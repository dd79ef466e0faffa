#pragma once

// Random but valid AppRecords for property tests.

#include <random>
#include <string>
#include <vector>

#include "apkbench/app_ir.hpp"

namespace testsupport {

inline apkbench::AppRecord random_record(std::mt19937_64& rng, const std::string& id, int api_vocab = 12)
{
    using namespace apkbench;
    auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
    AppRecord r;
    r.id = id;
    r.timestamp = {2012 + static_cast<int>(pick(8)), 1 + static_cast<int>(pick(12))};
    r.source = static_cast<Source>(pick(3));
    r.vtd = static_cast<int>(pick(20));
    for (std::size_t i = 0, n = pick(5); i < n; ++i) {
        r.permissions.insert("android.permission.P" + std::to_string(pick(10)));
    }
    for (std::size_t i = 0, n = pick(3); i < n; ++i) {
        r.app_components.insert({static_cast<ComponentKind>(pick(4)), "com.x.C" + std::to_string(pick(6))});
    }
    for (std::size_t i = 0, n = pick(3); i < n; ++i) {
        r.intent_actions.insert("android.intent.action.A" + std::to_string(pick(6)));
    }
    if (pick(2)) {
        r.hw_sw_features.insert("android.hardware.camera");
    }
    for (std::size_t i = 0, n = pick(4); i < n; ++i) {
        r.strings.insert(pick(3) ? "s" + std::to_string(pick(9)) : "http://h" + std::to_string(pick(4)) + ".example/x");
    }
    const std::string user = "Lcom/x/Main;->run";
    r.user_methods.insert(user);
    for (std::size_t i = 0, n = pick(6); i < n; ++i) {
        const std::string api = "Landroid/api/A" + std::to_string(pick(static_cast<std::size_t>(api_vocab))) + ";->call";
        r.api_calls[api] += 1 + static_cast<std::uint32_t>(pick(3));
        r.call_edges.insert({user, api, CalleeKind::api});
    }
    static const char* ops[] = {"const/4", "invoke-virtual", "move-result-object", "if-eqz", "goto",
                                "add-int", "return-void", "nop", "const-string", "if-lt"};
    OpcodeSequence seq;
    seq.method = user;
    for (std::size_t i = 0, n = 1 + pick(12); i < n; ++i) {
        seq.opcodes.emplace_back(ops[pick(10)]);
    }
    if (seq.opcodes.size() > 2 && pick(2)) {
        seq.leaders.push_back(static_cast<std::uint32_t>(1 + pick(seq.opcodes.size() - 1)));
    }
    r.opcode_sequences.push_back(seq);
    refresh_basic_blocks(r);
    if (pick(2)) {
        r.family_id = "fam" + std::to_string(pick(4));
    }
    if (pick(4) == 0) {
        r.obfuscation_tags.insert(ObfuscationTag::renaming);
    }
    return r;
}

inline std::vector<apkbench::AppRecord> random_records(std::size_t n, std::uint64_t seed, int api_vocab = 12)
{
    std::mt19937_64 rng(seed);
    std::vector<apkbench::AppRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(random_record(rng, "app" + std::to_string(i), api_vocab));
    }
    return out;
}

} // namespace testsupport
