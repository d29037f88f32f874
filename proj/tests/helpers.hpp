#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gridsafe/gridsafe.hpp"

namespace gridsafe::testing {

inline const std::vector<std::string> kEu{"CCIN2P3", "CNAF", "NIKHEF", "SURFSARA", "WEIZMANN"};

// LNGS buffer + tape, UC_DCACHE, five EU disks and RCC, fully linked.
inline void add_platform(World& w, Bytes buffer_cap = 50'000'000, Bytes bw = 1'000'000) {
    w.add_storage({"LNGS_BUFFER", Region::LNGS, StorageKind::BUFFER, buffer_cap});
    w.add_storage({"LNGS_TAPE", Region::LNGS, StorageKind::TAPE, 0});
    w.add_storage({"UC_DCACHE", Region::US, StorageKind::DISK, 10'000'000'000});
    w.add_storage({"RCC", Region::US, StorageKind::ANALYSIS, 10'000'000'000});
    for (const auto& e : kEu) w.add_storage({e, Region::EUROPE, StorageKind::DISK, 10'000'000'000});
    std::vector<std::string> all{"LNGS_BUFFER", "LNGS_TAPE", "UC_DCACHE", "RCC"};
    all.insert(all.end(), kEu.begin(), kEu.end());
    for (const auto& a : all)
        for (const auto& b : all)
            if (a != b) w.add_link({a, b, bw, 0, {}, 0});
}

inline Dataset raw(const std::string& run, bool science, Bytes size = 1'000'000, std::int64_t events = 1000) {
    RunRecord r{run, Source::DARK_MATTER, science, events, size, RunStatus::ON_BUFFER, {}, 0};
    return make_raw_dataset(r, 100);
}

// Standard rules: science -> UC_DCACHE, everything -> one random EU disk.
inline void declare_standard_rules(Catalog& c) {
    c.declare_rule({{}, Selector::science_only(), Destination::specific("UC_DCACHE"), 1, std::nullopt});
    c.declare_rule({{}, Selector::any(), Destination::random_in(Region::EUROPE), 1, std::nullopt});
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string scenario_path(const std::string& name) {
    return std::string(GRIDSAFE_SOURCE_DIR) + "/scenarios/" + name;
}

inline Scenario load_or_die(const std::string& path) {
    auto res = load_scenario(path);
    if (!res.ok()) {
        std::string all;
        for (const auto& e : res.errors) all += e + "\n";
        throw std::runtime_error(all);
    }
    return *res.scenario;
}

}  // namespace gridsafe::testing
