#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "catalog.hpp"
#include "core.hpp"
#include "ingest.hpp"
#include "simgrid.hpp"

namespace gridsafe {

struct RuleSpec {
    Selector selector;
    Destination destination;
    int copies = 1;
    std::optional<Seconds> lifetime;
};

struct PolicySpec {
    std::int64_t chunk_size = 100;
    Seconds lngs_lifetime = 4 * kDay;
    int max_retries = 3;
    double reduction_ratio = 0.1;
    double minitree_ratio = 0.001;
    std::map<std::string, Seconds> mirror_lags{{"CHICAGO", 60}, {"STOCKHOLM", 60}};
    Seconds purge_retry_interval = 6 * kHour;
    std::string science_rse = "UC_DCACHE";
    double resume_fraction = 0.9;
    std::vector<std::string> minitree_categories{"basic", "interactions", "positions", "corrections"};
    std::optional<std::vector<RuleSpec>> rules;  // absent: the standard safety rules
};

struct DataLoss {
    std::string run_id;
    std::string rse;
    Seconds at = 0;
};

struct TapeRot {
    std::string run_id;
    Seconds at = 0;
};

struct FaultSpec {
    double transfer_corrupt_prob = 0.0;
    double tape_corrupt_prob = 0.0;
    std::vector<Outage> total_outages;  // applied to every link leaving the buffer
    std::vector<DataLoss> data_losses;
    std::vector<TapeRot> tape_rot;
    std::vector<DataLoss> bypass_purges;  // deletions that skip the purge gate
};

struct Scenario {
    std::uint64_t seed = 0;
    Seconds duration = 0;
    std::string epoch = "2016-11-01";
    Bytes report_unit = 1'000'000;
    std::vector<StorageElement> rses;
    std::vector<NetworkLink> links;
    std::vector<ComputeSite> sites;
    RunPlan run_plan;
    PolicySpec policy;
    FaultSpec faults;

    const StorageElement* rse(const std::string& id) const {
        for (const auto& r : rses)
            if (r.id == id) return &r;
        return nullptr;
    }
    std::optional<std::string> find(StorageKind kind) const {
        for (const auto& r : rses)
            if (r.kind == kind) return r.id;
        return std::nullopt;
    }
};

struct ValidationResult {
    std::optional<Scenario> scenario;
    std::vector<std::string> errors;  // each prefixed PARSE_ERROR or SEMANTIC_ERROR

    bool ok() const { return scenario.has_value(); }
};

namespace detail {

class ScenarioReader {
public:
    std::vector<std::string> errors;

    void error(const std::string& path, const std::string& msg) {
        errors.push_back("SEMANTIC_ERROR: " + path + ": " + msg);
    }

    template <typename T>
    std::optional<T> get(const nlohmann::json& obj, const std::string& key, const std::string& path) {
        if (!obj.is_object() || !obj.contains(key)) return std::nullopt;
        const auto& v = obj.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw std::runtime_error("expected boolean");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw std::runtime_error("expected integer");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw std::runtime_error("expected number");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw std::runtime_error("expected string");
            }
            return v.get<T>();
        } catch (const std::exception& e) {
            error(path + "." + key, e.what());
            return std::nullopt;
        }
    }

    template <typename T>
    T get_or(const nlohmann::json& obj, const std::string& key, const std::string& path, T fallback) {
        auto v = get<T>(obj, key, path);
        return v ? *v : fallback;
    }

    template <typename T>
    T require(const nlohmann::json& obj, const std::string& key, const std::string& path, T fallback = {}) {
        if (!obj.is_object() || !obj.contains(key)) {
            error(path + "." + key, "missing required field");
            return fallback;
        }
        auto v = get<T>(obj, key, path);
        return v ? *v : fallback;
    }

    std::vector<Outage> outages(const nlohmann::json& arr, const std::string& path) {
        std::vector<Outage> out;
        if (!arr.is_array()) {
            error(path, "expected array of [start, end] pairs");
            return out;
        }
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto& w = arr[i];
            const auto p = path + "[" + std::to_string(i) + "]";
            if (!w.is_array() || w.size() != 2 || !w[0].is_number_integer() ||
                !(w[1].is_number_integer() || w[1].is_null())) {
                error(p, "expected [start, end|null]");
                continue;
            }
            Outage o{w[0].get<Seconds>(), w[1].is_null() ? kForever : w[1].get<Seconds>()};
            if (o.end <= o.start) error(p, "empty window");
            out.push_back(o);
        }
        for (std::size_t i = 1; i < out.size(); ++i)
            if (out[i].start < out[i - 1].end) error(path, "outage windows must be sorted and non-overlapping");
        return out;
    }
};

inline std::vector<Outage> merge_outages(std::vector<Outage> a) {
    std::sort(a.begin(), a.end(), [](const Outage& x, const Outage& y) { return x.start < y.start; });
    std::vector<Outage> out;
    for (const auto& o : a) {
        if (!out.empty() && o.start <= out.back().end)
            out.back().end = std::max(out.back().end, o.end);
        else
            out.push_back(o);
    }
    return out;
}

}  // namespace detail

/// Parses and validates a scenario document (JSON). Every violation is
/// reported, not just the first.
inline ValidationResult parse_scenario(const std::string& text) {
    ValidationResult res;
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
        res.errors.push_back(std::string("PARSE_ERROR: ") + e.what());
        return res;
    }
    if (!doc.is_object()) {
        res.errors.push_back("PARSE_ERROR: top level must be an object");
        return res;
    }

    detail::ScenarioReader rd;
    Scenario sc;
    sc.seed = rd.get_or<std::uint64_t>(doc, "seed", "", 0);
    sc.duration = rd.require<Seconds>(doc, "duration", "");
    sc.epoch = rd.get_or<std::string>(doc, "epoch", "", sc.epoch);
    sc.report_unit = rd.get_or<Bytes>(doc, "report_unit", "", sc.report_unit);
    if (sc.duration < 0) rd.error(".duration", "must be non-negative");
    {
        Bytes u = sc.report_unit;
        while (u > 1 && u % 10 == 0) u /= 10;
        if (u != 1) rd.error(".report_unit", "must be a power of ten");
    }

    std::set<std::string> ids;
    if (!doc.contains("rses") || !doc["rses"].is_array()) rd.error(".rses", "missing required array");
    else
        for (std::size_t i = 0; i < doc["rses"].size(); ++i) {
            const auto& j = doc["rses"][i];
            const auto p = ".rses[" + std::to_string(i) + "]";
            StorageElement se;
            se.id = rd.require<std::string>(j, "id", p);
            const auto region = rd.require<std::string>(j, "region", p);
            const auto kind = rd.require<std::string>(j, "kind", p);
            if (auto r = parse_region(region)) se.region = *r;
            else rd.error(p + ".region", "unknown region '" + region + "'");
            if (auto k = parse_kind(kind)) se.kind = *k;
            else rd.error(p + ".kind", "unknown kind '" + kind + "'");
            se.capacity = rd.get_or<Bytes>(j, "capacity", p, 0);
            if (se.kind != StorageKind::TAPE && se.capacity <= 0) rd.error(p + ".capacity", "must be positive");
            se.available = rd.get_or<bool>(j, "available", p, true);
            if (!ids.insert(se.id).second) rd.error(p + ".id", "duplicate RSE id '" + se.id + "'");
            sc.rses.push_back(se);
        }

    auto count_kind = [&](StorageKind k, std::optional<Region> r = {}) {
        return std::count_if(sc.rses.begin(), sc.rses.end(),
                             [&](const StorageElement& s) { return s.kind == k && (!r || s.region == *r); });
    };
    if (count_kind(StorageKind::BUFFER) != 1 || count_kind(StorageKind::BUFFER, Region::LNGS) != 1)
        rd.error(".rses", "exactly one BUFFER element in region LNGS is required");
    if (count_kind(StorageKind::TAPE) != 1) rd.error(".rses", "exactly one TAPE element is required");
    if (count_kind(StorageKind::DISK, Region::EUROPE) < 1) rd.error(".rses", "at least one EUROPE disk RSE is required");
    if (count_kind(StorageKind::ANALYSIS) != 1) rd.error(".rses", "exactly one ANALYSIS element (RCC) is required");

    if (doc.contains("links")) {
        if (!doc["links"].is_array()) rd.error(".links", "expected array");
        else
            for (std::size_t i = 0; i < doc["links"].size(); ++i) {
                const auto& j = doc["links"][i];
                const auto p = ".links[" + std::to_string(i) + "]";
                NetworkLink l;
                l.src = rd.require<std::string>(j, "src", p);
                l.dst = rd.require<std::string>(j, "dst", p);
                l.bandwidth = rd.require<Bytes>(j, "bandwidth", p, 1);
                l.latency = rd.get_or<Seconds>(j, "latency", p, 0);
                if (j.contains("outages")) l.outages = rd.outages(j["outages"], p + ".outages");
                if (!ids.count(l.src)) rd.error(p + ".src", "undeclared RSE '" + l.src + "'");
                if (!ids.count(l.dst)) rd.error(p + ".dst", "undeclared RSE '" + l.dst + "'");
                if (l.bandwidth <= 0) rd.error(p + ".bandwidth", "must be positive");
                if (l.latency < 0) rd.error(p + ".latency", "must be non-negative");
                sc.links.push_back(std::move(l));
            }
    }
    if (auto buf = sc.find(StorageKind::BUFFER), tape = sc.find(StorageKind::TAPE); buf && tape) {
        bool found = false;
        for (const auto& l : sc.links) found |= l.src == *buf && l.dst == *tape;
        if (!found) rd.error(".links", "a link from the buffer to the tape element is required");
    }

    if (doc.contains("sites")) {
        if (!doc["sites"].is_array()) rd.error(".sites", "expected array");
        else
            for (std::size_t i = 0; i < doc["sites"].size(); ++i) {
                const auto& j = doc["sites"][i];
                const auto p = ".sites[" + std::to_string(i) + "]";
                ComputeSite s;
                s.id = rd.require<std::string>(j, "id", p);
                const auto pool = rd.require<std::string>(j, "pool", p);
                if (auto pl = parse_pool(pool)) s.pool = *pl;
                else rd.error(p + ".pool", "unknown pool '" + pool + "'");
                s.attached_rse = rd.require<std::string>(j, "attached_rse", p);
                s.slots = rd.get_or<int>(j, "slots", p, 1);
                s.job_failure_prob = rd.get_or<double>(j, "job_failure_prob", p, 0.0);
                s.throughput = rd.get_or<Bytes>(j, "throughput", p, 1'000'000);
                if (!ids.count(s.attached_rse)) rd.error(p + ".attached_rse", "undeclared RSE '" + s.attached_rse + "'");
                if (s.slots < 1) rd.error(p + ".slots", "must be >= 1");
                if (s.job_failure_prob < 0 || s.job_failure_prob > 1) rd.error(p + ".job_failure_prob", "must be in [0,1]");
                if (s.throughput <= 0) rd.error(p + ".throughput", "must be positive");
                sc.sites.push_back(std::move(s));
            }
    }

    bool any_science = false;
    if (!doc.contains("run_plan") || !doc["run_plan"].is_object()) {
        rd.error(".run_plan", "missing required object");
    } else {
        const auto& rp = doc["run_plan"];
        sc.run_plan.start = rd.get_or<Seconds>(rp, "start", ".run_plan", 0);
        sc.run_plan.duration = rd.get_or<Seconds>(rp, "duration", ".run_plan", sc.duration);
        const auto entries = rp.contains("entries") ? rp["entries"] : nlohmann::json::array();
        if (!entries.is_array()) rd.error(".run_plan.entries", "expected array");
        else
            for (std::size_t i = 0; i < entries.size(); ++i) {
                const auto& j = entries[i];
                const auto p = ".run_plan.entries[" + std::to_string(i) + "]";
                PlanEntry e;
                const auto src = rd.require<std::string>(j, "source", p);
                if (auto s = parse_source(src)) e.source = *s;
                else rd.error(p + ".source", "unknown source category '" + src + "'");
                e.science = rd.require<bool>(j, "science", p);
                e.runs_per_day = rd.get<double>(j, "runs_per_day", p);
                e.count = rd.get<std::int64_t>(j, "count", p);
                e.offset = rd.get_or<Seconds>(j, "offset", p, 0);
                e.times = rd.get_or<std::vector<Seconds>>(j, "times", p, {});
                e.events_per_run = rd.require<std::int64_t>(j, "events_per_run", p);
                e.bytes_per_event = rd.require<Bytes>(j, "bytes_per_event", p);
                if (!e.runs_per_day && e.times.empty()) rd.error(p, "needs runs_per_day or times");
                if (e.runs_per_day && *e.runs_per_day <= 0) rd.error(p + ".runs_per_day", "must be positive");
                if (e.count && *e.count <= 0) rd.error(p + ".count", "must be positive");
                if (e.events_per_run <= 0) rd.error(p + ".events_per_run", "must be positive");
                if (e.bytes_per_event <= 0) rd.error(p + ".bytes_per_event", "must be positive");
                any_science |= e.science;
                sc.run_plan.entries.push_back(std::move(e));
            }
    }

    if (doc.contains("policy")) {
        const auto& j = doc["policy"];
        auto& pol = sc.policy;
        const std::string p = ".policy";
        pol.chunk_size = rd.get_or<std::int64_t>(j, "chunk_size", p, pol.chunk_size);
        pol.lngs_lifetime = rd.get_or<Seconds>(j, "lngs_lifetime", p, pol.lngs_lifetime);
        pol.max_retries = rd.get_or<int>(j, "max_retries", p, pol.max_retries);
        pol.reduction_ratio = rd.get_or<double>(j, "reduction_ratio", p, pol.reduction_ratio);
        pol.minitree_ratio = rd.get_or<double>(j, "minitree_ratio", p, pol.minitree_ratio);
        pol.mirror_lags = rd.get_or<std::map<std::string, Seconds>>(j, "mirror_lags", p, pol.mirror_lags);
        pol.purge_retry_interval = rd.get_or<Seconds>(j, "purge_retry_interval", p, pol.purge_retry_interval);
        pol.science_rse = rd.get_or<std::string>(j, "science_rse", p, pol.science_rse);
        pol.resume_fraction = rd.get_or<double>(j, "resume_fraction", p, pol.resume_fraction);
        pol.minitree_categories = rd.get_or<std::vector<std::string>>(j, "minitree_categories", p, pol.minitree_categories);
        if (pol.chunk_size < 1) rd.error(p + ".chunk_size", "must be positive");
        if (pol.lngs_lifetime < 0) rd.error(p + ".lngs_lifetime", "must be non-negative");
        if (pol.max_retries < 0) rd.error(p + ".max_retries", "must be non-negative");
        if (pol.reduction_ratio <= 0 || pol.reduction_ratio > 1) rd.error(p + ".reduction_ratio", "must be in (0,1]");
        if (pol.minitree_ratio <= 0 || pol.minitree_ratio > 1) rd.error(p + ".minitree_ratio", "must be in (0,1]");
        if (pol.purge_retry_interval < 1) rd.error(p + ".purge_retry_interval", "must be positive");
        if (pol.resume_fraction <= 0 || pol.resume_fraction > 1) rd.error(p + ".resume_fraction", "must be in (0,1]");
        for (const auto& [id, lag] : pol.mirror_lags)
            if (lag < 0) rd.error(p + ".mirror_lags." + id, "must be non-negative");
        if (j.contains("rules")) {
            std::vector<RuleSpec> rules;
            if (!j["rules"].is_array()) rd.error(p + ".rules", "expected array");
            else
                for (std::size_t i = 0; i < j["rules"].size(); ++i) {
                    const auto& r = j["rules"][i];
                    const auto rp = p + ".rules[" + std::to_string(i) + "]";
                    RuleSpec spec;
                    if (r.contains("selector")) {
                        spec.selector.science = rd.get<bool>(r["selector"], "science", rp + ".selector");
                        for (const auto& s : rd.get_or<std::vector<std::string>>(r["selector"], "sources", rp + ".selector", {})) {
                            if (auto src = parse_source(s)) spec.selector.sources.push_back(*src);
                            else rd.error(rp + ".selector.sources", "unknown source '" + s + "'");
                        }
                    }
                    const auto dst = r.contains("destination") ? r["destination"] : nlohmann::json::object();
                    if (auto rse = rd.get<std::string>(dst, "rse", rp + ".destination")) {
                        spec.destination = Destination::specific(*rse);
                        const auto* se = sc.rse(*rse);
                        if (!se || se->kind != StorageKind::DISK) rd.error(rp + ".destination.rse", "must name a declared DISK RSE");
                    } else if (auto reg = rd.get<std::string>(dst, "region", rp + ".destination")) {
                        if (auto rg = parse_region(*reg)) spec.destination = Destination::random_in(*rg);
                        else rd.error(rp + ".destination.region", "unknown region '" + *reg + "'");
                    } else {
                        rd.error(rp + ".destination", "needs rse or region");
                    }
                    spec.copies = rd.get_or<int>(r, "copies", rp, 1);
                    if (spec.copies < 1) rd.error(rp + ".copies", "must be >= 1");
                    spec.lifetime = rd.get<Seconds>(r, "lifetime", rp);
                    rules.push_back(std::move(spec));
                }
            pol.rules = std::move(rules);
        }
    }
    if (any_science) {
        const auto* se = sc.rse(sc.policy.science_rse);
        if (!se || se->kind != StorageKind::DISK)
            rd.error(".policy.science_rse", "science runs are planned but '" + sc.policy.science_rse +
                                                "' is not a declared DISK RSE");
    }

    if (doc.contains("faults")) {
        const auto& j = doc["faults"];
        auto& f = sc.faults;
        const std::string p = ".faults";
        f.transfer_corrupt_prob = rd.get_or<double>(j, "transfer_corrupt_prob", p, 0.0);
        f.tape_corrupt_prob = rd.get_or<double>(j, "tape_corrupt_prob", p, 0.0);
        if (f.transfer_corrupt_prob < 0 || f.transfer_corrupt_prob > 1) rd.error(p + ".transfer_corrupt_prob", "must be in [0,1]");
        if (f.tape_corrupt_prob < 0 || f.tape_corrupt_prob > 1) rd.error(p + ".tape_corrupt_prob", "must be in [0,1]");
        if (j.contains("total_outages")) f.total_outages = rd.outages(j["total_outages"], p + ".total_outages");
        auto losses = [&](const char* key, std::vector<DataLoss>& out) {
            if (!j.contains(key)) return;
            for (std::size_t i = 0; i < j[key].size(); ++i) {
                const auto lp = p + "." + key + "[" + std::to_string(i) + "]";
                DataLoss d{rd.require<std::string>(j[key][i], "run", lp), rd.require<std::string>(j[key][i], "rse", lp),
                           rd.require<Seconds>(j[key][i], "at", lp)};
                if (!ids.count(d.rse)) rd.error(lp + ".rse", "undeclared RSE '" + d.rse + "'");
                out.push_back(std::move(d));
            }
        };
        losses("data_losses", f.data_losses);
        losses("bypass_purges", f.bypass_purges);
        if (j.contains("tape_rot"))
            for (std::size_t i = 0; i < j["tape_rot"].size(); ++i) {
                const auto lp = p + ".tape_rot[" + std::to_string(i) + "]";
                f.tape_rot.push_back({rd.require<std::string>(j["tape_rot"][i], "run", lp),
                                      rd.require<Seconds>(j["tape_rot"][i], "at", lp)});
            }
    }

    res.errors = std::move(rd.errors);
    if (res.errors.empty()) res.scenario = std::move(sc);
    return res;
}

inline ValidationResult load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) return ValidationResult{std::nullopt, {"PARSE_ERROR: cannot open " + path}};
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

}  // namespace gridsafe
