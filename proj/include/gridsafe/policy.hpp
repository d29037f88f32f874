#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "catalog.hpp"
#include "core.hpp"
#include "metadb.hpp"
#include "simgrid.hpp"
#include "tapestore.hpp"

namespace gridsafe {

enum class Category { SCIENCE, NON_SCIENCE };

inline constexpr std::string_view to_string(Category c) {
    return c == Category::SCIENCE ? "SCIENCE" : "NON_SCIENCE";
}

struct SafetySpec {
    std::optional<std::string> require_specific;
    Region region = Region::EUROPE;
    int region_copies = 1;
    bool require_verified_tape = true;
};

struct SafetyReport {
    std::string dataset_id;
    bool satisfied = false;
    std::vector<std::string> missing;
};

enum class PurgeReason { NO_REPLICA, NOT_BUFFER, TAPE_UNVERIFIED, NO_OFFSITE_COPY };

inline constexpr std::string_view to_string(PurgeReason r) {
    constexpr std::array<std::string_view, 4> names{"NO_REPLICA", "NOT_BUFFER", "TAPE_UNVERIFIED",
                                                    "NO_OFFSITE_COPY"};
    return names[static_cast<std::size_t>(r)];
}

struct Eligibility {
    bool eligible = false;
    std::vector<PurgeReason> reasons;
};

class PurgeRefused : public Error {
public:
    PurgeRefused(const std::string& what, std::vector<PurgeReason> reasons)
        : Error(Errc::PURGE_REFUSED, what + describe(reasons)), reasons_(std::move(reasons)) {}

    const std::vector<PurgeReason>& reasons() const { return reasons_; }

private:
    static std::string describe(const std::vector<PurgeReason>& reasons) {
        std::string s = " [";
        for (std::size_t i = 0; i < reasons.size(); ++i) {
            if (i) s += ',';
            s += to_string(reasons[i]);
        }
        return s + "]";
    }
    std::vector<PurgeReason> reasons_;
};

struct PolicyConfig {
    std::string buffer_rse;
    std::string science_rse = "UC_DCACHE";
    Region safety_region = Region::EUROPE;
};

/// Safety classification and the purge gate. Policy::purge is the only
/// code path that can delete a replica (it alone can mint a PurgeKey).
class Policy {
public:
    Policy(World& world, Catalog& catalog, TapeStore& tape, MetaDb& metadb, PolicyConfig cfg)
        : world_(world), catalog_(catalog), tape_(tape), metadb_(metadb), cfg_(std::move(cfg)) {}

    void set_on_purged(std::function<void(const std::string& dataset_id, const std::string& rse)> f) {
        on_purged_ = std::move(f);
    }

    const PolicyConfig& config() const { return cfg_; }

    static Category classify(const RunRecord& run) { return run.science ? Category::SCIENCE : Category::NON_SCIENCE; }
    static Category classify(const Dataset& ds) { return ds.science ? Category::SCIENCE : Category::NON_SCIENCE; }

    SafetySpec spec_for(Category c) const {
        SafetySpec s;
        s.region = cfg_.safety_region;
        if (c == Category::SCIENCE) s.require_specific = cfg_.science_rse;
        return s;
    }

    SafetyReport check_safety(const std::string& dataset_id) const {
        const auto& ds = catalog_.dataset(dataset_id);
        const auto spec = spec_for(classify(ds));
        SafetyReport rep{dataset_id, false, {}};
        if (spec.require_specific && !catalog_.is_available(dataset_id, *spec.require_specific))
            rep.missing.push_back(*spec.require_specific + " copy");
        int in_region = 0;
        for (const auto& rse : catalog_.available_rses(dataset_id)) {
            const auto& se = world_.storage(rse);
            if (se.kind == StorageKind::DISK && se.region == spec.region) ++in_region;
        }
        if (in_region < spec.region_copies) rep.missing.push_back(std::string(to_string(spec.region)) + " copy");
        if (spec.require_verified_tape && !tape_.is_verified(dataset_id)) rep.missing.push_back("verified tape");
        rep.satisfied = rep.missing.empty();
        return rep;
    }

    /// Gate: a freshly re-verified tape copy and an AVAILABLE copy on some
    /// disk RSE that is neither the buffer nor the replica being removed.
    Eligibility purge_eligible(const std::string& dataset_id, const std::string& rse) {
        const auto* rep = catalog_.replica(dataset_id, rse);
        if (!rep || rep->state == ReplicaState::PURGED)
            throw Error(Errc::NO_REPLICA_AT_RSE, dataset_id + "@" + rse);
        Eligibility e;
        const bool tape_ok = tape_.record(dataset_id) != nullptr && tape_.verify(dataset_id);
        if (!tape_ok) e.reasons.push_back(PurgeReason::TAPE_UNVERIFIED);
        if (!has_offsite_copy(dataset_id, rse)) e.reasons.push_back(PurgeReason::NO_OFFSITE_COPY);
        e.eligible = e.reasons.empty();
        return e;
    }

    /// Gate check and deletion happen in one call, inside one event.
    Replica purge(const std::string& dataset_id, const std::string& rse, bool allow_any_rse = false) {
        const auto* rep = catalog_.replica(dataset_id, rse);
        if (!rep || rep->state == ReplicaState::PURGED) refuse(dataset_id, rse, {PurgeReason::NO_REPLICA});
        if (rse != cfg_.buffer_rse && !allow_any_rse) refuse(dataset_id, rse, {PurgeReason::NOT_BUFFER});
        auto e = purge_eligible(dataset_id, rse);
        if (!e.eligible) refuse(dataset_id, rse, e.reasons);
        return remove(dataset_id, rse);
    }

    /// Fault injection for the invariant monitor: deletes without the gate.
    Replica force_purge_unchecked(const std::string& dataset_id, const std::string& rse) {
        return remove(dataset_id, rse, true);
    }

private:
    bool has_offsite_copy(const std::string& dataset_id, const std::string& excluded) const {
        for (const auto& other : catalog_.available_rses(dataset_id)) {
            if (other == cfg_.buffer_rse || other == excluded) continue;
            if (world_.storage(other).kind == StorageKind::DISK) return true;
        }
        return false;
    }

    [[noreturn]] void refuse(const std::string& dataset_id, const std::string& rse,
                             std::vector<PurgeReason> reasons) {
        std::string list;
        for (auto r : reasons) list += (list.empty() ? "" : ",") + std::string(to_string(r));
        world_.emit(EventKind::PURGE_REFUSED, dataset_id, {{"rse", rse}, {"reasons", list}});
        throw PurgeRefused(dataset_id + "@" + rse, std::move(reasons));
    }

    Replica remove(const std::string& dataset_id, const std::string& rse, bool forced = false) {
        const auto& ds = catalog_.dataset(dataset_id);
        catalog_.mark_purged(PurgeKey{}, dataset_id, rse);
        Detail det{{"rse", rse}, {"size", std::to_string(ds.size)}};
        if (forced) det["forced"] = "1";
        world_.emit(EventKind::PURGE, dataset_id, std::move(det));
        if (metadb_.has_run(ds.run_id)) metadb_.remove_location(ds.run_id, rse);
        if (on_purged_) on_purged_(dataset_id, rse);
        return *catalog_.replica(dataset_id, rse);
    }

    World& world_;
    Catalog& catalog_;
    TapeStore& tape_;
    MetaDb& metadb_;
    PolicyConfig cfg_;
    std::function<void(const std::string&, const std::string&)> on_purged_;
};

}  // namespace gridsafe
