#pragma once

#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core.hpp"
#include "simgrid.hpp"

namespace gridsafe {

enum class RunStatus { TAKING, ON_BUFFER, DISTRIBUTING, SAFE, PROCESSED, PURGED_FROM_LNGS };

inline constexpr std::string_view to_string(RunStatus s) {
    constexpr std::array<std::string_view, 6> names{"TAKING", "ON_BUFFER", "DISTRIBUTING",
                                                    "SAFE",   "PROCESSED", "PURGED_FROM_LNGS"};
    return names[static_cast<std::size_t>(s)];
}

inline const std::string kTapeLocation = "TAPE";
inline const std::string kRccLocation = "RCC";

struct RunRecord {
    std::string run_id;
    Source source = Source::DARK_MATTER;
    bool science = false;
    std::int64_t event_count = 0;
    Bytes size = 0;
    RunStatus status = RunStatus::TAKING;
    std::set<std::string> locations;
    Seconds started_at = 0;

    friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

inline nlohmann::json to_json(const RunRecord& r) {
    return {{"run_id", r.run_id},
            {"source", std::string(to_string(r.source))},
            {"science", r.science},
            {"event_count", r.event_count},
            {"size", r.size},
            {"status", std::string(to_string(r.status))},
            {"locations", r.locations},
            {"started_at", r.started_at}};
}

struct MirrorState {
    std::string mirror_id;
    Seconds lag = 0;
    std::uint64_t last_applied = 0;
};

/// Run meta-database: a single-writer primary plus read-only mirrors that
/// apply each committed mutation a fixed lag after the primary.
class MetaDb {
public:
    static constexpr const char* kPrimary = "primary";

    explicit MetaDb(World& world) : world_(world) {}

    void add_mirror(const std::string& id, Seconds lag) { mirrors_[id] = Mirror{MirrorState{id, lag, 0}, {}}; }

    std::uint64_t insert(RunRecord rec) {
        if (primary_.count(rec.run_id)) throw Error(Errc::SEMANTIC_ERROR, "run exists: " + rec.run_id);
        Mutation m{Mutation::Op::INSERT, rec.run_id, {}, rec.status, rec};
        return commit(std::move(m));
    }

    std::uint64_t upsert_location(const std::string& run_id, const std::string& location) {
        const auto& rec = record(run_id);
        check_location(rec, location);
        if (rec.locations.count(location)) return seq_;
        return commit(Mutation{Mutation::Op::ADD_LOCATION, run_id, location, rec.status, {}});
    }

    std::uint64_t remove_location(const std::string& run_id, const std::string& location) {
        const auto& rec = record(run_id);
        if (!rec.locations.count(location)) return seq_;
        return commit(Mutation{Mutation::Op::REMOVE_LOCATION, run_id, location, rec.status, {}});
    }

    /// Statuses only move forward.
    const RunRecord& set_status(const std::string& run_id, RunStatus status) {
        const auto& rec = record(run_id);
        if (status <= rec.status)
            throw Error(Errc::ILLEGAL_TRANSITION, run_id + ": " + std::string(to_string(rec.status)) + " -> " +
                                                      std::string(to_string(status)));
        commit(Mutation{Mutation::Op::STATUS, run_id, {}, status, {}});
        world_.emit(EventKind::STATUS, run_id, {{"status", std::string(to_string(status))}});
        return record(run_id);
    }

    const RunRecord& record(const std::string& run_id) const {
        auto it = primary_.find(run_id);
        if (it == primary_.end()) throw Error(Errc::UNKNOWN_RUN, run_id);
        return it->second;
    }
    bool has_run(const std::string& run_id) const { return primary_.count(run_id) != 0; }

    /// Records matching `pred` as seen by `instance` ("primary" or a mirror id).
    std::vector<RunRecord> query(const std::function<bool(const RunRecord&)>& pred,
                                 const std::string& instance = kPrimary) const {
        std::vector<RunRecord> out;
        for (const auto& [id, rec] : runs_of(instance))
            if (pred(rec)) out.push_back(rec);
        return out;
    }

    std::uint64_t sequence() const { return seq_; }
    MirrorState mirror_state(const std::string& id) const { return mirror(id).state; }
    std::vector<std::string> mirror_ids() const {
        std::vector<std::string> out;
        for (const auto& [id, m] : mirrors_) out.push_back(id);
        return out;
    }
    bool mirror_matches_primary(const std::string& id) const { return mirror(id).runs == primary_; }

    void dump_jsonl(std::ostream& os, const std::string& instance = kPrimary) const {
        for (const auto& [id, rec] : runs_of(instance)) os << to_json(rec).dump() << '\n';
    }

private:
    struct Mutation {
        enum class Op { INSERT, ADD_LOCATION, REMOVE_LOCATION, STATUS };
        Op op;
        std::string run_id;
        std::string location;
        RunStatus status;
        RunRecord record;
    };
    struct Mirror {
        MirrorState state;
        std::map<std::string, RunRecord> runs;
    };

    static void apply(std::map<std::string, RunRecord>& runs, const Mutation& m) {
        switch (m.op) {
            case Mutation::Op::INSERT: runs[m.run_id] = m.record; break;
            case Mutation::Op::ADD_LOCATION: runs.at(m.run_id).locations.insert(m.location); break;
            case Mutation::Op::REMOVE_LOCATION: runs.at(m.run_id).locations.erase(m.location); break;
            case Mutation::Op::STATUS: runs.at(m.run_id).status = m.status; break;
        }
    }

    std::uint64_t commit(Mutation m) {
        const auto seq = ++seq_;
        apply(primary_, m);
        for (auto& [id, mir] : mirrors_) {
            world_.schedule_in(mir.state.lag, [this, id = id, m, seq] {
                auto& target = mirrors_.at(id);
                apply(target.runs, m);
                target.state.last_applied = seq;
            });
        }
        return seq;
    }

    // Locations are RSE ids of catalogued disk/buffer storage, the tape
    // token, or the RCC token. RCC only appears once the run is processed.
    void check_location(const RunRecord& rec, const std::string& loc) const {
        if (loc == kTapeLocation) return;
        if (loc == kRccLocation) {
            if (rec.status < RunStatus::PROCESSED)
                throw Error(Errc::ILLEGAL_LOCATION, rec.run_id + ": RCC before PROCESSED");
            return;
        }
        if (world_.has_storage(loc)) {
            auto kind = world_.storage(loc).kind;
            if (kind == StorageKind::DISK || kind == StorageKind::BUFFER) return;
        }
        throw Error(Errc::ILLEGAL_LOCATION, rec.run_id + ": " + loc);
    }

    const Mirror& mirror(const std::string& id) const {
        auto it = mirrors_.find(id);
        if (it == mirrors_.end()) throw Error(Errc::SEMANTIC_ERROR, "unknown metadb instance " + id);
        return it->second;
    }
    const std::map<std::string, RunRecord>& runs_of(const std::string& instance) const {
        return instance == kPrimary ? primary_ : mirror(instance).runs;
    }

    World& world_;
    std::uint64_t seq_ = 0;
    std::map<std::string, RunRecord> primary_;
    std::map<std::string, Mirror> mirrors_;
};

}  // namespace gridsafe
