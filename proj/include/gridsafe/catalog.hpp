#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "checksum.hpp"
#include "core.hpp"
#include "simgrid.hpp"

namespace gridsafe {

enum class Stage { RAW, PROCESSED, MINITREE };
enum class ReplicaState { COPYING, AVAILABLE, CORRUPT, PURGED };

inline constexpr std::string_view to_string(ReplicaState s) {
    constexpr std::array<std::string_view, 4> names{"COPYING", "AVAILABLE", "CORRUPT", "PURGED"};
    return names[static_cast<std::size_t>(s)];
}

struct Dataset {
    std::string id;
    std::string run_id;
    Source source = Source::DARK_MATTER;
    bool science = false;
    Stage stage = Stage::RAW;
    Bytes size = 0;
    std::vector<std::string> chunk_ids;
    std::vector<Bytes> chunk_sizes;
    Checksum checksum = 0;
};

struct Replica {
    std::string dataset_id;
    std::string rse;
    ReplicaState state = ReplicaState::COPYING;
    Checksum checksum = 0;
    Seconds created_at = 0;
    std::optional<Seconds> lifetime;
    std::uint64_t transfer_id = 0;  // identifies the copy that created it

    std::optional<Seconds> expires_at() const {
        if (!lifetime) return std::nullopt;
        return created_at + *lifetime;
    }
    /// Holding replicas count toward rule copy targets and occupy space.
    bool holds() const { return state == ReplicaState::AVAILABLE || state == ReplicaState::COPYING; }
};

/// Dataset predicate for transfer rules. Empty fields match everything.
struct Selector {
    std::optional<bool> science;
    std::vector<Source> sources;

    bool matches(const Dataset& d) const {
        if (science && d.science != *science) return false;
        if (!sources.empty() && std::find(sources.begin(), sources.end(), d.source) == sources.end())
            return false;
        return true;
    }
    static Selector any() { return {}; }
    static Selector science_only() { return Selector{true, {}}; }
};

struct Destination {
    enum class Kind { SPECIFIC, RANDOM_IN_REGION };
    Kind kind = Kind::SPECIFIC;
    std::string rse;
    Region region = Region::EUROPE;

    static Destination specific(std::string rse) { return {Kind::SPECIFIC, std::move(rse), Region::EUROPE}; }
    static Destination random_in(Region r) { return {Kind::RANDOM_IN_REGION, {}, r}; }
};

struct TransferRule {
    std::string id;  // assigned by declare_rule
    Selector selector;
    Destination destination;
    int copies = 1;
    std::optional<Seconds> lifetime;
};

struct TransferRequest {
    std::string dataset_id;
    std::string rule_id;
    std::string src;
    std::string dst;
    friend bool operator==(const TransferRequest&, const TransferRequest&) = default;
};

struct ExpiryCandidate {
    std::string dataset_id;
    std::string rse;
    Seconds expires_at = 0;
};

class Policy;

/// Grants the purge gate sole access to replica deletion.
class PurgeKey {
    friend class Policy;
    PurgeKey() = default;
};

/// Raw-data replica catalog with declarative transfer rules.
///
/// The catalog does bookkeeping only: it decides which transfers a rule
/// still needs and records replica state changes. Moving bytes is the
/// caller's job (see Facility). Every mutation emits a log entry.
class Catalog {
public:
    struct Hooks {
        std::function<void(const Dataset&, const Replica&)> on_available;
        std::function<void(const Dataset&, const std::string& rse)> on_removed;
    };

    explicit Catalog(World& world) : world_(world) {}

    void set_hooks(Hooks hooks) { hooks_ = std::move(hooks); }

    const Replica& register_dataset(Dataset ds, const std::string& rse, std::optional<Seconds> lifetime = {}) {
        if (datasets_.count(ds.id)) throw Error(Errc::DUPLICATE_DATASET, ds.id);
        if (ds.stage != Stage::RAW) throw Error(Errc::SEMANTIC_ERROR, ds.id + ": only raw data is catalogued");
        Bytes chunk_total = 0;
        for (auto s : ds.chunk_sizes) chunk_total += s;
        if (!ds.chunk_sizes.empty() && chunk_total != ds.size)
            throw Error(Errc::SEMANTIC_ERROR, ds.id + ": size differs from chunk total");
        world_.reserve(rse, ds.size);

        const auto id = ds.id;
        auto& d = datasets_.emplace(id, std::move(ds)).first->second;
        auto& r = replicas_[id][rse];
        r = Replica{id, rse, ReplicaState::AVAILABLE, d.checksum, world_.now(), lifetime};
        Detail det{{"rse", rse}, {"size", std::to_string(d.size)}, {"state", "AVAILABLE"}};
        if (lifetime) det["lifetime"] = std::to_string(*lifetime);
        world_.emit(EventKind::REGISTER, id, std::move(det));
        if (hooks_.on_available) hooks_.on_available(d, r);
        return r;
    }

    std::string declare_rule(TransferRule rule) {
        if (rule.copies < 1) throw Error(Errc::INVALID_RULE, "copies must be >= 1");
        if (rule.destination.kind == Destination::Kind::SPECIFIC) {
            const auto& rse = rule.destination.rse;
            if (!world_.has_storage(rse) || world_.storage(rse).kind != StorageKind::DISK)
                throw Error(Errc::INVALID_RULE, "destination '" + rse + "' is not a disk RSE");
            if (rule.copies != 1) throw Error(Errc::INVALID_RULE, "a specific destination holds one copy");
        } else {
            if (static_cast<int>(disk_rses_in(rule.destination.region).size()) < rule.copies)
                throw Error(Errc::INVALID_RULE, "region has fewer disk RSEs than requested copies");
        }
        rule.id = "rule-" + std::to_string(rules_.size() + 1);
        rules_.push_back(rule);
        return rule.id;
    }

    const std::vector<TransferRule>& rules() const { return rules_; }

    /// Transfers still needed to satisfy every matching rule.
    ///
    /// Random destinations are drawn from the "rse-select" stream once and
    /// remembered until the transfer starts, so repeated calls without an
    /// intervening state change return the same list.
    std::vector<TransferRequest> evaluate_rules(const std::string& dataset_id) {
        const auto& ds = dataset(dataset_id);
        if (available_rses(dataset_id).empty()) throw Error(Errc::NO_SOURCE_REPLICA, dataset_id);

        std::vector<TransferRequest> out;
        std::set<std::string> claimed;
        for (const auto& rule : rules_) {
            if (!rule.selector.matches(ds)) continue;
            if (rule.destination.kind == Destination::Kind::SPECIFIC) {
                const auto& dst = rule.destination.rse;
                if (holds(dataset_id, dst) || claimed.count(dst) || !world_.storage(dst).available) continue;
                out.push_back({dataset_id, rule.id, choose_source(dataset_id, dst), dst});
                claimed.insert(dst);
                continue;
            }
            const auto region_rses = disk_rses_in(rule.destination.region);
            int present = 0;
            for (const auto& rse : region_rses)
                if (holds(dataset_id, rse) || claimed.count(rse)) ++present;
            const int need = rule.copies - present;
            auto& memo = choices_[{dataset_id, rule.id}];
            if (need <= 0) {
                memo.clear();
                continue;
            }
            auto usable = [&](const std::string& rse) {
                return !holds(dataset_id, rse) && !claimed.count(rse) && world_.storage(rse).available;
            };
            std::erase_if(memo, [&](const std::string& rse) { return !usable(rse); });
            while (static_cast<int>(memo.size()) < need) {
                std::vector<std::string> candidates;
                for (const auto& rse : region_rses)
                    if (usable(rse) && std::find(memo.begin(), memo.end(), rse) == memo.end())
                        candidates.push_back(rse);
                if (candidates.empty()) break;
                memo.push_back(candidates[world_.draw("rse-select", candidates.size())]);
            }
            for (int i = 0; i < need && i < static_cast<int>(memo.size()); ++i) {
                out.push_back({dataset_id, rule.id, choose_source(dataset_id, memo[i]), memo[i]});
                claimed.insert(memo[i]);
            }
        }
        return out;
    }

    /// Records the start of a rule transfer: a COPYING replica that
    /// reserves space at the destination.
    const Replica& start_transfer(const TransferRequest& req) {
        const auto& ds = dataset(req.dataset_id);
        auto& per_rse = replicas_[req.dataset_id];
        if (auto it = per_rse.find(req.dst); it != per_rse.end() && it->second.holds())
            throw Error(Errc::ILLEGAL_TRANSITION, req.dataset_id + " already held at " + req.dst);
        world_.reserve(req.dst, ds.size);

        std::optional<Seconds> lifetime;
        for (const auto& r : rules_)
            if (r.id == req.rule_id) lifetime = r.lifetime;
        auto& rep = per_rse[req.dst];
        rep = Replica{req.dataset_id, req.dst, ReplicaState::COPYING, 0, world_.now(), lifetime, ++transfer_seq_};
        if (auto c = choices_.find({req.dataset_id, req.rule_id}); c != choices_.end())
            std::erase(c->second, req.dst);
        world_.emit(EventKind::TRANSFER_START, req.dataset_id,
                    {{"src", req.src}, {"dst", req.dst}, {"rule", req.rule_id}, {"size", std::to_string(ds.size)}});
        return rep;
    }

    ReplicaState complete_transfer(const std::string& dataset_id, const std::string& dst, bool checksum_ok) {
        const auto& ds = dataset(dataset_id);
        auto* rep = find(dataset_id, dst);
        if (!rep || rep->state != ReplicaState::COPYING)
            throw Error(Errc::NO_PENDING_TRANSFER, dataset_id + " -> " + dst);
        if (checksum_ok) {
            rep->state = ReplicaState::AVAILABLE;
            rep->checksum = ds.checksum;
        } else {
            rep->state = ReplicaState::CORRUPT;
            rep->checksum = corrupted(ds.checksum);
            world_.release(dst, ds.size);
        }
        rep->created_at = world_.now();
        world_.emit(EventKind::TRANSFER_DONE, dataset_id,
                    {{"dst", dst}, {"state", std::string(to_string(rep->state))}});
        if (checksum_ok && hooks_.on_available) hooks_.on_available(ds, *rep);
        return rep->state;
    }

    /// Drops a COPYING replica whose transfer could not be carried out.
    void abort_transfer(const std::string& dataset_id, const std::string& dst, const std::string& reason) {
        const auto& ds = dataset(dataset_id);
        auto* rep = find(dataset_id, dst);
        if (!rep || rep->state != ReplicaState::COPYING)
            throw Error(Errc::NO_PENDING_TRANSFER, dataset_id + " -> " + dst);
        world_.release(dst, ds.size);
        replicas_[dataset_id].erase(dst);
        world_.emit(EventKind::TRANSFER_FAIL, dataset_id, {{"dst", dst}, {"reason", reason}});
    }

    /// Replicas whose lifetime has run out. Nothing is deleted here.
    std::vector<ExpiryCandidate> expire_replicas(Seconds now) const {
        std::vector<ExpiryCandidate> out;
        for (const auto& [ds, per_rse] : replicas_)
            for (const auto& [rse, rep] : per_rse) {
                if (rep.state != ReplicaState::AVAILABLE) continue;
                auto exp = rep.expires_at();
                if (exp && *exp <= now) out.push_back({ds, rse, *exp});
            }
        return out;
    }

    std::vector<Replica> replicas_of(const std::string& dataset_id) const {
        if (!datasets_.count(dataset_id)) throw Error(Errc::UNKNOWN_DATASET, dataset_id);
        std::vector<Replica> out;
        if (auto it = replicas_.find(dataset_id); it != replicas_.end())
            for (const auto& [rse, rep] : it->second)
                if (rep.state != ReplicaState::PURGED) out.push_back(rep);
        return out;
    }

    /// Any replica record at (dataset, rse), including PURGED ones.
    const Replica* replica(const std::string& dataset_id, const std::string& rse) const {
        auto it = replicas_.find(dataset_id);
        if (it == replicas_.end()) return nullptr;
        auto r = it->second.find(rse);
        return r == it->second.end() ? nullptr : &r->second;
    }

    std::vector<std::string> available_rses(const std::string& dataset_id) const {
        std::vector<std::string> out;
        if (auto it = replicas_.find(dataset_id); it != replicas_.end())
            for (const auto& [rse, rep] : it->second)
                if (rep.state == ReplicaState::AVAILABLE) out.push_back(rse);
        return out;
    }

    bool is_available(const std::string& dataset_id, const std::string& rse) const {
        const auto* r = replica(dataset_id, rse);
        return r && r->state == ReplicaState::AVAILABLE;
    }

    bool holds(const std::string& dataset_id, const std::string& rse) const {
        const auto* r = replica(dataset_id, rse);
        return r && r->holds();
    }

    const Dataset& dataset(const std::string& id) const {
        auto it = datasets_.find(id);
        if (it == datasets_.end()) throw Error(Errc::UNKNOWN_DATASET, id);
        return it->second;
    }
    bool has_dataset(const std::string& id) const { return datasets_.count(id) != 0; }
    const std::map<std::string, Dataset>& datasets() const { return datasets_; }

    void mark_purged(PurgeKey, const std::string& dataset_id, const std::string& rse) {
        const auto& ds = dataset(dataset_id);
        auto* rep = find(dataset_id, rse);
        if (!rep || rep->state == ReplicaState::PURGED) throw Error(Errc::NO_REPLICA, dataset_id + "@" + rse);
        if (rep->holds()) world_.release(rse, ds.size);
        rep->state = ReplicaState::PURGED;
        if (hooks_.on_removed) hooks_.on_removed(ds, rse);
    }

    /// Fault injection: the replica vanishes without going through purge.
    void drop_replica(const std::string& dataset_id, const std::string& rse) {
        const auto& ds = dataset(dataset_id);
        auto* rep = find(dataset_id, rse);
        if (!rep || rep->state == ReplicaState::PURGED) throw Error(Errc::NO_REPLICA, dataset_id + "@" + rse);
        const bool was_held = rep->holds();
        if (was_held) world_.release(rse, ds.size);
        // A copy in flight is lost with its destination.
        if (rep->state == ReplicaState::COPYING)
            world_.emit(EventKind::TRANSFER_FAIL, dataset_id, {{"dst", rse}, {"reason", "lost"}});
        replicas_[dataset_id].erase(rse);
        world_.emit(EventKind::LOSS, dataset_id, {{"rse", rse}});
        if (was_held && hooks_.on_removed) hooks_.on_removed(ds, rse);
    }

    /// Re-registers data brought back from tape. Space at `rse` must
    /// already be reserved by the restore.
    const Replica& adopt_restored(const std::string& dataset_id, const std::string& rse, Checksum checksum,
                                  std::optional<Seconds> lifetime) {
        const auto& ds = dataset(dataset_id);
        if (holds(dataset_id, rse))
            throw Error(Errc::ILLEGAL_TRANSITION, dataset_id + " already held at " + rse);
        auto& rep = replicas_[dataset_id][rse];
        const bool ok = checksum == ds.checksum;
        rep = Replica{dataset_id, rse, ok ? ReplicaState::AVAILABLE : ReplicaState::CORRUPT, checksum,
                      world_.now(), lifetime};
        if (!ok) world_.release(rse, ds.size);
        Detail det{{"rse", rse}, {"size", std::to_string(ds.size)},
                   {"state", std::string(to_string(rep.state))}, {"restored", "1"}};
        if (lifetime) det["lifetime"] = std::to_string(*lifetime);
        world_.emit(EventKind::REGISTER, dataset_id, std::move(det));
        if (ok && hooks_.on_available) hooks_.on_available(ds, rep);
        return rep;
    }

    nlohmann::json dump_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& [id, ds] : datasets_) {
            nlohmann::json reps = nlohmann::json::array();
            for (const auto& r : replicas_of(id)) {
                nlohmann::json jr{{"rse", r.rse},
                                  {"state", std::string(to_string(r.state))},
                                  {"checksum", r.checksum},
                                  {"created_at", r.created_at}};
                jr["lifetime"] = r.lifetime ? nlohmann::json(*r.lifetime) : nlohmann::json(nullptr);
                reps.push_back(std::move(jr));
            }
            arr.push_back({{"id", id},
                           {"run_id", ds.run_id},
                           {"source", std::string(to_string(ds.source))},
                           {"science", ds.science},
                           {"size", ds.size},
                           {"checksum", ds.checksum},
                           {"replicas", std::move(reps)}});
        }
        return {{"datasets", std::move(arr)}};
    }

private:
    Replica* find(const std::string& dataset_id, const std::string& rse) {
        auto it = replicas_.find(dataset_id);
        if (it == replicas_.end()) return nullptr;
        auto r = it->second.find(rse);
        return r == it->second.end() ? nullptr : &r->second;
    }

    std::vector<std::string> disk_rses_in(Region region) const {
        std::vector<std::string> out;
        for (const auto& [id, se] : world_.storages())
            if (se.kind == StorageKind::DISK && se.region == region) out.push_back(id);
        return out;
    }

    // First AVAILABLE replica (by RSE id) with a usable link to dst.
    std::string choose_source(const std::string& dataset_id, const std::string& dst) const {
        const auto avail = available_rses(dataset_id);
        for (const auto& src : avail)
            if (world_.routable(src, dst, world_.now())) return src;
        return avail.front();
    }

    World& world_;
    Hooks hooks_;
    std::map<std::string, Dataset> datasets_;
    std::map<std::string, std::map<std::string, Replica>> replicas_;
    std::vector<TransferRule> rules_;
    std::map<std::pair<std::string, std::string>, std::vector<std::string>> choices_;
    std::uint64_t transfer_seq_ = 0;
};

}  // namespace gridsafe
