#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "simgrid.hpp"

namespace gridsafe {

struct Violation {
    Seconds t = 0;
    std::string rule;
    std::string subject;
    std::string message;
};

/// Replays an event log and checks the safety invariants using nothing
/// but the log itself and the static RSE kinds. It deliberately shares no
/// state with the catalog or policy code it audits.
class TraceAuditor {
public:
    TraceAuditor(std::map<std::string, StorageKind> kinds, std::string buffer_rse, int max_retries)
        : kinds_(std::move(kinds)), buffer_(std::move(buffer_rse)), max_retries_(max_retries) {}

    template <class Storages>
    static TraceAuditor for_world(const Storages& storages, const std::string& buffer_rse, int max_retries) {
        std::map<std::string, StorageKind> kinds;
        for (const auto& [id, se] : storages) kinds[id] = se.kind;
        return TraceAuditor(std::move(kinds), buffer_rse, max_retries);
    }

    std::vector<Violation> audit(const std::vector<LogEntry>& log) {
        for (const auto& e : log) feed(e);
        return violations_;
    }

    void feed(const LogEntry& e) {
        if (e.t < last_t_) fail(e, "time-order", "timestamp goes backwards");
        last_t_ = std::max(last_t_, e.t);
        const auto& ds = e.subject;
        switch (e.kind) {
        case EventKind::REGISTER:
            replicas_[ds][e.at("rse")] = e.at("state") == "AVAILABLE";
            break;
        case EventKind::TRANSFER_START:
            if (!copying_.insert({ds, e.at("dst")}).second) fail(e, "causality", "second start for one copy");
            break;
        case EventKind::TRANSFER_DONE:
            if (!copying_.erase({ds, e.at("dst")})) fail(e, "causality", "done without start");
            replicas_[ds][e.at("dst")] = e.at("state") == "AVAILABLE";
            break;
        case EventKind::TRANSFER_FAIL:
            copying_.erase({ds, e.at("dst")});
            break;
        case EventKind::LOSS:
            replicas_[ds].erase(e.at("rse"));
            check_recoverable(e);
            break;
        case EventKind::PURGE:
            check_gate(e);
            replicas_[ds].erase(e.at("rse"));
            check_recoverable(e);
            break;
        case EventKind::ARCHIVE_START:
            archiving_.insert(ds);
            break;
        case EventKind::ARCHIVE_DONE:
        case EventKind::ARCHIVE_FAIL:
            if (!archiving_.erase(ds)) fail(e, "causality", "archive finished without start");
            break;
        case EventKind::TAPE_VERIFY:
            tape_ok_[ds] = e.at("ok") == "1";
            break;
        case EventKind::TAPE_CORRUPT:
            tape_ok_[ds] = false;
            break;
        case EventKind::RESTORE_START:
            restoring_.insert({ds, e.at("dst")});
            break;
        case EventKind::RESTORE_DONE:
            if (!restoring_.erase({ds, e.at("dst")})) fail(e, "causality", "restore finished without start");
            break;
        case EventKind::DAG_SUBMIT:
            dags_[ds].nodes = std::stoll(e.at("nodes"));
            break;
        case EventKind::JOB_START: {
            if (!running_.insert(ds).second) fail(e, "causality", "job started twice concurrently");
            if (++starts_[ds] > max_retries_ + 1) fail(e, "retry-bound", "more attempts than retries allow");
            break;
        }
        case EventKind::JOB_DONE:
        case EventKind::JOB_FAIL: {
            if (!running_.erase(ds)) fail(e, "causality", "job finished without start");
            if (e.kind == EventKind::JOB_DONE) {
                auto& d = dags_[e.at("dag")];
                d.done_chunks.insert(ds);
                d.last_chunk_done = std::max(d.last_chunk_done, e.t);
            }
            break;
        }
        case EventKind::MERGE_START: {
            if (!running_.insert(ds).second) fail(e, "causality", "merge started twice");
            const auto& d = dags_[e.at("dag")];
            if (static_cast<std::int64_t>(d.done_chunks.size()) != d.nodes - 1)
                fail(e, "merge-barrier", "merge started with " + std::to_string(d.done_chunks.size()) + " of " +
                                             std::to_string(d.nodes - 1) + " chunks done");
            break;
        }
        case EventKind::MERGE_DONE: {
            if (!running_.erase(ds)) fail(e, "causality", "merge finished without start");
            if (e.t < dags_[e.at("dag")].last_chunk_done) fail(e, "merge-barrier", "merge done before a chunk");
            break;
        }
        default:
            break;
        }
    }

    const std::vector<Violation>& violations() const { return violations_; }

private:
    struct DagTrack {
        std::int64_t nodes = 0;
        std::set<std::string> done_chunks;
        Seconds last_chunk_done = 0;
    };

    bool is_kind(const std::string& rse, StorageKind k) const {
        auto it = kinds_.find(rse);
        return it != kinds_.end() && it->second == k;
    }

    void check_gate(const LogEntry& e) {
        const auto& target = e.at("rse");
        const bool tape = tape_ok_[e.subject];
        bool offsite = false;
        for (const auto& [rse, available] : replicas_[e.subject])
            if (available && rse != buffer_ && rse != target && is_kind(rse, StorageKind::DISK)) offsite = true;
        if (!tape || !offsite)
            fail(e, "purge-gate",
                 std::string("purge at ") + target + " with" + (tape ? "" : " unverified tape") +
                     (offsite ? "" : " no off-site copy"));
    }

    void check_recoverable(const LogEntry& e) {
        if (tape_ok_[e.subject]) return;
        for (const auto& [rse, available] : replicas_[e.subject])
            if (available) return;
        fail(e, "last-copy", "no recoverable copy left");
    }

    void fail(const LogEntry& e, std::string rule, std::string message) {
        violations_.push_back(Violation{e.t, std::move(rule), e.subject, std::move(message)});
    }

    std::map<std::string, StorageKind> kinds_;
    std::string buffer_;
    int max_retries_;
    Seconds last_t_ = 0;
    std::map<std::string, std::map<std::string, bool>> replicas_;
    std::set<std::pair<std::string, std::string>> copying_;
    std::set<std::pair<std::string, std::string>> restoring_;
    std::set<std::string> archiving_;
    std::map<std::string, bool> tape_ok_;
    std::map<std::string, DagTrack> dags_;
    std::set<std::string> running_;
    std::map<std::string, int> starts_;
    std::vector<Violation> violations_;
};

}  // namespace gridsafe
