#pragma once

#include <deque>
#include <functional>
#include <map>
#include <set>
#include <string>

#include "catalog.hpp"
#include "checksum.hpp"
#include "core.hpp"
#include "simgrid.hpp"

namespace gridsafe {

struct TapeRecord {
    std::string dataset_id;
    Checksum checksum = 0;
    Seconds archived_at = 0;
    bool verified = false;
    bool failed_check = false;  // last verification found a mismatch
};

/// Tape archive behind a single client: archive and restore requests are
/// served one at a time, in arrival order, over the buffer<->tape links.
///
/// Reads dataset metadata and buffer replica presence from the catalog but
/// never evaluates or triggers its transfer rules.
class TapeStore {
public:
    struct Hooks {
        std::function<void(const std::string& dataset_id, bool ok)> on_verified;
        std::function<void(const std::string& dataset_id, const std::string& dst, Checksum)> on_restored;
    };

    TapeStore(World& world, const Catalog& catalog, std::string buffer_rse, std::string tape_rse,
              double corrupt_prob = 0.0)
        : world_(world),
          catalog_(catalog),
          buffer_rse_(std::move(buffer_rse)),
          tape_rse_(std::move(tape_rse)),
          corrupt_prob_(corrupt_prob) {}

    void set_hooks(Hooks hooks) { hooks_ = std::move(hooks); }

    const std::string& tape_rse() const { return tape_rse_; }

    void archive(const std::string& dataset_id) {
        if (in_flight_.count(dataset_id)) throw Error(Errc::ALREADY_ARCHIVED, dataset_id + " (queued)");
        if (auto it = records_.find(dataset_id); it != records_.end() && !it->second.failed_check)
            throw Error(Errc::ALREADY_ARCHIVED, dataset_id);
        if (!catalog_.has_dataset(dataset_id) || !catalog_.is_available(dataset_id, buffer_rse_))
            throw Error(Errc::SOURCE_MISSING, dataset_id);
        in_flight_.insert(dataset_id);
        queue_.push_back(Op{Op::Kind::ARCHIVE, dataset_id, {}});
        pump();
    }

    /// Recomputes the stored checksum against the canonical one.
    bool verify(const std::string& dataset_id) {
        auto& rec = record_mut(dataset_id);
        const bool ok = rec.checksum == catalog_.dataset(dataset_id).checksum;
        rec.verified = ok;
        rec.failed_check = !ok;
        if (!ok) world_.emit(EventKind::TAPE_CORRUPT, dataset_id);
        return ok;
    }

    /// Last verification passed and the stored value still matches.
    bool is_verified(const std::string& dataset_id) const {
        auto it = records_.find(dataset_id);
        return it != records_.end() && it->second.verified &&
               it->second.checksum == catalog_.dataset(dataset_id).checksum;
    }

    void restore(const std::string& dataset_id, const std::string& dst) {
        auto it = records_.find(dataset_id);
        if (it == records_.end()) throw Error(Errc::NOT_ARCHIVED, dataset_id);
        if (!is_verified(dataset_id)) throw Error(Errc::NOT_VERIFIED, dataset_id);
        world_.reserve(dst, catalog_.dataset(dataset_id).size);
        restoring_[dst] += catalog_.dataset(dataset_id).size;
        queue_.push_back(Op{Op::Kind::RESTORE, dataset_id, dst});
        pump();
    }

    /// Fault injection: silent corruption of the stored copy.
    void inject_corruption(const std::string& dataset_id) {
        auto& rec = record_mut(dataset_id);
        rec.checksum = corrupted(catalog_.dataset(dataset_id).checksum);
    }

    const TapeRecord* record(const std::string& dataset_id) const {
        auto it = records_.find(dataset_id);
        return it == records_.end() ? nullptr : &it->second;
    }
    const std::map<std::string, TapeRecord>& records() const { return records_; }
    bool archive_pending(const std::string& dataset_id) const { return in_flight_.count(dataset_id) != 0; }

    /// Bytes reserved at `rse` by restores still in flight.
    Bytes restoring_bytes(const std::string& rse) const {
        auto it = restoring_.find(rse);
        return it == restoring_.end() ? 0 : it->second;
    }

private:
    struct Op {
        enum class Kind { ARCHIVE, RESTORE };
        Kind kind;
        std::string dataset_id;
        std::string dst;
    };

    TapeRecord& record_mut(const std::string& dataset_id) {
        auto it = records_.find(dataset_id);
        if (it == records_.end()) throw Error(Errc::NOT_ARCHIVED, dataset_id);
        return it->second;
    }

    void pump() {
        if (busy_ || queue_.empty()) return;
        busy_ = true;
        Op op = std::move(queue_.front());
        queue_.pop_front();
        const auto& ds = catalog_.dataset(op.dataset_id);
        if (op.kind == Op::Kind::ARCHIVE) {
            world_.emit(EventKind::ARCHIVE_START, op.dataset_id, {{"size", std::to_string(ds.size)}});
            world_.transfer(buffer_rse_, tape_rse_, ds.size, [this, id = op.dataset_id](bool ok) {
                finish_archive(id, ok);
            });
        } else {
            world_.emit(EventKind::RESTORE_START, op.dataset_id, {{"dst", op.dst}});
            world_.transfer(tape_rse_, op.dst, ds.size, [this, op](bool ok) { finish_restore(op, ok); });
        }
    }

    void finish_archive(const std::string& id, bool ok) {
        busy_ = false;
        in_flight_.erase(id);
        if (!ok) {
            world_.emit(EventKind::ARCHIVE_FAIL, id, {{"reason", "no-route"}});
        } else {
            const auto good = catalog_.dataset(id).checksum;
            const bool rot = world_.bernoulli("tape-fault", corrupt_prob_);
            records_[id] = TapeRecord{id, rot ? corrupted(good) : good, world_.now(), false, false};
            world_.emit(EventKind::ARCHIVE_DONE, id);
            const bool verified = verify(id);
            world_.emit(EventKind::TAPE_VERIFY, id, {{"ok", verified ? "1" : "0"}});
            if (hooks_.on_verified) hooks_.on_verified(id, verified);
        }
        pump();
    }

    void finish_restore(const Op& op, bool ok) {
        busy_ = false;
        const auto size = catalog_.dataset(op.dataset_id).size;
        restoring_[op.dst] -= size;
        if (!ok) {
            world_.release(op.dst, size);
            world_.emit(EventKind::TRANSFER_FAIL, op.dataset_id, {{"dst", op.dst}, {"reason", "restore-no-route"}});
        } else {
            world_.emit(EventKind::RESTORE_DONE, op.dataset_id, {{"dst", op.dst}});
            if (hooks_.on_restored) hooks_.on_restored(op.dataset_id, op.dst, records_.at(op.dataset_id).checksum);
        }
        pump();
    }

    World& world_;
    const Catalog& catalog_;
    std::string buffer_rse_;
    std::string tape_rse_;
    double corrupt_prob_;
    Hooks hooks_;
    std::map<std::string, TapeRecord> records_;
    std::set<std::string> in_flight_;
    std::deque<Op> queue_;
    std::map<std::string, Bytes> restoring_;
    bool busy_ = false;
};

}  // namespace gridsafe
