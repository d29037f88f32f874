#pragma once

#include <cmath>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "catalog.hpp"
#include "checksum.hpp"
#include "ingest.hpp"
#include "metadb.hpp"
#include "pipeline.hpp"
#include "policy.hpp"
#include "scenario.hpp"
#include "simgrid.hpp"
#include "tapestore.hpp"

namespace gridsafe {

/// Builds the catalogued raw dataset for a run: chunked by event count,
/// checksummed over its chunk layout.
inline Dataset make_raw_dataset(const RunRecord& run, std::int64_t chunk_size, std::uint64_t nonce = 0) {
    Dataset ds;
    ds.id = raw_dataset_id(run.run_id);
    ds.run_id = run.run_id;
    ds.source = run.source;
    ds.science = run.science;
    ds.size = run.size;
    for (const auto& c : chunk_run(ds.id, run.event_count, run.size, chunk_size)) {
        ds.chunk_ids.push_back(c.id);
        ds.chunk_sizes.push_back(c.size);
    }
    ds.checksum = dataset_checksum(run.run_id, ds.chunk_ids, ds.size, nonce);
    return ds;
}

/// One complete simulated deployment built from a scenario: platform,
/// catalog, meta-database, tape archive, purge policy, processing and DAQ
/// ingest, wired together by event-driven hooks.
///
/// The hooks play the orchestration role: on arrival a run is registered
/// at the buffer and archived to tape in parallel; every replica change
/// re-evaluates the transfer rules; expiry feeds the purge gate; the first
/// off-site replica starts daily processing.
class Facility {
public:
    explicit Facility(Scenario sc, std::optional<std::uint64_t> seed = {})
        : sc_(std::move(sc)),
          world_(seed.value_or(sc_.seed)),
          catalog_(world_),
          metadb_(world_),
          buffer_(*sc_.find(StorageKind::BUFFER)),
          tape_(world_, catalog_, buffer_, *sc_.find(StorageKind::TAPE), sc_.faults.tape_corrupt_prob),
          policy_(world_, catalog_, tape_, metadb_, PolicyConfig{buffer_, sc_.policy.science_rse, Region::EUROPE}),
          processor_(world_, catalog_, metadb_, processor_config(sc_)),
          ingest_(world_, metadb_, buffer_, sc_.policy.resume_fraction) {
        build_platform();
        declare_rules();
        wire();
        ingest_.schedule_plan(sc_.run_plan);
        schedule_faults();
    }

    Facility(const Facility&) = delete;
    Facility& operator=(const Facility&) = delete;

    std::vector<LogEntry> run_until(Seconds t) { return world_.run_until(t); }
    std::vector<LogEntry> run() { return world_.run_until(sc_.duration); }

    World& world() { return world_; }
    const World& world() const { return world_; }
    Catalog& catalog() { return catalog_; }
    MetaDb& metadb() { return metadb_; }
    TapeStore& tape() { return tape_; }
    Policy& policy() { return policy_; }
    Processor& processor() { return processor_; }
    Ingest& ingest() { return ingest_; }
    const Scenario& scenario() const { return sc_; }
    const std::string& buffer_rse() const { return buffer_; }

    /// Disables automatic daily processing (tests that drive the processor
    /// directly).
    void set_auto_processing(bool on) { auto_processing_ = on; }

    /// Evaluates the rules for a dataset and starts every requested copy.
    void distribute(const std::string& dataset_id) {
        if (catalog_.available_rses(dataset_id).empty()) return;
        for (const auto& req : catalog_.evaluate_rules(dataset_id)) {
            const auto& ds = catalog_.dataset(dataset_id);
            std::uint64_t serial = 0;
            try {
                serial = catalog_.start_transfer(req).transfer_id;
            } catch (const Error& e) {
                if (e.code() != Errc::INSUFFICIENT_CAPACITY) throw;
                retry_distribute_later(dataset_id);
                continue;
            }
            mark_distributing(ds.run_id);
            world_.transfer(req.src, req.dst, ds.size, [this, dataset_id, dst = req.dst, serial](bool ok) {
                finish_transfer(dataset_id, dst, serial, ok);
            });
        }
    }

    /// Brings a tape copy back to `dst`. Restoring onto the buffer
    /// re-registers the replica with the standard buffer lifetime.
    void restore_from_tape(const std::string& dataset_id, const std::string& dst) {
        tape_.restore(dataset_id, dst);
    }

    bool is_safe(const std::string& dataset_id) const { return policy_.check_safety(dataset_id).satisfied; }

    /// Bytes at `rse` that should be accounted for by catalogue replicas,
    /// runs being taken, restores in flight and processed products. Differs from
    /// storage(rse).used only if accounting is broken.
    Bytes expected_used(const std::string& rse) const {
        Bytes total = 0;
        for (const auto& [id, ds] : catalog_.datasets())
            if (const auto* r = catalog_.replica(id, rse); r && r->holds()) total += ds.size;
        if (rse == buffer_) total += ingest_.in_progress_bytes();
        total += tape_.restoring_bytes(rse);
        if (rse == processor_.config().rcc_rse) total += processor_.rcc_bytes();
        return total;
    }

private:
    static ProcessorConfig processor_config(const Scenario& sc) {
        ProcessorConfig cfg;
        cfg.chunk_size = sc.policy.chunk_size;
        cfg.max_retries = sc.policy.max_retries;
        cfg.reduction_ppm = std::llround(sc.policy.reduction_ratio * 1e6);
        cfg.minitree_ppm = std::llround(sc.policy.minitree_ratio * 1e6);
        cfg.rcc_rse = *sc.find(StorageKind::ANALYSIS);
        return cfg;
    }

    void build_platform() {
        for (const auto& se : sc_.rses) world_.add_storage(se);
        for (auto link : sc_.links) {
            if (!sc_.faults.total_outages.empty() && (link.src == buffer_ || link.dst == buffer_)) {
                auto all = link.outages;
                all.insert(all.end(), sc_.faults.total_outages.begin(), sc_.faults.total_outages.end());
                link.outages = detail::merge_outages(std::move(all));
            }
            world_.add_link(std::move(link));
        }
        for (const auto& s : sc_.sites) world_.add_site(s);
        for (const auto& [id, lag] : sc_.policy.mirror_lags) metadb_.add_mirror(id, lag);
    }

    void declare_rules() {
        if (sc_.policy.rules) {
            for (const auto& r : *sc_.policy.rules)
                catalog_.declare_rule(TransferRule{{}, r.selector, r.destination, r.copies, r.lifetime});
            return;
        }
        if (world_.has_storage(sc_.policy.science_rse))
            catalog_.declare_rule(TransferRule{{}, Selector::science_only(),
                                               Destination::specific(sc_.policy.science_rse), 1, std::nullopt});
        catalog_.declare_rule(
            TransferRule{{}, Selector::any(), Destination::random_in(Region::EUROPE), 1, std::nullopt});
    }

    void wire() {
        ingest_.set_on_arrival([this](const RunRecord& run) { on_arrival(run); });

        catalog_.set_hooks(Catalog::Hooks{
            [this](const Dataset& ds, const Replica& rep) { on_replica_available(ds, rep); },
            [this](const Dataset& ds, const std::string& rse) { on_replica_removed(ds, rse); },
        });

        tape_.set_hooks(TapeStore::Hooks{
            [this](const std::string& id, bool ok) { on_tape_verified(id, ok); },
            [this](const std::string& id, const std::string& dst, Checksum sum) { on_restored(id, dst, sum); },
        });

        policy_.set_on_purged([this](const std::string& id, const std::string& rse) {
            if (rse == buffer_) purged_from_buffer_.insert(catalog_.dataset(id).run_id);
            advance(catalog_.dataset(id).run_id);
        });

        processor_.set_hooks(Processor::Hooks{
            [this](const ProcessedDataset& pd) { on_processed(pd); },
            [this](const ProcessingDag& dag) { processing_.erase(dag.run_id); },
        });
    }

    void schedule_faults() {
        const auto& f = sc_.faults;
        for (const auto& loss : f.data_losses)
            world_.schedule(loss.at, [this, loss] {
                const auto id = raw_dataset_id(loss.run_id);
                const auto* r = catalog_.has_dataset(id) ? catalog_.replica(id, loss.rse) : nullptr;
                if (r && r->state != ReplicaState::PURGED) catalog_.drop_replica(id, loss.rse);
            });
        for (const auto& rot : f.tape_rot)
            world_.schedule(rot.at, [this, rot] {
                const auto id = raw_dataset_id(rot.run_id);
                if (tape_.record(id)) tape_.inject_corruption(id);
            });
        for (const auto& bp : f.bypass_purges)
            world_.schedule(bp.at, [this, bp] {
                const auto id = raw_dataset_id(bp.run_id);
                const auto* r = catalog_.has_dataset(id) ? catalog_.replica(id, bp.rse) : nullptr;
                if (r && r->state != ReplicaState::PURGED) policy_.force_purge_unchecked(id, bp.rse);
            });
    }

    void on_arrival(const RunRecord& run) {
        auto ds = make_raw_dataset(run, sc_.policy.chunk_size);
        const auto id = ds.id;
        catalog_.register_dataset(std::move(ds), buffer_, sc_.policy.lngs_lifetime);
        schedule_expiry(id, buffer_, world_.now() + sc_.policy.lngs_lifetime);
        try {
            tape_.archive(id);
        } catch (const Error&) {
        }
        distribute(id);
        advance(run.run_id);
    }

    void on_replica_available(const Dataset& ds, const Replica& rep) {
        if (metadb_.has_run(ds.run_id)) metadb_.upsert_location(ds.run_id, rep.rse);
        // The registration itself is distributed by on_arrival once the tape
        // path is queued.
        if (rep.rse != buffer_) distribute(ds.id);
        advance(ds.run_id);
    }

    void on_replica_removed(const Dataset& ds, const std::string& rse) {
        if (metadb_.has_run(ds.run_id)) metadb_.remove_location(ds.run_id, rse);
        distribute(ds.id);
    }

    void on_tape_verified(const std::string& id, bool ok) {
        const auto& ds = catalog_.dataset(id);
        if (ok) {
            if (metadb_.has_run(ds.run_id)) metadb_.upsert_location(ds.run_id, kTapeLocation);
            advance(ds.run_id);
        } else if (catalog_.is_available(id, buffer_)) {
            tape_.archive(id);
        }
    }

    void on_restored(const std::string& id, const std::string& dst, Checksum sum) {
        const bool to_buffer = dst == buffer_;
        std::optional<Seconds> lifetime;
        if (to_buffer) lifetime = sc_.policy.lngs_lifetime;
        catalog_.adopt_restored(id, dst, sum, lifetime);
        if (to_buffer && catalog_.is_available(id, dst)) {
            schedule_expiry(id, dst, world_.now() + *lifetime);
            distribute(id);
        }
    }

    void on_processed(const ProcessedDataset& pd) {
        processing_.erase(pd.run_id);
        processed_.insert(pd.run_id);
        advance(pd.run_id);
        processor_.grow_minitrees(pd.run_id, sc_.policy.minitree_categories);
    }

    void finish_transfer(const std::string& id, const std::string& dst, std::uint64_t serial, bool delivered) {
        const auto* rep = catalog_.replica(id, dst);
        // Lost while in flight, possibly already re-requested.
        if (!rep || rep->state != ReplicaState::COPYING || rep->transfer_id != serial) return;
        if (!delivered) {
            catalog_.abort_transfer(id, dst, "no-route");
            retry_distribute_later(id);
            return;
        }
        const bool bad = world_.bernoulli("transfer-fault", sc_.faults.transfer_corrupt_prob);
        if (catalog_.complete_transfer(id, dst, !bad) == ReplicaState::CORRUPT) distribute(id);
    }

    void retry_distribute_later(const std::string& id) {
        if (!retry_pending_.insert(id).second) return;
        world_.schedule_in(sc_.policy.purge_retry_interval, [this, id] {
            retry_pending_.erase(id);
            distribute(id);
        });
    }

    // Expiry only ever feeds the purge gate; refused candidates are retried.
    void schedule_expiry(const std::string& id, const std::string& rse, Seconds at) {
        world_.schedule(at, [this, id, rse] { sweep(id, rse, true); });
    }

    void sweep(const std::string& id, const std::string& rse, bool first) {
        bool candidate = false;
        for (const auto& c : catalog_.expire_replicas(world_.now()))
            candidate |= c.dataset_id == id && c.rse == rse;
        if (!candidate) return;
        if (first) world_.emit(EventKind::EXPIRE, id, {{"rse", rse}});
        if (rse != buffer_) return;
        try {
            policy_.purge(id, rse);
        } catch (const PurgeRefused&) {
            const auto* rec = tape_.record(id);
            if (rec && rec->failed_check && !tape_.archive_pending(id)) tape_.archive(id);
            world_.schedule_in(sc_.policy.purge_retry_interval, [this, id, rse] { sweep(id, rse, false); });
        }
    }

    // Daily processing starts once the run is safe, so the locality broker
    // sees every off-site copy rather than whichever landed first.
    void maybe_process(const std::string& run_id) {
        if (!auto_processing_ || processing_.count(run_id) || processed_.count(run_id)) return;
        if (!submitted_.insert(run_id).second || sc_.sites.empty()) return;
        try {
            processor_.submit(metadb_.record(run_id));
            processing_.insert(run_id);
        } catch (const Error& e) {
            if (e.code() != Errc::NO_REPLICA && e.code() != Errc::EMPTY_DATASET) throw;
        }
    }

    void mark_distributing(const std::string& run_id) {
        if (metadb_.has_run(run_id) && metadb_.record(run_id).status == RunStatus::ON_BUFFER)
            metadb_.set_status(run_id, RunStatus::DISTRIBUTING);
    }

    // Moves the run's lifecycle status forward as far as the current state
    // allows. Milestones reached out of order (processing finished before
    // the safety copies, purge before processing) are applied once their
    // predecessors are reached.
    void advance(const std::string& run_id) {
        if (!metadb_.has_run(run_id)) return;
        const auto ds = raw_dataset_id(run_id);
        auto status = metadb_.record(run_id).status;
        if ((status == RunStatus::ON_BUFFER || status == RunStatus::DISTRIBUTING) && catalog_.has_dataset(ds) &&
            is_safe(ds)) {
            metadb_.set_status(run_id, RunStatus::SAFE);
            status = RunStatus::SAFE;
            maybe_process(run_id);
        }
        if (status == RunStatus::SAFE && processed_.count(run_id)) {
            metadb_.set_status(run_id, RunStatus::PROCESSED);
            status = RunStatus::PROCESSED;
        }
        if (status >= RunStatus::PROCESSED && processed_.count(run_id))
            metadb_.upsert_location(run_id, kRccLocation);
        if (status == RunStatus::PROCESSED && purged_from_buffer_.count(run_id))
            metadb_.set_status(run_id, RunStatus::PURGED_FROM_LNGS);
    }

    Scenario sc_;
    World world_;
    Catalog catalog_;
    MetaDb metadb_;
    std::string buffer_;
    TapeStore tape_;
    Policy policy_;
    Processor processor_;
    Ingest ingest_;
    bool auto_processing_ = true;
    std::set<std::string> processing_;
    std::set<std::string> processed_;
    std::set<std::string> submitted_;
    std::set<std::string> purged_from_buffer_;
    std::set<std::string> retry_pending_;
};

}  // namespace gridsafe
