#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "core.hpp"
#include "metadb.hpp"
#include "simgrid.hpp"

namespace gridsafe {

struct PlanEntry {
    Source source = Source::DARK_MATTER;
    bool science = false;
    std::optional<double> runs_per_day;
    std::optional<std::int64_t> count;  // cap on runs_per_day scheduling
    Seconds offset = 0;
    std::vector<Seconds> times;  // explicit start times, relative to the plan start
    std::int64_t events_per_run = 0;
    Bytes bytes_per_event = 0;

    Bytes run_size() const { return events_per_run * bytes_per_event; }
};

struct RunPlan {
    std::vector<PlanEntry> entries;
    Seconds start = 0;
    Seconds duration = 0;
};

/// Absolute start times of every run an entry plans.
inline std::vector<Seconds> take_times(const PlanEntry& e, const RunPlan& plan) {
    std::vector<Seconds> out;
    const Seconds stop = plan.start + plan.duration;
    for (auto t : e.times)
        if (plan.start + t < stop) out.push_back(plan.start + t);
    if (e.runs_per_day && *e.runs_per_day > 0) {
        const auto interval = std::max<Seconds>(1, std::llround(static_cast<double>(kDay) / *e.runs_per_day));
        for (std::int64_t k = 0; !e.count || k < *e.count; ++k) {
            const Seconds t = plan.start + e.offset + k * interval;
            if (t >= stop) break;
            out.push_back(t);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct BufferState {
    Bytes capacity = 0;
    Bytes used = 0;
    bool halted = false;
};

struct BufferReport {
    Bytes used = 0;
    Bytes capacity = 0;
    std::vector<std::string> purge_eligible_runs;
};

/// DAQ front end. Each planned run occupies the buffer for one hour of
/// data taking and then lands there; arrival hands the run to whoever
/// uploads and archives it. When a run would not fit the buffer the DAQ
/// halts and skips runs until occupancy falls below the resume threshold.
class Ingest {
public:
    static constexpr Seconds kRunLength = kHour;

    Ingest(World& world, MetaDb& metadb, std::string buffer_rse, double resume_fraction = 0.9)
        : world_(world), metadb_(metadb), buffer_rse_(std::move(buffer_rse)), resume_fraction_(resume_fraction) {}

    void set_on_arrival(std::function<void(const RunRecord&)> f) { on_arrival_ = std::move(f); }

    void schedule_plan(const RunPlan& plan) {
        std::vector<std::tuple<Seconds, std::size_t>> slots;
        for (std::size_t i = 0; i < plan.entries.size(); ++i)
            for (auto t : take_times(plan.entries[i], plan)) slots.emplace_back(t, i);
        std::stable_sort(slots.begin(), slots.end());
        for (const auto& [t, i] : slots) {
            ++planned_;
            world_.schedule(t, [this, entry = plan.entries[i]] { take_run(entry); });
        }
    }

    /// Starts a run at the current instant. Returns nullopt if it was
    /// skipped because the DAQ is halted.
    std::optional<RunRecord> take_run(const PlanEntry& entry) {
        const auto size = entry.run_size();
        const auto& buf = world_.storage(buffer_rse_);
        if (halted_ && static_cast<double>(buf.used) < resume_fraction_ * static_cast<double>(buf.capacity)) {
            halted_ = false;
            world_.emit(EventKind::RESUME, buffer_rse_, {{"used", std::to_string(buf.used)}});
        }
        if (!halted_ && size > buf.free_bytes()) {
            halted_ = true;
            ++halts_;
            world_.emit(EventKind::HALT, buffer_rse_,
                        {{"used", std::to_string(buf.used)}, {"incoming", std::to_string(size)}});
        }
        if (halted_) {
            ++skipped_;
            world_.emit(EventKind::RUN_SKIPPED, buffer_rse_,
                        {{"source", std::string(to_string(entry.source))}, {"size", std::to_string(size)}});
            return std::nullopt;
        }

        world_.reserve(buffer_rse_, size);
        in_progress_ += size;
        char buf_id[32];
        std::snprintf(buf_id, sizeof buf_id, "run_%06llu", static_cast<unsigned long long>(++taken_));
        RunRecord rec{buf_id, entry.source, entry.science, entry.events_per_run, size, RunStatus::TAKING, {},
                      world_.now()};
        metadb_.insert(rec);
        world_.emit(EventKind::RUN_START, rec.run_id,
                    {{"source", std::string(to_string(entry.source))},
                     {"science", entry.science ? "1" : "0"},
                     {"events", std::to_string(entry.events_per_run)},
                     {"size", std::to_string(size)}});
        world_.schedule_in(kRunLength, [this, run_id = rec.run_id, size] { arrive(run_id, size); });
        return rec;
    }

    BufferState buffer_state() const {
        const auto& buf = world_.storage(buffer_rse_);
        return {buf.capacity, buf.used, halted_};
    }

    BufferReport drain_check(const std::function<bool(const std::string& run_id)>& purge_eligible) const {
        const auto& buf = world_.storage(buffer_rse_);
        BufferReport r{buf.used, buf.capacity, {}};
        for (const auto& rec : metadb_.query([&](const RunRecord& x) { return x.locations.count(buffer_rse_) != 0; }))
            if (purge_eligible(rec.run_id)) r.purge_eligible_runs.push_back(rec.run_id);
        return r;
    }

    std::uint64_t planned() const { return planned_; }
    std::uint64_t taken() const { return taken_; }
    std::uint64_t skipped() const { return skipped_; }
    std::uint64_t halts() const { return halts_; }
    const std::string& buffer_rse() const { return buffer_rse_; }
    /// Buffer bytes held by runs still being taken.
    Bytes in_progress_bytes() const { return in_progress_; }

private:
    void arrive(const std::string& run_id, Bytes size) {
        world_.release(buffer_rse_, size);
        in_progress_ -= size;
        metadb_.set_status(run_id, RunStatus::ON_BUFFER);
        const auto& rec = metadb_.record(run_id);
        world_.emit(EventKind::INGEST, run_id,
                    {{"source", std::string(to_string(rec.source))},
                     {"science", rec.science ? "1" : "0"},
                     {"size", std::to_string(size)}});
        if (on_arrival_) on_arrival_(rec);
    }

    World& world_;
    MetaDb& metadb_;
    std::string buffer_rse_;
    double resume_fraction_;
    std::function<void(const RunRecord&)> on_arrival_;
    bool halted_ = false;
    std::uint64_t planned_ = 0;
    std::uint64_t taken_ = 0;
    std::uint64_t skipped_ = 0;
    std::uint64_t halts_ = 0;
    Bytes in_progress_ = 0;
};

}  // namespace gridsafe
