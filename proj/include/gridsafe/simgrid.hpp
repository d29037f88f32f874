#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "core.hpp"
#include "rng.hpp"

namespace gridsafe {

struct StorageElement {
    std::string id;
    Region region = Region::EUROPE;
    StorageKind kind = StorageKind::DISK;
    Bytes capacity = 0;
    Bytes used = 0;
    Bytes peak_used = 0;
    bool available = true;

    // Tape is modelled without a quota.
    bool unbounded() const { return kind == StorageKind::TAPE; }
    Bytes free_bytes() const { return unbounded() ? std::numeric_limits<Bytes>::max() : capacity - used; }
};

/// Half-open outage window [start, end). end == kForever marks the link as
/// permanently down from `start` on.
struct Outage {
    Seconds start = 0;
    Seconds end = 0;
};

struct NetworkLink {
    std::string src;
    std::string dst;
    Bytes bandwidth = 1;  // bytes per second
    Seconds latency = 0;
    std::vector<Outage> outages;  // sorted, non-overlapping
    Seconds busy_until = 0;       // links carry one transfer at a time
};

struct ComputeSite {
    std::string id;
    Pool pool = Pool::OSG;
    std::string attached_rse;
    int slots = 1;
    double job_failure_prob = 0.0;
    Bytes throughput = 1;  // bytes of input processed per second per slot
};

/// Completion time of a transfer of `size` bytes that begins at `start`.
///
/// Data flows at the link bandwidth and pauses for the duration of every
/// outage window it overlaps; latency is added once at the end. Returns
/// nullopt (BLOCKED) when the payload cannot complete before a permanent
/// outage.
inline std::optional<Seconds> transfer_finish(Bytes size, const NetworkLink& link, Seconds start) {
    Seconds cursor = start;
    Bytes remaining = size;
    for (const auto& out : link.outages) {
        if (out.end <= cursor) continue;
        if (out.start > cursor) {
            const Seconds window = out.start - cursor;
            if (remaining == 0 || remaining <= static_cast<__int128>(window) * link.bandwidth) break;
            remaining -= window * link.bandwidth;
        }
        if (out.end == kForever) return std::nullopt;
        cursor = out.end;
    }
    const Seconds flow = (remaining + link.bandwidth - 1) / link.bandwidth;
    return cursor + flow + link.latency;
}

/// Duration form of transfer_finish.
inline std::optional<Seconds> transfer_time(Bytes size, const NetworkLink& link, Seconds start) {
    const auto done = transfer_finish(size, link, start);
    if (!done) return std::nullopt;
    return *done - start;
}

enum class EventKind {
    TRANSFER_START,
    TRANSFER_DONE,
    TRANSFER_FAIL,
    JOB_START,
    JOB_DONE,
    JOB_FAIL,
    JOB_RETRY,
    MERGE_START,
    MERGE_DONE,
    DAG_SUBMIT,
    DAG_FAILED,
    SHIP_START,
    SHIP_DONE,
    SHIP_FAIL,
    ARCHIVE_START,
    ARCHIVE_DONE,
    ARCHIVE_FAIL,
    TAPE_VERIFY,
    TAPE_CORRUPT,
    RESTORE_START,
    RESTORE_DONE,
    REGISTER,
    EXPIRE,
    PURGE,
    PURGE_REFUSED,
    LOSS,
    RUN_START,
    INGEST,
    RUN_SKIPPED,
    HALT,
    RESUME,
    STATUS,
    MINITREE,
};

namespace detail {
inline constexpr std::array<std::string_view, 33> kEventNames{
    "TRANSFER_START", "TRANSFER_DONE", "TRANSFER_FAIL", "JOB_START",    "JOB_DONE",
    "JOB_FAIL",       "JOB_RETRY",     "MERGE_START",   "MERGE_DONE",   "DAG_SUBMIT",
    "DAG_FAILED",     "SHIP_START",    "SHIP_DONE",     "SHIP_FAIL",    "ARCHIVE_START",
    "ARCHIVE_DONE",   "ARCHIVE_FAIL",  "TAPE_VERIFY",   "TAPE_CORRUPT", "RESTORE_START",
    "RESTORE_DONE",   "REGISTER",      "EXPIRE",        "PURGE",        "PURGE_REFUSED",
    "LOSS",           "RUN_START",     "INGEST",        "RUN_SKIPPED",  "HALT",
    "RESUME",         "STATUS",        "MINITREE"};
}  // namespace detail

inline constexpr std::string_view to_string(EventKind k) { return detail::kEventNames[static_cast<std::size_t>(k)]; }
inline std::optional<EventKind> parse_event_kind(std::string_view s) {
    return detail::lookup<EventKind>(detail::kEventNames, s);
}

using Detail = std::map<std::string, std::string>;

struct LogEntry {
    Seconds t = 0;
    EventKind kind = EventKind::STATUS;
    std::string subject;
    Detail detail;

    const std::string& at(const std::string& key) const {
        static const std::string empty;
        auto it = detail.find(key);
        return it == detail.end() ? empty : it->second;
    }
    friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

inline nlohmann::json to_json(const LogEntry& e) {
    nlohmann::json j;
    j["t"] = e.t;
    j["kind"] = std::string(to_string(e.kind));
    j["subject"] = e.subject;
    j["detail"] = e.detail;
    return j;
}

inline void write_jsonl(std::ostream& os, const std::vector<LogEntry>& log) {
    for (const auto& e : log) os << to_json(e).dump() << '\n';
}

inline std::vector<LogEntry> read_jsonl(std::istream& is) {
    std::vector<LogEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            LogEntry e;
            e.t = j.at("t").get<Seconds>();
            auto kind = parse_event_kind(j.at("kind").get<std::string>());
            if (!kind) throw Error(Errc::PARSE_ERROR, "unknown event kind on line " + std::to_string(lineno));
            e.kind = *kind;
            e.subject = j.at("subject").get<std::string>();
            e.detail = j.at("detail").get<Detail>();
            out.push_back(std::move(e));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(Errc::PARSE_ERROR, "event log line " + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return out;
}

using EventHandle = std::uint64_t;

/// Deterministic discrete-event world.
///
/// Owns the simulated clock, the event queue, the event log, the named
/// RNG streams and the static platform (storage elements, links, compute
/// sites). All mutation happens inside handlers run by run_until, one at a
/// time, in (timestamp, insertion order).
class World {
public:
    explicit World(std::uint64_t seed = 0) : rng_(seed) {}

    World(const World&) = delete;
    World& operator=(const World&) = delete;

    Seconds now() const { return now_; }
    std::uint64_t seed() const { return rng_.seed(); }

    EventHandle schedule(Seconds at, std::function<void()> action) {
        if (at < now_)
            throw Error(Errc::SCHEDULE_IN_PAST,
                        "t=" + std::to_string(at) + " < now=" + std::to_string(now_));
        const EventHandle h = next_seq_++;
        queue_.push_back(Pending{at, h, std::move(action)});
        std::push_heap(queue_.begin(), queue_.end(), Later{});
        return h;
    }

    EventHandle schedule_in(Seconds delay, std::function<void()> action) {
        return schedule(now_ + delay, std::move(action));
    }

    /// Processes every event with timestamp <= t_end and returns the log
    /// entries emitted while doing so.
    std::vector<LogEntry> run_until(Seconds t_end) {
        const std::size_t first = log_.size();
        while (!queue_.empty() && queue_.front().at <= t_end) {
            std::pop_heap(queue_.begin(), queue_.end(), Later{});
            Pending ev = std::move(queue_.back());
            queue_.pop_back();
            now_ = ev.at;
            ev.action();
        }
        if (t_end > now_) now_ = t_end;
        return {log_.begin() + static_cast<std::ptrdiff_t>(first), log_.end()};
    }

    /// Runs until the queue is empty or `horizon` is reached.
    void run_to_quiescence(Seconds horizon) {
        while (!queue_.empty() && queue_.front().at <= horizon) run_until(queue_.front().at);
    }

    bool idle() const { return queue_.empty(); }
    std::size_t pending_events() const { return queue_.size(); }

    void emit(EventKind kind, std::string subject, Detail detail = {}) {
        log_.push_back(LogEntry{now_, kind, std::move(subject), std::move(detail)});
    }
    const std::vector<LogEntry>& log() const { return log_; }

    std::uint64_t draw(std::string_view stream, std::uint64_t n) { return rng_.draw(stream, n); }
    bool bernoulli(std::string_view stream, double p) { return rng_.bernoulli(stream, p); }
    RngStreams& rng() { return rng_; }

    // Platform.

    StorageElement& add_storage(StorageElement se) {
        auto id = se.id;
        return storage_.insert_or_assign(id, std::move(se)).first->second;
    }
    StorageElement& storage(const std::string& id) {
        auto it = storage_.find(id);
        if (it == storage_.end()) throw Error(Errc::UNKNOWN_RSE, id);
        return it->second;
    }
    const StorageElement& storage(const std::string& id) const {
        auto it = storage_.find(id);
        if (it == storage_.end()) throw Error(Errc::UNKNOWN_RSE, id);
        return it->second;
    }
    bool has_storage(const std::string& id) const { return storage_.count(id) != 0; }
    const std::map<std::string, StorageElement>& storages() const { return storage_; }

    std::optional<std::string> find_storage(StorageKind kind, std::optional<Region> region = {}) const {
        for (const auto& [id, se] : storage_)
            if (se.kind == kind && (!region || se.region == *region)) return id;
        return std::nullopt;
    }

    void reserve(const std::string& rse, Bytes bytes) {
        auto& se = storage(rse);
        if (se.unbounded()) return;
        if (bytes > se.free_bytes())
            throw Error(Errc::INSUFFICIENT_CAPACITY,
                        rse + " needs " + std::to_string(bytes) + " has " + std::to_string(se.free_bytes()));
        se.used += bytes;
        se.peak_used = std::max(se.peak_used, se.used);
    }
    void release(const std::string& rse, Bytes bytes) {
        auto& se = storage(rse);
        if (se.unbounded()) return;
        se.used -= bytes;
    }

    NetworkLink& add_link(NetworkLink link) {
        auto key = std::make_pair(link.src, link.dst);
        return links_.insert_or_assign(key, std::move(link)).first->second;
    }
    NetworkLink* link(const std::string& src, const std::string& dst) {
        auto it = links_.find({src, dst});
        return it == links_.end() ? nullptr : &it->second;
    }
    const NetworkLink* link(const std::string& src, const std::string& dst) const {
        auto it = links_.find({src, dst});
        return it == links_.end() ? nullptr : &it->second;
    }
    const std::map<std::pair<std::string, std::string>, NetworkLink>& links() const { return links_; }

    /// True when a link exists and is not permanently down at `at`.
    bool routable(const std::string& src, const std::string& dst, Seconds at) const {
        const auto* l = link(src, dst);
        if (!l) return false;
        for (const auto& o : l->outages)
            if (o.end == kForever && o.start <= at) return false;
        return true;
    }

    ComputeSite& add_site(ComputeSite site) {
        auto id = site.id;
        return sites_.insert_or_assign(id, std::move(site)).first->second;
    }
    const ComputeSite& site(const std::string& id) const {
        auto it = sites_.find(id);
        if (it == sites_.end()) throw Error(Errc::UNKNOWN_SITE, id);
        return it->second;
    }
    const std::map<std::string, ComputeSite>& sites() const { return sites_; }

    /// Moves `size` bytes over the src->dst link. Transfers on one link are
    /// serialized. `done(true)` fires at the completion instant;
    /// `done(false)` fires immediately when there is no route or the link
    /// is permanently down. Returns the scheduled completion time.
    std::optional<Seconds> transfer(const std::string& src, const std::string& dst, Bytes size,
                                    std::function<void(bool)> done) {
        NetworkLink* l = link(src, dst);
        std::optional<Seconds> finish;
        if (l) finish = transfer_finish(size, *l, std::max(now_, l->busy_until));
        if (!finish) {
            schedule(now_, [done = std::move(done)] { done(false); });
            return std::nullopt;
        }
        l->busy_until = *finish;
        schedule(*finish, [done = std::move(done)] { done(true); });
        return finish;
    }

private:
    struct Pending {
        Seconds at;
        EventHandle seq;
        std::function<void()> action;
    };
    struct Later {
        bool operator()(const Pending& a, const Pending& b) const {
            return a.at != b.at ? a.at > b.at : a.seq > b.seq;
        }
    };

    Seconds now_ = 0;
    EventHandle next_seq_ = 0;
    std::vector<Pending> queue_;
    std::vector<LogEntry> log_;
    RngStreams rng_;
    std::map<std::string, StorageElement> storage_;
    std::map<std::pair<std::string, std::string>, NetworkLink> links_;
    std::map<std::string, ComputeSite> sites_;
};

}  // namespace gridsafe
