#pragma once

#include <cstdio>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "catalog.hpp"
#include "core.hpp"
#include "metadb.hpp"
#include "simgrid.hpp"

namespace gridsafe {

inline std::string raw_dataset_id(const std::string& run_id) { return run_id + ".raw"; }

struct Chunk {
    std::string id;
    std::string dataset_id;
    int index = 0;
    std::int64_t event_begin = 0;  // [begin, end)
    std::int64_t event_end = 0;
    Bytes size = 0;
};

inline std::string chunk_id(const std::string& dataset_id, int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "#c%05d", index);
    return dataset_id + buf;
}

/// Splits a run into contiguous chunks of `chunk_size` events (the last may
/// be shorter). Bytes are apportioned by event count using cumulative
/// floor boundaries, so chunk sizes always sum to `size` exactly.
inline std::vector<Chunk> chunk_run(const std::string& dataset_id, std::int64_t event_count, Bytes size,
                                    std::int64_t chunk_size = 100) {
    if (chunk_size < 1) throw Error(Errc::SEMANTIC_ERROR, "chunk_size must be positive");
    std::vector<Chunk> out;
    if (event_count <= 0) return out;
    auto boundary = [&](std::int64_t ev) {
        return static_cast<Bytes>(static_cast<__int128>(size) * ev / event_count);
    };
    for (std::int64_t begin = 0; begin < event_count; begin += chunk_size) {
        const auto end = std::min(begin + chunk_size, event_count);
        const int idx = static_cast<int>(out.size());
        out.push_back(Chunk{chunk_id(dataset_id, idx), dataset_id, idx, begin, end, boundary(end) - boundary(begin)});
    }
    return out;
}

inline std::vector<Chunk> chunk_run(const RunRecord& run, std::int64_t chunk_size = 100) {
    return chunk_run(raw_dataset_id(run.run_id), run.event_count, run.size, chunk_size);
}

/// Locality brokering: an OSG site attached to an RSE holding an AVAILABLE
/// replica wins over any EGI site. Within a pool the shortest queue wins,
/// then the lexicographically smallest id.
inline const ComputeSite& select_site(const World& world, const Catalog& catalog, const std::string& dataset_id,
                                      const std::function<std::size_t(const std::string&)>& queue_depth) {
    for (Pool pool : {Pool::OSG, Pool::EGI}) {
        const ComputeSite* best = nullptr;
        std::size_t best_depth = 0;
        for (const auto& [id, site] : world.sites()) {
            if (site.pool != pool || !catalog.is_available(dataset_id, site.attached_rse)) continue;
            const auto depth = queue_depth(id);
            if (!best || depth < best_depth) {
                best = &site;
                best_depth = depth;
            }
        }
        if (best) return *best;
    }
    throw Error(Errc::NO_REPLICA, dataset_id);
}

enum class JobState { PENDING, RUNNING, DONE, FAILED };

struct JobNode {
    std::string job_id;
    int index = -1;  // -1 for the merge node
    Bytes input_size = 0;
    int attempts = 0;
    JobState state = JobState::PENDING;
    Bytes output_size = 0;
};

enum class DagOutcome { RUNNING, SUCCEEDED, FAILED };

struct ProcessingDag {
    std::uint64_t id = 0;
    std::string dataset_id;
    std::string run_id;
    std::string site;
    int max_retries = 3;
    std::vector<JobNode> chunk_jobs;
    JobNode merge_job;
    DagOutcome outcome = DagOutcome::RUNNING;
    std::vector<std::string> failed_chunks;
    std::size_t chunks_done = 0;

    std::size_t node_count() const { return chunk_jobs.size() + 1; }
    /// Every chunk node is a parent of the merge node.
    std::size_t merge_in_degree() const { return chunk_jobs.size(); }
    std::string name() const { return "dag-" + std::to_string(id); }
};

inline ProcessingDag build_dag(std::uint64_t id, const std::string& run_id, const std::vector<Chunk>& chunks,
                               const std::string& site, int max_retries) {
    if (chunks.empty()) throw Error(Errc::EMPTY_DATASET, run_id);
    ProcessingDag dag;
    dag.id = id;
    dag.dataset_id = chunks.front().dataset_id;
    dag.run_id = run_id;
    dag.site = site;
    dag.max_retries = max_retries;
    char buf[16];
    for (const auto& c : chunks) {
        std::snprintf(buf, sizeof buf, "/c%05d", c.index);
        dag.chunk_jobs.push_back(JobNode{dag.name() + buf, c.index, c.size, 0, JobState::PENDING, 0});
    }
    dag.merge_job = JobNode{dag.name() + "/merge", -1, 0, 0, JobState::PENDING, 0};
    return dag;
}

struct ChunkOutput {
    int index = 0;
    Bytes size = 0;
};

struct ProcessedDataset {
    enum class Location { STAGING, RCC };
    std::string run_id;
    Bytes size = 0;
    Location location = Location::STAGING;
    std::string staging_rse;
    std::uint64_t dag_id = 0;
};

/// Joins per-chunk outputs into one processed file. Every index in
/// [0, expected) must be present exactly once.
inline ProcessedDataset merge(const std::string& run_id, const std::vector<ChunkOutput>& outputs,
                              std::size_t expected) {
    std::vector<bool> seen(expected, false);
    Bytes total = 0;
    for (const auto& o : outputs) {
        if (o.index < 0 || static_cast<std::size_t>(o.index) >= expected || seen[o.index])
            throw Error(Errc::MISSING_CHUNK_OUTPUT, run_id + ": bad chunk index " + std::to_string(o.index));
        seen[o.index] = true;
        total += o.size;
    }
    for (std::size_t i = 0; i < expected; ++i)
        if (!seen[i]) throw Error(Errc::MISSING_CHUNK_OUTPUT, run_id + ": chunk " + std::to_string(i));
    return ProcessedDataset{run_id, total, ProcessedDataset::Location::STAGING, {}, 0};
}

struct MinitreeSet {
    std::string run_id;
    std::vector<std::string> categories;
    std::vector<Bytes> sizes;
    int generation = 0;
};

/// One job execution, for wall-hour accounting.
struct JobRecord {
    std::uint64_t dag_id = 0;
    std::string job_id;
    std::string site;
    Pool pool = Pool::OSG;
    Seconds start = 0;
    Seconds runtime = 0;
};

struct ProcessorConfig {
    std::int64_t chunk_size = 100;
    int max_retries = 3;
    std::int64_t reduction_ppm = 100'000;  // processed = 0.1 x raw
    std::int64_t minitree_ppm = 1'000;     // each minitree = 0.001 x raw
    std::string rcc_rse = "RCC";
    Seconds ship_retry_delay = kHour;
};

inline Seconds job_runtime(Bytes input, Bytes throughput) {
    return std::max<Seconds>(1, (input + throughput - 1) / throughput);
}

/// Spliced-DAG execution on the simulated compute sites, followed by the
/// direct copy of the merged product to RCC.
///
/// Each site runs at most `slots` jobs at once from a FIFO queue shared by
/// all DAGs placed there. A failed chunk job is resubmitted to the back of
/// the queue until it has been attempted max_retries + 1 times.
class Processor {
public:
    struct Hooks {
        std::function<void(const ProcessedDataset&)> on_processed;
        std::function<void(const ProcessingDag&)> on_failed;
    };

    Processor(World& world, const Catalog& catalog, const MetaDb& metadb, ProcessorConfig cfg = {})
        : world_(world), catalog_(catalog), metadb_(metadb), cfg_(std::move(cfg)) {}

    void set_hooks(Hooks h) { hooks_ = std::move(h); }
    const ProcessorConfig& config() const { return cfg_; }

    std::size_t queue_depth(const std::string& site) const {
        auto it = sites_.find(site);
        return it == sites_.end() ? 0 : it->second.waiting.size() + it->second.running;
    }

    const ComputeSite& select_site(const std::string& dataset_id) const {
        return gridsafe::select_site(world_, catalog_, dataset_id,
                                     [this](const std::string& s) { return queue_depth(s); });
    }

    /// Chunks the run, picks a site and starts the DAG.
    std::uint64_t submit(const RunRecord& run) {
        const auto ds = raw_dataset_id(run.run_id);
        const auto& site = select_site(ds);
        auto chunks = chunk_run(run, cfg_.chunk_size);
        return execute_dag(build_dag(next_id_, run.run_id, chunks, site.id, cfg_.max_retries));
    }

    std::uint64_t execute_dag(ProcessingDag dag) {
        const auto& site = world_.site(dag.site);
        if (site.slots < 1) throw Error(Errc::SEMANTIC_ERROR, "site without slots: " + site.id);
        next_id_ = std::max(next_id_, dag.id + 1);
        const auto id = dag.id;
        world_.emit(EventKind::DAG_SUBMIT, dag.name(),
                    {{"run", dag.run_id},
                     {"site", dag.site},
                     {"pool", std::string(to_string(site.pool))},
                     {"nodes", std::to_string(dag.node_count())}});
        auto& stored = dags_.insert_or_assign(id, std::move(dag)).first->second;
        for (std::size_t i = 0; i < stored.chunk_jobs.size(); ++i) sites_[stored.site].waiting.push_back({id, static_cast<int>(i)});
        pump(stored.site);
        return id;
    }

    /// The next `count` completions of chunk `index` in DAG `dag_id` fail.
    void inject_job_failures(std::uint64_t dag_id, int index, int count) { forced_[{dag_id, index}] += count; }

    const ProcessingDag& dag(std::uint64_t id) const { return dags_.at(id); }
    const std::map<std::uint64_t, ProcessingDag>& dags() const { return dags_; }

    std::optional<ProcessedDataset> processed(const std::string& run_id) const {
        auto it = processed_.find(run_id);
        if (it == processed_.end()) return std::nullopt;
        return it->second;
    }
    const std::map<std::string, ProcessedDataset>& processed_all() const { return processed_; }

    // Bytes of shipped products held at RCC.
    Bytes rcc_bytes() const {
        Bytes total = 0;
        for (const auto& [id, pd] : processed_)
            if (pd.location == ProcessedDataset::Location::RCC) total += pd.size;
        return total;
    }

    MinitreeSet grow_minitrees(const std::string& run_id, const std::vector<std::string>& categories) {
        auto it = processed_.find(run_id);
        if (it == processed_.end() || it->second.location != ProcessedDataset::Location::RCC)
            throw Error(Errc::NOT_PROCESSED, run_id);
        const Bytes raw = catalog_.has_dataset(raw_dataset_id(run_id))
                              ? catalog_.dataset(raw_dataset_id(run_id)).size
                              : 0;
        auto& set = minitrees_[run_id];
        set.run_id = run_id;
        set.categories = categories;
        set.sizes.assign(categories.size(), scale_ppm(raw, cfg_.minitree_ppm));
        ++set.generation;
        world_.emit(EventKind::MINITREE, run_id,
                    {{"generation", std::to_string(set.generation)}, {"count", std::to_string(categories.size())}});
        return set;
    }
    const MinitreeSet* minitrees(const std::string& run_id) const {
        auto it = minitrees_.find(run_id);
        return it == minitrees_.end() ? nullptr : &it->second;
    }

    struct CampaignEntry {
        std::string run_id;
        std::optional<std::uint64_t> dag_id;
        std::string error;
    };

    /// Reprocesses every selected run (as seen on the primary metadb) on
    /// whichever OSG or EGI site is local to its replicas. Submission
    /// errors are collected per run; the campaign continues.
    std::vector<CampaignEntry> reprocess_campaign(const std::function<bool(const RunRecord&)>& selector) {
        std::vector<CampaignEntry> out;
        for (const auto& run : metadb_.query(selector)) {
            CampaignEntry e{run.run_id, std::nullopt, {}};
            try {
                e.dag_id = submit(run);
            } catch (const Error& err) {
                e.error = err.what();
            }
            out.push_back(std::move(e));
        }
        return out;
    }

    const std::vector<JobRecord>& job_records() const { return jobs_; }

private:
    struct SiteQueue {
        std::deque<std::pair<std::uint64_t, int>> waiting;  // (dag, node; -1 = merge)
        int running = 0;
    };

    JobNode& node(ProcessingDag& dag, int idx) { return idx < 0 ? dag.merge_job : dag.chunk_jobs[idx]; }

    void pump(const std::string& site_id) {
        const auto& site = world_.site(site_id);
        auto& q = sites_[site_id];
        while (q.running < site.slots && !q.waiting.empty()) {
            auto [dag_id, idx] = q.waiting.front();
            q.waiting.pop_front();
            auto& dag = dags_.at(dag_id);
            if (dag.outcome == DagOutcome::FAILED) continue;
            auto& job = node(dag, idx);
            ++job.attempts;
            job.state = JobState::RUNNING;
            ++q.running;
            const auto runtime = job_runtime(job.input_size, site.throughput);
            Detail det{{"dag", dag.name()}, {"site", site.id}, {"attempt", std::to_string(job.attempts)}};
            world_.emit(idx < 0 ? EventKind::MERGE_START : EventKind::JOB_START, job.job_id, std::move(det));
            world_.schedule_in(runtime, [this, dag_id = dag_id, idx = idx, runtime, start = world_.now()] {
                finish(dag_id, idx, start, runtime);
            });
        }
    }

    void finish(std::uint64_t dag_id, int idx, Seconds start, Seconds runtime) {
        auto& dag = dags_.at(dag_id);
        const auto& site = world_.site(dag.site);
        auto& q = sites_[dag.site];
        --q.running;
        auto& job = node(dag, idx);
        jobs_.push_back(JobRecord{dag_id, job.job_id, site.id, site.pool, start, runtime});
        Detail det{{"dag", dag.name()},
                   {"site", site.id},
                   {"pool", std::string(to_string(site.pool))},
                   {"start", std::to_string(start)},
                   {"runtime", std::to_string(runtime)},
                   {"attempt", std::to_string(job.attempts)}};

        if (idx < 0) {
            finish_merge(dag, std::move(det));
            pump(dag.site);
            return;
        }

        bool failed = false;
        if (auto f = forced_.find({dag_id, idx}); f != forced_.end() && f->second > 0) {
            --f->second;
            failed = true;
        } else {
            failed = world_.bernoulli("job-fail", site.job_failure_prob);
        }

        if (failed) {
            world_.emit(EventKind::JOB_FAIL, job.job_id, std::move(det));
            if (dag.outcome == DagOutcome::FAILED) {
                job.state = JobState::FAILED;
            } else if (job.attempts <= dag.max_retries) {
                job.state = JobState::PENDING;
                world_.emit(EventKind::JOB_RETRY, job.job_id,
                            {{"dag", dag.name()}, {"next_attempt", std::to_string(job.attempts + 1)}});
                q.waiting.push_back({dag_id, idx});
            } else {
                job.state = JobState::FAILED;
                dag.outcome = DagOutcome::FAILED;
                dag.failed_chunks.push_back(job.job_id);
                world_.emit(EventKind::DAG_FAILED, dag.name(), {{"run", dag.run_id}, {"failed", job.job_id}});
                if (hooks_.on_failed) hooks_.on_failed(dag);
            }
        } else {
            world_.emit(EventKind::JOB_DONE, job.job_id, std::move(det));
            job.state = JobState::DONE;
            job.output_size = scale_ppm(job.input_size, cfg_.reduction_ppm);
            if (dag.outcome != DagOutcome::FAILED && ++dag.chunks_done == dag.chunk_jobs.size()) {
                Bytes merged_in = 0;
                for (const auto& c : dag.chunk_jobs) merged_in += c.output_size;
                dag.merge_job.input_size = merged_in;
                q.waiting.push_back({dag_id, -1});
            }
        }
        pump(dag.site);
    }

    void finish_merge(ProcessingDag& dag, Detail det) {
        std::vector<ChunkOutput> outputs;
        for (const auto& c : dag.chunk_jobs) outputs.push_back({c.index, c.output_size});
        auto product = merge(dag.run_id, outputs, dag.chunk_jobs.size());
        for (auto& c : dag.chunk_jobs) c.output_size = 0;  // chunk outputs are dropped once merged
        dag.merge_job.state = JobState::DONE;
        dag.merge_job.output_size = product.size;
        dag.outcome = DagOutcome::SUCCEEDED;
        product.staging_rse = world_.site(dag.site).attached_rse;
        product.dag_id = dag.id;
        det["size"] = std::to_string(product.size);
        det["staging"] = product.staging_rse;
        world_.emit(EventKind::MERGE_DONE, dag.merge_job.job_id, std::move(det));
        ship_to_rcc(std::move(product), 1);
    }

    void ship_to_rcc(ProcessedDataset product, int attempt) {
        world_.emit(EventKind::SHIP_START, product.run_id,
                    {{"src", product.staging_rse}, {"dst", cfg_.rcc_rse}, {"attempt", std::to_string(attempt)}});
        const auto src = product.staging_rse;
        const auto size = product.size;
        world_.transfer(src, cfg_.rcc_rse, size, [this, product = std::move(product), attempt](bool ok) mutable {
            if (ok) {
                auto prev = processed_.find(product.run_id);
                const Bytes old = prev != processed_.end() && prev->second.location == ProcessedDataset::Location::RCC
                                      ? prev->second.size
                                      : 0;
                world_.release(cfg_.rcc_rse, old);
                try {
                    world_.reserve(cfg_.rcc_rse, product.size);
                } catch (const Error&) {
                    world_.reserve(cfg_.rcc_rse, old);
                    ok = false;
                }
                if (ok) {
                    // Arrival at RCC and removal of the staging copy are one event.
                    product.location = ProcessedDataset::Location::RCC;
                    auto& slot = processed_.insert_or_assign(product.run_id, product).first->second;
                    world_.emit(EventKind::SHIP_DONE, product.run_id,
                                {{"dst", cfg_.rcc_rse}, {"size", std::to_string(product.size)}});
                    if (hooks_.on_processed) hooks_.on_processed(slot);
                    return;
                }
            }
            world_.emit(EventKind::SHIP_FAIL, product.run_id, {{"attempt", std::to_string(attempt)}});
            const int max_retries = cfg_.max_retries;
            if (attempt <= max_retries)
                world_.schedule_in(cfg_.ship_retry_delay, [this, product = std::move(product), attempt]() mutable {
                    ship_to_rcc(std::move(product), attempt + 1);
                });
        });
    }

    World& world_;
    const Catalog& catalog_;
    const MetaDb& metadb_;
    ProcessorConfig cfg_;
    Hooks hooks_;
    std::uint64_t next_id_ = 1;
    std::map<std::uint64_t, ProcessingDag> dags_;
    std::map<std::string, SiteQueue> sites_;
    std::map<std::pair<std::uint64_t, int>, int> forced_;
    std::map<std::string, ProcessedDataset> processed_;
    std::map<std::string, MinitreeSet> minitrees_;
    std::vector<JobRecord> jobs_;
};

}  // namespace gridsafe
