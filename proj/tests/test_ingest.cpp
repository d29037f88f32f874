#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace gridsafe;
using namespace gridsafe::testing;

namespace {

int count(const World& w, EventKind k) {
    int n = 0;
    for (const auto& e : w.log()) n += e.kind == k;
    return n;
}

}  // namespace

TEST(Ingest, TwentyGigabyteRun) {
    World w;
    w.add_storage({"LNGS_BUFFER", Region::LNGS, StorageKind::BUFFER, 50'000'000'000'000});
    MetaDb db{w};
    Ingest in{w, db, "LNGS_BUFFER"};
    std::vector<std::string> arrived;
    in.set_on_arrival([&](const RunRecord& r) { arrived.push_back(r.run_id); });
    PlanEntry dm{Source::DARK_MATTER, true, {}, {}, 0, {}, 20000, 1'000'000};
    const auto rec = in.take_run(dm);
    ASSERT_TRUE(rec.has_value());
    EXPECT_EQ(rec->size, 20'000'000'000);
    EXPECT_EQ(rec->status, RunStatus::TAKING);
    EXPECT_EQ(w.storage("LNGS_BUFFER").used, 20'000'000'000);
    EXPECT_EQ(in.in_progress_bytes(), 20'000'000'000);
    w.run_until(kHour);
    EXPECT_EQ(db.record(rec->run_id).status, RunStatus::ON_BUFFER);
    EXPECT_EQ(arrived, (std::vector<std::string>{rec->run_id}));
    // The reservation is handed over to the arrival handler.
    EXPECT_EQ(in.in_progress_bytes(), 0);
}

TEST(Ingest, HaltWhenRunWouldOverflow) {
    World w;
    w.add_storage({"LNGS_BUFFER", Region::LNGS, StorageKind::BUFFER, 100});
    MetaDb db{w};
    Ingest in{w, db, "LNGS_BUFFER", 0.9};
    PlanEntry e{Source::LED, false, {}, {}, 0, {}, 10, 3};  // 30 bytes per run
    for (int i = 0; i < 3; ++i) EXPECT_TRUE(in.take_run(e).has_value());
    EXPECT_FALSE(in.take_run(e).has_value());  // 90 + 30 > 100
    EXPECT_TRUE(in.buffer_state().halted);
    EXPECT_EQ(count(w, EventKind::HALT), 1);
    EXPECT_FALSE(in.take_run(e).has_value());  // 90 is not below 90%: still halted, no second HALT
    EXPECT_EQ(count(w, EventKind::HALT), 1);
    EXPECT_EQ(in.skipped(), 2u);
    EXPECT_EQ(count(w, EventKind::RUN_SKIPPED), 2);
    EXPECT_LE(in.buffer_state().used, in.buffer_state().capacity);
    // Drain below 90% and the DAQ resumes.
    w.release("LNGS_BUFFER", 60);
    EXPECT_TRUE(in.take_run(e).has_value());
    EXPECT_EQ(count(w, EventKind::RESUME), 1);
    EXPECT_EQ(count(w, EventKind::HALT), 1);
    EXPECT_FALSE(in.buffer_state().halted);
}

TEST(Ingest, DrainCheck) {
    World w;
    w.add_storage({"LNGS_BUFFER", Region::LNGS, StorageKind::BUFFER, 100});
    MetaDb db{w};
    Ingest in{w, db, "LNGS_BUFFER"};
    auto rep = in.drain_check([](const std::string&) { return true; });
    EXPECT_EQ(rep.used, 0);
    EXPECT_TRUE(rep.purge_eligible_runs.empty());
    in.set_on_arrival([&](const RunRecord& r) { db.upsert_location(r.run_id, "LNGS_BUFFER"); });
    PlanEntry e{Source::LED, false, {}, {}, 0, {}, 10, 1};
    in.take_run(e);
    in.take_run(e);
    w.run_until(kHour);
    rep = in.drain_check([](const std::string& run) { return run == "run_000002"; });
    EXPECT_EQ(rep.purge_eligible_runs, (std::vector<std::string>{"run_000002"}));
}

TEST(Ingest, PlanTimes) {
    RunPlan plan{{}, 100, kDay};
    PlanEntry e{Source::LED, false, 4.0, {}, 0, {}, 1, 1};
    EXPECT_EQ(take_times(e, plan), (std::vector<Seconds>{100, 100 + 21600, 100 + 43200, 100 + 64800}));
    e.count = 2;
    EXPECT_EQ(take_times(e, plan).size(), 2u);
    PlanEntry x{Source::LED, false, {}, {}, 0, {5, 1, kDay}, 1, 1};
    EXPECT_EQ(take_times(x, plan), (std::vector<Seconds>{101, 105}));
}

TEST(Ingest, SchedulePlanTakesEveryRun) {
    World w;
    w.add_storage({"LNGS_BUFFER", Region::LNGS, StorageKind::BUFFER, 1'000'000});
    MetaDb db{w};
    Ingest in{w, db, "LNGS_BUFFER"};
    RunPlan plan{{{Source::LED, false, 24.0, {}, 0, {}, 10, 10}, {Source::KR83M, true, 2.0, {}, 0, {}, 10, 10}},
                 0,
                 kDay};
    in.schedule_plan(plan);
    w.run_until(2 * kDay);
    EXPECT_EQ(in.planned(), 26u);
    EXPECT_EQ(in.taken(), 26u);
    EXPECT_EQ(count(w, EventKind::INGEST), 26);
}
