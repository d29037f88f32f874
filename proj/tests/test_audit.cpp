#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace gridsafe;

namespace {

TraceAuditor auditor() {
    return TraceAuditor({{"LNGS_BUFFER", StorageKind::BUFFER},
                         {"LNGS_TAPE", StorageKind::TAPE},
                         {"CNAF", StorageKind::DISK},
                         {"NIKHEF", StorageKind::DISK},
                         {"RCC", StorageKind::ANALYSIS}},
                        "LNGS_BUFFER", 1);
}

LogEntry ev(Seconds t, EventKind k, std::string subject, Detail d = {}) {
    return LogEntry{t, k, std::move(subject), std::move(d)};
}

std::vector<LogEntry> safe_prefix() {
    return {ev(0, EventKind::REGISTER, "d", {{"rse", "LNGS_BUFFER"}, {"state", "AVAILABLE"}}),
            ev(0, EventKind::ARCHIVE_START, "d"),
            ev(0, EventKind::TRANSFER_START, "d", {{"dst", "CNAF"}}),
            ev(5, EventKind::ARCHIVE_DONE, "d"),
            ev(5, EventKind::TAPE_VERIFY, "d", {{"ok", "1"}}),
            ev(9, EventKind::TRANSFER_DONE, "d", {{"dst", "CNAF"}, {"state", "AVAILABLE"}})};
}

std::set<std::string> rules(const std::vector<Violation>& vs) {
    std::set<std::string> out;
    for (const auto& v : vs) out.insert(v.rule);
    return out;
}

}  // namespace

TEST(Audit, GatedPurgeIsClean) {
    auto log = safe_prefix();
    log.push_back(ev(10, EventKind::PURGE, "d", {{"rse", "LNGS_BUFFER"}}));
    EXPECT_TRUE(auditor().audit(log).empty());
}

TEST(Audit, PurgeWithoutOffsiteCopy) {
    auto log = safe_prefix();
    log.pop_back();
    log.push_back(ev(10, EventKind::PURGE, "d", {{"rse", "LNGS_BUFFER"}}));
    const auto vs = auditor().audit(log);
    EXPECT_TRUE(rules(vs).count("purge-gate"));
}

TEST(Audit, PurgeWithCorruptTape) {
    auto log = safe_prefix();
    log.push_back(ev(10, EventKind::TAPE_CORRUPT, "d"));
    log.push_back(ev(10, EventKind::PURGE, "d", {{"rse", "LNGS_BUFFER"}}));
    EXPECT_TRUE(rules(auditor().audit(log)).count("purge-gate"));
}

TEST(Audit, LastCopyLost) {
    auto log = safe_prefix();
    log.push_back(ev(10, EventKind::TAPE_CORRUPT, "d"));
    log.push_back(ev(11, EventKind::PURGE, "d", {{"rse", "LNGS_BUFFER"}}));
    log.push_back(ev(12, EventKind::PURGE, "d", {{"rse", "CNAF"}}));
    const auto r = rules(auditor().audit(log));
    EXPECT_TRUE(r.count("last-copy"));
}

TEST(Audit, TimeGoingBackwards) {
    auto log = safe_prefix();
    log.push_back(ev(3, EventKind::STATUS, "r"));
    EXPECT_TRUE(rules(auditor().audit(log)).count("time-order"));
}

TEST(Audit, DoneWithoutStart) {
    std::vector<LogEntry> log{ev(1, EventKind::TRANSFER_DONE, "d", {{"dst", "CNAF"}, {"state", "AVAILABLE"}})};
    EXPECT_TRUE(rules(auditor().audit(log)).count("causality"));
}

TEST(Audit, MergeBarrier) {
    std::vector<LogEntry> log{
        ev(0, EventKind::DAG_SUBMIT, "dag-0", {{"nodes", "3"}}),
        ev(0, EventKind::JOB_START, "dag-0/c00000", {{"dag", "dag-0"}}),
        ev(0, EventKind::JOB_START, "dag-0/c00001", {{"dag", "dag-0"}}),
        ev(5, EventKind::JOB_DONE, "dag-0/c00000", {{"dag", "dag-0"}}),
        ev(5, EventKind::MERGE_START, "dag-0/merge", {{"dag", "dag-0"}}),
    };
    EXPECT_TRUE(rules(auditor().audit(log)).count("merge-barrier"));
}

TEST(Audit, RetryBound) {
    std::vector<LogEntry> log;
    for (int i = 0; i < 3; ++i) {
        log.push_back(ev(i, EventKind::JOB_START, "dag-0/c00000", {{"dag", "dag-0"}}));
        log.push_back(ev(i, EventKind::JOB_FAIL, "dag-0/c00000", {{"dag", "dag-0"}}));
    }
    // max_retries = 1 allows two attempts.
    EXPECT_TRUE(rules(auditor().audit(log)).count("retry-bound"));
}
