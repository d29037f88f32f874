#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "core.hpp"
#include "simgrid.hpp"

namespace gridsafe {

/// Renders value/unit exactly (unit is a power of ten), with at least two
/// decimals and trailing zeros beyond that trimmed.
inline std::string format_scaled(Bytes value, Bytes unit) {
    int digits = 0;
    for (Bytes u = unit; u > 1; u /= 10) ++digits;
    const bool neg = value < 0;
    const auto v = static_cast<unsigned long long>(neg ? -value : value);
    const auto u = static_cast<unsigned long long>(unit);
    std::string frac = digits == 0 ? "" : std::to_string(v % u);
    frac.insert(0, static_cast<std::size_t>(digits) - frac.size(), '0');
    while (frac.size() > 2 && frac.back() == '0') frac.pop_back();
    while (frac.size() < 2) frac.push_back('0');
    return (neg ? "-" : "") + std::to_string(v / u) + "." + frac;
}

struct AccountingRow {
    Source source;
    Bytes total = 0;
    Bytes science = 0;
};

struct AccountingReport {
    std::vector<AccountingRow> rows;  // one per source, enum order

    // Totals are always derived from the rows.
    Bytes grand_total() const {
        Bytes s = 0;
        for (const auto& r : rows) s += r.total;
        return s;
    }
    Bytes grand_science() const {
        Bytes s = 0;
        for (const auto& r : rows) s += r.science;
        return s;
    }
    const AccountingRow& row(Source s) const { return rows.at(static_cast<std::size_t>(s)); }
};

inline AccountingReport accounting_from_log(const std::vector<LogEntry>& log) {
    AccountingReport rep;
    for (auto s : kAllSources) rep.rows.push_back({s, 0, 0});
    for (const auto& e : log) {
        if (e.kind != EventKind::INGEST) continue;
        const auto src = parse_source(e.at("source"));
        if (!src) throw Error(Errc::PARSE_ERROR, "unknown source in log: " + e.at("source"));
        auto& row = rep.rows[static_cast<std::size_t>(*src)];
        const Bytes size = std::stoll(e.at("size"));
        row.total += size;
        if (e.at("science") == "1") row.science += size;
    }
    return rep;
}

inline std::string accounting_csv(const AccountingReport& rep, Bytes unit) {
    std::string out = "source,total_bytes,science_bytes,total_scaled,science_scaled\n";
    auto line = [&](std::string_view name, Bytes total, Bytes science) {
        out += std::string(name) + "," + std::to_string(total) + "," + std::to_string(science) + "," +
               format_scaled(total, unit) + "," + format_scaled(science, unit) + "\n";
    };
    for (const auto& r : rep.rows) line(to_string(r.source), r.total, r.science);
    line("TOTAL", rep.grand_total(), rep.grand_science());
    return out;
}

/// "YYYY-MM" of epoch (a "YYYY-MM-DD" date) plus t seconds.
inline std::string month_of(const std::string& epoch, Seconds t) {
    int y = 0;
    unsigned m = 0, d = 0;
    if (std::sscanf(epoch.c_str(), "%d-%u-%u", &y, &m, &d) != 3)
        throw Error(Errc::PARSE_ERROR, "bad epoch: " + epoch);
    using namespace std::chrono;
    const year_month_day start{year{y}, month{m}, day{d}};
    if (!start.ok()) throw Error(Errc::PARSE_ERROR, "bad epoch: " + epoch);
    const year_month_day now{floor<days>(sys_days{start} + seconds{t})};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u", static_cast<int>(now.year()), static_cast<unsigned>(now.month()));
    return buf;
}

struct WallHoursRow {
    std::string month;
    std::string site;
    std::string pool;
    Seconds wall_seconds = 0;
};

/// Every finished job attempt (successful, failed or merge) charges its
/// runtime to the month in which it started.
inline std::vector<WallHoursRow> wall_hours_from_log(const std::vector<LogEntry>& log, const std::string& epoch) {
    std::map<std::tuple<std::string, std::string, std::string>, Seconds> acc;
    for (const auto& e : log) {
        if (e.kind != EventKind::JOB_DONE && e.kind != EventKind::JOB_FAIL && e.kind != EventKind::MERGE_DONE)
            continue;
        const Seconds start = std::stoll(e.at("start"));
        acc[{month_of(epoch, start), e.at("site"), e.at("pool")}] += std::stoll(e.at("runtime"));
    }
    std::vector<WallHoursRow> rows;
    for (const auto& [k, secs] : acc) rows.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), secs});
    return rows;
}

inline std::string wall_hours_csv(const std::vector<WallHoursRow>& rows) {
    std::string out = "month,site,pool,wall_seconds,wall_hours\n";
    char hours[64];
    for (const auto& r : rows) {
        std::snprintf(hours, sizeof hours, "%.6f", static_cast<double>(r.wall_seconds) / 3600.0);
        out += r.month + "," + r.site + "," + r.pool + "," + std::to_string(r.wall_seconds) + "," + hours + "\n";
    }
    return out;
}

}  // namespace gridsafe
