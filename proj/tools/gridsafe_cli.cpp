#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gridsafe/gridsafe.hpp"

namespace fs = std::filesystem;
using namespace gridsafe;

namespace {

enum Exit { kOk = 0, kUsage = 1, kViolation = 2, kRefused = 3 };

struct Globals {
    std::string scenario;
    std::optional<std::uint64_t> seed;
    std::optional<Seconds> until;
    std::string out = ".";
};

std::optional<Scenario> load(const Globals& g) {
    if (g.scenario.empty()) {
        std::cerr << "error: --scenario is required\n";
        return std::nullopt;
    }
    auto res = load_scenario(g.scenario);
    for (const auto& e : res.errors) std::cerr << e << '\n';
    return res.scenario;
}

struct Run {
    std::unique_ptr<Facility> facility;
    std::vector<Violation> violations;
};

Run simulate(const Scenario& sc, const Globals& g) {
    Run r;
    r.facility = std::make_unique<Facility>(sc, g.seed);
    r.facility->run_until(g.until.value_or(sc.duration));
    auto& w = r.facility->world();
    auto auditor = TraceAuditor::for_world(w.storages(), r.facility->buffer_rse(), sc.policy.max_retries);
    r.violations = auditor.audit(w.log());
    return r;
}

void report_violations(const std::vector<Violation>& vs) {
    for (const auto& v : vs)
        std::cerr << "VIOLATION t=" << v.t << " " << v.rule << " " << v.subject << ": " << v.message << '\n';
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    os << text;
    if (!os) throw std::runtime_error("cannot write " + p.string());
}

std::string dump_runs(const MetaDb& db) {
    std::ostringstream os;
    db.dump_jsonl(os);
    return os.str();
}

std::string dump_log(const std::vector<LogEntry>& log) {
    std::ostringstream os;
    write_jsonl(os, log);
    return os.str();
}

std::vector<LogEntry> read_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::PARSE_ERROR, "cannot open " + path);
    return read_jsonl(in);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gridsafe: replicated data management simulator"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--scenario", g.scenario, "scenario file");
    app.add_option("--seed", g.seed, "override the scenario seed");
    app.add_option("--until", g.until, "simulated end time in seconds (default: scenario duration)");
    app.add_option("--out", g.out, "output directory for simulate");

    auto* validate = app.add_subcommand("validate", "check a scenario file");
    auto* simulate_cmd = app.add_subcommand("simulate", "run a scenario and write reports");

    auto* report = app.add_subcommand("report", "print a report");
    report->require_subcommand(1);
    std::string log_path;
    std::string epoch_opt;
    Bytes unit_opt = 1'000'000;
    auto* rep_acc = report->add_subcommand("accounting", "ingested bytes per source category");
    rep_acc->add_option("--log", log_path, "read an existing event log instead of simulating");
    rep_acc->add_option("--unit", unit_opt, "scaling unit when reading a log without a scenario");
    auto* rep_wall = report->add_subcommand("wall-hours", "processing wall-hours per month and site");
    rep_wall->add_option("--log", log_path, "read an existing event log instead of simulating");
    rep_wall->add_option("--epoch", epoch_opt, "calendar date of t=0 when reading a log without a scenario");
    auto* rep_replicas = report->add_subcommand("replicas", "final replica catalogue");
    auto* rep_runs = report->add_subcommand("runs", "final run records");

    auto* purge = app.add_subcommand("purge", "check or perform a purge after simulating");
    std::string purge_ds, purge_rse;
    bool dry_run = false, any_rse = false;
    purge->add_option("--dataset", purge_ds)->required();
    purge->add_option("--rse", purge_rse)->required();
    purge->add_flag("--dry-run", dry_run);
    purge->add_flag("--allow-any-rse", any_rse);

    auto* verify = app.add_subcommand("verify-tape", "re-verify tape copies after simulating");
    std::string verify_ds;
    verify->add_option("--dataset", verify_ds, "only this dataset");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (validate->parsed()) {
            auto res = g.scenario.empty() ? ValidationResult{std::nullopt, {"error: --scenario is required"}}
                                          : load_scenario(g.scenario);
            for (const auto& e : res.errors) std::cerr << e << '\n';
            if (!res.ok()) return kUsage;
            const auto& sc = *res.scenario;
            std::cout << "OK rses=" << sc.rses.size() << " links=" << sc.links.size() << " sites=" << sc.sites.size()
                      << " plan_entries=" << sc.run_plan.entries.size() << '\n';
            return kOk;
        }

        // Reports over an existing log need no scenario.
        if ((rep_acc->parsed() || rep_wall->parsed()) && !log_path.empty()) {
            const auto log = read_log(log_path);
            std::optional<Scenario> sc;
            if (!g.scenario.empty() && !(sc = load(g))) return kUsage;
            if (rep_acc->parsed())
                std::cout << accounting_csv(accounting_from_log(log), sc ? sc->report_unit : unit_opt);
            else
                std::cout << wall_hours_csv(
                    wall_hours_from_log(log, sc ? sc->epoch : (epoch_opt.empty() ? Scenario{}.epoch : epoch_opt)));
            return kOk;
        }

        const auto sc = load(g);
        if (!sc) return kUsage;
        auto run = simulate(*sc, g);
        auto& f = *run.facility;
        const auto& log = f.world().log();

        if (simulate_cmd->parsed()) {
            const fs::path dir(g.out);
            fs::create_directories(dir);
            write_file(dir / "events.jsonl", dump_log(log));
            write_file(dir / "accounting.csv", accounting_csv(accounting_from_log(log), sc->report_unit));
            write_file(dir / "wall_hours.csv", wall_hours_csv(wall_hours_from_log(log, sc->epoch)));
            write_file(dir / "replicas.json", f.catalog().dump_json().dump(2) + "\n");
            write_file(dir / "runs.jsonl", dump_runs(f.metadb()));
            const auto& in = f.ingest();
            std::cout << "simulated t=" << f.world().now() << " events=" << log.size() << " runs=" << in.taken()
                      << " skipped=" << in.skipped() << " halts=" << in.halts()
                      << " violations=" << run.violations.size() << '\n';
            report_violations(run.violations);
            return run.violations.empty() ? kOk : kViolation;
        }

        report_violations(run.violations);
        if (rep_acc->parsed()) {
            std::cout << accounting_csv(accounting_from_log(log), sc->report_unit);
        } else if (rep_wall->parsed()) {
            std::cout << wall_hours_csv(wall_hours_from_log(log, sc->epoch));
        } else if (rep_replicas->parsed()) {
            std::cout << f.catalog().dump_json().dump(2) << '\n';
        } else if (rep_runs->parsed()) {
            std::cout << dump_runs(f.metadb());
        } else if (purge->parsed()) {
            if (!f.catalog().has_dataset(purge_ds)) {
                std::cerr << "UNKNOWN_DATASET: " << purge_ds << '\n';
                return kUsage;
            }
            try {
                if (dry_run) {
                    if (purge_rse != f.buffer_rse() && !any_rse) throw PurgeRefused(purge_ds + "@" + purge_rse, {PurgeReason::NOT_BUFFER});
                    const auto e = f.policy().purge_eligible(purge_ds, purge_rse);
                    if (!e.eligible) throw PurgeRefused(purge_ds + "@" + purge_rse, e.reasons);
                    std::cout << "ELIGIBLE " << purge_ds << " at " << purge_rse << '\n';
                } else {
                    f.policy().purge(purge_ds, purge_rse, any_rse);
                    std::cout << "PURGED " << purge_ds << " at " << purge_rse << '\n';
                }
            } catch (const PurgeRefused& e) {
                std::cout << "REFUSED " << e.what() << '\n';
                return kRefused;
            } catch (const Error& e) {
                if (e.code() != Errc::NO_REPLICA_AT_RSE) throw;
                std::cout << "REFUSED " << e.what() << " [NO_REPLICA]\n";
                return kRefused;
            }
        } else if (verify->parsed()) {
            std::cout << "dataset,ok\n";
            int bad = 0;
            for (const auto& [id, rec] : f.tape().records()) {
                if (!verify_ds.empty() && id != verify_ds) continue;
                const bool ok = f.tape().verify(id);
                bad += !ok;
                std::cout << id << ',' << (ok ? 1 : 0) << '\n';
            }
            if (!verify_ds.empty() && !f.tape().record(verify_ds)) {
                std::cerr << "NOT_ARCHIVED: " << verify_ds << '\n';
                return kUsage;
            }
            std::cerr << "mismatches=" << bad << '\n';
        }
        return run.violations.empty() ? kOk : kViolation;
    } catch (const Error& e) {
        std::cerr << to_string(e.code()) << ": " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
}
