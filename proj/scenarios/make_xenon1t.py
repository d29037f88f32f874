#!/usr/bin/env python3
"""Writes xenon1t.cfg: first science run ingest volumes scaled TB -> MB (1 TB -> 1e6 bytes).

Each run has 10000 events; bytes_per_event carries the run size in units of
0.01 MB-scaled, so every category total is an exact integer number of bytes.
"""
import json
import sys

# (source, total, science) in TB, as printed per row
VOLUMES = [
    ("DARK_MATTER", "414.69", "232.64"),
    ("LED", "37.37", "0.0"),
    ("CS137", "8.47", "0.36"),
    ("KR83M", "62.25", "29.9"),
    ("RN220", "91.14", "25.64"),
    ("AMBE241", "68.71", "62.54"),
    ("TH228", "3.01", "0.0"),
    ("NEUTRON_GENERATOR", "54.5", "10.94"),
    ("MUON_VETO", "2.73", "0.0"),
]

DAY = 86400
EVENTS = 10000
TARGET_CENTS = 500          # about 5 MB-scaled per run
PLAN_DAYS = 124
TAIL_DAYS = 16


def cents(s):
    whole, _, frac = s.partition(".")
    return int(whole) * 100 + int((frac + "00")[:2])


def split(total):
    """n-1 runs of size s and one run of s + remainder."""
    n = max(1, round(total / TARGET_CENTS))
    s = total // n
    return [s] * (n - 1) + [s + total - s * n]


def main(out):
    runs = []  # (source, science, cents)
    for src, tot, sci in VOLUMES:
        t, s = cents(tot), cents(sci)
        for science, amount in ((True, s), (False, t - s)):
            if amount > 0:
                runs += [(src, science, c) for c in split(amount)]
    # Deterministic interleave so categories are spread over the plan.
    runs.sort(key=lambda r: (r[2] * 7919 + len(r[0]) * 31 + r[1]) % 1009)
    step = PLAN_DAYS * DAY // len(runs)
    entries = {}
    for i, (src, science, c) in enumerate(runs):
        e = entries.setdefault((src, science, c), {
            "source": src, "science": science, "events_per_run": EVENTS,
            "bytes_per_event": c, "times": []})
        e["times"].append(i * step)

    eu = ["CNAF", "CCIN2P3", "NIKHEF", "SURFSARA", "WEIZMANN"]
    disks = ["UC_DCACHE"] + eu
    rses = [
        {"id": "LNGS_BUFFER", "region": "LNGS", "kind": "BUFFER", "capacity": 50_000_000},
        {"id": "LNGS_TAPE", "region": "LNGS", "kind": "TAPE"},
        {"id": "UC_DCACHE", "region": "US", "kind": "DISK", "capacity": 2_000_000_000},
        {"id": "RCC", "region": "US", "kind": "ANALYSIS", "capacity": 2_000_000_000},
    ] + [{"id": r, "region": "EUROPE", "kind": "DISK", "capacity": 1_000_000_000} for r in eu]
    links = [{"src": "LNGS_BUFFER", "dst": "LNGS_TAPE", "bandwidth": 1000, "latency": 2},
             {"src": "LNGS_TAPE", "dst": "LNGS_BUFFER", "bandwidth": 1000, "latency": 2}]
    for d in disks:
        links.append({"src": "LNGS_BUFFER", "dst": d, "bandwidth": 2000, "latency": 5})
        links.append({"src": "LNGS_TAPE", "dst": d, "bandwidth": 1000, "latency": 5})
        links.append({"src": d, "dst": "RCC", "bandwidth": 2000, "latency": 5})
        for o in disks:
            if o != d:
                links.append({"src": d, "dst": o, "bandwidth": 2000, "latency": 5})
    sites = [
        {"id": "OSG_UCHICAGO", "pool": "OSG", "attached_rse": "UC_DCACHE", "slots": 40,
         "job_failure_prob": 0.05, "throughput": 50},
        {"id": "EGI_CNAF", "pool": "EGI", "attached_rse": "CNAF", "slots": 20,
         "job_failure_prob": 0.05, "throughput": 50},
        {"id": "EGI_CCIN2P3", "pool": "EGI", "attached_rse": "CCIN2P3", "slots": 20,
         "job_failure_prob": 0.05, "throughput": 50},
        {"id": "EGI_NIKHEF", "pool": "EGI", "attached_rse": "NIKHEF", "slots": 20,
         "job_failure_prob": 0.05, "throughput": 50},
        {"id": "EGI_SURFSARA", "pool": "EGI", "attached_rse": "SURFSARA", "slots": 20,
         "job_failure_prob": 0.05, "throughput": 50},
        {"id": "EGI_WEIZMANN", "pool": "EGI", "attached_rse": "WEIZMANN", "slots": 20,
         "job_failure_prob": 0.05, "throughput": 50},
    ]
    doc = {
        "seed": 20161101,
        "duration": (PLAN_DAYS + TAIL_DAYS) * DAY,
        "epoch": "2016-11-01",
        "report_unit": 1_000_000,
        "rses": rses,
        "links": links,
        "sites": sites,
        "run_plan": {"start": 0, "duration": PLAN_DAYS * DAY, "entries": list(entries.values())},
        "policy": {"chunk_size": 100, "lngs_lifetime": 4 * DAY, "max_retries": 3,
                   "reduction_ratio": 0.1, "minitree_ratio": 0.001,
                   "mirror_lags": {"CHICAGO": 60, "STOCKHOLM": 60},
                   "science_rse": "UC_DCACHE"},
    }
    with open(out, "w") as f:
        f.write("// First science run ingest volumes, scaled TB -> MB (report_unit 1e6 bytes).\n")
        f.write("// Generated by make_xenon1t.py.\n")
        json.dump(doc, f, indent=1)
        f.write("\n")
    print(f"{len(runs)} runs, step {step}s", file=sys.stderr)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "xenon1t.cfg")
