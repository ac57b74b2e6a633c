"""Generate synthetic_jst.csv: a JST-shaped panel with invented values.

Ten countries, 1870-1890, the five series the bundled studies read, and the
missing-data pattern of the real extract (no Swiss imports, no Finnish fiscal
series, Swiss expenditure missing in 1870). Sweden is built as a convex
combination of donors plus noise; its revenue share jumps after 1887.
The numbers are NOT historical data.
"""
import csv
import math
import random

rng = random.Random(1887)
YEARS = list(range(1870, 1891))
DONORS = ["BEL", "CAN", "DNK", "FIN", "NLD", "NOR", "CHE", "GBR", "USA"]
NAMES = {"SWE": "Sweden", "BEL": "Belgium", "CAN": "Canada", "DNK": "Denmark",
         "FIN": "Finland", "NLD": "Netherlands", "NOR": "Norway",
         "CHE": "Switzerland", "GBR": "UK", "USA": "USA"}
W = {
    "rgdppc": {"DNK": 0.217, "FIN": 0.436, "NOR": 0.173, "GBR": 0.003, "USA": 0.171},
    "imports": {"DNK": 0.365, "NLD": 0.102, "USA": 0.533},
    "revenue": {"BEL": 0.128, "CAN": 0.409, "DNK": 0.061, "NLD": 0.126, "GBR": 0.231, "USA": 0.045},
    "expenditure": {"DNK": 0.223, "NLD": 0.229, "NOR": 0.052, "GBR": 0.314, "USA": 0.182},
}


def wiggle(scale):
    a, b, phase = rng.uniform(0.3, 1.0) * scale, rng.uniform(0.4, 1.3), rng.uniform(0, 6.3)
    c, d = rng.uniform(-0.5, 0.5) * scale, rng.uniform(1.5, 2.5)
    return lambda t: a * math.sin(b * t + phase) + c * math.cos(d * t)


series = {}
for iso in DONORS:
    base, growth, wg = rng.uniform(4, 20), rng.uniform(0.003, 0.025), wiggle(0.03)
    gdp_scale = rng.uniform(500, 20000)
    shares = {}
    for name, lo, hi, slope in [("imports", 8, 35, 0.6), ("revenue", 3, 12, 0.15), ("expenditure", 4, 13, 0.15)]:
        level = rng.uniform(lo, hi) if not (name == "imports" and iso == "NLD") else 70.0
        s, w = rng.uniform(-slope, slope), wiggle(0.08 * level)
        shares[name] = (level, s, w)
    for t in YEARS:
        k = t - 1870
        rg = base * math.exp(growth * k) * (1 + wg(k))
        gdp = gdp_scale * rg * (1 + 0.01 * k)
        row = {"rgdppc": rg, "gdp": gdp}
        for name, (level, s, w) in shares.items():
            row[name] = (level + s * k + w(k)) * gdp / 100
        series[(iso, t)] = row

for t in YEARS:
    k = t - 1870
    gdp = 3000 * (1 + 0.02 * k)
    row = {"gdp": gdp}
    for name, weights in W.items():
        if name == "rgdppc":
            v = sum(w * series[(d, t)]["rgdppc"] for d, w in weights.items())
            row[name] = v * (1 + rng.gauss(0, 0.004))
        else:
            share = sum(w * 100 * series[(d, t)][name] / series[(d, t)]["gdp"] for d, w in weights.items())
            share += rng.gauss(0, 0.05 * share / 10)
            if name == "revenue" and t > 1887:
                share += 0.9
            row[name] = share * gdp / 100
    series[("SWE", t)] = row

with open("synthetic_jst.csv", "w", newline="") as f:
    out = csv.writer(f)
    out.writerow(["year", "country", "iso", "rgdppc", "gdp", "imports", "revenue", "expenditure"])
    for iso in ["SWE"] + DONORS:
        for t in YEARS:
            row = series[(iso, t)]
            cells = []
            for name in ["rgdppc", "gdp", "imports", "revenue", "expenditure"]:
                missing = (
                    (iso == "CHE" and name == "imports")
                    or (iso == "FIN" and name in ("revenue", "expenditure"))
                    or (iso == "CHE" and name == "expenditure" and t == 1870)
                )
                cells.append("" if missing else f"{row[name]:.6g}")
            out.writerow([t, NAMES[iso], iso] + cells)
