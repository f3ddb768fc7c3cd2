"""Regenerate ``src/optbranch/data/sce56.json`` from the transcribed feeder table.

The three blocks below are copied row by row from the standard 56-bus SCE
feeder table (line data, peak load data, shunt capacitors).  Keeping the raw
rows here makes transcription typos auditable: diff this file, rerun it, and
compare the checksum printed at the end with ``sce56.sha256``.

Usage::

    python scripts/make_sce56.py
"""

import hashlib
import json
from pathlib import Path

# from  to  R(ohm)  X(ohm)
LINES = """
1 2 0.160 0.388
2 3 0.824 0.315
2 4 0.144 0.349
4 5 1.026 0.421
4 6 0.741 0.466
4 7 0.528 0.468
7 8 0.358 0.314
8 9 2.032 0.798
8 10 0.502 0.441
10 11 0.372 0.327
11 12 1.431 0.999
11 13 0.429 0.377
13 14 0.671 0.257
13 15 0.457 0.401
15 16 1.008 0.385
15 17 0.153 0.134
17 18 0.971 0.722
18 19 1.885 0.721
4 20 0.138 0.334
20 21 0.251 0.096
21 22 1.818 0.695
20 23 0.225 0.542
23 24 0.127 0.028
23 25 0.284 0.687
25 26 0.171 0.414
26 27 0.414 0.386
27 28 0.210 0.196
28 29 0.395 0.369
29 30 0.248 0.232
30 31 0.279 0.260
26 32 0.205 0.495
32 33 0.263 0.073
32 34 0.071 0.171
34 35 0.625 0.273
34 36 0.510 0.209
36 37 2.018 0.829
34 38 1.062 0.406
38 39 0.610 0.238
39 40 2.349 0.964
34 41 0.115 0.278
41 42 0.159 0.384
42 43 0.934 0.383
42 44 0.506 0.163
42 45 0.095 0.195
42 46 1.915 0.769
41 47 0.157 0.379
47 48 1.641 0.670
47 49 0.081 0.196
49 50 1.727 0.709
49 51 0.112 0.270
51 52 0.674 0.275
51 53 0.070 0.170
53 54 2.041 0.780
53 55 0.813 0.334
53 56 0.141 0.340
32 1 0.085 0.278
"""

# bus  peak MW
LOADS = """
3 0.057
5 0.121
6 0.049
7 0.053
8 0.047
9 0.068
10 0.048
11 0.067
12 0.094
14 0.057
16 0.053
17 0.057
18 0.112
19 0.087
22 0.063
24 0.135
25 0.100
27 0.048
28 0.038
29 0.044
31 0.053
32 0.223
33 0.123
34 0.067
35 0.094
36 0.097
37 0.281
38 0.117
39 0.131
40 0.030
41 0.046
42 0.054
43 0.083
44 0.057
45 0
46 0.134
47 0.045
48 0.196
50 0.045
52 0.315
54 0.061
55 0.055
56 0.130
"""

# bus  Mvar
SHUNTS = """
19 0.6
21 0.6
30 0.6
53 0.6
"""

SUBSTATION = 1
TIE = (32, 1)
V_LOAD = (0.97, 1.03)


def _rows(block):
    return [line.split() for line in block.strip().splitlines()]


def build():
    loads = {int(b): float(mw) for b, mw in _rows(LOADS)}
    shunts = {int(b): float(mvar) for b, mvar in _rows(SHUNTS)}
    lines = [(int(a), int(b), float(r), float(x)) for a, b, r, x in _rows(LINES)]
    ids = sorted({a for a, *_ in lines} | {b for _, b, *_ in lines})

    buses = []
    for i in ids:
        if i == SUBSTATION:
            buses.append({"id": i, "kind": "substation", "v_min_pu": 1.0, "v_max_pu": 1.0})
            continue
        bus = {
            "id": i,
            "kind": "load",
            "p_demand_mw": loads.get(i, 0.0),
            "v_min_pu": V_LOAD[0],
            "v_max_pu": V_LOAD[1],
        }
        if i in shunts:
            bus["shunt_cap_mvar"] = shunts[i]
        buses.append(bus)

    return {
        "schema_version": 1,
        "name": "sce56",
        "base": {"v_base_kv": 12.0, "s_base_mva": 1.0},
        "buses": buses,
        "lines": [
            {
                "from": a,
                "to": b,
                "r_ohm": r,
                "x_ohm": x,
                "switch": "open" if (a, b) == TIE else "closed",
            }
            for a, b, r, x in lines
        ],
    }


def main():
    out = Path(__file__).resolve().parents[1] / "src" / "optbranch" / "data"
    text = json.dumps(build(), indent=1) + "\n"
    (out / "sce56.json").write_text(text)
    digest = hashlib.sha256(text.encode()).hexdigest()
    (out / "sce56.sha256").write_text(digest + "\n")
    print(digest)


if __name__ == "__main__":
    main()
