"""Regenerate the bundled feeder files in src/pdpf/data.

Topologies and segment lengths follow the IEEE 34- and 123-node radial test
feeders, collapsed to balanced positive-sequence equivalents. Regulators and
switches become short segments; the 34-node in-line transformer becomes a
direct impedance referred to the 24.9 kV base. Loads are representative
balanced values (scaled spot and distributed loads), not authoritative data.

Run from the repository root:  python scripts/build_feeder_data.py
"""

from __future__ import annotations

import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "pdpf" / "data"
FT_PER_MILE = 5280.0

# spacing ID 500: D_ab = 2.5 ft, D_bc = 4.5 ft, D_ca = 7.0 ft
SPACING_500 = round((2.5 * 4.5 * 7.0) ** (1.0 / 3.0), 6)

ACSR_1_0 = {"resistance": 1.120, "diameter": 0.398, "gmr": 0.00446}
ACSR_2 = {"resistance": 1.690, "diameter": 0.316, "gmr": 0.00418}
ACSR_4 = {"resistance": 2.550, "diameter": 0.257, "gmr": 0.00452}


def conductor(kind: dict) -> dict:
    return dict(kind, equivalent_spacing=SPACING_500)


# ---------------------------------------------------------------- 34 node

IEEE34_ORDER = [
    800, 802, 806, 808, 810, 812, 814, 850, 816, 818, 820, 822, 824, 826, 828,
    830, 854, 856, 852, 832, 888, 890, 858, 864, 834, 842, 844, 846, 848, 860,
    836, 840, 862, 838,
]

# (from, to, length ft, conductor)
IEEE34_LINES = [
    (800, 802, 2580, ACSR_1_0), (802, 806, 1730, ACSR_1_0),
    (806, 808, 32230, ACSR_1_0), (808, 810, 5804, ACSR_4),
    (808, 812, 37500, ACSR_1_0), (812, 814, 29730, ACSR_1_0),
    (814, 850, 10, ACSR_2), (850, 816, 310, ACSR_2),
    (816, 818, 1710, ACSR_4), (818, 820, 48150, ACSR_4),
    (820, 822, 13740, ACSR_4), (816, 824, 10210, ACSR_2),
    (824, 826, 3030, ACSR_4), (824, 828, 840, ACSR_2),
    (828, 830, 20440, ACSR_2), (830, 854, 520, ACSR_2),
    (854, 856, 23330, ACSR_4), (854, 852, 36830, ACSR_2),
    (852, 832, 10, ACSR_2), (832, 858, 4900, ACSR_2),
    (858, 864, 1620, ACSR_4), (858, 834, 5830, ACSR_2),
    (834, 842, 280, ACSR_2), (842, 844, 1350, ACSR_2),
    (844, 846, 3640, ACSR_2), (846, 848, 530, ACSR_2),
    (834, 860, 2020, ACSR_2), (860, 836, 2680, ACSR_2),
    (836, 840, 860, ACSR_2), (836, 862, 280, ACSR_2),
    (862, 838, 4860, ACSR_4), (888, 890, 10560, ACSR_1_0),
]

# balanced per-node loads (kW, kvar): spot loads plus lumped distributed load
IEEE34_LOADS = {
    802: (55, 29), 806: (55, 29), 808: (16, 8), 810: (16, 8), 812: (10, 5),
    814: (10, 5), 816: (5, 2), 818: (34, 17), 820: (135, 70), 822: (135, 70),
    824: (40, 20), 826: (40, 20), 828: (7, 3), 830: (45, 20), 854: (4, 2),
    856: (4, 2), 852: (8, 4), 832: (8, 4), 858: (15, 8), 864: (2, 1),
    834: (32, 17), 842: (9, 5), 844: (135, 105), 846: (45, 23), 848: (68, 53),
    860: (76, 48), 836: (43, 22), 840: (47, 31), 862: (28, 14), 838: (28, 14),
    888: (0, 0), 890: (450, 225),
}
IEEE34_LOAD_SCALE = 0.42

# 500 kVA, 1.9 + j4.08 % transformer 832-888 referred to 24.9 kV
XFMR_R_OHM = 0.019 * 24.9**2 * 1000 / 500
XFMR_X_OHM = 0.0408 * 24.9**2 * 1000 / 500

IEEE34_KINDS = {828: "station-host", 810: "station-host", 846: "station-host"}


def build_34() -> dict:
    relabel = {old: k + 1 for k, old in enumerate(IEEE34_ORDER)}
    nodes = []
    for old in IEEE34_ORDER:
        p, q = IEEE34_LOADS.get(old, (0, 0))
        kind = "slack" if old == 800 else IEEE34_KINDS.get(old, "residential")
        nodes.append({
            "id": relabel[old],
            "label": str(old),
            "p_kw": round(p * IEEE34_LOAD_SCALE, 3) if kind != "slack" else 0.0,
            "q_kvar": round(q * IEEE34_LOAD_SCALE, 3) if kind != "slack" else 0.0,
            "kind": kind,
        })
    branches = [
        {"from": relabel[a], "to": relabel[b], "conductor": conductor(c),
         "length_mi": round(ft / FT_PER_MILE, 6)}
        for a, b, ft, c in IEEE34_LINES
    ]
    branches.append({"from": relabel[832], "to": relabel[888],
                     "r_ohm": round(XFMR_R_OHM, 6), "x_ohm": round(XFMR_X_OHM, 6)})
    branches.sort(key=lambda b: (b["from"], b["to"]))
    return {
        "name": "feeder34",
        "description": "Balanced 34-node radial feeder (IEEE 34-node topology, representative loads).",
        "bases": {"s_kva": 1000.0, "v_kv": 24.9, "slack_v_pu": 1.0},
        "nodes": nodes,
        "branches": branches,
    }


# ---------------------------------------------------------------- 123 node

IEEE123_LINES = [
    (1, 2, 175), (1, 3, 250), (1, 7, 300), (3, 4, 200), (3, 5, 325), (5, 6, 250),
    (7, 8, 200), (8, 12, 225), (8, 9, 225), (8, 13, 300), (9, 14, 425),
    (13, 34, 150), (13, 18, 825), (14, 11, 250), (14, 10, 250), (15, 16, 375),
    (15, 17, 350), (18, 19, 250), (18, 21, 300), (19, 20, 325), (21, 22, 525),
    (21, 23, 250), (23, 24, 550), (23, 25, 275), (25, 26, 350), (25, 28, 200),
    (26, 27, 275), (26, 31, 225), (27, 33, 500), (28, 29, 300), (29, 30, 350),
    (30, 250, 200), (31, 32, 300), (34, 15, 100), (35, 36, 650), (35, 40, 250),
    (36, 37, 300), (36, 38, 250), (38, 39, 325), (40, 41, 325), (40, 42, 250),
    (42, 43, 500), (42, 44, 200), (44, 45, 200), (44, 47, 250), (45, 46, 300),
    (47, 48, 150), (47, 49, 250), (49, 50, 250), (50, 51, 250), (52, 53, 200),
    (53, 54, 125), (54, 55, 275), (54, 57, 350), (55, 56, 275), (57, 58, 250),
    (57, 60, 750), (58, 59, 250), (60, 61, 550), (60, 62, 250), (62, 63, 175),
    (63, 64, 350), (64, 65, 425), (65, 66, 325), (67, 68, 200), (67, 72, 275),
    (67, 97, 250), (68, 69, 275), (69, 70, 325), (70, 71, 275), (72, 73, 275),
    (72, 76, 200), (73, 74, 350), (74, 75, 400), (76, 77, 400), (76, 86, 700),
    (77, 78, 100), (78, 79, 225), (78, 80, 475), (80, 81, 475), (81, 82, 250),
    (81, 84, 675), (82, 83, 250), (84, 85, 475), (86, 87, 450), (87, 88, 175),
    (87, 89, 275), (89, 90, 225), (89, 91, 225), (91, 92, 300), (91, 93, 225),
    (93, 94, 275), (93, 95, 300), (95, 96, 200), (97, 98, 275), (98, 99, 550),
    (99, 100, 300), (100, 450, 800), (101, 102, 225), (101, 105, 275),
    (102, 103, 325), (103, 104, 700), (105, 106, 225), (105, 108, 325),
    (106, 107, 575), (108, 109, 450), (108, 300, 1000), (109, 110, 300),
    (110, 111, 575), (110, 112, 125), (112, 113, 525), (113, 114, 325),
    (135, 35, 375), (149, 1, 400), (152, 52, 400), (160, 67, 350),
    (197, 101, 250),
    # closed switches and the substation regulator as short segments
    (150, 149, 10), (13, 152, 10), (18, 135, 10), (60, 160, 10), (97, 197, 10),
]

IEEE123_LOADS = {
    1: (40, 20), 2: (20, 10), 4: (40, 20), 5: (20, 10), 6: (40, 20), 7: (20, 10),
    9: (40, 20), 10: (20, 10), 11: (40, 20), 12: (20, 10), 16: (40, 20),
    17: (20, 10), 19: (40, 20), 20: (40, 20), 22: (40, 20), 24: (40, 20),
    28: (40, 20), 29: (40, 20), 30: (40, 20), 31: (20, 10), 32: (20, 10),
    33: (40, 20), 35: (40, 20), 37: (40, 20), 38: (20, 10), 39: (20, 10),
    41: (20, 10), 42: (20, 10), 43: (40, 20), 45: (20, 10), 46: (20, 10),
    47: (105, 75), 48: (210, 150), 49: (140, 95), 50: (40, 20), 51: (20, 10),
    52: (40, 20), 53: (40, 20), 55: (20, 10), 56: (20, 10), 58: (20, 10),
    59: (20, 10), 60: (20, 10), 62: (40, 20), 63: (40, 20), 64: (75, 35),
    65: (140, 100), 66: (75, 35), 68: (20, 10), 69: (40, 20), 70: (20, 10),
    71: (40, 20), 73: (40, 20), 74: (40, 20), 75: (40, 20), 76: (245, 180),
    77: (40, 20), 79: (40, 20), 80: (40, 20), 82: (40, 20), 83: (20, 10),
    84: (20, 10), 85: (40, 20), 86: (20, 10), 87: (40, 20), 88: (40, 20),
    90: (40, 20), 92: (40, 20), 94: (40, 20), 95: (20, 10), 96: (20, 10),
    98: (40, 20), 99: (40, 20), 100: (40, 20), 102: (20, 10), 103: (40, 20),
    104: (40, 20), 106: (40, 20), 107: (40, 20), 109: (40, 20), 111: (20, 10),
    112: (20, 10), 113: (40, 20), 114: (20, 10),
}
IEEE123_LOAD_SCALE = 0.30

# node 34 carries the industrial load (kW, kvar, before scaling)
INDUSTRIAL_34 = (400, 200)

# extra IEEE labels renumbered into 115..122; the substation (150) becomes 0
IEEE123_EXTRA = {150: 0, 149: 115, 450: 116, 135: 117, 152: 118, 160: 119,
                 197: 120, 250: 121, 300: 122}
IEEE123_STATIONS = {4, 33, 55, 77, 104, 116}


def build_123() -> dict:
    def lab(old: int) -> int:
        return IEEE123_EXTRA.get(old, old)

    labels = sorted({lab(a) for a, b, _ in IEEE123_LINES} | {lab(b) for a, b, _ in IEEE123_LINES})
    assert labels == list(range(123)), labels
    inverse = {v: k for k, v in IEEE123_EXTRA.items()}
    loads = {lab(k): v for k, v in IEEE123_LOADS.items()}
    loads[34] = INDUSTRIAL_34
    nodes = []
    for i in labels:
        p, q = loads.get(i, (0, 0))
        if i == 0:
            kind = "slack"
        elif i == 34:
            kind = "industrial"
        elif i in IEEE123_STATIONS:
            kind = "station-host"
        else:
            kind = "residential"
        nodes.append({
            "id": i,
            "label": str(inverse.get(i, i)),
            "p_kw": 0.0 if kind == "slack" else round(p * IEEE123_LOAD_SCALE, 3),
            "q_kvar": 0.0 if kind == "slack" else round(q * IEEE123_LOAD_SCALE, 3),
            "kind": kind,
        })
    branches = [
        {"from": lab(a), "to": lab(b), "conductor": conductor(ACSR_1_0),
         "length_mi": round(ft / FT_PER_MILE, 6)}
        for a, b, ft in IEEE123_LINES
    ]
    branches.sort(key=lambda b: (b["from"], b["to"]))
    return {
        "name": "feeder123",
        "description": (
            "Balanced 123-node radial feeder (IEEE 123-node topology, 1/0 ACSR on "
            "spacing 500 throughout, representative loads)."
        ),
        "bases": {"s_kva": 1000.0, "v_kv": 4.16, "slack_v_pu": 1.0},
        "nodes": nodes,
        "branches": branches,
    }


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for name, doc in (("feeder34.json", build_34()), ("feeder123.json", build_123())):
        (OUT / name).write_text(json.dumps(doc, indent=1) + "\n")
        print(f"wrote {OUT / name}: {len(doc['nodes'])} nodes, {len(doc['branches'])} branches")


if __name__ == "__main__":
    main()
