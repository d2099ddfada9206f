#!/usr/bin/env python3
"""Regenerate data/constellations and data/presets.

Formats whose published coordinates are not reproduced here are rebuilt from
their defining construction; each file header says how.
"""
import itertools
import json
import math
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent
CONST = ROOT / "data" / "constellations"
PRESETS = ROOT / "data" / "presets"


def gray(n):
    return n ^ (n >> 1)


def pam(levels):
    return [2 * i - (levels - 1) for i in range(levels)]


def write(name, points, note, labels=None, probs=None):
    n = len(points)
    mean = [sum(p[d] for p in points) / n for d in range(4)]
    assert all(abs(m) < 1e-12 for m in mean), (name, mean)
    lines = [f"# {name}: {n} points, columns Re(ax) Im(ax) Re(ay) Im(ay)"]
    lines += [f"# {line}" for line in note.splitlines()]
    for i, p in enumerate(points):
        row = " ".join(f"{v:.12g}" for v in p)
        if probs:
            row += f" {probs[i]:.12g}"
        lines.append(row)
    (CONST / f"{name}.txt").write_text("\n".join(lines) + "\n")
    if labels is not None:
        m = int(math.log2(n))
        assert sorted(labels) == list(range(n)), name
        (CONST / f"{name}.labels").write_text(
            "".join(format(b, f"0{m}b") + "\n" for b in labels))


def product_qam(levels):
    """PM-QAM with a per-dimension Gray labeling."""
    a = pam(levels)
    k = int(math.log2(levels))
    pts, labs = [], []
    for idx in itertools.product(range(levels), repeat=4):
        pts.append([a[i] for i in idx])
        lab = 0
        for i in idx:
            lab = (lab << k) | gray(i)
        labs.append(lab)
    return pts, labs


def voronoi4_32():
    # Coset representatives of Z^4 + 1/2 modulo 2*D4, taking the minimum-energy
    # member of each coset (ties broken lexicographically), then re-centred.
    best = {}
    rng = [x + 0.5 for x in range(-3, 3)]
    for x in itertools.product(rng, repeat=4):
        n = [int(math.floor(v)) for v in x]
        par = tuple(v % 2 for v in n)
        half = sum((v - (v % 2)) // 2 for v in n) % 2
        key = (par, half)
        e = sum(v * v for v in x)
        if key not in best or (e, x) < best[key]:
            best[key] = (e, x)
    pts = [list(v[1]) for v in sorted(best.values())]
    assert len(pts) == 32
    mean = [sum(p[d] for p in pts) / 32 for d in range(4)]
    return [[p[d] - mean[d] for d in range(4)] for p in pts]


def prs64(ratio=1.8):
    # Polarization ring switching: one polarization carries a QPSK point on the
    # inner ring, the other an 8PSK point on the outer ring; the roles swap.
    r1, r2 = 1.0, ratio
    pts = []
    for sw in (0, 1):
        for k in range(4):
            for l in range(8):
                a = (r1 * math.cos(math.pi / 4 + k * math.pi / 2), r1 * math.sin(math.pi / 4 + k * math.pi / 2))
                b = (r2 * math.cos(l * math.pi / 4), r2 * math.sin(l * math.pi / 4))
                pts.append(list(a + b) if sw == 0 else list(b + a))
    return pts


def os128():
    # Orthant-symmetric: 8 first-orthant points from {1,3}^4 with an even number
    # of 3s, reflected into all 16 orthants. Labels: 4 sign bits + 3 index bits.
    base = [p for p in itertools.product((1, 3), repeat=4) if sum(v == 3 for v in p) % 2 == 0]
    assert len(base) == 8
    pts, labs = [], []
    for signs in itertools.product((0, 1), repeat=4):
        for i, b in enumerate(base):
            pts.append([(-v if s else v) for v, s in zip(b, signs)])
            sb = 0
            for s in signs:
                sb = (sb << 1) | s
            labs.append((sb << 3) | gray(i))
    return pts, labs


def w4_256():
    # Symmetric 256-point cut of Z^4 + 1/2: the energy 1, 3 and 5 shells, the
    # single-(+-5/2) part of the energy-7 shell and the all-(+-3/2) corner shell.
    pts = []
    for x in itertools.product([-2.5, -1.5, -0.5, 0.5, 1.5, 2.5], repeat=4):
        mags = sorted(abs(v) for v in x)
        e = sum(v * v for v in x)
        if e <= 5 or mags == [0.5, 0.5, 0.5, 2.5] or mags == [1.5] * 4:
            pts.append(list(x))
    assert len(pts) == 256, len(pts)
    return pts


def main():
    CONST.mkdir(parents=True, exist_ok=True)
    PRESETS.mkdir(parents=True, exist_ok=True)

    qpsk, qlab = product_qam(2)
    write("pm_qpsk", qpsk, "Product of two QPSK sets; Gray labels in pm_qpsk.labels.", qlab)
    write("cube4_16", qpsk, "Vertices of the 4D hypercube {+-1}^4 (same geometry as PM-QPSK).", qlab)
    l48 = [[s1, s2, 0, 0] for s1 in (-1, 1) for s2 in (-1, 1)] + \
          [[0, 0, s1, s2] for s1 in (-1, 1) for s2 in (-1, 1)]
    write("l4_8", l48, "Polarization-switched QPSK: QPSK on one polarization, the other dark.",
          [0, 1, 3, 2, 4, 5, 7, 6])
    write("voronoi4_32", voronoi4_32(),
          "Reconstruction: minimum-energy coset leaders of Z^4+1/2 modulo 2D4, re-centred to zero mean.\n"
          "Not polarization-symmetric.")
    pm8 = []
    ring8 = [(x, y) for x in (-3, -1, 1, 3) for y in (-1, 1)]
    for a in ring8:
        for b in ring8:
            pm8.append([a[0], a[1], b[0], b[1]])
    write("pm_8qam", pm8, "Product of two rectangular 8QAM sets {+-1,+-3}x{+-1}.")
    write("4d_prs64", prs64(),
          "Reconstruction of a 64-point polarization-ring-switching format: QPSK on an inner ring in\n"
          "one polarization and 8PSK on an outer ring (radius ratio 1.8) in the other, roles swapped.\n"
          "Constant 4D modulus, polarization-symmetric.")
    os, olab = os128()
    write("4d_os128", os,
          "Reconstruction of a 128-point orthant-symmetric format: the even-parity subset of {1,3}^4\n"
          "reflected into every orthant. Labels: 4 sign bits then a 3-bit Gray index.", olab)
    q16, l16 = product_qam(4)
    write("pm_16qam", q16, "Product of two square 16QAM sets; Gray labels.", l16)
    write("w4_256", w4_256(),
          "Reconstruction: a symmetric 256-point cut of the half-integer lattice Z^4+1/2.")
    q64, l64 = product_qam(8)
    write("pm_64qam", q64, "Product of two square 64QAM sets; Gray labels.", l64)

    common = {
        "wdm": {"symbol_rate_gbd": 45.0, "n_channels": 9, "spacing_ghz": 50.0, "rolloff": 0.0, "pulse": "rect"},
        "power_dbm": -20.0,
        "ssfm": {"n_symbols": 16384, "samples_per_symbol": 4, "step_km": 0.1, "noise": False},
    }
    fibers = {
        "smf": (17.0, 1.3, "Standard single-mode fiber"),
        "nzdsf": (3.8, 1.5, "Non-zero dispersion-shifted fiber"),
        "ldf": (-1.8, 2.2, "Low-dispersion fiber"),
    }
    for name, (D, gamma, desc) in fibers.items():
        doc = {"description": f"{desc}, 9 x 45 GBd, 20 x 80 km"}
        doc["link"] = {"alpha_db_per_km": 0.2, "dispersion_ps_nm_km": D, "gamma": gamma, "span_km": 80.0,
                       "n_spans": 20, "nf_db": 5.0, "amplifier": "edfa"}
        doc.update(common)
        (PRESETS / f"{name}.json").write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    main()
