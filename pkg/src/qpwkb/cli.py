"""Command-line front end.

Subcommands: bands, actions, predict, compare, phase-diagram. Exit codes:
0 ok, 2 hypothesis failure, 3 numerics failure.
"""
import argparse
import csv
import json
import math
import sys
import xml.etree.ElementTree as ET
from xml.sax.saxutils import quoteattr
from pathlib import Path

import numpy as np

from . import hill, oracle, wkb
from .actions import action_profile, cut_actions
from .errors import (EdgeSearchError, GeometryError, HypothesisError, NumericsError,
                     QpwkbError, QuadratureError)

EXIT_OK, EXIT_HYPOTHESIS, EXIT_NUMERICS = 0, 2, 3

PHASE_FIELDS = ["alpha", "E", "in_delta", "hyp_ok", "sh", "sv0", "sv_pi", "regime", "sh_dominant",
                "sh_bounded", "sh_between", "tau_large", "tau_small", "rho_large", "rho_small"]
REGIME_COLORS = {"Sh_max": "#d95f02", "Sh_min": "#1b9e77", "Sv0<Sh<Svpi": "#7570b3",
                 "Svpi<Sh<Sv0": "#e7298a", "": "#cccccc"}


# ------------------------------------------------------------------ helpers

def _pair(text, name):
    try:
        a, b = (float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{name} must be 'lo,hi'")
    if not a < b:
        raise argparse.ArgumentTypeError(f"{name} must satisfy lo < hi")
    return a, b


def _grid(text):
    try:
        r, c = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("grid must be RxC")
    return r, c


def _outdir(path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r[f]) for f in fields])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_svg_rows(path):
    """Rows encoded as data-* attributes on the marked SVG elements."""
    rows = []
    for el in ET.parse(path).getroot().iter():
        if el.get("class") == "row":
            rows.append({k[5:]: v for k, v in el.attrib.items() if k.startswith("data-")})
    return rows


def _svg(width, height, body, title):
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<title>{title}</title>\n')
    return head + "\n".join(body) + "\n</svg>\n"


def _attrs(row, fields):
    return " ".join(f"data-{f}={quoteattr(_fmt(row[f]))}" for f in fields)


# -------------------------------------------------------------------- bands

def cmd_bands(args):
    V = hill.load_potential(args.potential)
    if V.mode == "finite_gap":
        bands = hill.FiniteGapMomentum(V).bands
    else:
        bands = hill.band_edges(V, n_max=args.n_max)
    rows = [{"index": j + 1, "edge": float(e)} for j, e in enumerate(bands.edges)]
    closed = [i + 1 for i, c in enumerate(bands.closed) if c]
    out = {"edges": [r["edge"] for r in rows], "closed_gaps": closed,
           "provenance": bands.provenance}
    if closed:
        print(f"warning: closed gaps {closed}; the open-gap hypothesis fails", file=sys.stderr)
    if args.out:
        d = _outdir(args.out)
        if args.format == "csv":
            write_csv(d / "bands.csv", ["index", "edge"], rows)
        else:
            (d / "bands.json").write_text(json.dumps(out, indent=2))
    else:
        print(json.dumps(out, indent=2))
    return EXIT_HYPOTHESIS if closed and args.strict else EXIT_OK


# ------------------------------------------------------------------ actions

def cmd_actions(args):
    V = hill.load_potential(args.potential)
    energies = np.linspace(*args.window, args.points)
    prof = action_profile(V, args.gap, args.alpha, energies, method=args.method)
    d = _outdir(args.out or ".")
    prof.write_csv(d / "actions.csv")
    print(json.dumps({"rows": len(energies), "invariants": prof.invariants()}, default=str))
    return EXIT_OK


# ------------------------------------------------------------------ predict

def _interval_rows(report):
    rows = []
    for r in report["intervals"]:
        c = r.get("center", r["quantized"])
        hw = r.get("halfwidth", (r["coarse"][1] - r["coarse"][0]) / 2)
        rows.append({"kind": r["kind"], "center": float(c), "halfwidth": float(hw),
                     "coarse_lo": float(r["coarse"][0]), "coarse_hi": float(r["coarse"][1]),
                     "nature": r.get("nature", "resonant" if r["resonant"] else "undetermined"),
                     "resonant": bool(r["resonant"])})
    for k, p in enumerate(report["pairs"]):
        for lo, hi in p.get("intervals", []) or []:
            rows.append({"kind": f"pair{k}", "center": 0.5 * (lo + hi), "halfwidth": 0.5 * (hi - lo),
                         "coarse_lo": lo, "coarse_hi": hi, "nature": "split", "resonant": True})
    return rows


STRIP_FIELDS = ["kind", "center", "halfwidth", "coarse_lo", "coarse_hi", "nature", "resonant"]
NATURE_COLORS = {"singular": "#d62728", "mostly_ac": "#1f77b4", "undetermined": "#7f7f7f",
                 "resonant": "#9467bd", "split": "#2ca02c"}


def strip_svg(rows, J, width=900, height=160):
    """Strip plot of the coarse intervals, one lane per family."""
    lo, hi = J
    sx = lambda e: 40 + (width - 80) * (e - lo) / (hi - lo)
    lanes = {"type0": 40, "typePi": 90}
    body = [f'<line x1="40" y1="140" x2="{width - 40}" y2="140" stroke="black"/>',
            f'<text x="40" y="155" font-size="10">{lo:.6g}</text>',
            f'<text x="{width - 40}" y="155" font-size="10" text-anchor="end">{hi:.6g}</text>']
    for r in rows:
        y = lanes.get(r["kind"], 115)
        x0, x1 = sx(r["coarse_lo"]), sx(r["coarse_hi"])
        w = max(x1 - x0, 1.0)
        col = NATURE_COLORS.get(r["nature"], "#000000")
        body.append(f'<rect class="row" x="{x0:.3f}" y="{y}" width="{w:.3f}" height="20" '
                    f'fill="{col}" {_attrs(r, STRIP_FIELDS)}/>')
    return _svg(width, height, body, "predicted spectral intervals")


def cmd_predict(args):
    V = hill.load_potential(args.potential)
    rep = wkb.spectral_report(V, args.alpha, args.epsilon, args.window, n=args.gap,
                              lam=args.lambda_n).to_dict()
    d = _outdir(args.out or ".")
    rows = _interval_rows(rep)
    if args.format == "svg":
        (d / "strip.svg").write_text(strip_svg(rows, args.window))
    elif args.format == "csv":
        write_csv(d / "intervals.csv", STRIP_FIELDS, rows)
    (d / "report.json").write_text(json.dumps(rep, indent=2))
    print(json.dumps({"type0": len(rep["sequences"]["type0"]),
                      "typePi": len(rep["sequences"]["typePi"]),
                      "pairs": len(rep["pairs"]), "delta0": rep["delta0"]}))
    return EXIT_OK


# ------------------------------------------------------------------ compare

def compare(V, alpha, eps, J, n=1, m=20, zetas=oracle.ZETAS, widen=3.0, lam=None):
    """Join the WKB report with oracle counts and Lyapunov exponents."""
    rep = wkb.spectral_report(V, alpha, eps, J, n=n, lam=lam).to_dict()
    hw = math.exp(-rep["delta0"] / eps)
    centers = sorted(rep["sequences"]["type0"] + rep["sequences"]["typePi"])
    grid = [np.linspace(J[0], J[1], 40)]
    for c in centers:
        grid.append(c + widen * hw * np.linspace(-1, 1, 7))
    g = np.unique(np.concatenate(grid))
    g = g[(g >= J[0]) & (g <= J[1])]
    L = oracle.default_length(eps, m)
    scan = oracle.spectrum_scan(V, alpha, eps, g, L=L, zetas=zetas)
    # merge overlapping widened intervals; each carries eps/2pi per root
    spans = []
    for c in centers:
        a, b = c - widen * hw, c + widen * hw
        if spans and a <= spans[-1][1]:
            spans[-1][1], spans[-1][2] = b, spans[-1][2] + 1
        else:
            spans.append([a, b, 1])
    cells = []
    for lo, hi in scan.support:
        inside = any(a - 1e-12 <= lo and hi <= b + 1e-12 for a, b, _ in spans)
        cells.append({"lo": lo, "hi": hi, "inside": inside})
    per = []
    for a, b, k in spans:
        a, b = max(a, J[0]), min(b, J[1])
        full = a > J[0] and b < J[1]
        cnt = scan.count_between(a, b)
        ids = cnt / (2 * L)
        per.append({"lo": a, "hi": b, "roots": k, "count": cnt, "ids_increment": ids,
                    "expected": k * eps / (2 * math.pi), "complete": full,
                    "ratio": ids / (k * eps / (2 * math.pi))})
    return {"report": rep, "halfwidth": hw, "widen": widen, "L": L,
            "containment": all(c["inside"] for c in cells), "support": cells, "intervals": per}


def cmd_compare(args):
    V = hill.load_potential(args.potential)
    res = compare(V, args.alpha, args.epsilon, args.window, n=args.gap, m=args.quasi_periods,
                  zetas=oracle.ZETAS[:args.zetas], lam=args.lambda_n)
    if args.lyapunov:
        centers = [r.get("center", r["quantized"]) for r in res["report"]["intervals"]]
        est = oracle.lyapunov_direct(V, args.alpha, args.epsilon, oracle.ZETAS[:2], centers)
        est = est if isinstance(est, list) else [est]
        res["theta_overlay"] = [{"E": e.E, "oracle": e.value, "error": e.error,
                                 "predicted": r.get("lyapunov", {}).get("value")}
                                for e, r in zip(est, res["report"]["intervals"])]
    d = _outdir(args.out or ".")
    (d / "compare.json").write_text(json.dumps(wkb._jsonable(res), indent=2))
    ratios = [p["ratio"] for p in res["intervals"] if p["complete"]]
    print(json.dumps({"containment": res["containment"],
                      "ids_ratio_range": [min(ratios), max(ratios)] if ratios else None}))
    return EXIT_OK


# ------------------------------------------------------------- phase diagram

def delta_region(edges, alpha, E):
    """E1 + alpha < E < E2 + alpha and E3 - alpha < E < E4 - alpha."""
    e1, e2, e3, e4 = edges[:4]
    return (E > e1 + alpha) & (E < e2 + alpha) & (E > e3 - alpha) & (E < e4 - alpha)


def delta_box(edges):
    """Bounding box (alpha range, E range) of the region Delta."""
    e1, e2, e3, e4 = edges[:4]
    return ((e3 - e2) / 2, (e4 - e1) / 2), ((e1 + e3) / 2, (e2 + e4) / 2)


def classify_actions(sh, sv0, svpi):
    """One label per cell from strict comparisons of S_h with the vertical actions."""
    if sh > max(sv0, svpi):
        return "Sh_max"
    if sh < min(sv0, svpi):
        return "Sh_min"
    return "Sv0<Sh<Svpi" if sv0 <= sh else "Svpi<Sh<Sv0"


def phase_diagram(V, alpha_range=None, E_range=None, grid=(100, 100), n=1):
    """Rows of PHASE_FIELDS over an (alpha, E) grid for the gap n = 1 window."""
    if V.mode != "finite_gap":
        raise QpwkbError("phase diagram needs finite-gap band edges")
    model = hill.FiniteGapMomentum(V)
    edges = model.bands.edges
    box_a, box_e = delta_box(edges)
    alpha_range = alpha_range or box_a
    E_range = E_range or box_e
    R, C = grid
    al = np.linspace(*alpha_range, R)
    En = np.linspace(*E_range, C)
    A, EE = np.meshgrid(al, En, indexing="ij")
    inside = delta_region(edges, A, EE)
    sh = np.full(A.shape, np.nan)
    sv0, svp = sh.copy(), sh.copy()
    if inside.any():
        res = cut_actions(model, n, EE[inside], A[inside], 32)
        sh[inside] = 2 * res["sh_half"]
        sv0[inside] = res["sv0"]
        svp[inside] = res["sv_pi"]
    top = edges[2 * n + 2] if len(edges) > 2 * n + 2 else np.inf
    with np.errstate(invalid="ignore", divide="ignore"):
        lhs = 2 * math.pi * np.arccosh(np.maximum((top - EE) / A, 1.0))
    rows = []
    for i in range(R):
        for j in range(C):
            r = {"alpha": float(A[i, j]), "E": float(EE[i, j]), "in_delta": bool(inside[i, j])}
            if inside[i, j]:
                s, a, b = sh[i, j], sv0[i, j], svp[i, j]
                ok = bool(lhs[i, j] > max(s, a, b))
                r.update({"hyp_ok": ok, "sh": float(s), "sv0": float(a), "sv_pi": float(b),
                          "regime": classify_actions(s, a, b),
                          "sh_dominant": bool(s > max(a, b)), "sh_bounded": bool(1.5 * min(a, b) > s),
                          "sh_between": bool((b > s > a) or (a > s > b)),
                          "tau_large": bool(s > a + b), "tau_small": bool(s <= a + b),
                          "rho_large": bool(min(a, b) < s / 2),
                          "rho_small": bool(min(a, b) >= s / 2)})
            else:
                r.update({"hyp_ok": False, "sh": float("nan"), "sv0": float("nan"),
                          "sv_pi": float("nan"), "regime": "", "sh_dominant": False, "sh_bounded": False,
                          "sh_between": False, "tau_large": False, "tau_small": False,
                          "rho_large": False, "rho_small": False})
            rows.append(r)
    return rows


def phase_svg(rows, grid, color_by="regime", cell=4):
    R, C = grid
    body = []
    for k, r in enumerate(rows):
        i, j = divmod(k, C)
        if color_by == "regime":
            col = REGIME_COLORS[r["regime"]] if r["hyp_ok"] or not r["in_delta"] else "#999999"
        else:
            col = "#cccccc" if not r["in_delta"] else (
                ("#b2182b" if r["tau_large"] else "#2166ac") if color_by == "tau"
                else ("#b2182b" if r["rho_large"] else "#2166ac"))
        body.append(f'<rect class="row" x="{j * cell}" y="{(R - 1 - i) * cell}" width="{cell}" '
                    f'height="{cell}" fill="{col}" {_attrs(r, PHASE_FIELDS)}/>')
    return _svg(C * cell, R * cell, body, f"phase diagram ({color_by}); alpha upward, E rightward")


def cmd_phase_diagram(args):
    V = hill.load_potential(args.potential)
    rows = phase_diagram(V, args.alpha_range, args.E_range, args.grid, n=args.gap)
    d = _outdir(args.out or ".")
    fmts = args.format.split(",")
    if "csv" in fmts:
        write_csv(d / "phase.csv", PHASE_FIELDS, rows)
    if "json" in fmts:
        (d / "phase.json").write_text(json.dumps(wkb._jsonable(rows)))
    if "svg" in fmts:
        (d / "phase_actions.svg").write_text(phase_svg(rows, args.grid, "regime"))
        (d / "phase_tau.svg").write_text(phase_svg(rows, args.grid, "tau"))
        (d / "phase_rho.svg").write_text(phase_svg(rows, args.grid, "rho"))
    ind = [r for r in rows if r["in_delta"]]
    summary = {"cells": len(rows), "in_delta": len(ind),
               "sh_dominant_and_bounded": sum(r["sh_dominant"] and r["sh_bounded"] for r in ind),
               "sh_between": sum(r["sh_between"] for r in ind),
               "tau_large": sum(r["tau_large"] for r in ind),
               "tau_small": sum(r["tau_small"] for r in ind),
               "rho_large": sum(r["rho_large"] for r in ind),
               "rho_small": sum(r["rho_small"] for r in ind)}
    print(json.dumps(summary))
    return EXIT_OK


# --------------------------------------------------------------------- main

def build_parser():
    p = argparse.ArgumentParser(prog="qpwkb", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, window=True):
        sp.add_argument("--potential", required=True, help="potential JSON file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--gap", type=int, default=1, help="interacting gap index n")
        if window:
            sp.add_argument("--alpha", type=float, required=True)
            sp.add_argument("--window", type=lambda t: _pair(t, "window"), required=True,
                            help="Emin,Emax")

    b = sub.add_parser("bands", help="band edges of the periodic operator")
    common(b, window=False)
    b.add_argument("--n-max", type=int, default=None)
    b.add_argument("--format", choices=["csv", "json"], default="json")
    b.add_argument("--strict", action="store_true", help="exit 2 when a gap is closed")
    b.set_defaults(func=cmd_bands)

    a = sub.add_parser("actions", help="action table on an energy grid")
    common(a)
    a.add_argument("--points", type=int, default=21)
    a.add_argument("--method", choices=["cut", "contour"], default="cut")
    a.set_defaults(func=cmd_actions)

    for name, func, hlp in (("predict", cmd_predict, "WKB spectral report"),
                            ("compare", cmd_compare, "WKB report against the direct oracle")):
        s = sub.add_parser(name, help=hlp)
        common(s)
        s.add_argument("--epsilon", type=float, required=True)
        s.add_argument("--lambda-n", type=float, default=None)
        if name == "predict":
            s.add_argument("--format", choices=["json", "csv", "svg"], default="svg")
        else:
            s.add_argument("--quasi-periods", type=int, default=20)
            s.add_argument("--zetas", type=int, default=4, choices=[1, 2, 3, 4])
            s.add_argument("--lyapunov", action="store_true")
        s.set_defaults(func=func)

    ph = sub.add_parser("phase-diagram", help="regimes over the (alpha, E) region")
    common(ph, window=False)
    ph.add_argument("--alpha-range", type=lambda t: _pair(t, "alpha-range"), default=None)
    ph.add_argument("--E-range", type=lambda t: _pair(t, "E-range"), default=None)
    ph.add_argument("--grid", type=_grid, default=(200, 200))
    ph.add_argument("--format", default="csv,svg", help="comma list of csv, json, svg")
    ph.set_defaults(func=cmd_phase_diagram)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (HypothesisError, GeometryError) as exc:
        margins = getattr(exc, "margins", None)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc),
                          "margins": wkb._jsonable(margins)}), file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (NumericsError, QuadratureError, EdgeSearchError, QpwkbError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_NUMERICS


if __name__ == "__main__":
    sys.exit(main())
