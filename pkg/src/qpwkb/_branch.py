"""Continuation of k along a path, choosing among the determinations +-k0 + 2 pi l."""
import numpy as np

from .errors import ContinuationAmbiguity

TWO_PI = 2.0 * np.pi


def nearest_two(k0, ref):
    """The two determinations +-k0 + 2 pi l closest to ref, nearest first."""
    cands = []
    for s in (1.0, -1.0):
        base = s * k0
        l = np.floor((ref - base).real / TWO_PI)
        cands += [base + TWO_PI * l, base + TWO_PI * (l + 1)]
    cands.sort(key=lambda c: abs(c - ref))
    return cands[0], cands[1]


def classify(value, kp, tol=1e-6):
    """Express value as sign*kp + 2 pi l; returns (sign, l) or None."""
    for s in (1, -1):
        l = (value - s * kp).real / TWO_PI
        if abs(value - s * kp - TWO_PI * round(l)) < tol * (1.0 + abs(value)):
            return s, int(round(l))
    return None


def track(evaluate, path, start, ratio=10.0, max_step=0.5, max_depth=40):
    """Follow k by continuity along the polyline ``path``.

    evaluate(points) returns some determination k0 at each point. At every
    step the candidate closest to a linear prediction is taken, and the
    step is bisected until the runner-up lies farther than ``ratio`` times
    the step change. Returns (values at the vertices, number of inserted
    points).
    """
    pts = np.asarray(path, complex)
    k0 = np.asarray(evaluate(pts), complex)
    out = np.empty(len(pts), complex)
    out[0] = start
    state = {"slope": 0.0, "inserted": 0}

    def advance(za, ka, zb, k0b, depth):
        pred = ka + state["slope"] * (zb - za)
        c1, c2 = nearest_two(k0b, pred)
        step = abs(c1 - ka)
        if abs(c1 - c2) > ratio * step and step <= max_step:
            if zb != za:
                state["slope"] = (c1 - ka) / (zb - za)
            return c1
        if depth >= max_depth:
            raise ContinuationAmbiguity(
                f"cannot separate determinations near {zb:.6g} (gap {abs(c1 - c2):.3g}, step {step:.3g})")
        zm = 0.5 * (za + zb)
        k0m = complex(np.asarray(evaluate(np.array([zm])))[0])
        state["inserted"] += 1
        km = advance(za, ka, zm, k0m, depth + 1)
        return advance(zm, km, zb, k0b, depth + 1)

    for j in range(1, len(pts)):
        out[j] = advance(pts[j - 1], out[j - 1], pts[j], k0[j], 0)
    return out, state["inserted"]
