"""WKB predictions for the spectrum in a band-interaction window.

Bohr-Sommerfeld sequences, the coarse exponentially small intervals,
refinement and spectral type of isolated intervals, and the analysis of
resonant pairs for large and small tau. The corrected phases are replaced
by Phi itself and every (1 + o(1)) factor by 1. Tunneling coefficients
are carried as logarithms.
"""
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from . import hill
from .actions import action_set, cut_actions
from .errors import (GeometryError, HypothesisError, InvariantViolation, QpwkbError,
                     ReclassifyAsResonant, WrongRegime)
from .momentum import WindowContext, check_bei

PI = math.pi


# ------------------------------------------------------------- actions on J

class WindowActions:
    """Actions of a fixed (V, n, alpha) as functions of E on a window J."""

    def __init__(self, source, n, alpha, J, method="cut", n_nodes=32):
        self.n, self.alpha = int(n), float(alpha)
        self.J = (float(J[0]), float(J[1]))
        if self.J[0] >= self.J[1]:
            raise ValueError("empty window")
        ctx = WindowContext.build(source, n, 0.5 * sum(self.J), alpha, check=False)
        self.model = ctx.model
        self.method = method
        self.n_nodes = n_nodes

    @property
    def bands(self):
        return self.model.bands

    def ctx(self, E):
        return WindowContext.build(self.model, self.n, E, self.alpha)

    def profile(self, energies):
        """Vectorized cut-route actions on an array of energies."""
        energies = np.asarray(energies, float)
        out = cut_actions(self.model, self.n, energies, self.alpha, self.n_nodes)
        out["sh"] = 2 * out.pop("sh_half")
        return out

    def phi(self, sigma):
        key = "phi0" if sigma == 0 else "phi_pi"
        return lambda E: self.profile(np.asarray(E, float))[key]

    def at(self, E):
        return action_set(self.ctx(E), self.method)

    def hypotheses(self, n_grid=41):
        """(BEI) and (T) margins on a grid over J."""
        grid = np.linspace(*self.J, n_grid)
        bei = [check_bei(self.bands, self.n, e, self.alpha) for e in grid]
        bei_margin = min(r.min_margin for r in bei)
        out = {"bei_ok": all(r.ok for r in bei), "bei_min_margin": bei_margin}
        if out["bei_ok"]:
            prof = self.profile(grid)
            t_margin = np.inf
            for i, e in enumerate(grid):
                bp = self.ctx(e).branch_points
                lhs = 2 * PI * min(bp.im(2 * self.n - 2), bp.im(2 * self.n + 3))
                rhs = max(prof["sh"][i], prof["sv0"][i], prof["sv_pi"][i])
                t_margin = min(t_margin, lhs - rhs)
            out["T_ok"] = bool(t_margin > 0)
            out["T_min_margin"] = float(t_margin)
        else:
            out["T_ok"] = False
            out["T_min_margin"] = float("nan")
        return out


def delta0(sh, sv0, sv_pi):
    """(1/2) inf min(S_h, S_v0, S_vpi) over the supplied samples."""
    return 0.5 * float(np.min(np.minimum(np.minimum(sh, sv0), sv_pi)))


def window_delta0(wa, n_grid=201):
    """delta_0 on J by grid minimization refined with a bounded search."""
    grid = np.linspace(*wa.J, n_grid)
    p = wa.profile(grid)
    m = np.minimum(np.minimum(p["sh"], p["sv0"]), p["sv_pi"])
    i = int(np.argmin(m))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]

    def f(e):
        q = wa.profile(np.array([e]))
        return float(min(q["sh"][0], q["sv0"][0], q["sv_pi"][0]))

    best = m[i]
    if hi > lo:
        r = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
        best = min(best, r.fun)
    return 0.5 * float(best)


# ---------------------------------------------------------------- quantize

@dataclass
class QuantizedSequence:
    kind: str
    energies: np.ndarray
    levels: np.ndarray
    epsilon: float
    spacing_C: float = float("nan")

    def __len__(self):
        return len(self.energies)


def quantize(phi, J, eps, kind="typePi", n_grid=None, tol=1e-10):
    """All E in J with phi(E)/eps = pi/2 + pi*l.

    phi must accept arrays and be strictly monotone on J. Roots are
    bracketed on a grid and polished with brentq.
    """
    lo, hi = J
    n_grid = n_grid or max(32, int(8 * (hi - lo) / eps))
    grid = np.linspace(lo, hi, n_grid)
    vals = np.asarray(phi(grid), float) / eps
    d = np.diff(vals)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise InvariantViolation(f"phase integral not monotone on J for {kind}")
    incr = d[0] > 0
    vmin, vmax = min(vals[0], vals[-1]), max(vals[0], vals[-1])
    ls = np.arange(math.ceil((vmin - PI / 2) / PI), math.floor((vmax - PI / 2) / PI) + 1)
    roots = []
    for l in ls:
        target = PI / 2 + PI * l
        g = lambda e: float(np.asarray(phi(np.array([e])))[0]) / eps - target
        idx = np.searchsorted(vals if incr else -vals, target if incr else -target)
        a, b = grid[max(idx - 1, 0)], grid[min(idx, n_grid - 1)]
        ga, gb = g(a), g(b)
        if ga == 0:
            roots.append(a)
            continue
        if gb == 0:
            roots.append(b)
            continue
        r = optimize.brentq(g, a, b, xtol=1e-15, rtol=1e-15, maxiter=200)
        if abs(g(r)) > tol:
            raise InvariantViolation(f"quantization root not polished: residual {g(r):.2e}")
        roots.append(r)
    order = np.argsort(roots)
    energies = np.asarray(roots, float)[order]
    levels = ls[order].astype(int)
    C = float("nan")
    if len(energies) > 1:
        sp = np.diff(energies)
        C = float(max(sp.max() / eps, eps / sp.min()))
    return QuantizedSequence(kind=kind, energies=energies, levels=levels, epsilon=eps, spacing_C=C)


# ---------------------------------------------------------- coarse intervals

@dataclass
class SpectralInterval:
    center: float
    halfwidth: float
    kind: str
    resonant: bool = False
    nature: str = "undetermined"
    dos_weight: float = 0.0
    lyapunov: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    @property
    def lo(self):
        return self.center - self.halfwidth

    @property
    def hi(self):
        return self.center + self.halfwidth

    def contains(self, other):
        return self.lo <= other.lo and other.hi <= self.hi


@dataclass
class CoarseResult:
    delta0: float
    halfwidth: float
    intervals: list
    pairs: list
    at_most_one: bool


def coarse_intervals(seq0, seq_pi, d0, eps):
    """Intervals E + [-exp(-delta0/eps), exp(-delta0/eps)] and resonant pairs."""
    hw = math.exp(-d0 / eps)
    ivs = [SpectralInterval(center=float(e), halfwidth=hw, kind="type0", dos_weight=eps / (2 * PI))
           for e in seq0.energies]
    ivs += [SpectralInterval(center=float(e), halfwidth=hw, kind="typePi", dos_weight=eps / (2 * PI))
            for e in seq_pi.energies]
    pairs = []
    meets = {}
    for i, e0 in enumerate(seq0.energies):
        for j, ep in enumerate(seq_pi.energies):
            if abs(ep - e0) < 2 * hw:
                pairs.append((i, j))
                meets[("0", i)] = meets.get(("0", i), 0) + 1
                meets[("pi", j)] = meets.get(("pi", j), 0) + 1
    for i, j in pairs:
        ivs[i].resonant = True
        ivs[len(seq0.energies) + j].resonant = True
    at_most_one = all(v <= 1 for v in meets.values())
    return CoarseResult(delta0=d0, halfwidth=hw, intervals=ivs, pairs=pairs, at_most_one=at_most_one)


# ------------------------------------------------------ non-resonant case

def _own_other(kind, act):
    """(own Phi', S_v of the family, Phi of the other family) for a kind."""
    if kind == "typePi":
        return act.dphi_pi, act.sv_pi
    return act.dphi0, act.sv0


def refine_nonresonant(interval, wa, eps, lam):
    """Center and half-width of the refined interval around E_nu.

    shift = eps Lambda/(2 Phi_nu') t_h tan(Phi_other(E_nu)/eps),
    half-width = (eps/|Phi_nu'|)(t_h/(2|cos(Phi_other/eps)|) + t_v,nu).
    """
    e = interval.center
    act = wa.at(e)
    dphi, sv = _own_other(interval.kind, act)
    phase = (act.phi0 if interval.kind == "typePi" else act.phi_pi) / eps
    c, s = math.cos(phase), math.sin(phase)
    th = math.exp(-act.sh / eps)
    tv = math.exp(-sv / eps)
    if c == 0.0:
        raise ReclassifyAsResonant("tan singularity at the quantized energy")
    shift = eps * lam / (2 * dphi) * th * (s / c)
    width = eps / abs(dphi) * (th / (2 * abs(c)) + tv)
    out = SpectralInterval(center=e + shift, halfwidth=width, kind=interval.kind,
                           dos_weight=eps / (2 * PI),
                           flags={"shift": shift, "tan": s / c, "coarse": (interval.lo, interval.hi)})
    if not interval.contains(out):
        raise ReclassifyAsResonant(
            f"refined interval at {e:.10g} leaves its coarse interval (tan = {s / c:.3g})")
    return out


def classify_nonresonant(interval, wa, eps, other, c=0.05, N=2, act=None):
    """Spectral type from lambda = (t_v/t_h) dist(E_nu, other sequence).

    Sets interval.nature and interval.lyapunov; returns the log of lambda.
    """
    e = interval.flags.get("quantized", interval.center)
    act = act or wa.at(e)
    sv = act.sv_pi if interval.kind == "typePi" else act.sv0
    other = np.asarray(other, float)
    dist = float(np.min(np.abs(other - e))) if other.size else math.inf
    log_lam = (act.sh - sv) / eps + (math.log(dist) if dist > 0 else -math.inf)
    theta = eps / (2 * PI) * max(0.0, log_lam)
    if eps * log_lam > c:
        nature = "singular"
    elif eps * log_lam < -c:
        nature = "mostly_ac"
        interval.flags["diophantine_caveat"] = True
    else:
        nature = "undetermined"
    interval.nature = nature
    interval.lyapunov = {"form": "constant", "value": theta, "log_lambda": log_lam, "dist": dist}
    if dist >= eps ** N:
        interval.lyapunov["far_field"] = theta_far_field(act.sh, sv)
    return log_lam


def theta_far_field(sh, sv, delta=0.0):
    """(S_h - S_v - delta)/(2 pi): the Lyapunov exponent at distance exp(-delta/eps)."""
    return (sh - sv - delta) / (2 * PI)


def alternation(prof, delta=0.0):
    """S_vpi - S_h > delta and S_v0 - S_h < -delta everywhere on the profile."""
    a = np.all(prof["sv_pi"] - prof["sh"] > delta) and np.all(prof["sv0"] - prof["sh"] < -delta)
    b = np.all(prof["sv0"] - prof["sh"] > delta) and np.all(prof["sv_pi"] - prof["sh"] < -delta)
    if a:
        return {"holds": True, "singular": "type0", "mostly_ac": "typePi"}
    if b:
        return {"holds": True, "singular": "typePi", "mostly_ac": "type0"}
    return {"holds": False}


def transition_conditions(prof):
    """S_h above both vertical actions, and below 1.5 times the smaller one, over J."""
    smax_v = max(prof["sv0"].max(), prof["sv_pi"].max())
    smin_v = min(prof["sv0"].min(), prof["sv_pi"].min())
    return {"sh_dominant": bool(prof["sh"].min() > smax_v),
            "sh_bounded": bool(1.5 * smin_v > prof["sh"].max())}


# ------------------------------------------------------------ resonances

@dataclass
class ResonantPair:
    """A resonant pair with all coefficients evaluated at the mean energy."""

    E0: float
    Epi: float
    epsilon: float
    lam: float
    sh: float
    sv0: float
    sv_pi: float
    dphi0: float
    dphi_pi: float

    @property
    def Ebar(self):
        return 0.5 * (self.E0 + self.Epi)

    @property
    def gap_margin(self):
        """S_h - S_v0 - S_vpi; positive for large tau."""
        return self.sh - self.sv0 - self.sv_pi

    @property
    def log_tau(self):
        return math.log(2.0) + self.gap_margin / (2 * self.epsilon)

    @property
    def tau(self):
        return math.exp(self.log_tau)

    @property
    def log_rho(self):
        return (0.5 * self.sh - min(self.sv0, self.sv_pi)) / self.epsilon

    @property
    def rho(self):
        return math.exp(self.log_rho)

    def log_slope(self, nu):
        """log |xi_nu'| = log(|Phi_nu'| / (eps t_v,nu))."""
        if nu == 0:
            return math.log(abs(self.dphi0)) - math.log(self.epsilon) + self.sv0 / self.epsilon
        return math.log(abs(self.dphi_pi)) - math.log(self.epsilon) + self.sv_pi / self.epsilon

    def xi(self, E, nu):
        E = np.asarray(E, float)
        if nu == 0:
            return np.sign(self.dphi0) * np.exp(self.log_slope(0)) * (E - self.E0)
        return np.sign(self.dphi_pi) * np.exp(self.log_slope(1)) * (E - self.Epi)

    @property
    def log_scale(self):
        """log w with w = 1/sqrt(tau^2 |xi_0' xi_pi'|) = eps sqrt(t_h)/(2 sqrt|Phi_0' Phi_pi'|)."""
        return (math.log(self.epsilon) - self.sh / (2 * self.epsilon) - math.log(2.0)
                - 0.5 * math.log(abs(self.dphi0 * self.dphi_pi)))


def make_pair(E0, Epi, wa, eps, lam):
    act = wa.at(0.5 * (E0 + Epi))
    return ResonantPair(E0=float(E0), Epi=float(Epi), epsilon=eps, lam=float(lam), sh=act.sh,
                        sv0=act.sv0, sv_pi=act.sv_pi, dphi0=act.dphi0, dphi_pi=act.dphi_pi)


@dataclass
class LargeTauResult:
    I0: tuple
    Ipi: tuple
    disjoint: bool
    dos: dict
    theta_center: float
    nature: str

    def theta(self, E, pair):
        xi0, xip = pair.xi(E, 0), pair.xi(E, 1)
        return pair.epsilon / PI * (pair.log_tau + 0.5 * np.log(1 + np.abs(xi0) + np.abs(xip)))


def analyze_resonant_large_tau(pair, delta=0.0):
    """Intervals {|xi_nu| <= 1}, Lyapunov profile and density-of-states weights."""
    if pair.gap_margin < delta:
        raise WrongRegime(f"S_h - S_v0 - S_vpi = {pair.gap_margin:.4g} < {delta}")
    eps = pair.epsilon
    h0 = math.exp(-pair.log_slope(0))
    hp = math.exp(-pair.log_slope(1))
    I0 = (pair.E0 - h0, pair.E0 + h0)
    Ip = (pair.Epi - hp, pair.Epi + hp)
    disjoint = I0[1] < Ip[0] or Ip[1] < I0[0]
    dos = {"I0": eps / (2 * PI), "Ipi": eps / (2 * PI)} if disjoint else {"union": eps / PI}
    res = LargeTauResult(I0=I0, Ipi=Ip, disjoint=disjoint, dos=dos, theta_center=0.0,
                         nature="singular")
    res.theta_center = float(res.theta(pair.Ebar, pair))
    return res


def _piece_roots(A, B, C, lo, hi):
    """Real roots of A x^2 + B x + C in [lo, hi]."""
    if A == 0:
        r = [] if B == 0 else [-C / B]
    else:
        disc = B * B - 4 * A * C
        if disc < 0:
            if disc > -1e-12 * max(B * B, abs(4 * A * C), 1.0):
                disc = 0.0
            else:
                return []
        sq = math.sqrt(disc)
        q = -0.5 * (B + math.copysign(sq, B)) if B != 0 else -0.5 * sq
        r = [q / A] if q == 0 else [q / A, C / q]
        if q == 0:
            r = [math.sqrt(max(-C / A, 0.0)), -math.sqrt(max(-C / A, 0.0))]
    return [x for x in r if lo - 1e-12 * (1 + abs(x)) <= x <= hi + 1e-12 * (1 + abs(x))]


def sigma_set(lam, x0, xpi, beta0, betapi):
    """Components of {f <= 0}, f = |2 Lambda - (x-x0)(x-xpi)| - 2 - b0|x-x0| - bpi|x-xpi|.

    This is the resonance condition written in the normalized variable
    x = (E - Ebar)/w where tau^2 xi_0 xi_pi = -(x-x0)(x-xpi). f is
    quadratic between the breakpoints x0, xpi and the zeros of the inner
    expression, so every boundary point is an exact quadratic root.
    """
    xb = 0.5 * (x0 + xpi)
    d2 = (0.5 * (xpi - x0)) ** 2

    def f(x):
        return (abs(2 * lam - (x - x0) * (x - xpi)) - 2 - beta0 * abs(x - x0)
                - betapi * abs(x - xpi))

    r = math.sqrt(d2 + 2 * lam) if d2 + 2 * lam >= 0 else None
    bps = sorted({x0, xpi} | ({xb - r, xb + r} if r is not None else set()))
    span = max(abs(b) for b in bps) + 4 + 4 * lam + (beta0 + betapi) * 4 + 10
    edges = [-span * 10] + bps + [span * 10]
    roots = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = 0.5 * (lo + hi)
        sq = math.copysign(1.0, 2 * lam - (m - x0) * (m - xpi))
        s0 = math.copysign(1.0, m - x0)
        sp = math.copysign(1.0, m - xpi)
        A = -sq
        B = sq * (x0 + xpi) - beta0 * s0 - betapi * sp
        C = sq * (2 * lam - x0 * xpi) - 2 + beta0 * s0 * x0 + betapi * sp * xpi
        roots += _piece_roots(A, B, C, lo, hi)
    roots = sorted(set(roots))
    comps = []
    pts = [edges[0]] + roots + [edges[-1]]
    for a, b in zip(pts[:-1], pts[1:]):
        if b > a and f(0.5 * (a + b)) <= 0:
            if comps and abs(comps[-1][1] - a) <= 1e-12 * (1 + abs(a)):
                comps[-1] = (comps[-1][0], b)
            else:
                comps.append((a, b))
    return comps, roots


def _sublevel(beta0, x0, betapi, xpi, T):
    """Interval {x: beta0|x-x0| + betapi|x-xpi| < T} (convex), or None."""
    bps = sorted([x0, xpi])
    g = lambda x: beta0 * abs(x - x0) + betapi * abs(x - xpi)
    xm = min(bps, key=g)
    if g(xm) >= T:
        return None
    s = beta0 + betapi
    lo = bps[0] - (T - g(bps[0])) / s if g(bps[0]) < T else None
    hi = bps[1] + (T - g(bps[1])) / s if g(bps[1]) < T else None
    if lo is None:  # minimum at the upper breakpoint; solve on the middle piece
        slope = beta0 - betapi if x0 < xpi else betapi - beta0
        lo = bps[1] - (T - g(bps[1])) / slope if slope > 0 else -math.inf
    if hi is None:
        slope = beta0 - betapi if x0 < xpi else betapi - beta0
        hi = bps[0] + (T - g(bps[0])) / (-slope) if slope < 0 else math.inf
    return (lo, hi)


def _intersect(a, b):
    out = []
    for p in a:
        for q in b:
            lo, hi = max(p[0], q[0]), min(p[1], q[1])
            if lo < hi:
                out.append((lo, hi))
    return out


def _complement(comps, within):
    out, start = [], within[0]
    for lo, hi in comps:
        if lo > start:
            out.append((start, lo))
        start = max(start, hi)
    if start < within[1]:
        out.append((start, within[1]))
    return out


@dataclass
class SmallTauResult:
    intervals: list
    degenerate: bool
    Iplus: list
    Iminus: list
    scenario: str
    dos: list
    x_intervals: list
    scale: float

    def theta(self, E, pair):
        """(eps/pi) log(tau sqrt(|xi_0| + |xi_pi|)); may be negative."""
        xi0, xip = pair.xi(E, 0), pair.xi(E, 1)
        with np.errstate(divide="ignore"):
            return pair.epsilon / PI * (pair.log_tau + 0.5 * np.log(np.abs(xi0) + np.abs(xip)))


def analyze_resonant_small_tau(pair, delta=0.0, c=0.05):
    """Sigma(eps) as two closed intervals, Lyapunov profile, I_c^+- and scenario."""
    if pair.gap_margin > -delta:
        raise WrongRegime(f"S_h - S_v0 - S_vpi = {pair.gap_margin:.4g} > -{delta}")
    if pair.lam < 1.0:
        raise WrongRegime("Lambda_n < 1")
    eps = pair.epsilon
    w = math.exp(pair.log_scale)
    x0 = (pair.E0 - pair.Ebar) / w
    xp = (pair.Epi - pair.Ebar) / w
    half = 0.5 * (pair.log_slope(0) - pair.log_slope(1))
    beta0 = math.exp(pair.log_tau + half)
    betap = math.exp(pair.log_tau - half)
    comps, roots = sigma_set(pair.lam, x0, xp, beta0, betap)
    degenerate = False
    if len(comps) == 1 and comps[0][0] < 0 < comps[0][1] and pair.lam - 1.0 <= 1e-12:
        # Lambda = 1: the two intervals touch at the mean energy
        comps = [(comps[0][0], 0.0), (0.0, comps[0][1])]
        degenerate = True
    if len(comps) != 2:
        raise GeometryError(f"Sigma has {len(comps)} components (boundary points {len(roots)})")
    E_iv = [(pair.Ebar + w * a, pair.Ebar + w * b) for a, b in comps]
    # thresholds on g = tau^2(|xi_0| + |xi_pi|) = beta0|x-x0| + betapi|x-xpi|
    t_plus = 2 * PI * c / eps
    t_minus = -2 * PI * c / eps
    below_plus = _sublevel(beta0, x0, betap, xp, math.exp(t_plus))
    below_minus = _sublevel(beta0, x0, betap, xp, math.exp(t_minus))
    Iplus = _intersect(comps, _complement([below_plus] if below_plus else [], (-math.inf, math.inf)))
    Iminus = _intersect(comps, [below_minus]) if below_minus else []
    to_E = lambda ivs: [(pair.Ebar + w * a, pair.Ebar + w * b) for a, b in ivs]
    scenario = _scenario(pair, E_iv)
    return SmallTauResult(intervals=E_iv, degenerate=degenerate, Iplus=to_E(Iplus),
                          Iminus=to_E(Iminus), scenario=scenario, dos=[eps / (2 * PI)] * 2,
                          x_intervals=comps, scale=w)


def _scenario(pair, E_iv, factor=10.0):
    eps = pair.epsilon
    sep = abs(pair.Epi - pair.E0)
    lf = math.log(factor)
    if pair.log_rho < -lf and (sep == 0 or math.log(sep) < math.log(eps) - pair.sh / (2 * eps) - lf):
        return "a"
    if pair.log_rho > lf:
        (a1, b1), (a2, b2) = E_iv
        inside = b1 <= pair.E0 <= a2 and (a2 - b1) < 0.5 * (b2 - a1)
        return "b1" if inside else "b2"
    return "intermediate"


def detect_model_regime(pair, C=10.0, phi0=0.0, phi_pi=0.0):
    """Whether tau and the xi are of order one; emits model-cocycle parameters."""
    tau = pair.tau
    xi0 = float(pair.xi(pair.Ebar, 0))
    xip = float(pair.xi(pair.Ebar, 1))
    ok = (1.0 / C <= tau <= C) and abs(xi0) + abs(xip) <= C
    eps = pair.epsilon
    params = {"tau": tau, "theta_n": hill.theta_from_lambda(pair.lam), "xi0": xi0, "xi_pi": xip,
              "phi0": phi0, "phi_pi": phi_pi, "h": eps * ((2 * PI / eps) % 1.0), "epsilon": eps}
    return ok, params


# ------------------------------------------------------------------ report

@dataclass
class SpectralReport:
    hypotheses: dict
    parameters: dict
    sequences: dict
    delta0: float
    intervals: list
    pairs: list
    flags: dict

    def to_dict(self):
        return _jsonable(asdict(self))

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def resolve_lambda(V, n, lam=None):
    """Lambda_n from the argument, the potential, or the pointwise computation.

    A finite-gap spectrum without a supplied value uses the even member of
    its isospectral class, for which Lambda_n = 1.
    """
    if lam is not None:
        return float(lam), "argument"
    if V.mode == "finite_gap":
        if n in V.lambda_n:
            return float(V.lambda_n[n]), "prescribed"
        return 1.0, "even representative"
    return float(hill.lambda_n(V, n)), "computed"


def spectral_report(V, alpha, eps, J, n=1, lam=None, c=0.05, N=2, zeta=0.0, method="cut"):
    """Assemble sequences, intervals, refinements and resonant analyses on J."""
    wa = WindowActions(V, n, alpha, J, method=method)
    hyp = wa.hypotheses()
    if not hyp["bei_ok"] or not hyp["T_ok"]:
        raise HypothesisError("hypotheses (BEI)/(T) fail on the window", margins=hyp)
    lam, lam_src = resolve_lambda(V, n, lam)
    seq0 = quantize(wa.phi(0), wa.J, eps, "type0")
    seqp = quantize(wa.phi(PI), wa.J, eps, "typePi")
    d0 = window_delta0(wa)
    coarse = coarse_intervals(seq0, seqp, d0, eps)
    grid = np.linspace(*wa.J, 81)
    prof = wa.profile(grid)
    out, pairs = [], []
    for iv in coarse.intervals:
        other = seqp.energies if iv.kind == "type0" else seq0.energies
        rec = {"kind": iv.kind, "quantized": iv.center, "coarse": [iv.lo, iv.hi],
               "resonant": iv.resonant, "dos_weight": iv.dos_weight}
        if iv.resonant:
            out.append(rec)
            continue
        try:
            ref = refine_nonresonant(iv, wa, eps, lam)
            ref.flags["quantized"] = iv.center
            classify_nonresonant(ref, wa, eps, other, c=c, N=N)
            rec.update({"center": ref.center, "halfwidth": ref.halfwidth, "nature": ref.nature,
                        "lyapunov": ref.lyapunov, "shift": ref.flags["shift"],
                        "diophantine_caveat": ref.flags.get("diophantine_caveat", False)})
        except ReclassifyAsResonant as exc:
            rec.update({"resonant": True, "reclassified": str(exc)})
        out.append(rec)
    for i, j in coarse.pairs:
        pair = make_pair(seq0.energies[i], seqp.energies[j], wa, eps, lam)
        rec = {"E0": pair.E0, "Epi": pair.Epi, "Ebar": pair.Ebar, "log_tau": pair.log_tau,
               "log_rho": pair.log_rho, "lambda_n": lam}
        try:
            if pair.gap_margin > 0:
                r = analyze_resonant_large_tau(pair)
                rec.update({"regime": "large_tau", "I0": r.I0, "Ipi": r.Ipi, "dos": r.dos,
                            "theta_center": r.theta_center, "nature": r.nature})
            else:
                r = analyze_resonant_small_tau(pair, c=c)
                rec.update({"regime": "small_tau", "intervals": r.intervals, "Iplus": r.Iplus,
                            "Iminus": r.Iminus, "scenario": r.scenario, "dos": r.dos,
                            "degenerate": r.degenerate})
            ok, params = detect_model_regime(pair)
            rec["model_regime"] = ok
            if ok:
                rec["model_parameters"] = params
        except QpwkbError as exc:
            rec.update({"regime": "unresolved", "error": f"{type(exc).__name__}: {exc}"})
        pairs.append(rec)
    flags = {"alternation": alternation(prof), **transition_conditions(prof),
             "at_most_one_meeting": coarse.at_most_one, "lambda_source": lam_src}
    weights = sum(r["dos_weight"] for r in out)
    flags["dos_total"] = weights
    flags["dos_expected"] = eps / (2 * PI) * (len(seq0) + len(seqp))
    return SpectralReport(
        hypotheses=hyp,
        parameters={"alpha": alpha, "epsilon": eps, "J": list(wa.J), "n": n, "zeta": zeta,
                    "lambda_n": lam, "c": c, "N": N},
        sequences={"type0": seq0.energies.tolist(), "typePi": seqp.energies.tolist(),
                   "spacing_C": [seq0.spacing_C, seqp.spacing_C]},
        delta0=d0, intervals=out, pairs=pairs, flags=flags)
