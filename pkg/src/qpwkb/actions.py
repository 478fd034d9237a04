"""Phase integrals, action integrals and tunneling coefficients.

Loop integrals of kappa d zeta are taken on ellipses whose foci are the
two branch points bounding a cut: in the angle variable of such an ellipse
the square-root singularities unfold and the trapezoid rule converges
geometrically. The same quantities reduce to integrals of the jump of
kappa across straight cuts; those reductions serve as an independent
check and as a fast vectorized path for parameter scans.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, ContourError, GeometryError, QpwkbError
from .momentum import WindowContext, continue_kappa

PI = math.pi


@dataclass
class ActionSet:
    """Phase integrals and actions at one energy (all positive)."""

    E: float
    phi0: float
    phi_pi: float
    sv0: float
    sv_pi: float
    sh0: float
    sh_pi: float
    dphi0: float = float("nan")
    dphi_pi: float = float("nan")
    method: str = "contour"
    checks: dict = field(default_factory=dict)

    @property
    def sh(self):
        return self.sh0 + self.sh_pi

    def row(self):
        return {"E": self.E, "phi0": self.phi0, "phi_pi": self.phi_pi, "sv0": self.sv0,
                "sv_pi": self.sv_pi, "sh": self.sh, "dphi0": self.dphi0, "dphi_pi": self.dphi_pi}


@dataclass
class TunnelCoefficients:
    """t = exp(-S/eps), kept as logarithms."""

    epsilon: float
    log_tv0: float
    log_tv_pi: float
    log_th0: float
    log_th_pi: float
    log_th: float

    @property
    def tv0(self):
        return math.exp(self.log_tv0)

    @property
    def tv_pi(self):
        return math.exp(self.log_tv_pi)

    @property
    def th0(self):
        return math.exp(self.log_th0)

    @property
    def th_pi(self):
        return math.exp(self.log_th_pi)

    @property
    def th(self):
        return math.exp(self.log_th)


def tunneling(actions, eps):
    """Tunneling coefficients of an ActionSet at adiabatic parameter eps."""
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    return TunnelCoefficients(epsilon=eps, log_tv0=-actions.sv0 / eps,
                              log_tv_pi=-actions.sv_pi / eps, log_th0=-actions.sh0 / eps,
                              log_th_pi=-actions.sh_pi / eps, log_th=-actions.sh / eps)


# ------------------------------------------------------------ cut integrals

def _half_rule(n, upper):
    """Midpoint nodes and weights on [0, upper] (upper = pi/2 or pi)."""
    phi = (np.arange(n) + 0.5) * upper / n
    return phi, np.full(n, upper / n)


def cut_actions(model, n, E, alpha, n_nodes=64):
    """Vectorized reductions to real integrals, arrays over (E, alpha).

    phi0 = 2 int_0^z2 (pi n - kappa_p), phi_pi = 2 int_z3^pi (kappa_p - pi n),
    sv0 = 2 int_0^y (kappa_p(it) - pi(n-1)) dt, sv_pi likewise on pi + iR,
    sh_half = int_z2^z3 Im kappa_p. Each uses a cosine substitution that
    makes the integrand even and periodic, so the midpoint rule converges
    geometrically.
    """
    E, alpha = np.broadcast_arrays(np.asarray(E, float), np.asarray(alpha, float))
    shape = E.shape
    E, alpha = E.ravel(), alpha.ravel()
    b = model.bands
    e2n, e2n1 = b.edge(2 * n), b.edge(2 * n + 1)
    em, ep = b.edge(2 * n - 1), b.edge(2 * n + 2)
    z2 = np.arccos((E - e2n) / alpha)
    z3 = np.arccos((E - e2n1) / alpha)
    y0 = np.arccosh((E - em) / alpha)
    y_pi = np.arccosh((ep - E) / alpha) if np.isfinite(ep) else np.full_like(E, np.inf)
    q, wq = _half_rule(n_nodes, PI / 2)
    h, wh = _half_rule(n_nodes, PI)
    cq, sq = np.cos(q), np.sin(q)
    ch, sh = np.cos(h), np.sin(h)

    def kp(energies):
        return model.kp_real(energies.ravel()).reshape(energies.shape)

    energies = [
        E[:, None] - alpha[:, None] * np.cos(z2[:, None] * cq),
        E[:, None] - alpha[:, None] * np.cos(PI - (PI - z3[:, None]) * cq),
        E[:, None] - alpha[:, None] * np.cosh(y0[:, None] * cq),
        E[:, None] + alpha[:, None] * np.cosh(np.where(np.isfinite(y_pi), y_pi, 0.0)[:, None] * cq),
        E[:, None] - alpha[:, None] * np.cos((z2 + z3)[:, None] / 2 - (z3 - z2)[:, None] / 2 * ch),
    ]
    sizes = [x.shape[1] for x in energies]
    allk = kp(np.concatenate(energies, axis=1))
    k = np.split(allk, np.cumsum(sizes)[:-1], axis=1)
    out = {
        "phi0": 2 * z2 * (((PI * n - k[0].real) * sq) @ wq),
        "phi_pi": 2 * (PI - z3) * (((k[1].real - PI * n) * sq) @ wq),
        "sv0": 2 * y0 * (((k[2].real - PI * (n - 1)) * sq) @ wq),
        "sv_pi": np.where(np.isfinite(y_pi), 2 * y_pi * (((PI * (n + 1) - k[3].real) * sq) @ wq), np.inf),
        "sh_half": (z3 - z2) / 2 * ((k[4].imag * sh) @ wh),
    }
    return {key: v.reshape(shape) for key, v in out.items()}


def _cut(ctx, n_nodes=64):
    res = cut_actions(ctx.model, ctx.n, ctx.E, ctx.alpha, n_nodes)
    return {key: float(v) for key, v in res.items()}


# ------------------------------------------------------------ phase integrals

def _phase_reduced(ctx, sigma, n_nodes):
    """Gauss-Legendre in u with zeta = turning point -+ u^2."""
    n = ctx.n
    z2, z3 = ctx.branch_points.real
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    if sigma == 0:
        top = math.sqrt(z2)
        u = top * (x + 1) / 2
        k = ctx.kappa_p(z2 - u ** 2).real
        return 2 * np.sum(w * top / 2 * (PI * n - k) * 2 * u)
    top = math.sqrt(PI - z3)
    u = top * (x + 1) / 2
    k = ctx.kappa_p(z3 + u ** 2).real
    return 2 * np.sum(w * top / 2 * (k - PI * n) * 2 * u)


def _phase_loop(ctx, sigma, n_nodes):
    """(1/2) closed-loop integral of kappa d zeta along the real branch."""
    n = ctx.n
    z2, z3 = ctx.branch_points.real
    phi = 2 * PI * (np.arange(n_nodes) + 0.25) / n_nodes
    if sigma == 0:
        zeta, dz = z2 * np.cos(phi), -z2 * np.sin(phi)
    else:
        zeta, dz = PI - (PI - z3) * np.cos(phi), (PI - z3) * np.sin(phi)
    kappa = PI * n + np.sign(np.sin(phi)) * (ctx.kappa_p(zeta).real - PI * n)
    return 0.5 * np.sum(kappa * dz) * 2 * PI / n_nodes


def phase_integral(ctx, sigma, n_nodes=48, check=True, tol=1e-6):
    """Phi_sigma (sigma = 0 or pi) from the symmetry-reduced formula.

    The value is cross-checked against the closed-loop quadrature on the
    real branch; a mismatch above tol raises ConsistencyError.
    """
    sigma = 0 if sigma == 0 else 1
    val = _phase_reduced(ctx, sigma, n_nodes)
    if check:
        loop = abs(_phase_loop(ctx, sigma, 4 * n_nodes + 2))
        if abs(loop - val) > tol * max(1.0, abs(val)):
            raise ConsistencyError(f"phase integral mismatch: reduced {val!r}, loop {loop!r}")
    return float(val)


# ---------------------------------------------------------- loop integrals

def _segment(ctx, kind):
    """Endpoints of the cut a loop of the given kind surrounds."""
    bp = ctx.branch_points
    z2, z3 = bp.real
    n = ctx.n
    if kind == "h_pi":
        return complex(z2), complex(z3)
    if kind == "h_0":
        return complex(-z3), complex(-z2)
    if kind == "v_0":
        y = bp.im(2 * n - 1)
        return -1j * y, 1j * y
    if kind == "v_pi":
        y = bp.im(2 * n + 2)
        if not math.isfinite(y):
            raise GeometryError("no branch point on pi + iR: band n+1 is unbounded")
        return PI - 1j * y, PI + 1j * y
    raise ValueError(kind)


def _ellipse(a, b, eta, n_nodes):
    """Nodes and derivative of the ellipse with foci a, b and parameter eta."""
    c, half = (a + b) / 2, (b - a) / 2
    theta = 2 * PI * np.arange(n_nodes) / n_nodes
    w = theta + 1j * eta
    return c + half * np.cos(w), -half * np.sin(w)


def _default_eta(ctx, a, b):
    """Half the elliptic coordinate of the nearest foreign branch point."""
    c, half = (a + b) / 2, (b - a) / 2
    pts = ctx.branch_points.points()
    pts = np.concatenate([pts, pts + 2 * PI, pts - 2 * PI])  # periodic copies
    others = [p for p in pts if abs(p - a) > 1e-12 and abs(p - b) > 1e-12]
    etas = []
    for p in others:
        w = np.arccosh(complex((p - c) / half))
        etas.append(abs(w.real))
    return 0.5 * min(etas) if etas else 1.0


def loop_action(ctx, kind, eta=None, tol=1e-10, max_nodes=8192, reality_tol=1e-7):
    """|-(i/2) oint kappa d zeta| around one cut, kappa continued along the loop.

    kind: "v_0", "v_pi", "h_0", "h_pi". The trapezoid rule is refined by
    doubling until two successive values agree to tol.
    """
    a, b = _segment(ctx, kind)
    if eta is None:
        eta = _default_eta(ctx, a, b)
    prev = None
    n_nodes = 64
    while n_nodes <= max_nodes:
        zeta, dz = _ellipse(a, b, eta, n_nodes)
        path = np.append(zeta, zeta[0])
        cont = continue_kappa(ctx, path, (1, 0), clearance=0.0)
        if abs(cont.samples[-1] - cont.samples[0]) > 1e-8 * (1 + abs(cont.samples[0])):
            raise ContourError(f"loop {kind} does not close on the same determination")
        val = -0.5j * np.sum(cont.samples[:-1] * dz) * 2 * PI / n_nodes
        if prev is not None and abs(val - prev) < tol * max(1.0, abs(val)):
            break
        prev = val
        n_nodes *= 2
    else:
        raise ConsistencyError(f"loop {kind}: trapezoid rule not converged")
    if abs(val.imag) > reality_tol * max(1.0, abs(val)):
        raise ConsistencyError(f"loop {kind}: action not real (Im = {val.imag:.3g})")
    if abs(val) == 0:
        raise ConsistencyError(f"loop {kind}: vanishing action")
    return abs(val.real)


def vertical_action(ctx, sigma, eta=None, check=True, tol=1e-6):
    """S_v,sigma from the loop around the cut on iR (sigma = 0) or pi + iR."""
    kind = "v_0" if sigma == 0 else "v_pi"
    val = loop_action(ctx, kind, eta)
    if check:
        ref = _cut(ctx)["sv0" if sigma == 0 else "sv_pi"]
        if abs(val - ref) > tol * max(1.0, ref):
            raise ConsistencyError(f"S_{kind}: loop {val!r} vs cut {ref!r}")
    return val


def horizontal_action(ctx, sigma, eta=None, check=True, tol=1e-6):
    """S_h,sigma from the loop around the real gap segment (or its mirror)."""
    kind = "h_0" if sigma == 0 else "h_pi"
    val = loop_action(ctx, kind, eta)
    if check:
        ref = _cut(ctx)["sh_half"]
        if abs(val - ref) > tol * max(1.0, ref):
            raise ConsistencyError(f"S_{kind}: loop {val!r} vs cut {ref!r}")
    return val


# ---------------------------------------------------------- assembled sets

def _dphi(ctx, h=None):
    """Central differences of both phase integrals in E."""
    h = h or 1e-4 * max(1.0, abs(ctx.E))
    out = []
    for s in (0, 1):
        vals = []
        for e in (ctx.E - h, ctx.E + h):
            c = WindowContext.build(ctx.model, ctx.n, e, ctx.alpha)
            vals.append(phase_integral(c, s, check=False))
        out.append((vals[1] - vals[0]) / (2 * h))
    return out


def action_set(ctx, method="contour", derivatives=True):
    """All actions at one point. method "contour" (primary) or "cut" (fast)."""
    phi0 = phase_integral(ctx, 0)
    phi_pi = phase_integral(ctx, PI)
    if method == "contour":
        sv0 = vertical_action(ctx, 0)
        sv_pi = vertical_action(ctx, PI)
        sh0 = horizontal_action(ctx, 0)
        sh_pi = horizontal_action(ctx, PI)
    elif method == "cut":
        c = _cut(ctx)
        sv0, sv_pi, sh0, sh_pi = c["sv0"], c["sv_pi"], c["sh_half"], c["sh_half"]
    else:
        raise ValueError(f"unknown method {method!r}")
    d0, dpi = _dphi(ctx) if derivatives else (float("nan"), float("nan"))
    checks = {
        "positive": all(v > 0 for v in (phi0, phi_pi, sv0, sv_pi, sh0, sh_pi)),
        "parity": abs(sh0 - sh_pi) < 1e-8,
        "monotone": (d0 < 0 < dpi) if derivatives else None,
    }
    return ActionSet(E=ctx.E, phi0=phi0, phi_pi=phi_pi, sv0=sv0, sv_pi=sv_pi, sh0=sh0,
                     sh_pi=sh_pi, dphi0=d0, dphi_pi=dpi, method=method, checks=checks)


@dataclass
class ActionProfile:
    """Action sets on an energy grid; per-point failures are recorded."""

    n: int
    alpha: float
    rows: list
    failures: dict

    @property
    def energies(self):
        return np.array([r.E for r in self.rows])

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def invariants(self):
        ok = {k: all(r.checks.get(k) for r in self.rows) for k in ("positive", "parity", "monotone")}
        ok["complete"] = not self.failures
        return ok

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(self.rows[0].row()) if self.rows else ["E"])
            w.writeheader()
            for r in self.rows:
                w.writerow(r.row())


def action_profile(source, n, alpha, energies, method="contour"):
    """ActionSet at every grid energy; failures are kept, not raised."""
    rows, failures = [], {}
    model = None
    for e in np.asarray(energies, float):
        try:
            ctx = WindowContext.build(model or source, n, e, alpha)
            model = ctx.model
            rows.append(action_set(ctx, method))
        except QpwkbError as exc:
            failures[float(e)] = f"{type(exc).__name__}: {exc}"
    return ActionProfile(n=n, alpha=alpha, rows=rows, failures=failures)
