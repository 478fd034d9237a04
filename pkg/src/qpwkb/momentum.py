"""Complex momentum kappa(zeta) = k(E - alpha cos zeta) near one interacting gap.

Branch points, the (BEI) and (T) hypotheses, the real iso-energy curves
gamma_0 and gamma_pi, and continuation of kappa along paths in the
zeta-plane.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _branch
from .errors import BranchPointProximity, GeometryError, OutOfRange
from .hill import FiniteGapMomentum, FloquetMomentum, PeriodicPotential


@dataclass
class BeiReport:
    """Outcome of the (BEI) test; margins are distances to violation."""

    ok: bool
    margins: dict

    def __bool__(self):
        return self.ok

    @property
    def min_margin(self):
        return min(self.margins.values())


def _edge(bands, j):
    if bands.provenance == "computed" and j > len(bands.edges):
        raise OutOfRange(f"edge E_{j} is beyond the computed band table")
    return bands.edge(j)


def check_bei(bands, n, E, alpha):
    """[E_2n, E_2n+1] inside (E - alpha, E + alpha) inside (E_2n-1, E_2n+2)."""
    lo, hi = E - alpha, E + alpha
    margins = {
        "gap_bottom": _edge(bands, 2 * n) - lo,
        "gap_top": hi - _edge(bands, 2 * n + 1),
        "band_below": lo - _edge(bands, 2 * n - 1),
        "band_above": _edge(bands, 2 * n + 2) - hi,
    }
    ok = alpha > 0 and all(m > 0 for m in margins.values())
    return BeiReport(ok=bool(ok), margins=margins)


@dataclass
class WindowContext:
    """Energy E, coupling alpha and interacting gap n, with a momentum model."""

    E: float
    alpha: float
    n: int
    model: object

    @classmethod
    def build(cls, source, n, E, alpha, check=True):
        """source is a PeriodicPotential or an existing momentum model."""
        if isinstance(source, PeriodicPotential):
            if source.mode == "finite_gap":
                model = FiniteGapMomentum(source)
            else:
                model = FloquetMomentum(source, n_max=n + 1)
        else:
            model = source
        ctx = cls(E=float(E), alpha=float(alpha), n=int(n), model=model)
        if check:
            rep = check_bei(model.bands, n, E, alpha)
            if not rep.ok:
                raise GeometryError(f"(BEI) violated: {rep.margins}")
        return ctx

    @property
    def bands(self):
        return self.model.bands

    def energy(self, zeta):
        return self.E - self.alpha * np.cos(zeta)

    def kappa_p(self, zeta):
        """Principal kappa_p; real zeta uses k_p on the real axis."""
        zeta = np.asarray(zeta)
        if np.isrealobj(zeta):
            return self.model.kp_real(np.atleast_1d(self.energy(zeta))).reshape(zeta.shape)
        return self.model.kp(np.atleast_1d(self.energy(zeta))).reshape(zeta.shape)

    def k0(self, zeta):
        return self.model.k0(np.atleast_1d(self.energy(np.asarray(zeta, complex))))

    @property
    def branch_points(self):
        if "_bp" not in self.__dict__:
            self.__dict__["_bp"] = branch_points(self)
        return self.__dict__["_bp"]

    @property
    def clearance(self):
        return 0.05 * self.branch_points.min_distance()


@dataclass
class BranchPointSet:
    """Branch points of kappa in the cell 0 <= Re zeta <= pi, Im zeta >= 0.

    ``imag_axis`` and ``pi_axis`` map the edge index m to zeta_m.
    """

    real: tuple
    imag_axis: dict
    pi_axis: dict
    residual: float = 0.0

    def im(self, m):
        """Im zeta_m, +inf for an absent point."""
        if m in self.imag_axis:
            return self.imag_axis[m].imag
        if m in self.pi_axis:
            return self.pi_axis[m].imag
        return math.inf

    def points(self):
        """All branch points in one period strip, with their mirror images."""
        z2, z3 = self.real
        pts = [z2, z3, -z2, -z3, 2 * np.pi - z3]
        for z in self.imag_axis.values():
            pts += [z, np.conj(z)]
        for z in self.pi_axis.values():
            pts += [z, np.conj(z)]
        return np.array(pts, complex)

    def min_distance(self):
        p = self.points()
        d = np.abs(p[:, None] - p[None, :])
        d[d == 0] = np.inf
        return float(d.min())


def branch_points(ctx):
    """Solve E - alpha cos zeta = E_m for the edges seen from the window."""
    n, E, a = ctx.n, ctx.E, ctx.alpha
    bands = ctx.bands
    rep = check_bei(bands, n, E, a)
    if not rep.ok:
        raise GeometryError(f"(BEI) violated: {rep.margins}")
    z2 = math.acos((E - bands.edge(2 * n)) / a)
    z3 = math.acos((E - bands.edge(2 * n + 1)) / a)
    closed = np.concatenate([[False], np.repeat(np.asarray(bands.closed, bool), 2)])
    imag_axis, pi_axis = {}, {}
    for m in range(1, 2 * n):
        if not closed[m - 1]:
            imag_axis[m] = 1j * math.acosh((E - bands.edge(m)) / a)
    for m in range(2 * n + 2, len(bands.edges) + 1):
        if not closed[m - 1]:
            pi_axis[m] = math.pi + 1j * math.acosh((bands.edge(m) - E) / a)
    res = 0.0
    for m, z in [(2 * n, z2), (2 * n + 1, z3)] + list(imag_axis.items()) + list(pi_axis.items()):
        res = max(res, abs(E - a * np.cos(z) - bands.edge(m)))
    return BranchPointSet(real=(z2, z3), imag_axis=imag_axis, pi_axis=pi_axis, residual=res)


def complex_momentum(ctx, zeta, branch=(1, 0), clearance=0.0):
    """kappa = sign*kappa_p(zeta) + 2 pi l for branch = (sign, l).

    With a positive clearance, points that close to a branch point are
    refused.
    """
    zeta = np.asarray(zeta)
    if clearance > 0:
        d = np.abs(np.ravel(zeta)[:, None] - ctx.branch_points.points()[None, :]).min()
        if d < clearance:
            raise BranchPointProximity(f"zeta within {d:.3g} of a branch point")
    s, l = branch
    out = s * ctx.kappa_p(zeta) + 2 * np.pi * l
    return complex(out) if out.ndim == 0 else out


@dataclass
class TReport:
    ok: bool
    lhs: float
    rhs: float


def check_T(ctx, actions):
    """2 pi min(Im zeta_2n-2, Im zeta_2n+3) > max(S_h, S_v0, S_vpi).

    ``actions`` is anything with attributes sh, sv0, sv_pi. Absent points
    (edge beyond the spectrum or the table) count as +inf.
    """
    bp = ctx.branch_points
    lhs = 2 * math.pi * min(bp.im(2 * ctx.n - 2), bp.im(2 * ctx.n + 3))
    rhs = max(actions.sh, actions.sv0, actions.sv_pi)
    return TReport(ok=bool(lhs > rhs), lhs=lhs, rhs=rhs)


@dataclass
class RealBranch:
    """Closed polyline (zeta, kappa) of one real iso-energy component."""

    which: str
    zeta: np.ndarray
    kappa: np.ndarray
    axes: dict = field(default_factory=dict)

    def reflect_zeta(self):
        z0 = self.axes["zeta"]
        return 2 * z0 - self.zeta, self.kappa

    def reflect_kappa(self):
        k0 = self.axes["kappa"]
        return self.zeta, 2 * k0 - self.kappa


def _loop(ctx, which, phi):
    """(zeta, kappa) on gamma_0 or gamma_pi as functions of an angle phi."""
    n = ctx.n
    z2, z3 = ctx.branch_points.real
    if which == "gamma_0":
        zeta = z2 * np.cos(phi)
    else:
        zeta = np.pi - (np.pi - z3) * np.cos(phi)
    kp = ctx.kappa_p(zeta).real
    kappa = np.pi * n + np.sign(np.sin(phi)) * (kp - np.pi * n)
    return zeta, kappa


def real_branches(ctx, n_points=400):
    """gamma_0 (symmetric about zeta = 0) and gamma_pi (about zeta = pi)."""
    n = ctx.n
    z2, z3 = ctx.branch_points.real
    meet = ctx.kappa_p(np.array([z2, z3])).real
    if np.max(np.abs(meet - np.pi * n)) > 1e-8:
        raise GeometryError(f"real branches do not close: kappa at the turning points {meet}")
    phi = 2 * np.pi * np.arange(n_points) / n_points
    out = []
    for which, axis in (("gamma_0", 0.0), ("gamma_pi", np.pi)):
        zeta, kappa = _loop(ctx, which, phi)
        out.append(RealBranch(which=which, zeta=zeta, kappa=kappa,
                              axes={"zeta": axis, "kappa": np.pi * n}))
    return tuple(out)


@dataclass
class PathContinuation:
    path: np.ndarray
    samples: np.ndarray
    start_branch: tuple
    end_branch: tuple
    inserted: int


def continue_kappa(ctx, path, start_branch=(1, 0), ratio=10.0, max_step=0.5, clearance=None):
    """Track kappa along a polyline starting in the given determination.

    start_branch is (sign, l) relative to kappa_p at the first vertex, or a
    complex starting value. end_branch is the determination reached at the
    last vertex in the same notation (None if it is not expressible there).
    """
    path = np.asarray(path, complex)
    clr = ctx.clearance if clearance is None else clearance
    if clr > 0:
        d = np.abs(path[:, None] - ctx.branch_points.points()[None, :]).min()
        if d < clr:
            raise BranchPointProximity(f"path passes within {d:.3g} of a branch point")
    if isinstance(start_branch, tuple):
        s, l = start_branch
        start = s * complex(ctx.kappa_p(path[:1])[0]) + 2 * np.pi * l
    else:
        start = complex(start_branch)
    samples, inserted = _branch.track(ctx.k0, path, start, ratio=ratio, max_step=max_step)
    end = _branch.classify(samples[-1], complex(ctx.kappa_p(path[-1:])[0]))
    begin = start_branch if isinstance(start_branch, tuple) else _branch.classify(
        start, complex(ctx.kappa_p(path[:1])[0]))
    return PathContinuation(path=path, samples=samples, start_branch=begin,
                            end_branch=end, inserted=inserted)


def write_curve_csv(path, zeta, kappa):
    """Dump (zeta_re, zeta_im, kappa_re, kappa_im) rows."""
    zeta = np.asarray(zeta, complex)
    kappa = np.asarray(kappa, complex)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["zeta_re", "zeta_im", "kappa_re", "kappa_im"])
        for z, k in zip(zeta, kappa):
            w.writerow([z.real, z.imag, k.real, k.imag])
