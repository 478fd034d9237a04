"""Direct numerics for H = -d^2/dx^2 + V(x) + alpha cos(eps x + zeta).

The equation is integrated over [-L, L] cell by cell with the Magnus
stepper, vectorized over energies. One run yields the Lyapunov exponent
(slope of the log-norm of (psi, psi')) and the Dirichlet eigenvalue count
below E (sign changes of the solution with psi(-L) = 0). Also contains the
effective model cocycle of the tau ~ 1 resonance.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import _magnus, hill
from .errors import NumericsError

ZETAS = (0.3, 1.9, 3.5, 5.1)


def pointwise(V):
    """A pointwise representative; finite-gap data is reconstructed (even member)."""
    if V.mode == "finite_gap":
        key = ("fg", tuple(V.edges))
        if key not in _RECON:
            _RECON[key] = hill.finite_gap_potential(V)
        return _RECON[key]
    return V


_RECON = {}


def default_length(eps, m=20):
    """L = m pi / eps rounded to a whole number of unit cells."""
    return float(max(1, round(m * math.pi / eps)))


def default_cell_steps(V, energies):
    """Steps per unit cell; about 1e-7 accuracy on the cell matrix."""
    e = float(np.max(np.abs(energies)))
    return int(max(128, 15 * math.sqrt(e + max(abs(V.vmin), abs(V.vmax)) + 1.0)))


@dataclass
class CocycleRun:
    """Runs at several energies for one (alpha, eps, zeta)."""

    E: np.ndarray
    zeta: float
    eps: float
    alpha: float
    L: float
    x: np.ndarray
    log_norm: np.ndarray
    count: np.ndarray
    det_defect: float
    renormalizations: int

    def lyapunov(self, tail=0.8, n_seg=5):
        """Least-squares slope over the last ``tail`` of the run, with a segment error bar."""
        n = len(self.x)
        i0 = int(round((1 - tail) * (n - 1)))
        x, y = self.x[i0:], self.log_norm[:, i0:].T
        slope = np.polyfit(x, y, 1)[0]
        segs = np.array_split(np.arange(len(x)), n_seg)
        s = np.array([np.polyfit(x[g], y[g], 1)[0] for g in segs if len(g) > 2])
        err = s.std(axis=0, ddof=1) / math.sqrt(len(s)) if len(s) > 1 else np.full_like(slope, np.inf)
        return slope, err


def run(V, alpha, eps, zeta, energies, L=None, n_steps=None, block=None, trace_stride=1):
    """Integrate from x = -L with (psi, psi') = (0, 1) to x = L at every energy.

    Returns a CocycleRun holding the log-norm at cell boundaries (every
    ``trace_stride`` cells) and the number of sign changes of psi in
    (-L, L). The state is renormalized after each cell.
    """
    Vp = pointwise(V)
    energies = np.atleast_1d(np.asarray(energies, float))
    L = default_length(eps) if L is None else float(L)
    n_cells = int(round(2 * L))
    n = n_steps or default_cell_steps(Vp, energies)
    h = 1.0 / n
    base = Vp(_magnus.node_positions(0.0, h, n))
    offs = _magnus.node_positions(0.0, h, n)
    nE = len(energies)
    block = block or max(1, 300000 // (n * nE))
    v = np.zeros((nE, 2))
    v[:, 1] = 1.0
    logs = np.zeros((n_cells + 1, nE))
    count = np.zeros(nE, int)
    last = np.zeros(nE)  # sign reference: psi just left of the current point
    started = np.zeros(nE, bool)
    det_def = 0.0
    x0 = -L
    with np.errstate(over="ignore", invalid="ignore"):  # overflow is detected below
        for c0 in range(0, n_cells, block):
            nb = min(block, n_cells - c0)
            xs = x0 + c0 + np.arange(nb)[:, None, None] + offs[None]
            w = (base[None] + alpha * np.cos(eps * xs + zeta)).reshape(nb * n, 3)
            mats = _magnus.step_matrices(w, energies, h).reshape((nb, n, nE, 2, 2))
            mats = np.moveaxis(mats, 0, 1)  # (n, nb, nE, 2, 2)
            P = _magnus.prefix(mats)
            cell = P[-1]
            det = cell[..., 0, 0] * cell[..., 1, 1] - cell[..., 0, 1] * cell[..., 1, 0]
            det_def = max(det_def, float(np.abs(det - 1).max()))
            for b in range(nb):
                psi = P[:, b, :, 0, 0] * v[:, 0] + P[:, b, :, 0, 1] * v[:, 1]  # (n, nE)
                seq = np.vstack([np.where(started, last, psi[0]), psi]) >= 0
                count += np.count_nonzero(seq[1:] != seq[:-1], axis=0)
                started[:] = True
                nv = np.einsum("eij,ej->ei", P[-1, b], v)
                nrm = np.hypot(nv[:, 0], nv[:, 1])
                if not np.all(np.isfinite(nrm)) or np.any(nrm == 0):
                    raise NumericsError("overflow in the cell recursion")
                v = nv / nrm[:, None]
                last = psi[-1] / nrm
                logs[c0 + b + 1] = np.log(nrm)
    if det_def > 1e-8:
        raise NumericsError(f"cell determinant drifts from 1 by {det_def:.2e}")
    log_norm = np.cumsum(logs, axis=0)  # per-cell terms are O(1); rounding stays near 1e-13
    xg = x0 + np.arange(n_cells + 1)
    sl = slice(None, None, trace_stride)
    return CocycleRun(E=energies, zeta=zeta, eps=eps, alpha=alpha, L=L, x=xg[sl],
                      log_norm=log_norm[sl].T, count=count, det_defect=det_def,
                      renormalizations=n_cells)


@dataclass
class LyapunovEstimate:
    E: float
    value: float
    error: float
    per_zeta: list = field(default_factory=list)


def lyapunov_direct(V, alpha, eps, zeta, E, L=None, n_steps=None):
    """Lyapunov exponent at one or several energies.

    zeta may be a float or a sequence; with several values the estimates
    are averaged and the spread is folded into the error bar.
    """
    zetas = np.atleast_1d(zeta)
    E = np.atleast_1d(np.asarray(E, float))
    vals, errs = [], []
    for z in zetas:
        r = run(V, alpha, eps, float(z), E, L=L, n_steps=n_steps)
        s, e = r.lyapunov()
        vals.append(np.atleast_1d(s))
        errs.append(np.atleast_1d(e))
    vals, errs = np.array(vals), np.array(errs)
    mean = vals.mean(axis=0)
    err = np.sqrt((errs ** 2).mean(axis=0))
    if len(zetas) > 1:
        err = np.maximum(err, vals.std(axis=0, ddof=1) / math.sqrt(len(zetas)))
    out = [LyapunovEstimate(E=float(e), value=float(m), error=float(s), per_zeta=vals[:, i].tolist())
           for i, (e, m, s) in enumerate(zip(E, mean, err))]
    return out[0] if len(out) == 1 else out


@dataclass
class IdsEstimate:
    E: float
    L: float
    count: int

    @property
    def value(self):
        return self.count / (2 * self.L)


def ids_direct(V, alpha, eps, zeta, E, L=None, n_steps=None):
    """Dirichlet eigenvalue count below E on [-L, L], by Sturm oscillation."""
    E = np.atleast_1d(np.asarray(E, float))
    r = run(V, alpha, eps, zeta, E, L=L, n_steps=n_steps, trace_stride=max(1, int(2 * (L or 1))))
    out = [IdsEstimate(E=float(e), L=r.L, count=int(c)) for e, c in zip(E, r.count)]
    return out[0] if len(out) == 1 else out


@dataclass
class ScanResult:
    energies: np.ndarray
    counts: np.ndarray  # (n_zeta, n_energies)
    L: float
    zetas: tuple

    @property
    def increments(self):
        """Per-cell count increase, minimum over zeta (edge states move with zeta)."""
        return np.diff(self.counts, axis=1).min(axis=0)

    @property
    def support(self):
        """Grid cells (E_i, E_i+1) where the count increases for every zeta."""
        inc = self.increments
        return [(float(self.energies[i]), float(self.energies[i + 1]))
                for i in np.nonzero(inc > 0)[0]]

    def count_between(self, a, b):
        """Median over zeta of N(b) - N(a) for grid energies a < b."""
        i, j = np.searchsorted(self.energies, [a, b])
        return float(np.median(self.counts[:, j] - self.counts[:, i]))


def spectrum_scan(V, alpha, eps, energies, L=None, zetas=ZETAS, n_steps=None, chunk=64):
    """Eigenvalue counts on an energy grid for several zeta."""
    energies = np.sort(np.asarray(energies, float))
    L = default_length(eps) if L is None else float(L)
    counts = np.zeros((len(zetas), len(energies)), int)
    for k, z in enumerate(zetas):
        for lo in range(0, len(energies), chunk):
            r = run(V, alpha, eps, z, energies[lo:lo + chunk], L=L, n_steps=n_steps,
                    trace_stride=int(2 * L))
            counts[k, lo:lo + chunk] = r.count
    if np.any(np.diff(counts, axis=1) < 0):
        raise NumericsError("eigenvalue count decreases with E")
    return ScanResult(energies=energies, counts=counts, L=L, zetas=tuple(zetas))


def two_tier_grid(J, centers, halfwidth, n_fine=5, n_coarse=40):
    """Coarse grid over J plus fine points around each predicted center."""
    g = [np.linspace(J[0], J[1], n_coarse)]
    for c in centers:
        g.append(c + halfwidth * np.linspace(-1, 1, n_fine))
    g = np.concatenate(g)
    return np.unique(g[(g >= J[0]) & (g <= J[1])])


# ---------------------------------------------------------------- model

@dataclass
class ModelCocycle:
    """Psi_{k+1} = M(E, k h + zeta) Psi_k with
    M = [[tau^2 g0 gpi + 1/theta, tau g0], [theta tau gpi, theta]],
    g_nu = xi_nu + sin(2 pi zeta/eps + phi_nu).
    """

    tau: float
    theta_n: float
    xi0: float
    xi_pi: float
    eps: float
    phi0: float = 0.0
    phi_pi: float = 0.0

    def __post_init__(self):
        if self.theta_n < 1:
            raise ValueError("theta_n must be >= 1")

    @classmethod
    def from_params(cls, p):
        return cls(tau=p["tau"], theta_n=p["theta_n"], xi0=p["xi0"], xi_pi=p["xi_pi"],
                   eps=p["epsilon"], phi0=p.get("phi0", 0.0), phi_pi=p.get("phi_pi", 0.0))

    @property
    def h(self):
        return self.eps * ((2 * math.pi / self.eps) % 1.0)

    def matrices(self, zetas):
        z = np.asarray(zetas, float)
        arg = 2 * math.pi * z / self.eps
        g0 = self.xi0 + np.sin(arg + self.phi0)
        gp = self.xi_pi + np.sin(arg + self.phi_pi)
        t, th = self.tau, self.theta_n
        m = np.empty(z.shape + (2, 2))
        m[..., 0, 0] = t * t * g0 * gp + 1 / th
        m[..., 0, 1] = t * g0
        m[..., 1, 0] = th * t * gp
        m[..., 1, 1] = th
        return m


def _log_norm_product(mats):
    """log ||M_n ... M_1|| by pairwise reduction, rescaling every level."""
    logs = np.zeros(len(mats))
    while len(mats) > 1:
        if len(mats) % 2:
            mats = np.concatenate([mats, np.eye(2)[None]])
            logs = np.concatenate([logs, [0.0]])
        mats = mats[1::2] @ mats[0::2]
        logs = logs[1::2] + logs[0::2]
        s = np.abs(mats).max(axis=(1, 2))
        mats = mats / s[:, None, None]
        logs = logs + np.log(s)
    return float(logs[0] + math.log(np.linalg.norm(mats[0], 2)))


def model_lyapunov(m, n_steps=1_000_000, zeta=0.0, n_seg=20):
    """(1/n) log ||M_n ... M_1|| and the variance of the per-segment rates."""
    zs = zeta + m.h * np.arange(n_steps)
    mats = m.matrices(zs)
    total = _log_norm_product(mats)
    rates = np.array([_log_norm_product(s) / len(s) for s in np.array_split(mats, n_seg)])
    return total / n_steps, float(rates.var(ddof=1) / len(rates))
