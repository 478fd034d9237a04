"""The periodic operator H0 = -d^2/dx^2 + V(x) with period 1.

Monodromy and discriminant, band edges, the principal Bloch
quasi-momentum k_p, Bloch solutions, the function omega(E) and the
gap functional Lambda_n(V). Potentials come either with pointwise values
(sampled or Fourier) or as a finite-gap spectrum given by its band edges.
"""
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import integrate, interpolate, optimize

from . import _magnus
from .errors import (BranchPointProximity, ContourError, EdgeSearchError,
                     NearDegenerate, NormalizationError, OutOfRange,
                     QuadratureError, UnsupportedMode, UnsupportedPotential)

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------- potentials

@dataclass(frozen=True, eq=False)
class PeriodicPotential:
    """A real 1-periodic potential.

    mode is one of "sampled", "fourier" or "finite_gap".

    * fourier: V(x) = a[0] + sum_m a[m] cos(2 pi m x) + b[m] sin(2 pi m x),
      with b[0] unused.
    * sampled: values on x_j = j/N, j < N, interpolated periodically with
      the given order (1 or 3).
    * finite_gap: band edges E_1 < E_2 < ... < E_{2g+1}; no pointwise V.
      ``lambda_n`` holds user-supplied Lambda_n values for this mode.
    """

    mode: str
    a: np.ndarray = None
    b: np.ndarray = None
    samples: np.ndarray = None
    order: int = 3
    edges: np.ndarray = None
    periodize: bool = True
    lambda_n: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("sampled", "fourier", "finite_gap"):
            raise ValueError(f"unknown potential mode {self.mode!r}")
        if self.mode == "finite_gap":
            e = np.asarray(self.edges, dtype=float)
            if e.ndim != 1 or len(e) % 2 != 1:
                raise ValueError("finite-gap mode needs an odd number 2g+1 of edges")
            if np.any(np.diff(e) <= 0):
                raise ValueError("finite-gap edges must be strictly increasing (all gaps open)")
            object.__setattr__(self, "edges", e)
        elif self.mode == "fourier":
            a = np.atleast_1d(np.asarray(self.a, dtype=float))
            b = np.zeros_like(a) if self.b is None else np.asarray(self.b, dtype=float)
            if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
                raise ValueError("Fourier coefficients must be real and finite")
            m = max(len(a), len(b))
            a = np.pad(a, (0, m - len(a)))
            b = np.pad(b, (0, m - len(b)))
            b[0] = 0.0
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)
        else:
            s = np.asarray(self.samples, dtype=float)
            if s.ndim != 1 or len(s) < 4 or not np.all(np.isfinite(s)):
                raise ValueError("sampled mode needs at least 4 finite real samples")
            if self.order not in (1, 3):
                raise ValueError("interpolation order must be 1 or 3")
            object.__setattr__(self, "samples", s)

    @classmethod
    def fourier(cls, a, b=None):
        """Build from cosine coefficients a[0..M] and sine coefficients b[1..M]."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        full_b = np.zeros(1)
        if b is not None:
            full_b = np.concatenate([[0.0], np.atleast_1d(np.asarray(b, dtype=float))])
        return cls("fourier", a=a, b=full_b)

    @classmethod
    def constant(cls, value=0.0):
        return cls.fourier([value])

    @classmethod
    def sampled(cls, values, order=3):
        return cls("sampled", samples=values, order=order)

    @classmethod
    def finite_gap(cls, edges, periodize=True, lambda_n=None):
        return cls("finite_gap", edges=edges, periodize=periodize,
                   lambda_n=dict(lambda_n or {}))

    @property
    def pointwise(self):
        return self.mode != "finite_gap"

    @cached_property
    def _spline(self):
        s = self.samples
        x = np.arange(len(s) + 1) / len(s)
        y = np.append(s, s[0])
        if self.order == 1:
            return None
        return interpolate.CubicSpline(x, y, bc_type="periodic")

    def __call__(self, x):
        if self.mode == "finite_gap":
            raise UnsupportedMode("finite-gap potentials have no pointwise values")
        x = np.asarray(x, dtype=float)
        if self.mode == "fourier":
            m = np.arange(len(self.a))
            ph = TWO_PI * np.multiply.outer(x, m)
            return np.cos(ph) @ self.a + np.sin(ph) @ self.b
        xm = np.mod(x, 1.0)
        if self.order == 1:
            s = self.samples
            grid = np.arange(len(s) + 1) / len(s)
            return np.interp(xm, grid, np.append(s, s[0]))
        return self._spline(xm)

    def shifted(self, s):
        """The translate x -> V(x + s)."""
        if self.mode == "fourier":
            m = np.arange(len(self.a))
            c, d = np.cos(TWO_PI * m * s), np.sin(TWO_PI * m * s)
            return PeriodicPotential("fourier", a=self.a * c + self.b * d,
                                     b=self.b * c - self.a * d)
        if self.mode == "sampled":
            n = len(self.samples)
            return PeriodicPotential.sampled(self(np.arange(n) / n + s), self.order)
        return self

    @cached_property
    def _profile(self):
        x = np.linspace(0.0, 1.0, 2049)[:-1]
        return self(x)

    @property
    def vmin(self):
        return float(self._profile.min())

    @property
    def vmax(self):
        return float(self._profile.max())

    @property
    def is_constant(self):
        if self.mode == "finite_gap":
            return len(self.edges) == 1
        p = self._profile
        return bool(np.ptp(p) <= 1e-14 * max(1.0, np.abs(p).max()))

    @property
    def resolution(self):
        """Number of Fourier modes (or samples) the integrator must resolve."""
        if self.mode == "fourier":
            return len(self.a)
        return len(self.samples)

    def to_json(self):
        if self.mode == "fourier":
            return {"mode": "fourier", "a": self.a.tolist(), "b": self.b[1:].tolist()}
        if self.mode == "sampled":
            return {"mode": "sampled", "samples": self.samples.tolist(), "order": self.order}
        out = {"mode": "finite_gap", "edges": self.edges.tolist(), "periodize": self.periodize}
        if self.lambda_n:
            out["lambda_n"] = {str(k): v for k, v in self.lambda_n.items()}
        return out


def load_potential(source):
    """Read a potential from a JSON file path, JSON text or a dict.

    Schema: {"mode": "fourier", "a": [...], "b": [...]}
            {"mode": "sampled", "samples": [...], "order": 3}
            {"mode": "finite_gap", "edges": [...], "periodize": true,
             "lambda_n": {"1": 1.2}}
    """
    if isinstance(source, dict):
        doc = source
    else:
        text = str(source)
        if text.lstrip().startswith("{"):
            doc = json.loads(text)
        else:
            doc = json.loads(Path(text).read_text())
    mode = doc.get("mode")
    if mode == "fourier":
        return PeriodicPotential.fourier(doc["a"], doc.get("b"))
    if mode == "sampled":
        return PeriodicPotential.sampled(doc["samples"], int(doc.get("order", 3)))
    if mode == "finite_gap":
        lam = {int(k): float(v) for k, v in doc.get("lambda_n", {}).items()}
        return PeriodicPotential.finite_gap(doc["edges"], bool(doc.get("periodize", True)), lam)
    raise ValueError(f"unknown potential mode {mode!r}")


# ----------------------------------------------------------------- monodromy

@dataclass(frozen=True)
class Monodromy:
    """Transfer matrix over one period; columns are (y, y') at x = 1."""

    entries: np.ndarray
    energy: complex

    @property
    def trace(self):
        return self.entries[0, 0] + self.entries[1, 1]

    @property
    def det(self):
        m = self.entries
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]


def _require_pointwise(V):
    if not V.pointwise:
        raise UnsupportedMode("operation needs pointwise values of V (sampled or Fourier mode)")


def default_steps(V, energies):
    """Uniform step count giving about 1e-11 accuracy on the monodromy."""
    e = np.max(np.abs(np.asarray(energies))) if np.size(energies) else 0.0
    scale = math.sqrt(e + max(abs(V.vmin), abs(V.vmax)) + 1.0)
    return int(max(64, 30 * scale, 8 * V.resolution))


_NODE_CACHE = {}


def _nodes(V, n_steps):
    key = (id(V), n_steps)
    hit = _NODE_CACHE.get(key)
    if hit is not None and hit[0] is V:
        return hit[1]
    w = V(_magnus.node_positions(0.0, 1.0 / n_steps, n_steps))
    if len(_NODE_CACHE) > 64:
        _NODE_CACHE.clear()
    _NODE_CACHE[key] = (V, w)
    return w


def transfer(V, energies, n_steps=None, keep=False):
    """Vectorized one-period fundamental matrices, shape energies.shape + (2, 2)."""
    _require_pointwise(V)
    energies = np.asarray(energies)
    n = n_steps or default_steps(V, energies)
    out = _magnus.propagate(_nodes(V, n), energies, 1.0 / n, keep=keep)
    m = out[0] if keep else out
    if not np.all(np.isfinite(m)):
        raise QuadratureError("non-finite monodromy entries")
    return out


def monodromy(V, E, n_steps=None):
    """Monodromy matrix of H0 at energy E (real or complex)."""
    m = transfer(V, np.asarray(complex(E)), n_steps)
    return Monodromy(entries=m, energy=complex(E))


def _sin2(m):
    """1 - (trace/2)^2 written without cancellation (uses det = 1)."""
    d = m[..., 0, 0] - m[..., 1, 1]
    return -(d * d + 4.0 * m[..., 0, 1] * m[..., 1, 0]) / 4.0


def discriminant(V, E, n_steps=None):
    m = transfer(V, np.asarray(E), n_steps)
    return m[..., 0, 0] + m[..., 1, 1]


# ------------------------------------------------------------ band structure

@dataclass
class BandStructure:
    """Ordered band edges E_1 <= E_2 <= ... (stored 0-based in ``edges``).

    Gap n is (E_{2n}, E_{2n+1}); band n is [E_{2n-1}, E_{2n}]. Energies
    above ``upper`` lie outside the tabulated range.
    """

    edges: np.ndarray
    closed: np.ndarray
    provenance: str
    upper: float = np.inf
    dirichlet: np.ndarray = None
    closure_tol: float = 1e-9

    @property
    def n_gaps(self):
        return (len(self.edges) - 1) // 2

    def edge(self, j):
        """E_j with the 1-based numbering; -inf / +inf outside the table."""
        if j < 1:
            return -np.inf
        if j > len(self.edges):
            return np.inf
        return float(self.edges[j - 1])

    def gap(self, n):
        return self.edge(2 * n), self.edge(2 * n + 1)

    def band(self, n):
        return self.edge(2 * n - 1), self.edge(2 * n)

    def open_gaps(self):
        return [n for n in range(1, self.n_gaps + 1) if not self.closed[n - 1]]

    def locate(self, E):
        """Return ("below", 0), ("band", n) or ("gap", n) for real E."""
        E = float(E)
        if E > self.upper:
            raise OutOfRange(f"energy {E} beyond tabulated range (upper = {self.upper})")
        if E < self.edges[0]:
            return "below", 0
        j = int(np.searchsorted(self.edges, E, side="right"))
        if j % 2 == 1:
            return "band", (j + 1) // 2
        n = j // 2
        if self.closed[n - 1]:
            return "band", n
        return "gap", n


def band_edges(V, n_max=None, closure_tol=1e-9, n_steps=None):
    """First 2*n_max + 1 band edges of H0.

    Finite-gap potentials return the prescribed edges verbatim. Otherwise
    Dirichlet eigenvalues mu_j (one per gap closure) are bracketed by
    counting zeros of y2 on (0, 1); the discriminant has one zero in each
    (mu_{j-1}, mu_j) and the edges solve sin^2 k = 0 on both sides of mu_j.
    """
    if V.mode == "finite_gap":
        e = V.edges
        if n_max is not None:
            if 2 * n_max + 1 > len(e):
                raise OutOfRange(f"only {(len(e) - 1) // 2} gaps are prescribed")
            e = e[:2 * n_max + 1]
        return BandStructure(edges=e.copy(), closed=np.zeros((len(e) - 1) // 2, bool),
                             provenance="prescribed", closure_tol=closure_tol)
    if n_max is None:
        n_max = 4
    lo = V.vmin - 1.0
    hi = V.vmax + ((n_max + 1.5) * np.pi) ** 2 + 1.0
    n = n_steps or default_steps(V, [lo, 4.0 * hi])

    def count(E):
        _, tr = transfer(V, np.atleast_1d(np.asarray(E, float)), n, keep=True)
        y2 = tr[:, :, 0, 1]
        return np.sum(y2[1:] * y2[:-1] < 0, axis=0)

    def m12(E):
        return float(transfer(V, np.asarray(float(E)), n)[0, 1])

    def sin2(E):
        return float(_sin2(transfer(V, np.asarray(float(E)), n)))

    def disc(E):
        m = transfer(V, np.asarray(float(E)), n)
        return float(m[0, 0] + m[1, 1])

    for _ in range(30):
        if count(hi)[0] >= n_max + 1:
            break
        hi = lo + 2.0 * (hi - lo)
    else:
        raise EdgeSearchError("could not bracket enough Dirichlet eigenvalues")
    grid = lo + (hi - lo) * np.linspace(0.0, 1.0, 12 * (n_max + 2)) ** 2
    counts = count(grid)
    mus = []
    for j in range(1, n_max + 2):
        ia = np.nonzero(counts <= j - 1)[0]
        ib = np.nonzero(counts >= j)[0]
        if len(ia) == 0 or len(ib) == 0:
            raise EdgeSearchError(f"no bracket for Dirichlet eigenvalue {j}")
        a, b = grid[ia[-1]], grid[ib[0]]
        ca, cb = counts[ia[-1]], counts[ib[0]]
        for _ in range(200):
            if ca == j - 1 and cb == j:
                break
            mid = 0.5 * (a + b)
            cm = count(mid)[0]
            if cm <= j - 1:
                a, ca = mid, cm
            else:
                b, cb = mid, cm
        else:
            raise EdgeSearchError(f"could not isolate Dirichlet eigenvalue {j}")
        try:
            mus.append(optimize.brentq(m12, a, b, xtol=1e-14, rtol=1e-15, maxiter=500))
        except ValueError as exc:
            raise EdgeSearchError(f"Dirichlet eigenvalue {j}: {exc}") from exc
    try:
        zeros = [optimize.brentq(disc, lo if j == 0 else mus[j - 1], mus[j],
                                 xtol=1e-14, rtol=1e-15) for j in range(n_max + 1)]
        edges = [optimize.brentq(sin2, lo, zeros[0], xtol=1e-14, rtol=1e-15)]
        closed = []
        for j in range(n_max):
            # mu_j lies in the closure of gap j, possibly at one of its edges
            # (always so for even V); probe both sides for negative sin^2
            mu = mus[j]
            probes = mu + (1.0 + abs(mu)) * np.outer([-1.0, 1.0], 10.0 ** -np.arange(4, 14, 2)).ravel()
            probes = np.append(probes[(probes > zeros[j]) & (probes < zeros[j + 1])], mu)
            vals = np.real(_sin2(transfer(V, probes, n)))
            p = probes[np.argmin(vals)]
            if vals.min() < 0.0:
                left = optimize.brentq(sin2, zeros[j], p, xtol=1e-14, rtol=1e-15)
                right = optimize.brentq(sin2, p, zeros[j + 1], xtol=1e-14, rtol=1e-15)
            else:
                left = right = mu
            edges += [left, right]
            closed.append(right - left <= closure_tol)
    except ValueError as exc:
        raise EdgeSearchError(str(exc)) from exc
    return BandStructure(edges=np.array(edges), closed=np.array(closed, bool),
                         provenance="computed", upper=zeros[n_max],
                         dirichlet=np.array(mus[:n_max]), closure_tol=closure_tol)


# ----------------------------------------------------------- quasi-momentum

def _kp_from_matrix(m, E, bands):
    """Principal k_p on the real axis from monodromy entries."""
    s2 = np.real(_sin2(m))
    half = np.real(m[..., 0, 0] + m[..., 1, 1]) / 2.0
    out = np.empty(np.shape(E), complex)
    for idx, e in np.ndenumerate(np.asarray(E, float)):
        where, n = bands.locate(e)
        if where == "band":
            # sin^2 may be slightly negative at a closed-gap double point
            r = math.atan2(math.sqrt(max(s2[idx], 0.0)), (-1) ** (n - 1) * half[idx])
            out[idx] = np.pi * (n - 1) + r
        else:
            out[idx] = np.pi * n + 1j * math.asinh(math.sqrt(max(-s2[idx], 0.0)))
    return out


class FloquetMomentum:
    """Quasi-momentum of a potential with pointwise values."""

    def __init__(self, V, n_max=4, bands=None, n_steps=None):
        _require_pointwise(V)
        self.V = V
        self.bands = bands if bands is not None else band_edges(V, n_max)
        self.n_steps = n_steps or default_steps(V, [self.bands.upper + 50.0])

    def _matrix(self, E):
        return transfer(self.V, np.asarray(E), self.n_steps)

    def discriminant(self, E):
        m = self._matrix(E)
        return m[..., 0, 0] + m[..., 1, 1]

    def kp_real(self, E):
        E = np.asarray(E, float)
        return _kp_from_matrix(self._matrix(E), E, self.bands)

    def multipliers(self, E):
        """Floquet multipliers (mu_+, mu_-) with |mu_+| < 1 when Im E > 0.

        For Im E < 0 mu_+ is the continuation through the bands, |mu_+| > 1.
        """
        E = np.asarray(E, complex)
        m = self._matrix(E)
        half = (m[..., 0, 0] + m[..., 1, 1]) / 2.0
        s = np.sqrt(_sin2(m))
        mu1, mu2 = half + 1j * s, half - 1j * s
        small_first = np.abs(mu1) < np.abs(mu2)
        want_small = np.imag(E) >= 0
        plus = np.where(small_first == want_small, mu1, mu2)
        minus = np.where(small_first == want_small, mu2, mu1)
        return plus, minus, m

    def k0(self, E):
        """Some determination of k at complex E (Im k >= 0 on the upper half-plane)."""
        plus, _, _ = self.multipliers(E)
        return -1j * np.log(plus)

    def kp(self, E):
        """Principal k_p; tracked up from the real axis for complex E.

        Candidates are k0 + 2 pi l with Im k0 >= 0, so only the lattice shift
        has to be followed along the vertical path. Im E < 0 returns the
        Schwarz reflection conj(k_p(conj E)).
        """
        E = np.atleast_1d(np.asarray(E, complex))
        lower = E.imag < 0
        Eu = np.where(lower, np.conj(E), E)
        out = self.kp_real(Eu.real).astype(complex)
        tiny = Eu.imag <= 1e-12 * (1.0 + np.abs(Eu))
        todo = ~tiny
        if np.any(todo):
            x, y = Eu.real[todo], Eu.imag[todo]
            prev = out[todo]
            n_seg = 16
            while True:
                t = (np.arange(1, n_seg + 1) / n_seg) ** 2
                k = prev.copy()
                ok = True
                for tj in t:
                    cand = self.k0(x + 1j * y * tj)
                    l = np.round((k - cand).real / TWO_PI)
                    nxt = cand + TWO_PI * l
                    if np.any(np.abs(nxt - k) > 1.0):
                        ok = False
                        break
                    k = nxt
                if ok or n_seg > 4096:
                    break
                n_seg *= 4
            out[todo] = k
        return np.where(lower, np.conj(out), out)


# finite-gap model

_GRADED = None


def _graded_rule():
    """Gauss-Legendre panels on [0, 1], geometrically refined toward 0."""
    global _GRADED
    if _GRADED is None:
        cuts = np.concatenate([[0.0], 4.0 ** -np.arange(6, -1, -1)])
        x, w = np.polynomial.legendre.leggauss(14)
        nodes, weights = [], []
        for a, b in zip(cuts[:-1], cuts[1:]):
            nodes.append(a + (b - a) * (x + 1) / 2)
            weights.append((b - a) / 2 * w)
        _GRADED = (np.concatenate(nodes), np.concatenate(weights))
    return _GRADED


def _cheb_rule(n):
    i = np.arange(1, n + 1)
    return np.cos((2 * i - 1) * np.pi / (2 * n)), np.pi / n


class FiniteGapMomentum:
    """k(E) = (1/2) int_{E_1}^E P(t)/sqrt(R(t)) dt for a g-gap spectrum.

    R(t) = prod (t - E_j); P is monic of degree g with zero integral over
    every gap. The branch of sqrt(R) is the product of principal roots of
    (t - E_j), analytic on the upper half-plane; there k is exactly the
    principal k_p. With ``periodize`` the prescribed (rounded) edges are
    minimally adjusted so that every band carries exactly pi; the
    prescribed values stay in ``bands`` and ``edges_effective`` holds the
    ones used for computation.
    """

    def __init__(self, spec, periodize=None, tol=1e-5, n_cheb=96):
        if spec.mode != "finite_gap":
            raise ValueError("FiniteGapMomentum needs a finite-gap potential")
        self.spec = spec
        self.n_cheb = n_cheb
        raw = np.asarray(spec.edges, float)
        self.g = (len(raw) - 1) // 2
        self.bands = band_edges(spec)
        self.period_defect = self.band_defect(raw)
        periodize = spec.periodize if periodize is None else periodize
        if periodize and self.g > 0:
            eff = self._periodize(raw)
            rel = np.max(np.abs(eff - raw) / np.maximum(np.abs(raw), 1.0))
            if rel > tol:
                raise NormalizationError(
                    f"edges are not close to a periodic spectrum (relative change {rel:.2e})")
            self.edges_effective = eff
        else:
            self.edges_effective = raw.copy()
        # analytic correction sending the prescribed edges onto the effective ones
        self._shift = None
        if np.any(self.edges_effective != raw):
            self._shift = np.polynomial.Polynomial.fit(raw, self.edges_effective - raw, len(raw) - 1)
        self.p_coeffs = self._p_poly(self.edges_effective)
        e = self.edges_effective
        self.anchor_k = np.pi * (np.arange(1, len(e) + 1) // 2)

    # P and the normalization conditions

    def _segment_rule(self, e, i, n=None):
        """Chebyshev nodes and weights for int f/sqrt|R| over [e_i, e_{i+1}]."""
        u, w = _cheb_rule(n or self.n_cheb)
        a, b = e[i], e[i + 1]
        t = (a + b) / 2 + (b - a) / 2 * u
        rest = np.ones_like(t)
        for j, ej in enumerate(e):
            if j not in (i, i + 1):
                rest = rest * np.abs(t - ej)
        return t, w / np.sqrt(rest)

    def _p_poly(self, e):
        """Coefficients (highest first) of the monic normalizing polynomial."""
        g = (len(e) - 1) // 2
        if g == 0:
            return np.array([1.0])
        t0, scale = e[0], max(e[-1] - e[0], 1.0)
        mat = np.empty((g, g))
        rhs = np.empty(g)
        for j in range(g):
            t, w = self._segment_rule(e, 2 * j + 1)
            s = (t - t0) / scale
            for m in range(g):
                mat[j, m] = np.sum(w * s ** m)
            rhs[j] = -np.sum(w * s ** g)
        try:
            if np.linalg.cond(mat) > 1e13:
                raise np.linalg.LinAlgError("ill-conditioned")
            c = np.linalg.solve(mat, rhs)
        except np.linalg.LinAlgError as exc:
            raise NormalizationError(f"gap normalization system is singular: {exc}") from exc
        q = np.concatenate([[1.0], c[::-1]])
        # back to the variable t: P(t) = scale^g q((t - t0)/scale)
        poly = np.poly1d(q)(np.poly1d([1.0 / scale, -t0 / scale])) * scale ** g
        return poly.coeffs

    def p_roots(self):
        return np.sort(np.roots(self.p_coeffs).real)

    def band_defect(self, e=None):
        """(1/2) int_band |P|/sqrt|R| - pi for the g finite bands."""
        e = self.edges_effective if e is None else np.asarray(e, float)
        p = self._p_poly(e)
        out = []
        for j in range((len(e) - 1) // 2):
            t, w = self._segment_rule(e, 2 * j)
            out.append(0.5 * np.sum(w * np.abs(np.polyval(p, t))) - np.pi)
        return np.array(out)

    def _periodize(self, raw):
        e = raw.copy()
        weights = np.maximum(np.abs(raw[1:]), 1.0)
        for _ in range(12):
            r = self.band_defect(e)
            if np.max(np.abs(r)) < 1e-13:
                break
            jac = np.empty((len(r), len(e) - 1))
            for i in range(1, len(e)):
                h = 1e-7 * max(abs(e[i]), 1.0)
                ep, em = e.copy(), e.copy()
                ep[i] += h
                em[i] -= h
                jac[:, i - 1] = (self.band_defect(ep) - self.band_defect(em)) / (2 * h)
            jw = jac * weights
            step = weights * (jw.T @ np.linalg.solve(jw @ jw.T, -r))
            e[1:] += step
        return e

    # evaluation

    def _integrand(self, t, skip):
        e = self.edges_effective
        den = np.ones_like(t)
        for j, ej in enumerate(e):
            if j != skip:
                den = den * np.sqrt(t - ej)
        return np.polyval(self.p_coeffs, t) / den

    def kp(self, E, anchors=None):
        """Principal k_p on the closed upper half-plane (reflection below).

        ``anchors`` overrides the values k(E_j) = pi*floor(j/2) the local
        integrals start from.
        """
        E = np.atleast_1d(np.asarray(E, complex))
        lower = E.imag < 0
        w = E.real + 1j * np.abs(E.imag)
        if self._shift is not None:
            w = w + self._shift(w)
            w = w.real + 1j * np.abs(w.imag)
        e = self.edges_effective
        idx = np.argmin(np.abs(w[..., None] - e), axis=-1)
        b = e[idx]
        s, ws = _graded_rule()
        t = b[..., None] + (w - b)[..., None] * s ** 2
        vals = np.empty(t.shape, complex)
        for j in range(len(e)):
            sel = idx == j
            if np.any(sel):
                vals[sel] = self._integrand(t[sel], j)
        base = self.anchor_k if anchors is None else np.asarray(anchors)
        k = base[idx] + np.sqrt(w - b) * (vals @ ws)
        return np.where(lower, np.conj(k), k)

    def kp_real(self, E):
        return self.kp(np.asarray(E, float) + 0j)

    def k0(self, E):
        return self.kp(E)

    def discriminant(self, E):
        return 2.0 * np.cos(self.kp(E))


def bloch_momentum(V, n_max=4):
    """Quasi-momentum evaluator matching the potential's mode."""
    if V.mode == "finite_gap":
        return FiniteGapMomentum(V)
    return FloquetMomentum(V, n_max)


def quasimomentum_main(model, E):
    """Principal determination k_p(E) (real axis taken from above)."""
    E = np.asarray(E)
    scalar = E.ndim == 0
    if np.isrealobj(E):
        out = model.kp_real(np.atleast_1d(E))
    else:
        out = model.kp(np.atleast_1d(E))
    return complex(out[0]) if scalar else out


def finite_gap_quasimomentum(edges, E, n_nodes=96, periodize=True):
    """k(E) integrated from E_1 (full Chebyshev segments, then a partial one).

    Unlike FiniteGapMomentum.kp, the anchor values k(E_j) are not assumed
    but accumulated from the segment integrals, so this doubles as a
    consistency check of the normalization.
    """
    spec = PeriodicPotential.finite_gap(edges, periodize=periodize)
    model = FiniteGapMomentum(spec, n_cheb=n_nodes)
    e = model.edges_effective
    anchors = [0.0]
    for i in range(len(e) - 1):
        step = 0.0
        if i % 2 == 0:
            t, w = model._segment_rule(e, i)
            step = 0.5 * np.sum(w * np.abs(np.polyval(model.p_coeffs, t)))
        anchors.append(anchors[-1] + step)
    out = model.kp(np.atleast_1d(np.asarray(E, complex)), anchors=anchors)
    return out if out.size > 1 else complex(out[0])


# ------------------------------------------------------------ Bloch solutions

@dataclass
class BlochSolutions:
    """psi_+- sampled on x_j = j/N (j = 0..N) with psi(0) = 1."""

    x: np.ndarray
    psi_plus: np.ndarray
    psi_minus: np.ndarray
    dpsi_plus: np.ndarray
    dpsi_minus: np.ndarray
    k: complex
    mu_plus: complex

    @property
    def p_plus(self):
        return np.exp(-1j * self.k * self.x) * self.psi_plus

    @property
    def p_minus(self):
        return np.exp(1j * self.k * self.x) * self.psi_minus

    @property
    def wronskian(self):
        return self.psi_plus * self.dpsi_minus - self.dpsi_plus * self.psi_minus


def _bloch_batch(model, E, n_steps):
    """Sampled Bloch solutions for an array of energies (axis 0 = x)."""
    V = model.V
    E = np.asarray(E, complex)
    _, tr = transfer(V, E, n_steps, keep=True)
    m = tr[-1]
    half = (m[..., 0, 0] + m[..., 1, 1]) / 2.0
    s = np.sqrt(_sin2(m))
    mu1, mu2 = half + 1j * s, half - 1j * s
    real = E.imag == 0
    if np.any(real):
        kr = model.kp_real(E.real[real])
        if np.any(np.abs(kr.imag) > 0):
            raise NearDegenerate("real energy outside the bands: Bloch solutions not distinguished")
        mu1 = mu1.copy()
        mu2 = mu2.copy()
        mu1[real] = np.exp(1j * kr)
        mu2[real] = np.exp(-1j * kr)
    small_first = np.abs(mu1) < np.abs(mu2)
    want_small = E.imag > 0
    swap = (small_first != want_small) & ~real
    plus = np.where(swap, mu2, mu1)
    minus = np.where(swap, mu1, mu2)
    if np.any(np.abs(plus - minus) < 1e-8):
        raise BranchPointProximity("Floquet multipliers coincide (band edge)")

    def coef(mu):
        d1 = m[..., 0, 1]
        d2 = mu - m[..., 1, 1]
        use1 = np.abs(d1) >= np.abs(d2)
        with np.errstate(all="ignore"):
            return np.where(use1, (mu - m[..., 0, 0]) / np.where(use1, d1, 1.0),
                            m[..., 1, 0] / np.where(use1, 1.0, d2))

    cp, cm = coef(plus), coef(minus)
    y1, y2 = tr[..., 0, 0], tr[..., 0, 1]
    d1, d2 = tr[..., 1, 0], tr[..., 1, 1]
    return (y1 + cp * y2, y1 + cm * y2, d1 + cp * d2, d1 + cm * d2, plus, minus)


def bloch_solutions(V, E, n_steps=None, model=None):
    """Bloch solutions psi_+- = exp(+- i k_p x) p_+-(x), normalized at x = 0."""
    _require_pointwise(V)
    model = model or FloquetMomentum(V, n_max=_gap_count_for(V, E))
    n = n_steps or default_steps(V, [E])
    pp, pm, dp, dm, mu_p, _ = _bloch_batch(model, np.asarray(complex(E)), n)
    k = complex(model.kp(np.asarray([complex(E)]))[0])
    return BlochSolutions(x=np.arange(n + 1) / n, psi_plus=pp, psi_minus=pm,
                          dpsi_plus=dp, dpsi_minus=dm, k=k, mu_plus=complex(mu_p))


def _gap_count_for(V, E):
    n = int(np.sqrt(max(abs(complex(E)) - V.vmin, 0.0)) / np.pi) + 2
    return max(n, 2)


def _check_h1(V):
    _require_pointwise(V)
    if V.is_constant:
        raise UnsupportedPotential("constant potentials are excluded by (H1)")


def omega(V, E, step=None, n_steps=None, model=None):
    """omega(E) = -int p_- dp_+/dE / int p_- p_+ over one period.

    dp_+/dE by central differences with step 1e-5 (1 + |E|). Accepts an
    array of energies. Real E must lie inside a band.
    """
    _check_h1(V)
    E = np.atleast_1d(np.asarray(E, complex))
    model = model or FloquetMomentum(V, n_max=max(_gap_count_for(V, e) for e in E))
    n = n_steps or default_steps(V, E)
    h = step if step is not None else 1e-5 * (1.0 + np.abs(E))
    h = np.broadcast_to(h, E.shape)
    allE = np.concatenate([E - h, E, E + h])
    pp, pm, _, _, mu, _ = _bloch_batch(model, allE, n)
    x = np.arange(n + 1)[:, None] / n
    k = -1j * np.log(mu)
    m = len(E)
    k0 = k[m:2 * m]
    for sl in (slice(0, m), slice(2 * m, 3 * m)):
        k[sl] += TWO_PI * np.round((k0 - k[sl]).real / TWO_PI)
    p_plus = np.exp(-1j * k * x) * pp
    p_minus = np.exp(1j * k * x) * pm
    dp = (p_plus[:, 2 * m:] - p_plus[:, :m]) / (2.0 * h)
    num = np.mean(p_minus[:-1, m:2 * m] * dp[:-1], axis=0)
    den = np.mean(p_minus[:-1, m:2 * m] * p_plus[:-1, m:2 * m], axis=0)
    if np.any(np.abs(den) < 1e-12):
        raise NearDegenerate("denominator of omega vanishes")
    out = -num / den
    return out if out.size > 1 else complex(out[0])


@dataclass
class LambdaResult:
    value: float
    theta: complex
    contour_integral: complex
    center: float
    radius: float
    n_nodes: int
    error_estimate: float
    excess: float = 0.0  # Lambda_n - 1, computed without cancellation


def lambda_n(V, n, radius=None, n_nodes=128, full=False):
    """Lambda_n = (theta + 1/theta)/2 with theta = exp(contour integral of omega).

    The contour is a circle around gap n crossing the real axis inside the
    two neighbouring bands; the trapezoid nodes avoid the real axis. For a
    finite-gap potential the user-supplied value is returned.
    """
    if V.mode == "finite_gap":
        if n in V.lambda_n:
            return float(V.lambda_n[n])
        raise UnsupportedMode("Lambda_n of a finite-gap potential must be supplied by the user")
    _check_h1(V)
    bands = band_edges(V, n + 1)
    a, b = bands.gap(n)
    if bands.closed[n - 1]:
        raise ContourError(f"gap {n} is closed")
    length = b - a
    lo, hi = bands.edge(2 * n - 1), bands.edge(2 * n + 2)
    c, half = (a + b) / 2.0, length / 2.0
    if radius is None:
        radius = half + 0.5 * min(a - lo, hi - b)
    margin = 0.1 * length
    if radius - half < margin or c - radius < lo + margin or c + radius > hi - margin:
        raise ContourError("contour must cross the real axis inside the two bands next to the gap")
    model = FloquetMomentum(V, n_max=n + 1, bands=bands)

    def integral(nn):
        phi = TWO_PI * (np.arange(nn) + 0.5) / nn
        z = c + radius * np.exp(1j * phi)
        w = omega(V, z, model=model)
        return np.sum(w * 1j * (z - c)) * TWO_PI / nn

    full_int = integral(n_nodes)
    half_int = integral(n_nodes // 2)
    theta = np.exp(full_int)
    excess = 2.0 * np.sinh(full_int / 2.0) ** 2  # cosh(I) - 1
    res = LambdaResult(value=float(1.0 + excess.real), theta=complex(theta), contour_integral=complex(full_int),
                       center=c, radius=radius, n_nodes=n_nodes,
                       error_estimate=float(abs(full_int - half_int)), excess=float(excess.real))
    return res if full else res.value


def theta_from_lambda(lam):
    """Root theta >= 1 of theta + 1/theta = 2 Lambda."""
    if lam < 1.0:
        raise ValueError("Lambda_n must be >= 1")
    return lam + math.sqrt(lam * lam - 1.0)


# --------------------------------------------- finite-gap potential recovery

def finite_gap_potential(spec, phases=None, n_samples=1024, rtol=1e-12):
    """A pointwise potential with the given finite-gap spectrum.

    Integrates the Dubrovin equations for the Dirichlet eigenvalues
    mu_j = c_j - r_j cos(phi_j) in angle form and applies the trace formula
    V = E_1 + sum_j (E_2j + E_2j+1 - 2 mu_j). Zero phases start every mu_j
    at the lower gap edge, which gives an even potential. The result is a
    Fourier potential; closure of the flow after one period is checked.
    """
    model = FiniteGapMomentum(spec)
    e = model.edges_effective
    g = model.g
    if g == 0:
        return PeriodicPotential.constant(e[0])
    lo, hi = e[1:2 * g:2], e[2:2 * g + 1:2]
    c, r = (lo + hi) / 2, (hi - lo) / 2
    others = [np.array([x for i, x in enumerate(e) if i not in (2 * j + 1, 2 * j + 2)])
              for j in range(g)]

    def rhs(_, phi):
        mu = c - r * np.cos(phi)
        out = np.empty(g)
        for j in range(g):
            prod = np.prod([mu[j] - mu[k] for k in range(g) if k != j])
            out[j] = 2.0 * np.sqrt(np.prod(mu[j] - others[j])) / prod
        return out

    phi0 = np.zeros(g) if phases is None else np.asarray(phases, float)
    x = np.arange(n_samples + 1) / n_samples
    sol = integrate.solve_ivp(rhs, (0.0, 1.0), phi0, method="DOP853", t_eval=x,
                              rtol=rtol, atol=rtol)
    if not sol.success:
        raise QuadratureError(sol.message)
    turns = (sol.y[:, -1] - phi0) / TWO_PI
    if np.max(np.abs(turns - np.round(turns))) > 1e-6:
        raise NormalizationError(f"Dubrovin flow does not close after one period: {turns}")
    mu = c[:, None] - r[:, None] * np.cos(sol.y[:, :-1])
    v = e[0] + np.sum(lo[:, None] + hi[:, None] - 2.0 * mu, axis=0)
    coef = np.fft.rfft(v) / n_samples
    a = 2.0 * coef.real
    b = -2.0 * coef.imag
    a[0] /= 2.0
    if n_samples % 2 == 0:
        a[-1] /= 2.0
        b[-1] = 0.0
    keep = np.nonzero(np.abs(a) + np.abs(b) > 1e-14 * np.abs(a).max())[0].max() + 1
    if keep > n_samples // 2 - 8:
        raise QuadratureError("reconstructed potential is under-resolved; raise n_samples")
    return PeriodicPotential.fourier(a[:keep], b[1:keep])
