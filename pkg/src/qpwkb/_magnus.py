"""Sixth-order Magnus stepping for y'' = (W(x) - E) y.

A step matrix is kept in traceless form [[a, b], [c, -a]] so the
propagator is an exact unimodular exponential. Everything is vectorized
over energies.
"""
import numpy as np

_S15 = np.sqrt(15.0)
GAUSS3 = np.array([0.5 - _S15 / 10.0, 0.5, 0.5 + _S15 / 10.0])


def node_positions(x0, h, n_steps):
    """Gauss nodes of every step, shape (n_steps, 3)."""
    left = x0 + h * np.arange(n_steps)
    return left[:, None] + h * GAUSS3[None, :]


def _comm(x, y):
    a1, b1, c1 = x
    a2, b2, c2 = y
    return (b1 * c2 - b2 * c1, 2.0 * (a1 * b2 - a2 * b1), 2.0 * (c1 * a2 - a1 * c2))


def ch_sh(s2):
    """cosh(s) and sinh(s)/s as functions of s**2 (real or complex)."""
    s2 = np.asarray(s2)
    small = np.abs(s2) < 1e-3
    if np.iscomplexobj(s2):
        s = np.sqrt(s2)
        with np.errstate(all="ignore"):
            ch = np.cosh(s)
            sh = np.sinh(s) / np.where(small, 1.0, s)
    else:
        r = np.sqrt(np.abs(s2))
        pos = s2 >= 0
        with np.errstate(all="ignore"):
            ch = np.where(pos, np.cosh(r), np.cos(r))
            sh = np.where(pos, np.sinh(r), np.sin(r)) / np.where(small, 1.0, r)
    ser_ch = 1 + s2 / 2 + s2**2 / 24 + s2**3 / 720
    ser_sh = 1 + s2 / 6 + s2**2 / 120 + s2**3 / 5040
    return np.where(small, ser_ch, ch), np.where(small, ser_sh, sh)


def step_entries(q1, q2, q3, h):
    """Entries (m11, m12, m21, m22) of one step propagator.

    q_i = W(x_i) - E at the three Gauss nodes; arrays broadcast together.
    """
    zero = np.zeros_like(q2)
    a1 = (zero, h + zero, h * q2)
    a2 = (zero, zero, (_S15 * h / 3.0) * (q3 - q1))
    a3 = (zero, zero, (10.0 * h / 3.0) * (q3 - 2.0 * q2 + q1))
    c1 = _comm(a1, a2)
    t = tuple(2.0 * u + v for u, v in zip(a3, c1))
    c2 = tuple(-u / 60.0 for u in _comm(a1, t))
    left = tuple(-20.0 * u - v + w for u, v, w in zip(a1, a3, c1))
    right = tuple(u + v for u, v in zip(a2, c2))
    cm = _comm(left, right)
    a, b, c = (u + v / 12.0 + w / 240.0 for u, v, w in zip(a1, a3, cm))
    ch, sh = ch_sh(a * a + b * c)
    return ch + sh * a, sh * b, sh * c, ch - sh * a


def _mul(x, y):
    """Batched 2x2 product x @ y on the last two axes."""
    out = np.empty(np.broadcast_shapes(x.shape, y.shape), dtype=np.result_type(x, y))
    out[..., 0, 0] = x[..., 0, 0] * y[..., 0, 0] + x[..., 0, 1] * y[..., 1, 0]
    out[..., 0, 1] = x[..., 0, 0] * y[..., 0, 1] + x[..., 0, 1] * y[..., 1, 1]
    out[..., 1, 0] = x[..., 1, 0] * y[..., 0, 0] + x[..., 1, 1] * y[..., 1, 0]
    out[..., 1, 1] = x[..., 1, 0] * y[..., 0, 1] + x[..., 1, 1] * y[..., 1, 1]
    return out


def step_matrices(w_nodes, energies, h):
    """All step propagators, shape (n_steps,) + energies.shape + (2, 2)."""
    energies = np.asarray(energies)
    q = w_nodes.reshape(w_nodes.shape[:1] + (1,) * energies.ndim + (3,)) - energies[..., None]
    m11, m12, m21, m22 = step_entries(q[..., 0], q[..., 1], q[..., 2], h)
    out = np.empty(m11.shape + (2, 2), dtype=m11.dtype)
    out[..., 0, 0], out[..., 0, 1], out[..., 1, 0], out[..., 1, 1] = m11, m12, m21, m22
    return out


def chain(mats):
    """Ordered product M_n ... M_1 by pairwise reduction over axis 0."""
    while len(mats) > 1:
        if len(mats) % 2:
            eye = np.zeros_like(mats[:1])
            eye[..., 0, 0] = eye[..., 1, 1] = 1.0
            mats = np.concatenate([mats, eye])
        mats = _mul(mats[1::2], mats[0::2])
    return mats[0]


def prefix(mats):
    """Cumulative products P_j = M_j ... M_1 (inclusive scan over axis 0)."""
    p = mats.copy()
    shift = 1
    while shift < len(p):
        p[shift:] = _mul(p[shift:], p[:-shift])
        shift *= 2
    return p


def propagate(w_nodes, energies, h, keep=False, chunk=400000):
    """Fundamental matrix over the steps described by w_nodes.

    w_nodes has shape (n_steps, 3). Returns an array (..., 2, 2) with
    columns (y, y') for initial data (1, 0) and (0, 1). With keep=True the
    matrices at every step boundary are returned too, shape
    (n_steps + 1, ..., 2, 2). Energies are processed in chunks to bound
    memory.
    """
    energies = np.asarray(energies)
    flat = energies.reshape(-1)
    n = len(w_nodes)
    per = max(1, chunk // max(n, 1))
    dtype = np.result_type(energies, w_nodes, float)
    y = np.empty((len(flat), 2, 2), dtype)
    trace = np.empty((n + 1, len(flat), 2, 2), dtype) if keep else None
    for lo in range(0, len(flat), per):
        sl = slice(lo, lo + per)
        mats = step_matrices(w_nodes, flat[sl], h)
        if keep:
            p = prefix(mats)
            trace[0, sl] = np.eye(2)
            trace[1:, sl] = p
            y[sl] = p[-1]
        else:
            y[sl] = chain(mats)
    y = y.reshape(energies.shape + (2, 2))
    if keep:
        return y, trace.reshape((n + 1,) + energies.shape + (2, 2))
    return y
