"""Sub-element volume of the positive phase of a nodal Q1 field.

Along the last reference axis the interpolant is linear, so the length of its
positive part is known in closed form. Integrating that length along the next
axis is also done in closed form, piece by piece between its kinks, which makes
the 2D result exact. In 3D the last integral uses Gauss-Legendre rules on pieces
split where the inner result stops being smooth: the roots of the edge lines
and of the quadratic where the inner kinks coincide.
"""

from __future__ import annotations

import numpy as np

from .mesh import Mesh

DEFAULT_ORDER = 6
CHUNK = 1024


def _unit_gauss(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1) / 2, w / 2


def _positive_length(a, b):
    """Length of {w in [0, 1]: a + b w > 0}."""
    with np.errstate(divide="ignore", invalid="ignore"):
        r = -a / b
        rising = np.clip(1 - r, 0, 1)
        falling = np.clip(r, 0, 1)
    return np.where(b > 0, rising, np.where(b < 0, falling, (a > 0).astype(float)))


def _linear_root(c0, c1):
    """Root of c0 + c1 x clipped to [0, 1]; 0 when absent."""
    with np.errstate(divide="ignore", invalid="ignore"):
        r = -c0 / c1
    return np.where(np.isfinite(r), np.clip(r, 0, 1), 0.0)


def _piecewise_rule(breaks, order):
    """Gauss nodes and weights on the intervals between sorted breakpoints (last axis)."""
    x, w = _unit_gauss(order)
    lo = breaks[..., :-1, None]
    hi = breaks[..., 1:, None]
    nodes = lo + (hi - lo) * x
    weights = (hi - lo) * w
    shape = breaks.shape[:-1] + (-1,)
    return nodes.reshape(shape), weights.reshape(shape)


def _with_ends(roots):
    zeros = np.zeros(roots.shape[:-1] + (1,))
    return np.sort(np.concatenate([zeros, roots, zeros + 1], axis=-1), axis=-1)


def _rational_integral(p_lo, p1, q_lo, q1, width):
    """Integral of (p_lo + p1 s) / (q_lo + q1 s) for s in [0, width], q without roots inside.

    Written as p1/q1 + c/q with c = p_lo - p1 q_lo / q1. A root of q at an end of
    the interval is shared by p (the ratio is a bounded length), so c vanishes
    there and the log term drops out.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x = q1 * width / q_lo
        small = np.abs(x) < 1e-3
        xs = np.where(small, x, 0.0)
        g = 1 - xs / 2 + xs**2 / 3 - xs**3 / 4 + xs**4 / 5
        h = 0.5 - xs / 3 + xs**2 / 4 - xs**3 / 5
        series = width * (p1 * width / q_lo * h + p_lo / q_lo * g)
        q1s = np.where(small, 1.0, q1)
        q_hi = q_lo + q1 * width
        ratio = q_hi / q_lo
        log_term = np.where((q_lo != 0) & (q_hi != 0) & (ratio > 0), np.log(np.where(ratio > 0, ratio, 1.0)), 0.0)
        c = p_lo - p1 * q_lo / q1s
        general = p1 / q1s * width + c / q1s * log_term
        value = np.where(small, series, general)
    return np.where(width > 0, value, 0.0)


def _inner_integral(a0, a1, t0, t1):
    """Integral over u in [0, 1] of the positive length of a(u) + (t(u) - a(u)) w.

    ``a`` is the field on the bottom line and ``t`` on the top one, both linear
    in u. On each piece between kinks the length is 0, 1, t/b or -a/b with
    b = t - a, all integrated in closed form.
    """
    b0, b1 = t0 - a0, t1 - a1
    roots = np.stack([_linear_root(a0, a1), _linear_root(t0, t1), _linear_root(b0, b1)], axis=-1)
    breaks = _with_ends(roots)
    lo, hi = breaks[..., :-1], breaks[..., 1:]
    width = hi - lo
    mid = (lo + hi) / 2

    def expand(c):
        return c[..., None]

    a_lo = expand(a0) + expand(a1) * lo
    t_lo = expand(t0) + expand(t1) * lo
    b_lo = t_lo - a_lo
    a_mid = expand(a0) + expand(a1) * mid
    b_mid = expand(b0) + expand(b1) * mid
    with np.errstate(divide="ignore", invalid="ignore"):
        r_mid = -a_mid / b_mid
    rising = b_mid > 0
    falling = b_mid < 0
    inside = (r_mid > 0) & (r_mid < 1) & (rising | falling)
    const = _positive_length(a_mid, b_mid)
    # rising: length t/b; falling: length -a/b
    p_lo = np.where(rising, t_lo, -a_lo)
    p1 = np.where(rising, expand(t1), -expand(a1)) * np.ones_like(lo)
    q1 = expand(b1) * np.ones_like(lo)
    safe_q = np.where(inside, b_lo, 1.0)
    exact = _rational_integral(p_lo, p1, safe_q, np.where(inside, q1, 0.0), width)
    return np.sum(np.where(inside, exact, const * width), axis=-1)


def _fraction_2d(f, order=None):
    # corners: 0 (0,0), 1 (1,0), 2 (1,1), 3 (0,1); w runs along y
    a0, a1 = f[:, 0], f[:, 1] - f[:, 0]
    t0, t1 = f[:, 3], f[:, 2] - f[:, 3]
    return _inner_integral(a0, a1, t0, t1)


def _fraction_3d(f, order):
    # bottom corners 0..3 and top corners 4..7, w runs along z, u along x, v along y
    def line(p, q):
        return np.stack([f[:, p], f[:, q] - f[:, p]], axis=-1)

    a0 = line(0, 3)  # bottom face at u=0, as a function of v
    a1 = line(1, 2) - a0
    t0 = line(4, 7)
    t1 = line(5, 6) - t0
    b0, b1 = t0 - a0, t1 - a1
    linear = [a0, a1, t0, t1, b0, b1, a0 + a1, t0 + t1, b0 + b1]
    roots = [_linear_root(c[:, 0], c[:, 1]) for c in linear]
    # coincident inner roots: a0 t1 - t0 a1 = 0, quadratic in v
    c0 = a0[:, 0] * t1[:, 0] - t0[:, 0] * a1[:, 0]
    c1 = a0[:, 0] * t1[:, 1] + a0[:, 1] * t1[:, 0] - t0[:, 0] * a1[:, 1] - t0[:, 1] * a1[:, 0]
    c2 = a0[:, 1] * t1[:, 1] - t0[:, 1] * a1[:, 1]
    disc = c1 * c1 - 4 * c2 * c0
    sq = np.sqrt(np.maximum(disc, 0))
    with np.errstate(divide="ignore", invalid="ignore"):
        quad = [(-c1 + sq) / (2 * c2), (-c1 - sq) / (2 * c2)]
    for r in quad:
        roots.append(np.where((disc >= 0) & np.isfinite(r), np.clip(r, 0, 1), 0.0))
    roots.append(_linear_root(c0, c1))
    v, wv = _piecewise_rule(_with_ends(np.stack(roots, axis=-1)), order)

    def at(c):
        return c[:, 0, None] + c[:, 1, None] * v

    inner = _inner_integral(at(a0), at(a1), at(t0), at(t1))
    return np.sum(inner * wv, axis=-1)


def element_fraction(values: np.ndarray, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Positive-phase fraction of Q1 elements from their corner values (n, 2**dim).

    Elements with no negative corner are fully positive, and elements with no
    positive corner are empty; only cut elements are integrated.
    """
    values = np.atleast_2d(np.asarray(values, float))
    dim = {4: 2, 8: 3}[values.shape[1]]
    # the sign pattern is scale invariant; unit scale keeps the closed forms away from under/overflow
    scale = np.abs(values).max(axis=1, keepdims=True)
    values = values / np.where(scale > 0, scale, 1.0)
    out = (values.min(axis=1) >= 0).astype(float)
    cut = np.flatnonzero((values.min(axis=1) < 0) & (values.max(axis=1) > 0))
    fn = _fraction_2d if dim == 2 else _fraction_3d
    for start in range(0, len(cut), CHUNK):
        idx = cut[start:start + CHUNK]
        out[idx] = np.clip(fn(values[idx], order), 0.0, 1.0)
    return out


def hard_fraction(mesh: Mesh, psi: np.ndarray, frozen: np.ndarray | None = None, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Hard fraction per element; frozen elements count as hard, inactive ones as 0."""
    frac = element_fraction(np.asarray(psi)[mesh.elements], order)
    if frozen is not None:
        frac[np.asarray(frozen, bool)] = 1.0
    return np.where(mesh.active, frac, 0.0)


def marching_volume(mesh: Mesh, psi: np.ndarray, frozen: np.ndarray | None = None, order: int = DEFAULT_ORDER):
    """Soft volume of the active domain and the per-element hard fraction."""
    frac = hard_fraction(mesh, psi, frozen, order)
    soft = float(np.sum((1 - frac) * mesh.active)) * mesh.element_volume
    return soft, frac
