"""Hot kernels with a numba path and a pure-numpy path.

The backend is chosen once at import time from the ``WAVEPACKET_LAB_BACKEND``
environment variable (``numba`` or ``numpy``).  When the variable is unset the
numba path is used if numba imports cleanly.  Both paths implement the same
algorithms and are cross-checked in the test suite.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - import guard
    from numba import njit, prange

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def _select_backend() -> str:
    requested = os.environ.get("WAVEPACKET_LAB_BACKEND", "").strip().lower()
    if requested in ("numpy", "python", "pure"):
        return "numpy"
    if requested == "numba" and not _HAVE_NUMBA:
        raise RuntimeError("WAVEPACKET_LAB_BACKEND=numba but numba is not importable")
    return "numba" if _HAVE_NUMBA else "numpy"


BACKEND = _select_backend()


# ---------------------------------------------------------------------------
# Segment-to-box squared distance (tube/cube incidence)
# ---------------------------------------------------------------------------
#
# A tube is the set of (t, x) with t in [ta, tb] and |x - (p + (t - ta) v)|_2 <= r.
# A box is [a0, b0] x prod_i [a_i, b_i].  The squared distance from the moving
# center to the spatial box is a convex piecewise quadratic in t whose breakpoints
# are the times where one center coordinate crosses a face.  Minimising it exactly
# over the common time interval decides incidence.


def _min_dist2_numpy(p, v, ta, tb, lo, hi):
    """Vectorised exact minimum of the squared centre-to-box distance.

    Shapes: ``p, v`` (P, d); ``ta, tb`` (P,); ``lo, hi`` (P, d + 1) with the time
    extent in column 0.  Returns (P,) with ``inf`` where the time ranges miss.
    """
    p = np.asarray(p, float)
    v = np.asarray(v, float)
    P, d = p.shape
    t_lo = np.maximum(ta, lo[:, 0])
    t_hi = np.minimum(tb, hi[:, 0])
    empty = t_lo > t_hi
    t_hi = np.where(empty, t_lo, t_hi)
    # breakpoints, clipped into [t_lo, t_hi]
    with np.errstate(divide="ignore", invalid="ignore"):
        s_lo = (lo[:, 1:] - p) / v + ta[:, None]
        s_hi = (hi[:, 1:] - p) / v + ta[:, None]
    bps = np.concatenate([s_lo, s_hi], axis=1)
    bps = np.where(np.isfinite(bps), bps, t_lo[:, None])
    bps = np.clip(bps, t_lo[:, None], t_hi[:, None])
    pts = np.sort(np.concatenate([t_lo[:, None], bps, t_hi[:, None]], axis=1), axis=1)
    s0 = pts[:, :-1]
    s1 = pts[:, 1:]
    mid = 0.5 * (s0 + s1)
    # quadratic coefficients on each segment: sum_i (c_i(t) - e_i)^2 over active coords
    A = np.zeros_like(mid)
    B = np.zeros_like(mid)
    C = np.zeros_like(mid)
    for i in range(d):
        cm = p[:, i, None] + (mid - ta[:, None]) * v[:, i, None]
        below = cm < lo[:, i + 1, None]
        above = cm > hi[:, i + 1, None]
        edge = np.where(below, lo[:, i + 1, None], hi[:, i + 1, None])
        act = below | above
        # c_i(t) - e = alpha + beta t
        alpha = p[:, i, None] - ta[:, None] * v[:, i, None] - edge
        beta = np.broadcast_to(v[:, i, None], mid.shape)
        A += np.where(act, beta * beta, 0.0)
        B += np.where(act, 2.0 * alpha * beta, 0.0)
        C += np.where(act, alpha * alpha, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        vert = np.where(A > 0, -B / (2.0 * A), s0)
    vert = np.clip(vert, s0, s1)
    cand = np.stack([s0, s1, vert], axis=-1)
    vals = A[..., None] * cand**2 + B[..., None] * cand + C[..., None]
    out = np.maximum(vals.min(axis=(1, 2)), 0.0)
    return np.where(empty, np.inf, out)


@njit(cache=True)
def _min_dist2_one(p, v, ta, tb, lo, hi):  # pragma: no cover - compiled
    d = p.shape[0]
    t_lo = max(ta, lo[0])
    t_hi = min(tb, hi[0])
    if t_lo > t_hi:
        return np.inf
    pts = np.empty(2 * d + 2)
    m = 0
    pts[m] = t_lo
    m += 1
    pts[m] = t_hi
    m += 1
    for i in range(d):
        if v[i] != 0.0:
            for e in (lo[i + 1], hi[i + 1]):
                s = (e - p[i]) / v[i] + ta
                if s > t_lo and s < t_hi:
                    pts[m] = s
                    m += 1
    q = np.sort(pts[:m])
    best = np.inf
    for j in range(m - 1):
        s0 = q[j]
        s1 = q[j + 1]
        mid = 0.5 * (s0 + s1)
        A = 0.0
        B = 0.0
        C = 0.0
        for i in range(d):
            cm = p[i] + (mid - ta) * v[i]
            if cm < lo[i + 1]:
                e = lo[i + 1]
            elif cm > hi[i + 1]:
                e = hi[i + 1]
            else:
                continue
            alpha = p[i] - ta * v[i] - e
            beta = v[i]
            A += beta * beta
            B += 2.0 * alpha * beta
            C += alpha * alpha
        for s in (s0, s1):
            val = A * s * s + B * s + C
            if val < best:
                best = val
        if A > 0.0:
            s = -B / (2.0 * A)
            if s > s0 and s < s1:
                val = A * s * s + B * s + C
                if val < best:
                    best = val
    if m == 1 or q[0] == q[m - 1]:
        # degenerate single instant
        s = q[0]
        val = 0.0
        for i in range(d):
            c = p[i] + (s - ta) * v[i]
            if c < lo[i + 1]:
                val += (lo[i + 1] - c) ** 2
            elif c > hi[i + 1]:
                val += (c - hi[i + 1]) ** 2
        if val < best:
            best = val
    return max(best, 0.0)


@njit(cache=True)
def _min_dist2_numba(p, v, ta, tb, lo, hi):  # pragma: no cover - compiled
    P = p.shape[0]
    out = np.empty(P)
    for j in range(P):
        out[j] = _min_dist2_one(p[j], v[j], ta[j], tb[j], lo[j], hi[j])
    return out


def tube_box_min_dist2(p, v, ta, tb, lo, hi, backend: str | None = None) -> np.ndarray:
    """Exact minimum squared distance between moving tube centres and boxes.

    Each row pairs one tube (start point ``p``, unit velocity ``v``, time span
    ``[ta, tb]``) with one space-time box whose lower/upper corners are ``lo``
    and ``hi`` (time first).  Rows with disjoint time spans return ``inf``.
    """
    p = np.ascontiguousarray(p, dtype=float)
    v = np.ascontiguousarray(v, dtype=float)
    ta = np.ascontiguousarray(ta, dtype=float)
    tb = np.ascontiguousarray(tb, dtype=float)
    lo = np.ascontiguousarray(lo, dtype=float)
    hi = np.ascontiguousarray(hi, dtype=float)
    if p.shape[0] == 0:
        return np.zeros(0)
    if (backend or BACKEND) == "numba":
        return _min_dist2_numba(p, v, ta, tb, lo, hi)
    return _min_dist2_numpy(p, v, ta, tb, lo, hi)


# ---------------------------------------------------------------------------
# Light-cone shell integrals
# ---------------------------------------------------------------------------


def _shell_numpy(points, values, weights, times, anchors_t, anchors_x, width):
    """Return per-anchor sums of ``weights[j] * values[j, i]`` over the shell.

    ``points`` (M, d) spatial sample points, ``values`` (J, M) integrand per time
    slice, ``weights`` (J,) time quadrature weights, ``anchors_x`` (A, d).
    """
    out = np.zeros(len(anchors_t))
    for a in range(len(anchors_t)):
        r = np.sqrt(((points - anchors_x[a]) ** 2).sum(axis=1))
        for j in range(len(times)):
            if weights[j] == 0.0:
                continue
            mask = np.abs(r - abs(times[j] - anchors_t[a])) <= width
            out[a] += weights[j] * values[j, mask].sum()
    return out


@njit(cache=True)
def _shell_numba(points, values, weights, times, anchors_t, anchors_x, width):  # pragma: no cover
    A = anchors_t.shape[0]
    M, d = points.shape
    J = times.shape[0]
    out = np.zeros(A)
    r = np.empty(M)
    for a in range(A):
        for i in range(M):
            s = 0.0
            for c in range(d):
                z = points[i, c] - anchors_x[a, c]
                s += z * z
            r[i] = np.sqrt(s)
        acc = 0.0
        for j in range(J):
            wj = weights[j]
            if wj == 0.0:
                continue
            rad = abs(times[j] - anchors_t[a])
            part = 0.0
            for i in range(M):
                if abs(r[i] - rad) <= width:
                    part += values[j, i]
            acc += wj * part
        out[a] = acc
    return out


def shell_integrals(points, values, weights, times, anchors_t, anchors_x, width,
                    backend: str | None = None) -> np.ndarray:
    """Integrate sampled space-time data over light-cone shells.

    The shell of anchor ``(t', x')`` is ``| |x - x'| - |t - t'| | <= width``.  The
    caller folds the spatial cell volume into ``values``.
    """
    args = (
        np.ascontiguousarray(points, dtype=float),
        np.ascontiguousarray(values, dtype=float),
        np.ascontiguousarray(weights, dtype=float),
        np.ascontiguousarray(times, dtype=float),
        np.ascontiguousarray(anchors_t, dtype=float),
        np.ascontiguousarray(anchors_x, dtype=float),
        float(width),
    )
    if (backend or BACKEND) == "numba":
        return _shell_numba(*args)
    return _shell_numpy(*args)


# ---------------------------------------------------------------------------
# Randomised spectrum: sum_l H_l(xi) * sum_k X_{k,l} phi(xi - k)
# ---------------------------------------------------------------------------
#
# On every axis a lattice frequency xi lies in [b, b + 1) with b = floor(xi), so
# only the windows centred at b and b + 1 are non-zero there.  The 2^d corner
# weights are products of the two per-axis profile values.


def _corner_numpy(H, pts, base, wts, tables, kmin, K, d, n):
    out = np.zeros(len(pts), dtype=np.complex128)
    idx = []
    rem = pts.copy()
    for i in range(d - 1, -1, -1):
        idx.append(rem % n)
        rem //= n
    idx = idx[::-1]
    for c in range(2**d):
        off = np.zeros(len(pts), dtype=np.int64)
        wt = np.ones(len(pts))
        for i in range(d):
            bit = (c >> i) & 1
            off += (base[idx[i]] + bit - kmin) * K ** (d - 1 - i)
            wt *= wts[bit, idx[i]]
        acc = np.zeros(len(pts), dtype=np.complex128)
        for l in range(H.shape[0]):
            acc += H[l] * tables[l, off]
        out += acc * wt
    return out


@njit(cache=True, parallel=True)
def _corner_numba(H, pts, base, wts, tables, kmin, K, d, n):  # pragma: no cover - compiled
    P = pts.shape[0]
    Lc = H.shape[0]
    C = 1 << d
    out = np.zeros(P, dtype=np.complex128)
    for q in prange(P):
        p = pts[q]
        offs = np.empty(C, dtype=np.int64)
        ws = np.empty(C)
        for c in range(C):
            rem = p
            off = 0
            wt = 1.0
            for i in range(d - 1, -1, -1):
                j = rem % n
                rem //= n
                bit = (c >> i) & 1
                off += (base[j] + bit - kmin) * K ** (d - 1 - i)
                wt *= wts[bit, j]
            offs[c] = off
            ws[c] = wt
        acc = 0j
        for l in range(Lc):
            m = 0j
            for c in range(C):
                if ws[c] != 0.0:
                    m += tables[l, offs[c]] * ws[c]
            acc += H[l, q] * m
        out[q] = acc
    return out


def corner_accumulate(H, pts, base, wts, tables, kmin: int, K: int, d: int, n: int,
                      backend: str | None = None) -> np.ndarray:
    """Return sum_l H[l] * M_l at the flat grid points ``pts``.

    ``H`` (Lc, len(pts)) spectra sampled at ``pts``, ``base`` (n,) floor of the
    frequency axis, ``wts`` (2, n) window values at offsets 0 and 1, ``tables``
    (Lc, K^d) flattened coefficient boxes starting at cell ``kmin`` on every axis.
    """
    H = np.ascontiguousarray(H, dtype=np.complex128)
    pts = np.ascontiguousarray(pts, dtype=np.int64)
    tables = np.ascontiguousarray(tables, dtype=np.complex128)
    base = np.ascontiguousarray(base, dtype=np.int64)
    wts = np.ascontiguousarray(wts, dtype=float)
    if (backend or BACKEND) == "numba":
        return _corner_numba(H, pts, base, wts, tables, int(kmin), int(K), int(d), int(n))
    return _corner_numpy(H, pts, base, wts, tables, int(kmin), int(K), int(d), int(n))
