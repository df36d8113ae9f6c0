"""Pure numpy implementation of the scan kernels.

Same contracts as the compiled ``_ckernels`` module; used when the extension
is not built or ``CRISP_PURE_PYTHON`` is set.

Sign codes: 0 = absolute value, 1 = signed, -1 = negated.
"""
import math

import numpy as np


_IMPROVE_TOL = 1e-12


def _orient(t, sign):
    if sign == 0:
        return np.abs(t)
    return t if sign > 0 else -t


def best_prefix_batch(proj, vals, mid_min, mid_max, sign):
    """Best prefix of each row of a descending-sorted projection matrix.

    Parameters
    ----------
    proj : (r, m) float array
        Projections onto each scan direction, sorted descending along rows.
    vals : (r, m) float array
        Responses in the same order.
    mid_min, mid_max : float
        Admissible range of the cut threshold ``(proj[k-1] + proj[k]) / 2``.
    sign : int
        Orientation code.

    Returns
    -------
    ks : (r,) int64 array
        Prefix sizes; 0 when no prefix is admissible.
    scores : (r,) float array
        Oriented contrast of the best prefix, ``-inf`` when none.
    mids : (r,) float array
        Cut thresholds of the best prefixes.
    """
    proj = np.atleast_2d(np.asarray(proj, dtype=float))
    vals = np.atleast_2d(np.asarray(vals, dtype=float))
    r, m = proj.shape
    ks = np.zeros(r, dtype=np.int64)
    scores = np.full(r, -np.inf)
    mids = np.zeros(r)
    if m < 2:
        return ks, scores, mids
    centred = vals - vals.mean(axis=1, keepdims=True)
    csum = np.cumsum(centred, axis=1)[:, :-1]
    k = np.arange(1, m, dtype=float)
    t = csum * np.sqrt(m / (k * (m - k)))
    score = _orient(t, sign)
    mid = 0.5 * (proj[:, :-1] + proj[:, 1:])
    ok = (proj[:, :-1] > proj[:, 1:]) & (mid >= mid_min) & (mid <= mid_max)
    score = np.where(ok, score, -np.inf)
    best = np.argmax(score, axis=1)  # first maximum = smallest radius
    rows = np.arange(r)
    scores = score[rows, best]
    found = np.isfinite(scores)
    ks[found] = best[found] + 1
    mids[found] = mid[rows, best][found]
    return ks, scores, mids


def disc_score(points, vals, center, cos_thr, sign):
    """Oriented contrast of the cap ``x . center >= cos_thr`` within ``points``."""
    m = points.shape[0]
    inside = points @ center >= cos_thr
    k = int(np.count_nonzero(inside))
    if k == 0 or k == m:
        return 0.0
    c = float(np.sum(vals[inside]) - k * np.mean(vals))
    return float(_orient(c * math.sqrt(m / (k * (m - k))), sign))


def scan_center(points, vals, center, mid_min, sign):
    """Best cap around ``center`` with cut threshold at least ``mid_min``.

    Only projections at or above ``mid_min`` are sorted; the largest excluded
    projection closes the last cut.  Returns ``(score, mid)``; score is
    ``-inf`` when no cut is admissible.
    """
    m = points.shape[0]
    if m < 2:
        return -math.inf, 0.0
    proj = points @ center
    keep = proj >= mid_min
    q = int(np.count_nonzero(keep))
    kp, kv = proj[keep], vals[keep]
    order = np.argsort(-kp, kind="stable")
    kp, kv = kp[order], kv[order]
    if q < m:
        rest = np.flatnonzero(~keep)
        nxt = rest[np.argmax(proj[rest])]
        kp = np.append(kp, proj[nxt])
    kmax = min(q, m - 1)
    if kmax < 1:
        return -math.inf, 0.0
    csum = np.cumsum(kv[:kmax] - np.mean(vals))
    k = np.arange(1, kmax + 1, dtype=float)
    score = _orient(csum * np.sqrt(m / (k * (m - k))), sign)
    mid = 0.5 * (kp[:kmax] + kp[1:kmax + 1])
    ok = (kp[:kmax] > kp[1:kmax + 1]) & (mid >= mid_min) & (mid <= 1.0)
    score = np.where(ok, score, -np.inf)
    best = int(np.argmax(score))
    if not np.isfinite(score[best]):
        return -math.inf, 0.0
    return float(score[best]), float(mid[best])


def _tangent_step(center, direction, angle):
    t = direction - np.dot(direction, center) * center
    norm = np.linalg.norm(t)
    if norm == 0.0 or angle == 0.0:
        return center
    t /= norm
    c = math.cos(angle) * center + math.sin(angle) * t
    return c / np.linalg.norm(c)


def _radius_limit(center, outer_center, outer_limit, radius_cap):
    if outer_center is None:
        return radius_cap
    g = math.acos(min(1.0, max(-1.0, float(np.dot(center, outer_center)))))
    return min(radius_cap, outer_limit - g)


def hill_climb(points, vals, center, ref_radius, directions, steps, scale, decay,
               outer_center, outer_limit, radius_cap, sign):
    """Random centre perturbation with the radius chosen by an exact prefix scan.

    Proposal ``t`` moves the incumbent centre along the tangent projection of
    ``directions[t]`` by ``steps[t] * scale * ref_radius * decay**t`` radians.
    The radius for a centre is the best admissible cut of its projection
    order, subject to ``radius <= radius_cap`` and, when ``outer_center`` is
    given, ``geo(center, outer_center) + radius <= outer_limit``.  The start
    centre is rescanned first; a proposal is accepted when it beats the
    incumbent by more than a relative ``1e-12`` (so last-bit rounding of an
    equal member set never moves the centre).

    Returns ``(center, mid, score, n_accepted)`` where ``mid`` is the cap's
    cosine threshold (``nan`` if no admissible cap was found).
    """
    points = np.asarray(points, dtype=float)
    vals = np.asarray(vals, dtype=float)
    best_c = np.array(center, dtype=float)
    best, best_mid = -math.inf, math.nan
    if points.shape[0] >= 2:
        lim = _radius_limit(best_c, outer_center, outer_limit, radius_cap)
        if lim > 0:
            best, best_mid = scan_center(points, vals, best_c, math.cos(lim), sign)
    accepted = 0
    factor = scale * ref_radius
    for t in range(len(steps)):
        new_c = _tangent_step(best_c, directions[t], steps[t] * factor)
        factor *= decay
        if points.shape[0] < 2:
            continue
        lim = _radius_limit(new_c, outer_center, outer_limit, radius_cap)
        if lim <= 0:
            continue
        s, mid = scan_center(points, vals, new_c, math.cos(lim), sign)
        if s > best and (best == -math.inf or s > best + _IMPROVE_TOL * max(1.0, abs(best))):
            best, best_c, best_mid = s, new_c, mid
            accepted += 1
    return best_c, best_mid, best, accepted
