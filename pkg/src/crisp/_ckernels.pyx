# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled scan kernels; see ``_pykernels`` for the reference contracts."""
import numpy as np

from libc.math cimport sqrt, cos, sin, acos, fabs, INFINITY, NAN
from libc.stdlib cimport malloc, free, qsort


cdef struct Item:
    double p
    double v
    Py_ssize_t i


cdef int _cmp_desc(const void *a, const void *b) noexcept nogil:
    cdef const Item *x = <const Item *> a
    cdef const Item *y = <const Item *> b
    if x.p > y.p:
        return -1
    if x.p < y.p:
        return 1
    # stable on original index
    return -1 if x.i < y.i else (1 if x.i > y.i else 0)


cdef inline double _orient(double t, int sign) noexcept nogil:
    if sign == 0:
        return fabs(t)
    return t if sign > 0 else -t


cdef double _kahan_mean(const double[:] v, Py_ssize_t m) noexcept nogil:
    cdef double s = 0.0, c = 0.0, y, t
    cdef Py_ssize_t i
    for i in range(m):
        y = v[i] - c
        t = s + y
        c = (t - s) - y
        s = t
    return s / m


cdef void _scan_sorted(const Item *items, Py_ssize_t q, Py_ssize_t m, double mean,
                       double mid_min, double mid_max, int sign, long long *k_out,
                       double *score_out, double *mid_out) noexcept nogil:
    # items[0..q] sorted by projection descending, items[q] (if q < m) is the
    # next projection; m is the size of the reference set the contrast uses
    cdef Py_ssize_t k, kmax = q if q < m else m - 1
    cdef double s = 0.0, c = 0.0, y, t, mid, stat
    cdef double best = -INFINITY, best_mid = 0.0
    cdef long long best_k = 0
    for k in range(1, kmax + 1):
        y = (items[k - 1].v - mean) - c
        t = s + y
        c = (t - s) - y
        s = t
        if not items[k - 1].p > items[k].p:
            continue
        mid = 0.5 * (items[k - 1].p + items[k].p)
        if mid < mid_min or mid > mid_max:
            continue
        stat = _orient(s * sqrt(<double>m / (<double>k * <double>(m - k))), sign)
        if stat > best:
            best = stat
            best_k = k
            best_mid = mid
    k_out[0] = best_k
    score_out[0] = best
    mid_out[0] = best_mid


def best_prefix_batch(proj, vals, double mid_min, double mid_max, int sign):
    cdef const double[:, :] P = np.ascontiguousarray(np.atleast_2d(proj), dtype=np.float64)
    cdef const double[:, :] V = np.ascontiguousarray(np.atleast_2d(vals), dtype=np.float64)
    cdef Py_ssize_t r = P.shape[0], m = P.shape[1], i, j
    ks_arr = np.zeros(r, dtype=np.int64)
    scores_arr = np.full(r, -np.inf)
    mids_arr = np.zeros(r)
    cdef long long[:] ks = ks_arr
    cdef double[:] scores = scores_arr
    cdef double[:] mids = mids_arr
    if m < 2:
        return ks_arr, scores_arr, mids_arr
    cdef Item *items = <Item *> malloc(m * sizeof(Item))
    if items == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(r):
                for j in range(m):
                    items[j].p = P[i, j]
                    items[j].v = V[i, j]
                    items[j].i = j
                _scan_sorted(items, m, m, _kahan_mean(V[i], m), mid_min, mid_max, sign,
                             &ks[i], &scores[i], &mids[i])
    finally:
        free(items)
    return ks_arr, scores_arr, mids_arr


cdef double _disc_score(const double[:, :] X, const double[:] v, double mean,
                        const double *ctr, double cos_thr, int sign) noexcept nogil:
    cdef Py_ssize_t m = X.shape[0], d = X.shape[1], i, j
    cdef long long k = 0
    cdef double s = 0.0, c = 0.0, y, t, p
    for i in range(m):
        p = 0.0
        for j in range(d):
            p += X[i, j] * ctr[j]
        if p >= cos_thr:
            k += 1
            y = (v[i] - mean) - c
            t = s + y
            c = (t - s) - y
            s = t
    if k == 0 or k == m:
        return 0.0
    return _orient(s * sqrt(<double>m / (<double>k * <double>(m - k))), sign)


def disc_score(points, vals, center, double cos_thr, int sign):
    cdef const double[:, :] X = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:] v = np.ascontiguousarray(vals, dtype=np.float64)
    cdef double[:] ctr = np.array(center, dtype=np.float64)
    cdef double mean
    cdef double out
    if X.shape[0] == 0:
        return 0.0
    with nogil:
        mean = _kahan_mean(v, X.shape[0])
        out = _disc_score(X, v, mean, &ctr[0], cos_thr, sign)
    return out


cdef void _scan_center(const double[:, :] X, const double[:] v, double mean, const double *ctr,
                       double mid_min, int sign, Item *items, double *score_out,
                       double *mid_out) noexcept nogil:
    # only projections >= mid_min can precede an admissible cut; sort those
    # and append the largest excluded projection as the closing neighbour
    cdef Py_ssize_t m = X.shape[0], d = X.shape[1], i, j, q = 0
    cdef double p, next_p = -INFINITY
    cdef Py_ssize_t next_i = -1
    cdef long long k
    for i in range(m):
        p = 0.0
        for j in range(d):
            p += X[i, j] * ctr[j]
        if p >= mid_min:
            items[q].p = p
            items[q].v = v[i]
            items[q].i = i
            q += 1
        elif p > next_p:
            next_p = p
            next_i = i
    qsort(items, q, sizeof(Item), _cmp_desc)
    if q < m:
        items[q].p = next_p
        items[q].v = v[next_i]
        items[q].i = next_i
    _scan_sorted(items, q, m, mean, mid_min, 1.0, sign, &k, score_out, mid_out)


def scan_center(points, vals, center, double mid_min, int sign):
    cdef const double[:, :] X = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:] v = np.ascontiguousarray(vals, dtype=np.float64)
    cdef double[:] ctr = np.array(center, dtype=np.float64)
    cdef Py_ssize_t m = X.shape[0]
    cdef double score = -INFINITY, mid = 0.0
    if m < 2:
        return score, mid
    cdef Item *items = <Item *> malloc(m * sizeof(Item))
    if items == NULL:
        raise MemoryError()
    try:
        with nogil:
            _scan_center(X, v, _kahan_mean(v, m), &ctr[0], mid_min, sign, items, &score, &mid)
    finally:
        free(items)
    return score, mid


cdef inline double _radius_limit(const double *c, const double *oc, Py_ssize_t d, bint has_outer,
                                 double outer_limit, double radius_cap) noexcept nogil:
    cdef double dot = 0.0, lim
    cdef Py_ssize_t j
    if not has_outer:
        return radius_cap
    for j in range(d):
        dot += c[j] * oc[j]
    if dot > 1.0:
        dot = 1.0
    elif dot < -1.0:
        dot = -1.0
    lim = outer_limit - acos(dot)
    return lim if lim < radius_cap else radius_cap


def hill_climb(points, vals, center, double ref_radius, directions, steps, double scale,
               double decay, outer_center, double outer_limit, double radius_cap, int sign):
    cdef const double[:, :] X = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:] v = np.ascontiguousarray(vals, dtype=np.float64)
    cdef const double[:, :] D = np.ascontiguousarray(np.atleast_2d(directions), dtype=np.float64)
    cdef const double[:] st = np.ascontiguousarray(steps, dtype=np.float64)
    cdef Py_ssize_t m = X.shape[0], d = X.shape[1], n_prop = st.shape[0], t, j
    best_arr = np.array(center, dtype=np.float64)
    cand_arr = np.empty(d, dtype=np.float64)
    tan_arr = np.empty(d, dtype=np.float64)
    oc_arr = np.zeros(d, dtype=np.float64) if outer_center is None else np.array(outer_center, dtype=np.float64)
    cdef double[:] best_c = best_arr
    cdef double[:] cand = cand_arr
    cdef double[:] tang = tan_arr
    cdef double[:] oc = oc_arr
    cdef bint has_outer = outer_center is not None
    cdef double best = -INFINITY, best_mid = NAN, s, mid, lim, angle, dot, norm, mean = 0.0
    cdef double factor = scale * ref_radius
    cdef long long accepted = 0
    cdef Item *items = NULL
    if m >= 2:
        items = <Item *> malloc(m * sizeof(Item))
        if items == NULL:
            raise MemoryError()
        mean = _kahan_mean(v, m)
    try:
        with nogil:
            if m >= 2:
                lim = _radius_limit(&best_c[0], &oc[0], d, has_outer, outer_limit, radius_cap)
                if lim > 0:
                    _scan_center(X, v, mean, &best_c[0], cos(lim), sign, items, &best, &best_mid)
            for t in range(n_prop):
                angle = st[t] * factor
                factor *= decay
                if m < 2:
                    continue
                dot = 0.0
                for j in range(d):
                    dot += D[t, j] * best_c[j]
                norm = 0.0
                for j in range(d):
                    tang[j] = D[t, j] - dot * best_c[j]
                    norm += tang[j] * tang[j]
                norm = sqrt(norm)
                if norm == 0.0 or angle == 0.0:
                    for j in range(d):
                        cand[j] = best_c[j]
                else:
                    for j in range(d):
                        tang[j] /= norm
                    for j in range(d):
                        cand[j] = cos(angle) * best_c[j] + sin(angle) * tang[j]
                    norm = 0.0
                    for j in range(d):
                        norm += cand[j] * cand[j]
                    norm = sqrt(norm)
                    for j in range(d):
                        cand[j] /= norm
                lim = _radius_limit(&cand[0], &oc[0], d, has_outer, outer_limit, radius_cap)
                if lim <= 0:
                    continue
                _scan_center(X, v, mean, &cand[0], cos(lim), sign, items, &s, &mid)
                if s > best and (best == -INFINITY or
                                 s > best + 1e-12 * (fabs(best) if fabs(best) > 1.0 else 1.0)):
                    best = s
                    best_mid = mid
                    accepted += 1
                    for j in range(d):
                        best_c[j] = cand[j]
    finally:
        free(items)
    return best_arr, best_mid, best, accepted
