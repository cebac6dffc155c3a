# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled batch engine: one bucket stream through the detector loop.

Mirrors _pyloop.run_bucket / core.resolve_* expression for expression so
that outputs are bit-identical to the pure-Python engine. Do not enable
-ffast-math or reorder arithmetic.
"""

import numpy as np

from libc.math cimport ceil, isnan

ENGINE_NAME = "compiled"


cdef inline long _headroom_percent(double intensity, double i_max) nogil:
    cdef double x = ((i_max - intensity) / i_max) * 100.0 - 1e-9
    cdef long n = <long>ceil(x)
    if n < 0:
        return 0
    if n > 100:
        return 100
    return n


cdef inline Py_ssize_t _nearest(const long long* ts, Py_ssize_t hi,
                                long long target, long long tolerance) nogil:
    cdef Py_ssize_t lo = 0
    cdef Py_ssize_t j = hi
    cdef Py_ssize_t mid
    cdef Py_ssize_t best = -1
    cdef long long best_d = tolerance + 1
    cdef long long d
    if hi <= 0:
        return -1
    while lo < j:
        mid = (lo + j) // 2
        if ts[mid] < target:
            lo = mid + 1
        else:
            j = mid
    if lo > 0:
        best = lo - 1
        best_d = target - ts[lo - 1]
    if lo < hi:
        d = ts[lo] - target
        if d < best_d:
            best = lo
            best_d = d
    if best_d <= tolerance:
        return best
    return -1


cdef void _fill_holes(const Py_ssize_t* src, Py_ssize_t n,
                      Py_ssize_t* left, Py_ssize_t* out) nogil:
    # Nearest non-hole by position, ties toward the earlier position.
    cdef Py_ssize_t k
    cdef Py_ssize_t last = -1
    cdef Py_ssize_t nxt = -1
    cdef Py_ssize_t lk
    for k in range(n):
        if src[k] >= 0:
            last = k
        left[k] = last
        out[k] = src[k]
    for k in range(n - 1, -1, -1):
        if src[k] >= 0:
            nxt = k
        if out[k] < 0:
            lk = left[k]
            if lk < 0:
                out[k] = src[nxt]
            elif nxt < 0:
                out[k] = src[lk]
            else:
                if (k - lk) <= (nxt - k):
                    out[k] = src[lk]
                else:
                    out[k] = src[nxt]


def run_bucket(ts, gi, targets, window_length, a, i_b, i_max, tolerance):
    """Drive one chronological bucket stream; returns per-sample output arrays."""
    ts_arr = np.ascontiguousarray(ts, dtype=np.int64)
    gi_arr = np.ascontiguousarray(gi, dtype=np.float64)
    tg_arr = np.ascontiguousarray(targets, dtype=np.int64)
    cdef long long[::1] ts_v = ts_arr
    cdef double[::1] gi_v = gi_arr
    cdef long long[::1] tg_v = tg_arr
    cdef Py_ssize_t n = ts_v.shape[0]
    cdef Py_ssize_t T = int(window_length)
    cdef double c_a = a
    cdef double c_ib = i_b
    cdef double c_imax = i_max
    cdef long long tol = tolerance

    has_verdict = np.zeros(n, dtype=bool)
    valid = np.zeros(n, dtype=bool)
    ratio = np.full(n, np.nan)
    o_r1 = np.full(n, np.nan)
    o_r2 = np.full(n, np.nan)
    o_r1bar = np.full(n, np.nan)
    o_r2bar = np.full(n, np.nan)
    o_alpha = np.full(n, np.nan)
    o_fb1 = np.zeros(n, dtype=bool)
    o_fb2 = np.zeros(n, dtype=bool)

    cdef char[::1] hv_v = has_verdict.view(np.int8)
    cdef char[::1] va_v = valid.view(np.int8)
    cdef double[::1] ra_v = ratio
    cdef double[::1] r1_v = o_r1
    cdef double[::1] r2_v = o_r2
    cdef double[::1] r1b_v = o_r1bar
    cdef double[::1] r2b_v = o_r2bar
    cdef double[::1] al_v = o_alpha
    cdef char[::1] f1_v = o_fb1.view(np.int8)
    cdef char[::1] f2_v = o_fb2.view(np.int8)

    nj_arr = np.empty(n, dtype=np.int64)
    src_arr = np.empty(n, dtype=np.intp)
    eff_arr = np.empty(T + 1, dtype=np.intp)
    left_arr = np.empty(T + 1, dtype=np.intp)
    cdef long long[::1] nj_v = nj_arr
    cdef Py_ssize_t[::1] src_v = src_arr
    cdef Py_ssize_t[::1] eff_v = eff_arr
    cdef Py_ssize_t[::1] left_v = left_arr

    cdef double prev_r1 = float("nan")
    cdef double prev_r2 = float("nan")
    cdef bint have_ctx = 0
    cdef double c_r1 = 0.0, c_r2 = 0.0, c_r1b = 0.0, c_r2b = 0.0, c_alpha = 0.0
    cdef bint c_fb1 = 0, c_fb2 = 0

    cdef Py_ssize_t i, k, lo, hi
    cdef double r, v, s1, s2, denom, r1_raw, r2_raw, r1_bar, r2_bar, cand, r1, r2, alpha
    cdef bint fb1, fb2, any_match
    cdef long counts[11]
    cdef long bestv

    if n == 0:
        return _pack(has_verdict, valid, ratio, o_r1, o_r2, o_r1bar, o_r2bar,
                     o_alpha, o_fb1, o_fb2)

    with nogil:
        for i in range(n):
            nj_v[i] = _headroom_percent(gi_v[i], c_imax)

        denom = <double>(2 * T + 2)

        for i in range(n):
            if have_ctx:
                r = (gi_v[i] - c_r1) / (c_r2 - c_r1)
                hv_v[i] = 1
                va_v[i] = 1 if (0.0 <= r <= 1.0) else 0
                ra_v[i] = r
                r1_v[i] = c_r1
                r2_v[i] = c_r2
                r1b_v[i] = c_r1b
                r2b_v[i] = c_r2b
                al_v[i] = c_alpha
                f1_v[i] = c_fb1
                f2_v[i] = c_fb2

            src_v[i] = _nearest(&ts_v[0], i, tg_v[i], tol)

            if i >= T:
                lo = i - T
                hi = i + 1
                any_match = 0
                for k in range(lo, hi):
                    if src_v[k] >= 0:
                        any_match = 1
                        break
                if not any_match:
                    for k in range(T + 1):
                        eff_v[k] = lo + k
                else:
                    _fill_holes(&src_v[lo], T + 1, &left_v[0], &eff_v[0])

                s1 = 0.0
                s2 = 0.0
                for k in range(lo, hi):
                    v = gi_v[k]
                    if v > c_ib:
                        s2 += v
                    else:
                        s1 += v
                for k in range(T + 1):
                    v = gi_v[eff_v[k]]
                    if v > c_ib:
                        s2 += v
                    else:
                        s1 += v
                r1_raw = s1 / denom
                r2_raw = s2 / denom

                if r2_raw > c_ib and r2_raw < c_imax:
                    r2_bar = r2_raw
                    fb2 = 0
                    prev_r2 = r2_raw
                else:
                    fb2 = 1
                    if isnan(prev_r2):
                        r2_bar = 0.5 * (c_ib + c_imax)
                    else:
                        r2_bar = prev_r2

                if r1_raw > c_a and r1_raw <= c_ib:
                    r1_bar = r1_raw
                    fb1 = 0
                    prev_r1 = r1_raw
                else:
                    fb1 = 1
                    if isnan(prev_r1):
                        r1_bar = 0.5 * (c_a + c_ib)
                    else:
                        r1_bar = prev_r1

                for k in range(11):
                    counts[k] = 0
                for k in range(lo, hi):
                    counts[nj_v[k] // 10] += 1
                for k in range(T + 1):
                    counts[nj_v[eff_v[k]] // 10] += 1
                bestv = 0
                for k in range(11):
                    if counts[k] >= counts[bestv]:
                        bestv = k
                alpha = bestv / 10.0

                if c_imax - r2_bar >= r2_bar - c_ib:
                    cand = (1.0 + alpha) * r2_bar
                    r2 = cand if cand <= c_imax else r2_bar
                else:
                    cand = (1.0 - alpha) * r2_bar
                    r2 = cand if cand > c_ib else r2_bar

                if r1_bar - c_a >= c_ib - r1_bar:
                    cand = (1.0 - alpha) * r1_bar
                    r1 = cand if cand > c_a else r1_bar
                else:
                    cand = (1.0 + alpha) * r1_bar
                    r1 = cand if cand <= c_ib else r1_bar

                c_r1 = r1
                c_r2 = r2
                c_r1b = r1_bar
                c_r2b = r2_bar
                c_alpha = alpha
                c_fb1 = fb1
                c_fb2 = fb2
                have_ctx = 1

    return _pack(has_verdict, valid, ratio, o_r1, o_r2, o_r1bar, o_r2bar,
                 o_alpha, o_fb1, o_fb2)


def _pack(has_verdict, valid, ratio, r1, r2, r1_bar, r2_bar, alpha, fb1, fb2):
    return {
        "has_verdict": has_verdict,
        "valid": valid,
        "ratio": ratio,
        "r1": r1,
        "r2": r2,
        "r1_bar": r1_bar,
        "r2_bar": r2_bar,
        "alpha": alpha,
        "r1_fallback": fb1,
        "r2_fallback": fb2,
    }
