"""Pure-Python batch engine: one bucket stream through the detector loop.

Fallback for the compiled `_fastloop` extension. Both implementations must
produce bit-identical outputs; keep every arithmetic expression in step
with core.resolve_* and with _fastloop.pyx.
"""

from __future__ import annotations

import numpy as np

from .core import fill_holes, headroom_percent, resolve_alpha, resolve_averages, resolve_thresholds

ENGINE_NAME = "python"


def run_bucket(ts, gi, targets, window_length, a, i_b, i_max, tolerance):
    """Drive one chronological bucket stream; returns per-sample output arrays.

    ts/targets are int64 epoch seconds (targets = calendar backshift per
    sample), gi float64. Sample i is verified iff at least T+1 samples
    precede it; outputs at unverified positions are zero/NaN.
    """
    n = len(ts)
    T = int(window_length)
    out = _empty_outputs(n)
    (has_verdict, valid, ratio, o_r1, o_r2, o_r1bar, o_r2bar, o_alpha, o_fb1, o_fb2) = out

    ts_l = ts.tolist() if isinstance(ts, np.ndarray) else list(ts)
    gi_l = gi.tolist() if isinstance(gi, np.ndarray) else list(gi)
    tg_l = targets.tolist() if isinstance(targets, np.ndarray) else list(targets)
    nj_l = [headroom_percent(v, i_max) for v in gi_l]

    src = [-1] * n
    prev_r1 = float("nan")
    prev_r2 = float("nan")
    # Cached context from the newest complete window: (r1, r2, R1, R2, alpha, fb1, fb2)
    ctx = None

    for i in range(n):
        if ctx is not None:
            c_r1, c_r2, c_r1b, c_r2b, c_alpha, c_fb1, c_fb2 = ctx
            r = (gi_l[i] - c_r1) / (c_r2 - c_r1)
            has_verdict[i] = True
            valid[i] = 0.0 <= r <= 1.0
            ratio[i] = r
            o_r1[i] = c_r1
            o_r2[i] = c_r2
            o_r1bar[i] = c_r1b
            o_r2bar[i] = c_r2b
            o_alpha[i] = c_alpha
            o_fb1[i] = c_fb1
            o_fb2[i] = c_fb2

        src[i] = _nearest(ts_l, i, tg_l[i], tolerance)

        if i >= T:
            lo = i - T
            hi = i + 1
            window_src = src[lo:hi]
            if max(window_src) < 0:
                eff = list(range(lo, hi))
            else:
                eff = fill_holes(window_src)
            cur_values = gi_l[lo:hi]
            pri_values = [gi_l[s] for s in eff]
            r1_bar, r2_bar, fb1, fb2, prev_r1, prev_r2 = resolve_averages(
                cur_values, pri_values, T, a, i_b, i_max, prev_r1, prev_r2
            )
            alpha = resolve_alpha(nj_l[lo:hi], [nj_l[s] for s in eff])
            r1, r2 = resolve_thresholds(r1_bar, r2_bar, alpha, a, i_b, i_max, False)
            ctx = (r1, r2, r1_bar, r2_bar, alpha, fb1, fb2)

    return _pack_outputs(out)


def _nearest(ts_l, hi, target, tolerance):
    if hi <= 0:
        return -1
    lo = 0
    j = hi
    while lo < j:
        mid = (lo + j) // 2
        if ts_l[mid] < target:
            lo = mid + 1
        else:
            j = mid
    best = -1
    best_d = tolerance + 1
    if lo > 0:
        best = lo - 1
        best_d = target - ts_l[lo - 1]
    if lo < hi:
        d = ts_l[lo] - target
        if d < best_d:
            best = lo
            best_d = d
    return best if best_d <= tolerance else -1


def _empty_outputs(n):
    return (
        np.zeros(n, dtype=bool),
        np.zeros(n, dtype=bool),
        np.full(n, np.nan),
        np.full(n, np.nan),
        np.full(n, np.nan),
        np.full(n, np.nan),
        np.full(n, np.nan),
        np.full(n, np.nan),
        np.zeros(n, dtype=bool),
        np.zeros(n, dtype=bool),
    )


def _pack_outputs(out):
    (has_verdict, valid, ratio, r1, r2, r1_bar, r2_bar, alpha, fb1, fb2) = out
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
