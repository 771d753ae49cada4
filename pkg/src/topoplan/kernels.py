"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The fallback is selected by setting the environment variable
``TOPOPLAN_NO_NUMBA=1`` before import (or automatically when numba is not
importable).  Both paths implement the same arithmetic; results agree to
floating-point rounding (summation order differs), and
``benchmarks/kernel_bench.py`` compares their throughput.
"""

from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("TOPOPLAN_NO_NUMBA", "0") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover
        USE_NUMBA = False


def _batch_eval_numpy(coeffs, durations, times):
    """Evaluate a piecewise quintic at many times, holding at the goal.

    coeffs: (M, 6, 2), durations: (M,), times: (K,) non-negative.
    Returns (K, 4, 2): position, velocity, acceleration, jerk per row.
    """
    cum = np.cumsum(durations)
    total = cum[-1]
    cum0 = np.concatenate(([0.0], cum))
    k = np.searchsorted(cum[:-1], times, side="right")
    tbar = times - cum0[k]
    held = times >= total
    k = np.where(held, len(durations) - 1, k)
    tbar = np.where(held, durations[-1], np.minimum(tbar, durations[k]))

    out = np.zeros((len(times), 4, 2))
    t = tbar
    pw = np.empty((len(times), 6))
    pw[:, 0] = 1.0
    for i in range(1, 6):
        pw[:, i] = pw[:, i - 1] * t
    c = coeffs[k]  # (K, 6, 2)
    # basis rows for derivative orders 0..3
    b0 = pw
    b1 = np.zeros_like(pw)
    b1[:, 1] = 1.0
    b1[:, 2] = 2 * pw[:, 1]
    b1[:, 3] = 3 * pw[:, 2]
    b1[:, 4] = 4 * pw[:, 3]
    b1[:, 5] = 5 * pw[:, 4]
    b2 = np.zeros_like(pw)
    b2[:, 2] = 2.0
    b2[:, 3] = 6 * pw[:, 1]
    b2[:, 4] = 12 * pw[:, 2]
    b2[:, 5] = 20 * pw[:, 3]
    b3 = np.zeros_like(pw)
    b3[:, 3] = 6.0
    b3[:, 4] = 24 * pw[:, 1]
    b3[:, 5] = 60 * pw[:, 2]
    out[:, 0] = np.einsum("ki,kid->kd", b0, c)
    out[:, 1] = np.einsum("ki,kid->kd", b1, c)
    out[:, 2] = np.einsum("ki,kid->kd", b2, c)
    out[:, 3] = np.einsum("ki,kid->kd", b3, c)
    # hold-at-goal: freeze position, zero the derivatives
    out[held, 1:] = 0.0
    return out


def _locate_numpy(durations, times):
    """Piece index and in-piece time for each query; clamps past the end."""
    cum = np.concatenate(([0.0], np.cumsum(durations)))
    k = np.searchsorted(cum[1:-1], times, side="right")
    tbar = times - cum[k]
    over = times >= cum[-1]
    k = np.where(over, len(durations) - 1, k)
    tbar = np.where(over, durations[-1], np.minimum(tbar, durations[k]))
    return k, tbar


if USE_NUMBA:

    @numba.njit(cache=True)
    def _batch_eval_numba(coeffs, durations, times):
        M = durations.shape[0]
        K = times.shape[0]
        cum = np.empty(M)
        acc = 0.0
        for i in range(M):
            acc += durations[i]
            cum[i] = acc
        total = cum[M - 1]
        out = np.zeros((K, 4, 2))
        for s in range(K):
            t = times[s]
            if t >= total:
                k = M - 1
                tb = durations[M - 1]
                held = True
            else:
                k = 0
                prev = 0.0
                while k < M - 1 and t >= cum[k]:
                    prev = cum[k]
                    k += 1
                tb = t - prev
                if tb > durations[k]:
                    tb = durations[k]
                held = False
            t1 = tb
            t2 = t1 * t1
            t3 = t2 * t1
            t4 = t3 * t1
            t5 = t4 * t1
            for d in range(2):
                c0 = coeffs[k, 0, d]
                c1 = coeffs[k, 1, d]
                c2 = coeffs[k, 2, d]
                c3 = coeffs[k, 3, d]
                c4 = coeffs[k, 4, d]
                c5 = coeffs[k, 5, d]
                out[s, 0, d] = c0 + c1 * t1 + c2 * t2 + c3 * t3 + c4 * t4 + c5 * t5
                if not held:
                    out[s, 1, d] = c1 + 2 * c2 * t1 + 3 * c3 * t2 + 4 * c4 * t3 + 5 * c5 * t4
                    out[s, 2, d] = 2 * c2 + 6 * c3 * t1 + 12 * c4 * t2 + 20 * c5 * t3
                    out[s, 3, d] = 6 * c3 + 24 * c4 * t1 + 60 * c5 * t2
        return out

    def batch_eval(coeffs, durations, times):
        return _batch_eval_numba(
            np.ascontiguousarray(coeffs, dtype=np.float64),
            np.ascontiguousarray(durations, dtype=np.float64),
            np.ascontiguousarray(times, dtype=np.float64),
        )

    @numba.njit(cache=True)
    def _collision_core_numba(ca, da, cb, db, d_act, n, W, static_b):
        """Fused collision hinge: value and both gradient sides in one pass.

        Samples t = frac * W on n uniform fractions with trapezoid weights,
        penalizes [max(d_act^2 - |p_a - p_b|^2, 0)]^3, scatters position
        gradients into coefficient space and accumulates the duration
        channels (sample times riding on earlier pieces, plus the window
        scale dcost_dW for the vehicle that sets W).
        """
        Ma = da.shape[0]
        Mb = db.shape[0]
        cum_a = np.empty(Ma)
        acc = 0.0
        for i in range(Ma):
            acc += da[i]
            cum_a[i] = acc
        total_a = acc
        cum_b = np.empty(Mb)
        acc = 0.0
        for i in range(Mb):
            acc += db[i]
            cum_b[i] = acc
        total_b = acc
        dc_a = np.zeros((Ma, 6, 2))
        dc_b = np.zeros((Mb, 6, 2))
        per_a = np.zeros(Ma)
        per_b = np.zeros(Mb)
        value = 0.0
        dcost_dW = 0.0
        d2 = d_act * d_act
        base_w = W / (n - 1)
        pa = np.empty(2)
        va = np.empty(2)
        pb = np.empty(2)
        vb = np.empty(2)
        beta_a = np.empty(6)
        beta_b = np.empty(6)
        for s_i in range(n):
            frac = s_i / (n - 1)
            t = frac * W
            trap = base_w
            if s_i == 0 or s_i == n - 1:
                trap *= 0.5
            # evaluate side a
            held_a = t >= total_a
            if held_a:
                ka = Ma - 1
                tb_a = da[ka]
            else:
                ka = 0
                prev = 0.0
                while ka < Ma - 1 and t >= cum_a[ka]:
                    prev = cum_a[ka]
                    ka += 1
                tb_a = t - prev
                if tb_a > da[ka]:
                    tb_a = da[ka]
            p1 = tb_a
            beta_a[0] = 1.0
            for i in range(1, 6):
                beta_a[i] = beta_a[i - 1] * p1
            for d in range(2):
                c = ca[ka, :, d]
                pa[d] = (c[0] + c[1] * beta_a[1] + c[2] * beta_a[2]
                         + c[3] * beta_a[3] + c[4] * beta_a[4] + c[5] * beta_a[5])
                if held_a:
                    va[d] = 0.0
                else:
                    va[d] = (c[1] + 2 * c[2] * beta_a[1] + 3 * c[3] * beta_a[2]
                             + 4 * c[4] * beta_a[3] + 5 * c[5] * beta_a[4])
            # evaluate side b
            held_b = t >= total_b
            if held_b:
                kb = Mb - 1
                tb_b = db[kb]
            else:
                kb = 0
                prev = 0.0
                while kb < Mb - 1 and t >= cum_b[kb]:
                    prev = cum_b[kb]
                    kb += 1
                tb_b = t - prev
                if tb_b > db[kb]:
                    tb_b = db[kb]
            p1 = tb_b
            beta_b[0] = 1.0
            for i in range(1, 6):
                beta_b[i] = beta_b[i - 1] * p1
            for d in range(2):
                c = cb[kb, :, d]
                pb[d] = (c[0] + c[1] * beta_b[1] + c[2] * beta_b[2]
                         + c[3] * beta_b[3] + c[4] * beta_b[4] + c[5] * beta_b[5])
                if held_b:
                    vb[d] = 0.0
                else:
                    vb[d] = (c[1] + 2 * c[2] * beta_b[1] + 3 * c[3] * beta_b[2]
                             + 4 * c[4] * beta_b[3] + 5 * c[5] * beta_b[4])
            dpx = pa[0] - pb[0]
            dpy = pa[1] - pb[1]
            h = d2 - (dpx * dpx + dpy * dpy)
            if h <= 0.0:
                continue
            h2 = h * h
            pen = h2 * h
            value += trap * pen
            gx = -6.0 * h2 * dpx  # d pen / d p_a, x
            gy = -6.0 * h2 * dpy
            dvx = va[0] - vb[0]
            dvy = va[1] - vb[1]
            dpen_dt = gx * dvx + gy * dvy
            dcost_dW += pen * trap / W + trap * dpen_dt * frac
            wgx = trap * gx
            wgy = trap * gy
            if not held_a:
                for i in range(6):
                    dc_a[ka, i, 0] += beta_a[i] * wgx
                    dc_a[ka, i, 1] += beta_a[i] * wgy
                per_a[ka] += -(wgx * va[0] + wgy * va[1])
            if (not static_b) and (not held_b):
                for i in range(6):
                    dc_b[kb, i, 0] -= beta_b[i] * wgx
                    dc_b[kb, i, 1] -= beta_b[i] * wgy
                per_b[kb] += wgx * vb[0] + wgy * vb[1]
        dT_a = np.zeros(Ma)
        acc = 0.0
        for i in range(Ma - 1, 0, -1):
            acc += per_a[i]
            dT_a[i - 1] = acc
        dT_b = np.zeros(Mb)
        acc = 0.0
        for i in range(Mb - 1, 0, -1):
            acc += per_b[i]
            dT_b[i - 1] = acc
        return value, dc_a, dT_a, dc_b, dT_b, dcost_dW

    def collision_core(ca, da, cb, db, d_act, n, W, static_b):
        return _collision_core_numba(
            np.ascontiguousarray(ca, dtype=np.float64),
            np.ascontiguousarray(da, dtype=np.float64),
            np.ascontiguousarray(cb, dtype=np.float64),
            np.ascontiguousarray(db, dtype=np.float64),
            float(d_act), int(n), float(W), bool(static_b),
        )

    @numba.njit(cache=True)
    def _pair_f_numba(ca, da, cb, db, t):
        ts = np.empty(1)
        ts[0] = t
        sa = _batch_eval_numba(ca, da, ts)[0]
        sb = _batch_eval_numba(cb, db, ts)[0]
        f = 0.0
        f_t = 0.0
        f_tt = 0.0
        for d in range(2):
            dp = sa[0, d] - sb[0, d]
            dv = sa[1, d] - sb[1, d]
            dacc = sa[2, d] - sb[2, d]
            f += dp * dp
            f_t += 2.0 * dp * dv
            f_tt += 2.0 * (dp * dacc + dv * dv)
        return f, f_t, f_tt

    def pair_f(ca, da, cb, db, t):
        return _pair_f_numba(
            np.ascontiguousarray(ca, dtype=np.float64),
            np.ascontiguousarray(da, dtype=np.float64),
            np.ascontiguousarray(cb, dtype=np.float64),
            np.ascontiguousarray(db, dtype=np.float64),
            float(t),
        )

    @numba.njit(cache=True)
    def _kin_core_numba(c, T, v_max, a_max, nodes, wq):
        M = T.shape[0]
        nq = nodes.shape[0]
        dc = np.zeros((M, 6, 2))
        dT = np.zeros(M)
        value = 0.0
        v2 = v_max * v_max
        a2 = a_max * a_max
        b1 = np.empty(6)
        b2 = np.empty(6)
        vel = np.empty(2)
        acc = np.empty(2)
        jrk = np.empty(2)
        for m in range(M):
            Tm = T[m]
            node_sum = 0.0
            tchan = 0.0
            for q in range(nq):
                t = Tm * nodes[q]
                t2 = t * t
                t3 = t2 * t
                t4 = t3 * t
                for d in range(2):
                    c1 = c[m, 1, d]
                    c2 = c[m, 2, d]
                    c3 = c[m, 3, d]
                    c4 = c[m, 4, d]
                    c5 = c[m, 5, d]
                    vel[d] = c1 + 2 * c2 * t + 3 * c3 * t2 + 4 * c4 * t3 + 5 * c5 * t4
                    acc[d] = 2 * c2 + 6 * c3 * t + 12 * c4 * t2 + 20 * c5 * t3
                    jrk[d] = 6 * c3 + 24 * c4 * t + 60 * c5 * t2
                hv = vel[0] * vel[0] + vel[1] * vel[1] - v2
                ha = acc[0] * acc[0] + acc[1] * acc[1] - a2
                if hv > 0.0:
                    node_sum += wq[q] * hv * hv * hv
                    coef = 6.0 * hv * hv
                    b1[0] = 0.0
                    b1[1] = 1.0
                    b1[2] = 2 * t
                    b1[3] = 3 * t2
                    b1[4] = 4 * t3
                    b1[5] = 5 * t4
                    scale = Tm * wq[q] * coef
                    for i in range(1, 6):
                        dc[m, i, 0] += scale * vel[0] * b1[i]
                        dc[m, i, 1] += scale * vel[1] * b1[i]
                    tchan += wq[q] * nodes[q] * coef * (vel[0] * acc[0] + vel[1] * acc[1])
                if ha > 0.0:
                    node_sum += wq[q] * ha * ha * ha
                    coef = 6.0 * ha * ha
                    b2[2] = 2.0
                    b2[3] = 6 * t
                    b2[4] = 12 * t2
                    b2[5] = 20 * t3
                    scale = Tm * wq[q] * coef
                    for i in range(2, 6):
                        dc[m, i, 0] += scale * acc[0] * b2[i]
                        dc[m, i, 1] += scale * acc[1] * b2[i]
                    tchan += wq[q] * nodes[q] * coef * (acc[0] * jrk[0] + acc[1] * jrk[1])
            value += Tm * node_sum
            dT[m] = node_sum + Tm * tchan
        return value, dc, dT

    def kin_core(coeffs, durations, v_max, a_max, nodes, weights):
        return _kin_core_numba(
            np.ascontiguousarray(coeffs, dtype=np.float64),
            np.ascontiguousarray(durations, dtype=np.float64),
            float(v_max), float(a_max),
            np.ascontiguousarray(nodes, dtype=np.float64),
            np.ascontiguousarray(weights, dtype=np.float64),
        )

    @numba.njit(cache=True)
    def _refine_min_numba(ca, da, cb, db, t0, t_lo, t_hi, max_newton, eps):
        span = t_hi - t_lo
        t = t0
        f, f_t, f_tt = _pair_f_numba(ca, da, cb, db, t)
        f_best = f
        t_best = t
        for _ in range(max_newton):
            if abs(f_t) < 1e-13 * max(1.0, f):
                break
            if f_tt > eps:
                step = -f_t / f_tt
            else:
                step = -0.01 * span if f_t > 0 else 0.01 * span
            if step > 0.25 * span:
                step = 0.25 * span
            elif step < -0.25 * span:
                step = -0.25 * span
            t_new = t + step
            if t_new < t_lo:
                t_new = t_lo
            elif t_new > t_hi:
                t_new = t_hi
            f_new = _pair_f_numba(ca, da, cb, db, t_new)[0]
            shrink = 0
            while f_new > f and shrink < 30:
                t_new = t + 0.5 * (t_new - t)
                f_new = _pair_f_numba(ca, da, cb, db, t_new)[0]
                shrink += 1
            if abs(t_new - t) < 1e-15 * max(1.0, abs(t)):
                break
            t = t_new
            f, f_t, f_tt = _pair_f_numba(ca, da, cb, db, t)
            if f < f_best:
                f_best = f
                t_best = t
        if f > f_best:
            t = t_best
            f, f_t, f_tt = _pair_f_numba(ca, da, cb, db, t)
        return t, f, f_t, f_tt

    def refine_min(ca, da, cb, db, t0, t_lo, t_hi, max_newton, eps):
        return _refine_min_numba(
            np.ascontiguousarray(ca, dtype=np.float64),
            np.ascontiguousarray(da, dtype=np.float64),
            np.ascontiguousarray(cb, dtype=np.float64),
            np.ascontiguousarray(db, dtype=np.float64),
            float(t0), float(t_lo), float(t_hi), int(max_newton), float(eps),
        )

else:

    def batch_eval(coeffs, durations, times):
        return _batch_eval_numpy(
            np.asarray(coeffs, dtype=np.float64),
            np.asarray(durations, dtype=np.float64),
            np.asarray(times, dtype=np.float64),
        )

    def pair_f(ca, da, cb, db, t):
        ts = np.array([float(t)])
        sa = batch_eval(ca, da, ts)[0]
        sb = batch_eval(cb, db, ts)[0]
        dp = sa[0] - sb[0]
        dv = sa[1] - sb[1]
        dacc = sa[2] - sb[2]
        f = float(dp @ dp)
        f_t = 2.0 * float(dp @ dv)
        f_tt = 2.0 * (float(dp @ dacc) + float(dv @ dv))
        return f, f_t, f_tt

    def collision_core(ca, da, cb, db, d_act, n, W, static_b):
        """Collision hinge value and gradients; see the numba twin."""
        from .basis import basis_rows

        ca = np.asarray(ca, dtype=np.float64)
        da = np.asarray(da, dtype=np.float64)
        cb = np.asarray(cb, dtype=np.float64)
        db = np.asarray(db, dtype=np.float64)
        fractions = np.linspace(0.0, 1.0, n)
        times = fractions * W
        trap = np.full(n, W / (n - 1))
        trap[0] *= 0.5
        trap[-1] *= 0.5
        sa = batch_eval(ca, da, times)
        sb = batch_eval(cb, db, times)
        dp = sa[:, 0] - sb[:, 0]
        dv = sa[:, 1] - sb[:, 1]
        h = np.maximum(d_act * d_act - np.sum(dp * dp, axis=1), 0.0)
        pen = h**3
        value = float(trap @ pen)
        Ma, Mb = len(da), len(db)
        dc_a = np.zeros((Ma, 6, 2))
        dT_a = np.zeros(Ma)
        dc_b = np.zeros((Mb, 6, 2))
        dT_b = np.zeros(Mb)
        if value == 0.0:
            return value, dc_a, dT_a, dc_b, dT_b, 0.0
        g_a = (-6.0 * h**2)[:, None] * dp  # d pen / d p_a
        dpen_dt = np.sum(g_a * dv, axis=1)
        dcost_dW = float(np.sum(pen * trap / W)) + float(trap @ (dpen_dt * fractions))

        def scatter(durations, vel, sign, dc, dT):
            M = len(durations)
            alive = times < float(np.sum(durations))
            if not np.any(alive):
                return
            t = times[alive]
            g = sign * g_a[alive] * trap[alive, None]
            k, tbar = _locate_numpy(durations, t)
            rows = basis_rows(tbar, 0)
            flat = (rows[:, :, None] * g[:, None, :]).reshape(len(t), 12)
            dcf = dc.reshape(M, 12)
            for col in range(12):
                dcf[:, col] += np.bincount(k, weights=flat[:, col], minlength=M)
            per = np.bincount(k, weights=-np.sum(g * vel[alive], axis=1),
                              minlength=M + 1)
            suffix = np.cumsum(per[::-1])[::-1]
            dT += suffix[1 : M + 1]

        scatter(da, sa[:, 1], 1.0, dc_a, dT_a)
        if not static_b:
            scatter(db, sb[:, 1], -1.0, dc_b, dT_b)
        return value, dc_a, dT_a, dc_b, dT_b, dcost_dW

    def kin_core(coeffs, durations, v_max, a_max, nodes, weights):
        """Cubic hinges on squared speed/acceleration excess; numpy twin."""
        from .basis import basis_rows_span

        c = np.asarray(coeffs, dtype=np.float64)
        T = np.asarray(durations, dtype=np.float64)
        ts = T[:, None] * nodes[None, :]  # (M, nq)
        b1, b2, b3 = basis_rows_span(ts, (1, 2, 3))  # each (M, nq, 6)
        v = b1 @ c  # (M, nq, 2)
        a = b2 @ c
        j = b3 @ c
        hv = np.maximum(np.sum(v * v, axis=2) - v_max**2, 0.0)  # (M, nq)
        ha = np.maximum(np.sum(a * a, axis=2) - a_max**2, 0.0)
        pen = hv**3 + ha**3
        node_sums = pen @ weights  # (M,)
        value = float(T @ node_sums)
        # d pen / d v = 6 hv^2 v, d pen / d a = 6 ha^2 a
        gv = (6.0 * hv**2)[:, :, None] * v
        ga = (6.0 * ha**2)[:, :, None] * a
        w = T[:, None, None] * weights[None, :, None]
        dc = (np.einsum("mni,mnd->mid", b1, w * gv)
              + np.einsum("mni,mnd->mid", b2, w * ga))
        # weight scaling + node times moving with the duration
        dpen_dt = (6.0 * hv**2 * np.sum(v * a, axis=2)
                   + 6.0 * ha**2 * np.sum(a * j, axis=2))
        dT = node_sums + T * ((dpen_dt * nodes[None, :]) @ weights)
        return value, dc, dT

    def refine_min(ca, da, cb, db, t0, t_lo, t_hi, max_newton, eps):
        """Damped Newton descent of the squared pair distance from t0.

        Mirrors the numba twin: clamped steps with backtracking, never
        ending above the best value seen.  Returns (t, f, f_t, f_tt).
        """
        span = t_hi - t_lo
        t = float(t0)
        f, f_t, f_tt = pair_f(ca, da, cb, db, t)
        f_best, t_best = f, t
        for _ in range(max_newton):
            if abs(f_t) < 1e-13 * max(1.0, f):
                break
            if f_tt > eps:
                step = -f_t / f_tt
            else:
                step = -0.01 * span if f_t > 0 else 0.01 * span
            step = float(np.clip(step, -0.25 * span, 0.25 * span))
            t_new = float(np.clip(t + step, t_lo, t_hi))
            f_new = pair_f(ca, da, cb, db, t_new)[0]
            shrink = 0
            while f_new > f and shrink < 30:
                t_new = t + 0.5 * (t_new - t)
                f_new = pair_f(ca, da, cb, db, t_new)[0]
                shrink += 1
            if abs(t_new - t) < 1e-15 * max(1.0, abs(t)):
                break
            t = t_new
            f, f_t, f_tt = pair_f(ca, da, cb, db, t)
            if f < f_best:
                f_best, t_best = f, t
        if f > f_best:
            t = t_best
            f, f_t, f_tt = pair_f(ca, da, cb, db, t)
        return t, f, f_t, f_tt


locate = _locate_numpy
batch_eval_numpy = _batch_eval_numpy
