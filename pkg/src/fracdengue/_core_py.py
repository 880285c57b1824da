"""Pure-NumPy time-march kernel; same contract as the Cython core.

The per-step work is three history dot products (one per tempered operator)
followed by a safeguarded scalar Newton solve of the coupled bilinear system,
reduced by eliminating S_V, I_V, S_H as rational functions of the implicit
I_H node.

Status codes: 0 ok, 1 Newton failure, 2 negative compartment beyond the clip
tolerance.
"""
from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def simulate_loop(
    n, h, y0,
    mu_H, N_H, cbi, fV, fH, mu_V, Pi_V,
    kIV, tIV, wIV,
    kIHb, tIHb, wIHb,
    kIHp, tIHp, wIHp,
    psi, zeta, kappa, cm,
    tol, max_iter, damping, clip_threshold, clip_peak,
):
    """March n implicit-theta steps; see solver.simulate for argument set-up.

    kX/tX are the damped, 1/h-scaled known-part kernels (lag-indexed) and
    tails of each operator; wX the damped implicit-node weight. Returns
    (states, op_IV, op_IHp, flux, n_clip, status, bad_step, residual).
    """
    states = np.empty((n + 1, 5))
    states[0] = y0
    SH = states[:, 0]; IH = states[:, 1]; RH = states[:, 2]
    SV = states[:, 3]; IV = states[:, 4]
    op_IV = np.empty(n)
    op_IHp = np.empty(n)
    flux = np.empty(n)
    n_clip = 0
    eps64 = 64.0 * np.finfo(float).eps
    peaks = np.array(y0, dtype=float)

    for i in range(n):
        if i >= 1:
            KV = float(np.dot(kIV[1:i + 1], IV[i:0:-1])) + tIV[i] * IV[0]
            KB = float(np.dot(kIHb[1:i + 1], IH[i:0:-1])) + tIHb[i] * IH[0]
            KP = float(np.dot(kIHp[1:i + 1], IH[i:0:-1])) + tIHp[i] * IH[0]
        else:
            KV = tIV[0] * IV[0]
            KB = tIHb[0] * IH[0]
            KP = tIHp[0] * IH[0]

        ps = psi[i]; ze = zeta[i]; ka = kappa[i]
        muVc = mu_V + cm * ka
        fVp = fV * (1.0 - ps)
        fHp = fH * (1.0 - ps)

        A_SH = 1.0 + mu_H * h + fVp * h * KV
        B_SH = fVp * h * wIV
        C_SH = -SH[i] - h * mu_H * N_H
        A_IH = 1.0 + h * mu_H - A_SH
        B_IH = 1.0 + h * mu_H + cbi * h * wIHb
        C_IH = -B_SH
        D_IH = -IH[i] + cbi * h * KB
        A_RH = 1.0 + h * mu_H
        B_RH = 1.0 + h * mu_H - B_IH
        C_RH = -RH[i] - IH[i] - D_IH
        A_SV = 1.0 + muVc * h + fHp * h * KP
        B_SV = fHp * h * wIHp
        C_SV = -SV[i] - h * Pi_V * (1.0 - ze)
        A_IV = 1.0 + h * muVc - A_SV
        B_IV = -B_SV
        C_IV = 1.0 + h * muVc
        D_IV = -IV[i]

        # scalar solve for x = I_H^{i+1} on [0, N_H]
        x = IH[i]
        lo, hi = 0.0, N_H
        ok = False
        f = np.inf
        for _ in range(max_iter):
            den_sv = A_SV + B_SV * x
            sv = -C_SV / den_sv
            iv = -(D_IV + (A_IV + B_IV * x) * sv) / C_IV
            den_sh = A_SH + B_SH * iv
            sh = -C_SH / den_sh
            f = A_IH * sh + B_IH * x + C_IH * sh * iv + D_IH
            scale = abs(B_IH * x) + abs(D_IH) + abs(A_IH * sh) + abs(C_IH * sh * iv) + 1.0
            # accept on a met tolerance or on bracket collapse (the residual
            # has a cancellation floor that the bracket does not)
            if abs(f) <= max(tol, eps64 * scale) or hi - lo <= 4e-16 * max(1.0, hi):
                ok = True
                break
            if f > 0.0:
                hi = min(hi, x)
            else:
                lo = max(lo, x)
            svp = -sv * B_SV / den_sv
            ivp = -(B_IV * sv + (A_IV + B_IV * x) * svp) / C_IV
            shp = -sh * B_SH * ivp / den_sh
            fp = A_IH * shp + B_IH + C_IH * (shp * iv + sh * ivp)
            xn = x - damping * f / fp if fp != 0.0 else 0.5 * (lo + hi)
            if not (lo <= xn <= hi):
                xn = 0.5 * (lo + hi)
            x = xn
        if not ok:
            return states, op_IV, op_IHp, flux, n_clip, 1, i, abs(f)

        den_sv = A_SV + B_SV * x
        sv = -C_SV / den_sv
        iv = -(D_IV + (A_IV + B_IV * x) * sv) / C_IV
        sh = -C_SH / (A_SH + B_SH * iv)
        rh = -(B_RH * x + C_RH) / A_RH

        vals = [sh, x, rh, sv, iv]
        for k in range(5):
            if vals[k] < 0.0:
                clip = max(clip_threshold, clip_peak * peaks[k])
                if vals[k] < -clip:
                    states[i + 1] = vals
                    return states, op_IV, op_IHp, flux, n_clip, 2, i, -min(vals)
                vals[k] = 0.0
                n_clip += 1
            elif vals[k] > peaks[k]:
                peaks[k] = vals[k]
        sh, x, rh, sv, iv = vals
        states[i + 1, 0] = sh
        states[i + 1, 1] = x
        states[i + 1, 2] = rh
        states[i + 1, 3] = sv
        states[i + 1, 4] = iv
        op_IV[i] = KV + wIV * iv
        op_IHp[i] = KP + wIHp * x
        flux[i] = fVp * sh * op_IV[i]

    return states, op_IV, op_IHp, flux, n_clip, 0, -1, 0.0
