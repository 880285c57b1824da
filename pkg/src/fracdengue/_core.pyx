# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled time-march kernel; contract identical to _core_py.simulate_loop."""
import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cnp.import_array()

BACKEND_NAME = "compiled"

cdef double EPS64 = 1.4210854715202004e-14  # 64 * double epsilon


def simulate_loop(
    int n, double h, object y0,
    double mu_H, double N_H, double cbi, double fV, double fH,
    double mu_V, double Pi_V,
    double[::1] kIV, double[::1] tIV, double wIV,
    double[::1] kIHb, double[::1] tIHb, double wIHb,
    double[::1] kIHp, double[::1] tIHp, double wIHp,
    double[::1] psi, double[::1] zeta, double[::1] kappa, double cm,
    double tol, int max_iter, double damping, double clip_threshold,
    double clip_peak,
):
    states_arr = np.empty((n + 1, 5))
    op_IV_arr = np.empty(n)
    op_IHp_arr = np.empty(n)
    flux_arr = np.empty(n)
    cdef double[:, ::1] states = states_arr
    cdef double[::1] op_IV = op_IV_arr
    cdef double[::1] op_IHp = op_IHp_arr
    cdef double[::1] flux = flux_arr

    cdef int i, k, m, it, n_clip = 0
    cdef double KV, KB, KP, ps, ze, ka, muVc, fVp, fHp
    cdef double A_SH, B_SH, C_SH, A_IH, B_IH, C_IH, D_IH
    cdef double A_RH, B_RH, C_RH, A_SV, B_SV, C_SV, A_IV, B_IV, C_IV, D_IV
    cdef double x, lo, hi, f, scale, den_sv, sv, iv, den_sh, sh, rh
    cdef double svp, ivp, shp, fp, xn, clip, worst
    cdef bint ok
    cdef double vals[5]
    cdef double peaks[5]

    for k in range(5):
        states[0, k] = (<object> y0)[k]
        peaks[k] = states[0, k]

    for i in range(n):
        KV = tIV[i] * states[0, 4]
        KB = tIHb[i] * states[0, 1]
        KP = tIHp[i] * states[0, 1]
        for m in range(1, i + 1):
            KV += kIV[m] * states[i + 1 - m, 4]
            KB += kIHb[m] * states[i + 1 - m, 1]
            KP += kIHp[m] * states[i + 1 - m, 1]

        ps = psi[i]; ze = zeta[i]; ka = kappa[i]
        muVc = mu_V + cm * ka
        fVp = fV * (1.0 - ps)
        fHp = fH * (1.0 - ps)

        A_SH = 1.0 + mu_H * h + fVp * h * KV
        B_SH = fVp * h * wIV
        C_SH = -states[i, 0] - h * mu_H * N_H
        A_IH = 1.0 + h * mu_H - A_SH
        B_IH = 1.0 + h * mu_H + cbi * h * wIHb
        C_IH = -B_SH
        D_IH = -states[i, 1] + cbi * h * KB
        A_RH = 1.0 + h * mu_H
        B_RH = 1.0 + h * mu_H - B_IH
        C_RH = -states[i, 2] - states[i, 1] - D_IH
        A_SV = 1.0 + muVc * h + fHp * h * KP
        B_SV = fHp * h * wIHp
        C_SV = -states[i, 3] - h * Pi_V * (1.0 - ze)
        A_IV = 1.0 + h * muVc - A_SV
        B_IV = -B_SV
        C_IV = 1.0 + h * muVc
        D_IV = -states[i, 4]

        x = states[i, 1]
        lo = 0.0
        hi = N_H
        ok = False
        f = INFINITY
        sv = 0.0; iv = 0.0; sh = 0.0
        for it in range(max_iter):
            den_sv = A_SV + B_SV * x
            sv = -C_SV / den_sv
            iv = -(D_IV + (A_IV + B_IV * x) * sv) / C_IV
            den_sh = A_SH + B_SH * iv
            sh = -C_SH / den_sh
            f = A_IH * sh + B_IH * x + C_IH * sh * iv + D_IH
            scale = fabs(B_IH * x) + fabs(D_IH) + fabs(A_IH * sh) + fabs(C_IH * sh * iv) + 1.0
            # accept on a met tolerance or on bracket collapse
            if fabs(f) <= max(tol, EPS64 * scale) or hi - lo <= 4e-16 * max(1.0, hi):
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
            if fp != 0.0:
                xn = x - damping * f / fp
            else:
                xn = 0.5 * (lo + hi)
            if not (lo <= xn <= hi):
                xn = 0.5 * (lo + hi)
            x = xn
        if not ok:
            return states_arr, op_IV_arr, op_IHp_arr, flux_arr, n_clip, 1, i, fabs(f)

        den_sv = A_SV + B_SV * x
        sv = -C_SV / den_sv
        iv = -(D_IV + (A_IV + B_IV * x) * sv) / C_IV
        sh = -C_SH / (A_SH + B_SH * iv)
        rh = -(B_RH * x + C_RH) / A_RH

        vals[0] = sh; vals[1] = x; vals[2] = rh; vals[3] = sv; vals[4] = iv
        worst = 0.0
        for k in range(5):
            if vals[k] < 0.0:
                clip = max(clip_threshold, clip_peak * peaks[k])
                if vals[k] < -clip:
                    if vals[k] < worst:
                        worst = vals[k]
                else:
                    vals[k] = 0.0
                    n_clip += 1
            elif vals[k] > peaks[k]:
                peaks[k] = vals[k]
        if worst < 0.0:
            for k in range(5):
                states[i + 1, k] = vals[k]
            return states_arr, op_IV_arr, op_IHp_arr, flux_arr, n_clip, 2, i, -worst
        for k in range(5):
            states[i + 1, k] = vals[k]
        op_IV[i] = KV + wIV * vals[4]
        op_IHp[i] = KP + wIHp * vals[1]
        flux[i] = fVp * vals[0] * op_IV[i]

    return states_arr, op_IV_arr, op_IHp_arr, flux_arr, n_clip, 0, -1, 0.0
