# Compiled per-drop simulation kernels.  Semantics mirror
# famasim.kernels.reference exactly: same modes, same deviation ranking
# with ties to the lower index, same minimum-gap walk, same
# ascending-index MRC summation order.

import numpy as np

from libc.float cimport DBL_MAX
from libc.math cimport INFINITY, fabs, sqrt
from libc.stdint cimport int64_t, uint8_t

MODE_FIXED_PORTS = 0
MODE_RANKED = 1
MODE_FASTFAMA = 2


cdef void _stable_sort(const double* keys, int64_t* order, int64_t* buf,
                       Py_ssize_t n) noexcept:
    # Bottom-up stable merge sort of `order` by keys[order[i]] ascending.
    cdef Py_ssize_t width = 1
    cdef Py_ssize_t lo, mid, hi, i, j, k
    while width < n:
        lo = 0
        while lo < n:
            mid = lo + width
            if mid >= n:
                break
            hi = mid + width
            if hi > n:
                hi = n
            i = lo
            j = mid
            k = lo
            while i < mid and j < hi:
                if keys[order[i]] <= keys[order[j]]:
                    buf[k] = order[i]
                    i += 1
                else:
                    buf[k] = order[j]
                    j += 1
                k += 1
            while i < mid:
                buf[k] = order[i]
                i += 1
                k += 1
            while j < hi:
                buf[k] = order[j]
                j += 1
                k += 1
            for i in range(lo, hi):
                order[i] = buf[i]
            lo += 2 * width
        width *= 2


def simulate_drop(
    const double complex[:, ::1] received,
    const double complex[::1] desired_gains,
    const uint8_t[::1] sym_idx,
    const double complex[::1] points,
    double desired_power,
    double symbol_power,
    int mode,
    const int64_t[::1] ports,
    const int64_t[::1] candidates,
    int k_sel,
    int gap,
    bint collect,
):
    cdef Py_ssize_t num_ports = received.shape[0]
    cdef Py_ssize_t num_symbols = received.shape[1]

    detected_arr = np.empty(num_symbols, dtype=np.uint8)
    combined_arr = np.empty(num_symbols, dtype=np.complex128)
    weight_arr = np.empty(num_symbols, dtype=np.float64)
    cdef uint8_t[::1] detected = detected_arr
    cdef double complex[::1] combined = combined_arr
    cdef double[::1] weight = weight_arr

    cdef Py_ssize_t s, k, j, pos, t, n_cand, n_fixed, n_chosen, chosen_cap
    cdef double g_re, g_im, r_re, r_im, su_re, su_im, d_re, d_im
    cdef double y_re, y_im, num, den, val, best_val, wsum, scale, m
    cdef Py_ssize_t best_k
    cdef int64_t port, tmp
    cdef bint ok
    cdef int errors = 0

    cdef double[::1] pred
    cdef double[::1] dev
    cdef int64_t[::1] order
    cdef int64_t[::1] buf
    cdef int64_t[::1] chosen

    if mode == MODE_FASTFAMA:
        for s in range(num_symbols):
            su_re = points[sym_idx[s]].real
            su_im = points[sym_idx[s]].imag
            best_val = -1.0
            best_k = 0
            for k in range(num_ports):
                g_re = desired_gains[k].real
                g_im = desired_gains[k].imag
                d_re = received[k, s].real - (g_re * su_re - g_im * su_im)
                d_im = received[k, s].imag - (g_re * su_im + g_im * su_re)
                den = d_re * d_re + d_im * d_im
                if den > 0:
                    num = (g_re * g_re + g_im * g_im) * (su_re * su_re + su_im * su_im)
                    val = num / den
                    if val > DBL_MAX:
                        val = DBL_MAX
                else:
                    val = DBL_MAX
                if val > best_val:
                    best_val = val
                    best_k = k
            g_re = desired_gains[best_k].real
            g_im = desired_gains[best_k].imag
            r_re = received[best_k, s].real
            r_im = received[best_k, s].imag
            y_re = g_re * r_re + g_im * r_im
            y_im = g_re * r_im - g_im * r_re
            combined[s] = y_re + 1j * y_im
            weight[s] = g_re * g_re + g_im * g_im
            detected[s] = 2 * (y_im < 0) + (y_re < 0)
            if detected[s] != sym_idx[s]:
                errors += 1

    elif mode == MODE_FIXED_PORTS:
        n_fixed = ports.shape[0]
        if n_fixed == 0:
            raise ValueError("fixed-port mode needs at least one port")
        scale = 1.0 / sqrt(desired_power)
        wsum = 0.0
        for j in range(n_fixed):
            g_re = desired_gains[ports[j]].real
            g_im = desired_gains[ports[j]].imag
            wsum += g_re * g_re + g_im * g_im
        for s in range(num_symbols):
            y_re = 0.0
            y_im = 0.0
            for j in range(n_fixed):
                k = ports[j]
                g_re = desired_gains[k].real
                g_im = desired_gains[k].imag
                r_re = received[k, s].real
                r_im = received[k, s].imag
                y_re += g_re * r_re + g_im * r_im
                y_im += g_re * r_im - g_im * r_re
            y_re *= scale
            y_im *= scale
            combined[s] = y_re + 1j * y_im
            weight[s] = wsum * scale
            detected[s] = 2 * (y_im < 0) + (y_re < 0)
            if detected[s] != sym_idx[s]:
                errors += 1

    elif mode == MODE_RANKED:
        n_cand = candidates.shape[0]
        if n_cand == 0:
            raise ValueError("ranked mode needs at least one candidate")
        scale = 1.0 / sqrt(desired_power)
        chosen_cap = k_sel if k_sel < n_cand else n_cand
        pred = np.empty(n_cand, dtype=np.float64)
        dev = np.empty(n_cand, dtype=np.float64)
        order = np.empty(n_cand, dtype=np.int64)
        buf = np.empty(n_cand, dtype=np.int64)
        chosen = np.empty(chosen_cap, dtype=np.int64)
        for j in range(n_cand):
            g_re = desired_gains[candidates[j]].real
            g_im = desired_gains[candidates[j]].imag
            pred[j] = (g_re * g_re + g_im * g_im) * symbol_power
        for s in range(num_symbols):
            for j in range(n_cand):
                r_re = received[candidates[j], s].real
                r_im = received[candidates[j], s].imag
                m = r_re * r_re + r_im * r_im
                if pred[j] > 0:
                    dev[j] = fabs(m - pred[j]) / pred[j]
                else:
                    dev[j] = INFINITY
                order[j] = j
            _stable_sort(&dev[0], &order[0], &buf[0], n_cand)
            n_chosen = 0
            for pos in range(n_cand):
                port = candidates[order[pos]]
                ok = True
                for t in range(n_chosen):
                    if (port - chosen[t] if port >= chosen[t] else chosen[t] - port) < gap:
                        ok = False
                        break
                if ok:
                    chosen[n_chosen] = port
                    n_chosen += 1
                    if n_chosen == k_sel:
                        break
            # insertion sort: MRC must sum in ascending port order
            for j in range(1, n_chosen):
                tmp = chosen[j]
                t = j - 1
                while t >= 0 and chosen[t] > tmp:
                    chosen[t + 1] = chosen[t]
                    t -= 1
                chosen[t + 1] = tmp
            y_re = 0.0
            y_im = 0.0
            wsum = 0.0
            for j in range(n_chosen):
                k = chosen[j]
                g_re = desired_gains[k].real
                g_im = desired_gains[k].imag
                r_re = received[k, s].real
                r_im = received[k, s].imag
                y_re += g_re * r_re + g_im * r_im
                y_im += g_re * r_im - g_im * r_re
                wsum += g_re * g_re + g_im * g_im
            y_re *= scale
            y_im *= scale
            combined[s] = y_re + 1j * y_im
            weight[s] = wsum * scale
            detected[s] = 2 * (y_im < 0) + (y_re < 0)
            if detected[s] != sym_idx[s]:
                errors += 1
    else:
        raise ValueError(f"unknown kernel mode {mode}")

    return errors, detected_arr, combined_arr, (weight_arr if collect else None)
