"""Compiled inner loop of the fixed-point engine (mirrors FixedEngine._step_numpy)."""

import numba as nb
import numpy as np


@nb.njit(cache=True, inline="always")
def _leap(reg, tables):
    out = np.uint64(0)
    for k in range(tables.shape[0]):
        out ^= tables[k, (reg >> np.uint64(8 * k)) & np.uint64(0xFF)]
    return out


@nb.njit(cache=True)
def fixed_block(W, vbias, hbias, lut, offset, regs, tables, out_shift,
                pinned, pin_values, visible, hidden, out):
    n_steps = out.shape[0]
    n_chains, nv = visible.shape
    nh = hidden.shape[1]
    acc_h = np.empty(nh, dtype=np.int64)
    acc_v = np.empty(nv, dtype=np.int64)
    shift = np.uint64(out_shift)
    for t in range(n_steps):
        for c in range(n_chains):
            # hidden layer: accumulate rows of W selected by visible bits
            for j in range(nh):
                acc_h[j] = hbias[j]
            for i in range(nv):
                if visible[c, i]:
                    for j in range(nh):
                        acc_h[j] += W[i, j]
            for j in range(nh):
                r = _leap(regs[c, nv + j], tables)
                regs[c, nv + j] = r
                x = acc_h[j]
                if x < -offset:
                    x = -offset
                elif x > offset:
                    x = offset
                hidden[c, j] = 1 if np.int64(r >> shift) < lut[x + offset] else 0
            # visible layer from the new hidden bits
            for i in range(nv):
                s = vbias[i]
                for j in range(nh):
                    if hidden[c, j]:
                        s += W[i, j]
                acc_v[i] = s
            for i in range(nv):
                r = _leap(regs[c, i], tables)
                regs[c, i] = r
                if pinned[c, i]:
                    visible[c, i] = pin_values[c, i]
                else:
                    x = acc_v[i]
                    if x < -offset:
                        x = -offset
                    elif x > offset:
                        x = offset
                    visible[c, i] = 1 if np.int64(r >> shift) < lut[x + offset] else 0
                out[t, c, i] = visible[c, i]
    return out
