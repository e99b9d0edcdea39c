"""Compiled replay loop for frozen-derivative ray propagation.

``advance`` is the single RK4 state update shared by the full integrator
(called as plain Python) and the replay loop (compiled from the same
source), so a replay with unchanged inputs is bit-identical.
"""
import math

import numba
import numpy as np


def advance(rx, ry, rz, sx, sy, sz, h,
            ax1, ay1, az1, ax2, ay2, az2, ax4, ay4, az4):
    # RK4 with the midpoint derivative shared by stages 2 and 3:
    # r1 = r0 + h s0 + h^2/6 (k1 + 2 k2);  s1 = s0 + h/6 (k1 + 4 k2 + k4)
    c = h * h / 6.0
    nrx = rx + h * sx + c * (ax1 + 2.0 * ax2)
    nry = ry + h * sy + c * (ay1 + 2.0 * ay2)
    nrz = rz + h * sz + c * (az1 + 2.0 * az2)
    w = h / 6.0
    tx = sx + w * (ax1 + 4.0 * ax2 + ax4)
    ty = sy + w * (ay1 + 4.0 * ay2 + ay4)
    tz = sz + w * (az1 + 4.0 * az2 + az4)
    nrm = math.sqrt(tx * tx + ty * ty + tz * tz)
    return nrx, nry, nrz, tx / nrm, ty / nrm, tz / nrm


_advance_nb = numba.njit(cache=True)(advance)


@numba.njit(cache=True)
def replay_nodes(r0, s0, h, k1, k2, k4, pos_out, dir_out):
    rx, ry, rz = r0[0], r0[1], r0[2]
    sx, sy, sz = s0[0], s0[1], s0[2]
    pos_out[0, 0], pos_out[0, 1], pos_out[0, 2] = rx, ry, rz
    dir_out[0, 0], dir_out[0, 1], dir_out[0, 2] = sx, sy, sz
    for j in range(h.shape[0]):
        rx, ry, rz, sx, sy, sz = _advance_nb(
            rx, ry, rz, sx, sy, sz, h[j],
            k1[j, 0], k1[j, 1], k1[j, 2], k2[j, 0], k2[j, 1], k2[j, 2],
            k4[j, 0], k4[j, 1], k4[j, 2])
        pos_out[j + 1, 0], pos_out[j + 1, 1], pos_out[j + 1, 2] = rx, ry, rz
        dir_out[j + 1, 0], dir_out[j + 1, 1], dir_out[j + 1, 2] = sx, sy, sz


@numba.njit(cache=True)
def replay_exit(r0, s0, h, k1, k2, k4):
    rx, ry, rz = r0[0], r0[1], r0[2]
    sx, sy, sz = s0[0], s0[1], s0[2]
    for j in range(h.shape[0]):
        rx, ry, rz, sx, sy, sz = _advance_nb(
            rx, ry, rz, sx, sy, sz, h[j],
            k1[j, 0], k1[j, 1], k1[j, 2], k2[j, 0], k2[j, 1], k2[j, 2],
            k4[j, 0], k4[j, 1], k4[j, 2])
    out = np.empty(6)
    out[0], out[1], out[2], out[3], out[4], out[5] = rx, ry, rz, sx, sy, sz
    return out
