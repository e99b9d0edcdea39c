"""Compiled reference-medium evaluation.

``c`` packs the medium constants together with the per-weather terms; see
``pack_constants`` for the layout.  ``gradient`` mirrors
``media.refractivity_and_gradient`` step for step.
"""
import math

import numba
import numpy as np

from .constants import R_EARTH_KM

NM, HM, SCALE_H, N1, FLOOR, B0, JOIN_ALT, JOIN_W, NIGHT, CUTOFF, TAPER_W, \
    MX, MY, MZ, SOLAR, SX, SY, SZ, LPP, LPP_W = range(20)
N_CONST = 20


def pack_constants(p, axis, solar, sun, lpp) -> np.ndarray:
    c = np.empty(N_CONST)
    c[NM], c[HM], c[SCALE_H], c[N1], c[FLOOR] = p.nm, p.hm, p.scale_height, p.n1, p.trough_floor
    c[B0], c[JOIN_ALT], c[JOIN_W], c[NIGHT] = p.dipole_strength, p.join_altitude, p.join_width, p.night_factor
    c[CUTOFF], c[TAPER_W] = p.cutoff_radius, p.taper_width
    c[MX], c[MY], c[MZ] = axis
    c[SOLAR] = solar
    c[SX], c[SY], c[SZ] = sun
    c[LPP], c[LPP_W] = lpp, p.lpp_width
    return c


@numba.njit(cache=True)
def sample(x, y, z, c):
    r2 = x * x + y * y + z * z
    r = math.sqrt(r2)
    md = c[MX] * x + c[MY] * y + c[MZ] * z
    k = c[B0] * (R_EARTH_KM / r) ** 3
    mr = 3.0 * md / r2
    bx = k * (c[MX] - mr * x)
    by = k * (c[MY] - mr * y)
    bz = k * (c[MZ] - mr * z)
    cutoff = c[CUTOFF]
    if r >= cutoff:
        return 0.0, bx, by, bz
    h = r - R_EARTH_KM
    cos_chi = (x * c[SX] + y * c[SY] + z * c[SZ]) / r
    night = c[NIGHT]
    day = night + (1.0 - night) * (0.5 * (1.0 + cos_chi)) ** 2
    zc = (h - c[HM]) / c[SCALE_H]
    ne = c[NM] * c[SOLAR] * day * math.exp(0.5 * (1.0 - zc - math.exp(-zc)))

    join = 0.5 * (1.0 + math.tanh((h - c[JOIN_ALT]) / c[JOIN_W]))
    if join > 1e-30:
        s = md / r
        c2 = 1.0 - s * s
        if c2 > 1e-15:
            l_shell = r / (R_EARTH_KM * c2)
            inside = 0.5 * (1.0 - math.tanh((l_shell - c[LPP]) / c[LPP_W]))
            c4 = c2 * c2
            dens = c[N1] * c[SOLAR] * (c4 * c4) / (r2 * r2)
            psph = dens * inside + c[FLOOR] * (1.0 - inside)
        else:
            psph = c[FLOOR]
        ne += join * psph

    # smoothstep taper to zero at the cutoff
    r0 = cutoff - c[TAPER_W]
    if r > r0:
        t = (r - r0) / c[TAPER_W]
        ne *= 1.0 - t * t * (3.0 - 2.0 * t)
    return ne, bx, by, bz


@numba.njit(cache=True)
def phase_refractivity(ne, bx, by, bz, dx, dy, dz, f, fp_coeff, fg_coeff):
    if ne == 0.0:
        return 0.0
    fp2 = fp_coeff * ne
    b = math.sqrt(bx * bx + by * by + bz * bz)
    if b == 0.0:
        fg = 0.0
        cos_t = 0.0
    else:
        dn = math.sqrt(dx * dx + dy * dy + dz * dz)
        fg = fg_coeff * b
        cos_t = (bx * dx + by * dy + bz * dz) / (b * dn)
    f2 = f * f
    return (fp2 / (2.0 * f2) + fp2 * fg * cos_t / (2.0 * f2 * f)
            + fp2 / (4.0 * f2 * f2) * (fp2 / 2.0 + fg * fg * (1.0 + cos_t * cos_t)))


@numba.njit(cache=True)
def gradient(px, py, pz, dx, dy, dz, f, c, fp_coeff, fg_coeff):
    """(n_e, bx, by, bz, 1 - n, gx, gy, gz) at one point."""
    ne, bx, by, bz = sample(px, py, pz, c)
    chi0 = phase_refractivity(ne, bx, by, bz, dx, dy, dz, f, fp_coeff, fg_coeff)
    r = math.sqrt(px * px + py * py + pz * pz)
    d = max(0.1, 1e-4 * (r - R_EARTH_KM))
    if r >= c[CUTOFF] + d:
        return ne, bx, by, bz, chi0, 0.0, 0.0, 0.0
    ux, uy, uz = px / r, py / r, pz / r
    if abs(uz) < 0.9:
        tx, ty, tz = uy, -ux, 0.0
    else:
        tx, ty, tz = 0.0, uz, -uy
    tn = math.sqrt(tx * tx + ty * ty + tz * tz)
    tx, ty, tz = tx / tn, ty / tn, tz / tn
    sx, sy, sz = uy * tz - uz * ty, uz * tx - ux * tz, ux * ty - uy * tx
    gx = gy = gz = 0.0
    for i in range(3):
        if i == 0:
            ax, ay, az = ux, uy, uz
        elif i == 1:
            ax, ay, az = tx, ty, tz
        else:
            ax, ay, az = sx, sy, sz
        n1, b1x, b1y, b1z = sample(px + d * ax, py + d * ay, pz + d * az, c)
        n2, b2x, b2y, b2z = sample(px - d * ax, py - d * ay, pz - d * az, c)
        deriv = (phase_refractivity(n2, b2x, b2y, b2z, dx, dy, dz, f, fp_coeff, fg_coeff)
                 - phase_refractivity(n1, b1x, b1y, b1z, dx, dy, dz, f, fp_coeff, fg_coeff)) / (2.0 * d)
        gx += deriv * ax
        gy += deriv * ay
        gz += deriv * az
    return ne, bx, by, bz, chi0, gx, gy, gz
