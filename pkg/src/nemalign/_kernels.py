"""Compiled inner loops for the pair-interaction sums.

Everything in this module works on raw float64 arrays and accumulates *raw*
gradient sums: ``gx[i] = sum_j grad_{x_i} V`` and ``gu[i] = sum_j grad_{u_i} V``
(Euclidean, not yet projected onto the tangent space).  Mobility prefactors,
signs, and the tangent projection are applied by the caller; the kernels stay
independent of the dynamical parameters.

Two reduction strategies are provided per dimension:

* ``pair_sums_*``: half-stencil cell sweep that visits every pair once and
  scatters to both members (Newton's third law is bitwise-exact by
  construction).  Fastest, single-threaded, compiled with ``fastmath``.
* ``gather_sums_*``: per-particle gathers over a full neighborhood stencil in
  a fixed (cell index ascending, particle index ascending) order.  The sum for
  each particle is independent of how particles are partitioned across
  workers, which makes trajectories bitwise-reproducible for any worker
  count.  Compiled without ``fastmath`` and with ``nogil`` so slices can run
  on real threads.

``brute_sums_*`` are full O(N^2) gathers for boxes too small to hold a 3x3
(3x3x3) cell grid; the cell kernels require ``ncell >= 3`` per axis so that
the periodic stencil never aliases a neighbor cell onto itself.

The shape/exponent parameters are passed pre-digested: ``a = ell^2 - d^2``,
``twod2 = 2 d^2``, ``chi2 = chi^2``, ``pref = (4 pi)^(-n/2)``,
``q = 1/2 - xi``, ``rc2 = r_c^2``.  Pairs with ``R^T Sigma^-1 R > EXP_CUT``
contribute less than ``pref * exp(-EXP_CUT) ~ 1e-21`` and are skipped.  A
singular overlap matrix poisons the pair with NaN rather than raising, so the
caller can locate the offending pair with the scalar code path.
"""

import numpy as np
from numba import njit

EXP_CUT = 46.0


# -- cell construction ------------------------------------------------------

@njit(cache=True)
def build_cells_2d(pos, lx, ly, ncx, ncy, cell_of, count, start, order):
    """Counting sort of particles into cells; ``order`` holds indices grouped
    by cell, ascending within each cell."""
    n_part = pos.shape[0]
    invx = ncx / lx
    invy = ncy / ly
    ncells = ncx * ncy
    for c in range(ncells):
        count[c] = 0
    for i in range(n_part):
        cx = int(pos[i, 0] * invx)
        cy = int(pos[i, 1] * invy)
        if cx >= ncx:
            cx = ncx - 1
        if cy >= ncy:
            cy = ncy - 1
        c = cx * ncy + cy
        cell_of[i] = c
        count[c] += 1
    s = 0
    for c in range(ncells):
        start[c] = s
        s += count[c]
    fill = start.copy()
    for i in range(n_part):
        c = cell_of[i]
        order[fill[c]] = i
        fill[c] += 1


@njit(cache=True)
def build_cells_3d(pos, lx, ly, lz, ncx, ncy, ncz, cell_of, count, start, order):
    n_part = pos.shape[0]
    invx = ncx / lx
    invy = ncy / ly
    invz = ncz / lz
    ncells = ncx * ncy * ncz
    for c in range(ncells):
        count[c] = 0
    for i in range(n_part):
        cx = int(pos[i, 0] * invx)
        cy = int(pos[i, 1] * invy)
        cz = int(pos[i, 2] * invz)
        if cx >= ncx:
            cx = ncx - 1
        if cy >= ncy:
            cy = ncy - 1
        if cz >= ncz:
            cz = ncz - 1
        c = (cx * ncy + cy) * ncz + cz
        cell_of[i] = c
        count[c] += 1
    s = 0
    for c in range(ncells):
        start[c] = s
        s += count[c]
    fill = start.copy()
    for i in range(n_part):
        c = cell_of[i]
        order[fill[c]] = i
        fill[c] += 1


# -- fast half-stencil sweeps (scatter to both pair members) ----------------

@njit(cache=True, fastmath=True)
def pair_sums_2d(pos, u, lx, ly, ncx, ncy, start, count, order,
                 a, twod2, chi2, pref, q, rc2, gx, gu):
    n_part = pos.shape[0]
    for i in range(n_part):
        gx[i, 0] = 0.0
        gx[i, 1] = 0.0
        gu[i, 0] = 0.0
        gu[i, 1] = 0.0
    offs = ((0, 0), (1, 0), (1, 1), (0, 1), (-1, 1))
    half_x = 0.5 * lx
    half_y = 0.5 * ly
    for cx in range(ncx):
        for cy in range(ncy):
            c = cx * ncy + cy
            for ox, oy in offs:
                dx_ = cx + ox
                dy_ = cy + oy
                sx = 0.0
                sy = 0.0
                if dx_ < 0:
                    dx_ += ncx
                    sx = -lx
                elif dx_ >= ncx:
                    dx_ -= ncx
                    sx = lx
                if dy_ >= ncy:
                    dy_ -= ncy
                    sy = ly
                c2 = dx_ * ncy + dy_
                same = c2 == c
                i0 = start[c]
                i1 = i0 + count[c]
                j1 = start[c2] + count[c2]
                for ii in range(i0, i1):
                    i = order[ii]
                    xi = pos[i, 0]
                    yi = pos[i, 1]
                    uxi = u[i, 0]
                    uyi = u[i, 1]
                    jj0 = ii + 1 if same else start[c2]
                    for jj in range(jj0, j1):
                        j = order[jj]
                        rx = pos[j, 0] + sx - xi
                        ry = pos[j, 1] + sy - yi
                        if rx > half_x:
                            rx -= lx
                        elif rx < -half_x:
                            rx += lx
                        if ry > half_y:
                            ry -= ly
                        elif ry < -half_y:
                            ry += ly
                        r2 = rx * rx + ry * ry
                        if r2 >= rc2:
                            continue
                        uxj = u[j, 0]
                        uyj = u[j, 1]
                        s11 = a * (uxi * uxi + uxj * uxj) + twod2
                        s12 = a * (uxi * uyi + uxj * uyj)
                        s22 = a * (uyi * uyi + uyj * uyj) + twod2
                        det = s11 * s22 - s12 * s12
                        if det == 0.0:
                            det = np.nan
                        idet = 1.0 / det
                        y1 = (s22 * rx - s12 * ry) * idet
                        y2 = (s11 * ry - s12 * rx) * idet
                        expo = rx * y1 + ry * y2
                        if expo > EXP_CUT:
                            continue
                        c12 = uxi * uxj + uyi * uyj
                        b2 = 1.0 - chi2 * c12 * c12
                        if b2 <= 0.0:
                            if q > 0.0:
                                continue
                            b2 = np.nan
                        if q == 0.5:
                            pr = np.sqrt(b2)
                        elif q == 0.0:
                            pr = 1.0
                        elif q == -0.5:
                            pr = 1.0 / np.sqrt(b2)
                        else:
                            pr = b2 ** q
                        v = pref * pr * np.exp(-expo)
                        f = 2.0 * v
                        fy1 = f * y1
                        fy2 = f * y2
                        gx[i, 0] += fy1
                        gx[i, 1] += fy2
                        gx[j, 0] -= fy1
                        gx[j, 1] -= fy2
                        cc = -(2.0 * q) * chi2 * c12 / b2 * v
                        di = a * (uxi * y1 + uyi * y2) * f
                        dj = a * (uxj * y1 + uyj * y2) * f
                        gu[i, 0] += cc * uxj + di * y1
                        gu[i, 1] += cc * uyj + di * y2
                        gu[j, 0] += cc * uxi + dj * y1
                        gu[j, 1] += cc * uyi + dj * y2


@njit(cache=True, fastmath=True)
def pair_sums_3d(pos, u, lx, ly, lz, ncx, ncy, ncz, start, count, order,
                 a, twod2, chi2, pref, q, rc2, gx, gu):
    n_part = pos.shape[0]
    for i in range(n_part):
        gx[i, 0] = 0.0
        gx[i, 1] = 0.0
        gx[i, 2] = 0.0
        gu[i, 0] = 0.0
        gu[i, 1] = 0.0
        gu[i, 2] = 0.0
    offs = ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1),
            (1, 1, 0), (1, -1, 0), (1, 0, 1), (1, 0, -1),
            (0, 1, 1), (0, 1, -1),
            (1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1))
    half_x = 0.5 * lx
    half_y = 0.5 * ly
    half_z = 0.5 * lz
    for cx in range(ncx):
        for cy in range(ncy):
            for cz in range(ncz):
                c = (cx * ncy + cy) * ncz + cz
                for ox, oy, oz in offs:
                    dx_ = cx + ox
                    dy_ = cy + oy
                    dz_ = cz + oz
                    sx = 0.0
                    sy = 0.0
                    sz = 0.0
                    if dx_ < 0:
                        dx_ += ncx
                        sx = -lx
                    elif dx_ >= ncx:
                        dx_ -= ncx
                        sx = lx
                    if dy_ < 0:
                        dy_ += ncy
                        sy = -ly
                    elif dy_ >= ncy:
                        dy_ -= ncy
                        sy = ly
                    if dz_ < 0:
                        dz_ += ncz
                        sz = -lz
                    elif dz_ >= ncz:
                        dz_ -= ncz
                        sz = lz
                    c2 = (dx_ * ncy + dy_) * ncz + dz_
                    same = c2 == c
                    i0 = start[c]
                    i1 = i0 + count[c]
                    j1 = start[c2] + count[c2]
                    for ii in range(i0, i1):
                        i = order[ii]
                        xi = pos[i, 0]
                        yi = pos[i, 1]
                        zi = pos[i, 2]
                        uxi = u[i, 0]
                        uyi = u[i, 1]
                        uzi = u[i, 2]
                        jj0 = ii + 1 if same else start[c2]
                        for jj in range(jj0, j1):
                            j = order[jj]
                            rx = pos[j, 0] + sx - xi
                            ry = pos[j, 1] + sy - yi
                            rz = pos[j, 2] + sz - zi
                            if rx > half_x:
                                rx -= lx
                            elif rx < -half_x:
                                rx += lx
                            if ry > half_y:
                                ry -= ly
                            elif ry < -half_y:
                                ry += ly
                            if rz > half_z:
                                rz -= lz
                            elif rz < -half_z:
                                rz += lz
                            r2 = rx * rx + ry * ry + rz * rz
                            if r2 >= rc2:
                                continue
                            uxj = u[j, 0]
                            uyj = u[j, 1]
                            uzj = u[j, 2]
                            s11 = a * (uxi * uxi + uxj * uxj) + twod2
                            s22 = a * (uyi * uyi + uyj * uyj) + twod2
                            s33 = a * (uzi * uzi + uzj * uzj) + twod2
                            s12 = a * (uxi * uyi + uxj * uyj)
                            s13 = a * (uxi * uzi + uxj * uzj)
                            s23 = a * (uyi * uzi + uyj * uzj)
                            co11 = s22 * s33 - s23 * s23
                            co12 = s13 * s23 - s12 * s33
                            co13 = s12 * s23 - s13 * s22
                            det = s11 * co11 + s12 * co12 + s13 * co13
                            if det == 0.0:
                                det = np.nan
                            idet = 1.0 / det
                            co22 = s11 * s33 - s13 * s13
                            co23 = s12 * s13 - s11 * s23
                            co33 = s11 * s22 - s12 * s12
                            y1 = (co11 * rx + co12 * ry + co13 * rz) * idet
                            y2 = (co12 * rx + co22 * ry + co23 * rz) * idet
                            y3 = (co13 * rx + co23 * ry + co33 * rz) * idet
                            expo = rx * y1 + ry * y2 + rz * y3
                            if expo > EXP_CUT:
                                continue
                            c12 = uxi * uxj + uyi * uyj + uzi * uzj
                            b2 = 1.0 - chi2 * c12 * c12
                            if b2 <= 0.0:
                                if q > 0.0:
                                    continue
                                b2 = np.nan
                            if q == 0.5:
                                pr = np.sqrt(b2)
                            elif q == 0.0:
                                pr = 1.0
                            elif q == -0.5:
                                pr = 1.0 / np.sqrt(b2)
                            else:
                                pr = b2 ** q
                            v = pref * pr * np.exp(-expo)
                            f = 2.0 * v
                            fy1 = f * y1
                            fy2 = f * y2
                            fy3 = f * y3
                            gx[i, 0] += fy1
                            gx[i, 1] += fy2
                            gx[i, 2] += fy3
                            gx[j, 0] -= fy1
                            gx[j, 1] -= fy2
                            gx[j, 2] -= fy3
                            cc = -(2.0 * q) * chi2 * c12 / b2 * v
                            di = a * (uxi * y1 + uyi * y2 + uzi * y3) * f
                            dj = a * (uxj * y1 + uyj * y2 + uzj * y3) * f
                            gu[i, 0] += cc * uxj + di * y1
                            gu[i, 1] += cc * uyj + di * y2
                            gu[i, 2] += cc * uzj + di * y3
                            gu[j, 0] += cc * uxi + dj * y1
                            gu[j, 1] += cc * uyi + dj * y2
                            gu[j, 2] += cc * uzi + dj * y3


# -- deterministic per-particle gathers -------------------------------------

@njit(cache=True, nogil=True)
def gather_sums_2d(pos, u, lx, ly, ncx, ncy, cell_of, start, count, order,
                   a, twod2, chi2, pref, q, rc2, i_lo, i_hi, gx, gu):
    """Accumulate the pair sums for particles ``i_lo <= i < i_hi`` only.

    Neighbor contributions are added in a fixed order (stencil cells by
    ascending offset, particles ascending within a cell), so the result for
    a given particle does not depend on slice boundaries.
    """
    half_x = 0.5 * lx
    half_y = 0.5 * ly
    for i in range(i_lo, i_hi):
        xi = pos[i, 0]
        yi = pos[i, 1]
        uxi = u[i, 0]
        uyi = u[i, 1]
        ci = cell_of[i]
        cx = ci // ncy
        cy = ci - cx * ncy
        ax0 = 0.0
        ax1 = 0.0
        au0 = 0.0
        au1 = 0.0
        for ox in range(-1, 2):
            dx_ = cx + ox
            sx = 0.0
            if dx_ < 0:
                dx_ += ncx
                sx = -lx
            elif dx_ >= ncx:
                dx_ -= ncx
                sx = lx
            for oy in range(-1, 2):
                dy_ = cy + oy
                sy = 0.0
                if dy_ < 0:
                    dy_ += ncy
                    sy = -ly
                elif dy_ >= ncy:
                    dy_ -= ncy
                    sy = ly
                c2 = dx_ * ncy + dy_
                j0 = start[c2]
                j1 = j0 + count[c2]
                for jj in range(j0, j1):
                    j = order[jj]
                    if j == i:
                        continue
                    rx = pos[j, 0] + sx - xi
                    ry = pos[j, 1] + sy - yi
                    if rx > half_x:
                        rx -= lx
                    elif rx < -half_x:
                        rx += lx
                    if ry > half_y:
                        ry -= ly
                    elif ry < -half_y:
                        ry += ly
                    r2 = rx * rx + ry * ry
                    if r2 >= rc2:
                        continue
                    uxj = u[j, 0]
                    uyj = u[j, 1]
                    s11 = a * (uxi * uxi + uxj * uxj) + twod2
                    s12 = a * (uxi * uyi + uxj * uyj)
                    s22 = a * (uyi * uyi + uyj * uyj) + twod2
                    det = s11 * s22 - s12 * s12
                    if det == 0.0:
                        det = np.nan
                    y1 = (s22 * rx - s12 * ry) / det
                    y2 = (s11 * ry - s12 * rx) / det
                    expo = rx * y1 + ry * y2
                    if expo > EXP_CUT:
                        continue
                    c12 = uxi * uxj + uyi * uyj
                    b2 = 1.0 - chi2 * c12 * c12
                    if b2 <= 0.0:
                        if q > 0.0:
                            continue
                        b2 = np.nan
                    if q == 0.5:
                        pr = np.sqrt(b2)
                    elif q == 0.0:
                        pr = 1.0
                    elif q == -0.5:
                        pr = 1.0 / np.sqrt(b2)
                    else:
                        pr = b2 ** q
                    v = pref * pr * np.exp(-expo)
                    f = 2.0 * v
                    ax0 += f * y1
                    ax1 += f * y2
                    cc = -(2.0 * q) * chi2 * c12 / b2 * v
                    di = a * (uxi * y1 + uyi * y2) * f
                    au0 += cc * uxj + di * y1
                    au1 += cc * uyj + di * y2
        gx[i, 0] = ax0
        gx[i, 1] = ax1
        gu[i, 0] = au0
        gu[i, 1] = au1


@njit(cache=True, nogil=True)
def gather_sums_3d(pos, u, lx, ly, lz, ncx, ncy, ncz, cell_of, start, count,
                   order, a, twod2, chi2, pref, q, rc2, i_lo, i_hi, gx, gu):
    half_x = 0.5 * lx
    half_y = 0.5 * ly
    half_z = 0.5 * lz
    ncyz = ncy * ncz
    for i in range(i_lo, i_hi):
        xi = pos[i, 0]
        yi = pos[i, 1]
        zi = pos[i, 2]
        uxi = u[i, 0]
        uyi = u[i, 1]
        uzi = u[i, 2]
        ci = cell_of[i]
        cx = ci // ncyz
        rem = ci - cx * ncyz
        cy = rem // ncz
        cz = rem - cy * ncz
        ax0 = 0.0
        ax1 = 0.0
        ax2 = 0.0
        au0 = 0.0
        au1 = 0.0
        au2 = 0.0
        for ox in range(-1, 2):
            dx_ = cx + ox
            sx = 0.0
            if dx_ < 0:
                dx_ += ncx
                sx = -lx
            elif dx_ >= ncx:
                dx_ -= ncx
                sx = lx
            for oy in range(-1, 2):
                dy_ = cy + oy
                sy = 0.0
                if dy_ < 0:
                    dy_ += ncy
                    sy = -ly
                elif dy_ >= ncy:
                    dy_ -= ncy
                    sy = ly
                for oz in range(-1, 2):
                    dz_ = cz + oz
                    sz = 0.0
                    if dz_ < 0:
                        dz_ += ncz
                        sz = -lz
                    elif dz_ >= ncz:
                        dz_ -= ncz
                        sz = lz
                    c2 = (dx_ * ncy + dy_) * ncz + dz_
                    j0 = start[c2]
                    j1 = j0 + count[c2]
                    for jj in range(j0, j1):
                        j = order[jj]
                        if j == i:
                            continue
                        rx = pos[j, 0] + sx - xi
                        ry = pos[j, 1] + sy - yi
                        rz = pos[j, 2] + sz - zi
                        if rx > half_x:
                            rx -= lx
                        elif rx < -half_x:
                            rx += lx
                        if ry > half_y:
                            ry -= ly
                        elif ry < -half_y:
                            ry += ly
                        if rz > half_z:
                            rz -= lz
                        elif rz < -half_z:
                            rz += lz
                        r2 = rx * rx + ry * ry + rz * rz
                        if r2 >= rc2:
                            continue
                        uxj = u[j, 0]
                        uyj = u[j, 1]
                        uzj = u[j, 2]
                        s11 = a * (uxi * uxi + uxj * uxj) + twod2
                        s22 = a * (uyi * uyi + uyj * uyj) + twod2
                        s33 = a * (uzi * uzi + uzj * uzj) + twod2
                        s12 = a * (uxi * uyi + uxj * uyj)
                        s13 = a * (uxi * uzi + uxj * uzj)
                        s23 = a * (uyi * uzi + uyj * uzj)
                        co11 = s22 * s33 - s23 * s23
                        co12 = s13 * s23 - s12 * s33
                        co13 = s12 * s23 - s13 * s22
                        det = s11 * co11 + s12 * co12 + s13 * co13
                        if det == 0.0:
                            det = np.nan
                        co22 = s11 * s33 - s13 * s13
                        co23 = s12 * s13 - s11 * s23
                        co33 = s11 * s22 - s12 * s12
                        y1 = (co11 * rx + co12 * ry + co13 * rz) / det
                        y2 = (co12 * rx + co22 * ry + co23 * rz) / det
                        y3 = (co13 * rx + co23 * ry + co33 * rz) / det
                        expo = rx * y1 + ry * y2 + rz * y3
                        if expo > EXP_CUT:
                            continue
                        c12 = uxi * uxj + uyi * uyj + uzi * uzj
                        b2 = 1.0 - chi2 * c12 * c12
                        if b2 <= 0.0:
                            if q > 0.0:
                                continue
                            b2 = np.nan
                        if q == 0.5:
                            pr = np.sqrt(b2)
                        elif q == 0.0:
                            pr = 1.0
                        elif q == -0.5:
                            pr = 1.0 / np.sqrt(b2)
                        else:
                            pr = b2 ** q
                        v = pref * pr * np.exp(-expo)
                        f = 2.0 * v
                        ax0 += f * y1
                        ax1 += f * y2
                        ax2 += f * y3
                        cc = -(2.0 * q) * chi2 * c12 / b2 * v
                        di = a * (uxi * y1 + uyi * y2 + uzi * y3) * f
                        au0 += cc * uxj + di * y1
                        au1 += cc * uyj + di * y2
                        au2 += cc * uzj + di * y3
        gx[i, 0] = ax0
        gx[i, 1] = ax1
        gx[i, 2] = ax2
        gu[i, 0] = au0
        gu[i, 1] = au1
        gu[i, 2] = au2


# -- O(N^2) fallbacks for boxes too small for a cell grid -------------------

@njit(cache=True, nogil=True)
def brute_sums_2d(pos, u, lx, ly, a, twod2, chi2, pref, q, rc2, i_lo, i_hi,
                  gx, gu):
    half_x = 0.5 * lx
    half_y = 0.5 * ly
    n_part = pos.shape[0]
    for i in range(i_lo, i_hi):
        xi = pos[i, 0]
        yi = pos[i, 1]
        uxi = u[i, 0]
        uyi = u[i, 1]
        ax0 = 0.0
        ax1 = 0.0
        au0 = 0.0
        au1 = 0.0
        for j in range(n_part):
            if j == i:
                continue
            rx = pos[j, 0] - xi
            ry = pos[j, 1] - yi
            rx -= lx * np.floor(rx / lx + 0.5)
            ry -= ly * np.floor(ry / ly + 0.5)
            if rx >= half_x:
                rx -= lx
            if ry >= half_y:
                ry -= ly
            r2 = rx * rx + ry * ry
            if r2 >= rc2:
                continue
            uxj = u[j, 0]
            uyj = u[j, 1]
            s11 = a * (uxi * uxi + uxj * uxj) + twod2
            s12 = a * (uxi * uyi + uxj * uyj)
            s22 = a * (uyi * uyi + uyj * uyj) + twod2
            det = s11 * s22 - s12 * s12
            if det == 0.0:
                det = np.nan
            y1 = (s22 * rx - s12 * ry) / det
            y2 = (s11 * ry - s12 * rx) / det
            expo = rx * y1 + ry * y2
            if expo > EXP_CUT:
                continue
            c12 = uxi * uxj + uyi * uyj
            b2 = 1.0 - chi2 * c12 * c12
            if b2 <= 0.0:
                if q > 0.0:
                    continue
                b2 = np.nan
            if q == 0.5:
                pr = np.sqrt(b2)
            elif q == 0.0:
                pr = 1.0
            elif q == -0.5:
                pr = 1.0 / np.sqrt(b2)
            else:
                pr = b2 ** q
            v = pref * pr * np.exp(-expo)
            f = 2.0 * v
            ax0 += f * y1
            ax1 += f * y2
            cc = -(2.0 * q) * chi2 * c12 / b2 * v
            di = a * (uxi * y1 + uyi * y2) * f
            au0 += cc * uxj + di * y1
            au1 += cc * uyj + di * y2
        gx[i, 0] = ax0
        gx[i, 1] = ax1
        gu[i, 0] = au0
        gu[i, 1] = au1


@njit(cache=True, nogil=True)
def brute_sums_3d(pos, u, lx, ly, lz, a, twod2, chi2, pref, q, rc2, i_lo,
                  i_hi, gx, gu):
    half_x = 0.5 * lx
    half_y = 0.5 * ly
    half_z = 0.5 * lz
    n_part = pos.shape[0]
    for i in range(i_lo, i_hi):
        xi = pos[i, 0]
        yi = pos[i, 1]
        zi = pos[i, 2]
        uxi = u[i, 0]
        uyi = u[i, 1]
        uzi = u[i, 2]
        ax0 = 0.0
        ax1 = 0.0
        ax2 = 0.0
        au0 = 0.0
        au1 = 0.0
        au2 = 0.0
        for j in range(n_part):
            if j == i:
                continue
            rx = pos[j, 0] - xi
            ry = pos[j, 1] - yi
            rz = pos[j, 2] - zi
            rx -= lx * np.floor(rx / lx + 0.5)
            ry -= ly * np.floor(ry / ly + 0.5)
            rz -= lz * np.floor(rz / lz + 0.5)
            if rx >= half_x:
                rx -= lx
            if ry >= half_y:
                ry -= ly
            if rz >= half_z:
                rz -= lz
            r2 = rx * rx + ry * ry + rz * rz
            if r2 >= rc2:
                continue
            uxj = u[j, 0]
            uyj = u[j, 1]
            uzj = u[j, 2]
            s11 = a * (uxi * uxi + uxj * uxj) + twod2
            s22 = a * (uyi * uyi + uyj * uyj) + twod2
            s33 = a * (uzi * uzi + uzj * uzj) + twod2
            s12 = a * (uxi * uyi + uxj * uyj)
            s13 = a * (uxi * uzi + uxj * uzj)
            s23 = a * (uyi * uzi + uyj * uzj)
            co11 = s22 * s33 - s23 * s23
            co12 = s13 * s23 - s12 * s33
            co13 = s12 * s23 - s13 * s22
            det = s11 * co11 + s12 * co12 + s13 * co13
            if det == 0.0:
                det = np.nan
            co22 = s11 * s33 - s13 * s13
            co23 = s12 * s13 - s11 * s23
            co33 = s11 * s22 - s12 * s12
            y1 = (co11 * rx + co12 * ry + co13 * rz) / det
            y2 = (co12 * rx + co22 * ry + co23 * rz) / det
            y3 = (co13 * rx + co23 * ry + co33 * rz) / det
            expo = rx * y1 + ry * y2 + rz * y3
            if expo > EXP_CUT:
                continue
            c12 = uxi * uxj + uyi * uyj + uzi * uzj
            b2 = 1.0 - chi2 * c12 * c12
            if b2 <= 0.0:
                if q > 0.0:
                    continue
                b2 = np.nan
            if q == 0.5:
                pr = np.sqrt(b2)
            elif q == 0.0:
                pr = 1.0
            elif q == -0.5:
                pr = 1.0 / np.sqrt(b2)
            else:
                pr = b2 ** q
            v = pref * pr * np.exp(-expo)
            f = 2.0 * v
            ax0 += f * y1
            ax1 += f * y2
            ax2 += f * y3
            cc = -(2.0 * q) * chi2 * c12 / b2 * v
            di = a * (uxi * y1 + uyi * y2 + uzi * y3) * f
            au0 += cc * uxj + di * y1
            au1 += cc * uyj + di * y2
            au2 += cc * uzj + di * y3
        gx[i, 0] = ax0
        gx[i, 1] = ax1
        gx[i, 2] = ax2
        gu[i, 0] = au0
        gu[i, 1] = au1
        gu[i, 2] = au2
