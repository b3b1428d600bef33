"""Compiled inner loops for window histograms.

Padded-array kernels assume the caller has already edge-padded the input by
the window radius, so no bounds checks happen inside the loops. Every kernel
accumulates into a caller-allocated ``out`` array.
"""
import numpy as np
from numba import njit

# Ring offsets (da, db) starting at (+1, 0), counter-clockwise.
RING = np.array([(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)],
                dtype=np.int64)


@njit(cache=True)
def cube_offsets(r, sz, sy):
    d = 2 * r + 1
    offs = np.empty(d * d * d, np.int64)
    n = 0
    for dz in range(d):
        for dy in range(d):
            for dx in range(d):
                offs[n] = dz * sz + dy * sy + dx
                n += 1
    return offs


@njit(cache=True)
def plane_offsets(r, sy):
    d = 2 * r + 1
    offs = np.empty(d * d, np.int64)
    n = 0
    for dy in range(d):
        for dx in range(d):
            offs[n] = dy * sy + dx
            n += 1
    return offs


@njit(cache=True)
def naive_window_hist3d(bins, r, out):
    """Enumerate the full (2r+1)^3 cube for every output voxel.

    ``bins`` has shape (nz+2r, ny+2r, nx+2r); ``out`` is (nz, ny, nx, k) zeroed.
    """
    nz, ny, nx = out.shape[0], out.shape[1], out.shape[2]
    sy = bins.shape[2]
    sz = bins.shape[1] * sy
    flat = bins.ravel()
    offs = cube_offsets(r, sz, sy)
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                base = z * sz + y * sy + x
                h = out[z, y, x]
                for o in offs:
                    h[flat[base + o]] += 1


@njit(cache=True)
def incremental_window_hist3d(bins, r, out):
    """Sweep z per (x, y) column, trading the departing plane for the arriving one."""
    nz, ny, nx, k = out.shape
    d = 2 * r + 1
    sy = bins.shape[2]
    sz = bins.shape[1] * sy
    flat = bins.ravel()
    poffs = plane_offsets(r, sy)
    h = np.zeros(k, np.int64)
    for y in range(ny):
        for x in range(nx):
            base = y * sy + x
            h[:] = 0
            for dz in range(d):
                plane = base + dz * sz
                for o in poffs:
                    h[flat[plane + o]] += 1
            for b in range(k):
                out[0, y, x, b] = h[b]
            for z in range(1, nz):
                gone = base + (z - 1) * sz
                come = base + (z + d - 1) * sz
                for o in poffs:
                    h[flat[gone + o]] -= 1
                    h[flat[come + o]] += 1
                for b in range(k):
                    out[z, y, x, b] = h[b]


@njit(cache=True)
def incremental_window_hist2d(codes, r, out):
    """Per fixed leading index, sweep v over a (2r+1)^2 window in (u, v).

    ``codes`` is (nf, nu+2r, nv+2r); ``out`` is (nf, nu, nv, k) zeroed.
    """
    nf, nu, nv, k = out.shape
    d = 2 * r + 1
    h = np.zeros(k, np.int64)
    for f in range(nf):
        plane = codes[f]
        for u in range(nu):
            h[:] = 0
            for du in range(d):
                for dv in range(d):
                    h[plane[u + du, dv]] += 1
            for b in range(k):
                out[f, u, 0, b] = h[b]
            for v in range(1, nv):
                for du in range(d):
                    h[plane[u + du, v - 1]] -= 1
                    h[plane[u + du, v + d - 1]] += 1
                for b in range(k):
                    out[f, u, v, b] = h[b]


@njit(cache=True)
def _bin(value, vmin, span, k):
    return (k * (value - vmin)) // span


@njit(cache=True)
def _clamp(i, n):
    if i < 0:
        return 0
    if i >= n:
        return n - 1
    return i


@njit(cache=True)
def sparse_hist3d(data, coords, r, k, vmin, vmax, out):
    """Naive clamped window histograms at scattered ``coords`` (x, y, z) of ``data`` (z, y, x)."""
    nz, ny, nx = data.shape
    span = vmax - vmin + 1
    for i in range(coords.shape[0]):
        cx, cy, cz = coords[i, 0], coords[i, 1], coords[i, 2]
        for dz in range(-r, r + 1):
            z = _clamp(cz + dz, nz)
            for dy in range(-r, r + 1):
                y = _clamp(cy + dy, ny)
                for dx in range(-r, r + 1):
                    x = _clamp(cx + dx, nx)
                    out[i, _bin(np.int64(data[z, y, x]), vmin, span, k)] += 1


@njit(cache=True)
def _shift(x, y, z, axis, d):
    if axis == 0:
        return x + d, y, z
    if axis == 1:
        return x, y + d, z
    return x, y, z + d


@njit(cache=True)
def code_at(data, x, y, z, ax_a, ax_b, table):
    """Code of voxel (x, y, z) from its clamped in-plane ring; plane axes 0=x, 1=y, 2=z."""
    nz, ny, nx = data.shape
    c = data[z, y, x]
    pattern = 0
    for j in range(8):
        px, py, pz = _shift(x, y, z, ax_a, RING[j, 0])
        px, py, pz = _shift(px, py, pz, ax_b, RING[j, 1])
        if data[_clamp(pz, nz), _clamp(py, ny), _clamp(px, nx)] >= c:
            pattern |= 1 << j
    return table[pattern]


@njit(cache=True)
def sparse_lbp_plane(data, coords, r, ax_a, ax_b, table, out):
    """Clamped in-plane code histograms at scattered (x, y, z) coords."""
    nz, ny, nx = data.shape
    na = (nx, ny, nz)[ax_a]
    nb = (nx, ny, nz)[ax_b]
    for i in range(coords.shape[0]):
        cx, cy, cz = coords[i, 0], coords[i, 1], coords[i, 2]
        ca = (cx, cy, cz)[ax_a]
        cb = (cx, cy, cz)[ax_b]
        for da in range(-r, r + 1):
            qa = _clamp(ca + da, na)
            for db in range(-r, r + 1):
                qb = _clamp(cb + db, nb)
                px, py, pz = _shift(cx, cy, cz, ax_a, qa - ca)
                px, py, pz = _shift(px, py, pz, ax_b, qb - cb)
                out[i, code_at(data, px, py, pz, ax_a, ax_b, table)] += 1
