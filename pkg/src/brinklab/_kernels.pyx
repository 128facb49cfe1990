# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.

Three inner loops dominate the laboratory's runtime and are implemented
here in C speed: exact nearest-neighbor distances on a uniform cell grid,
an epsilon-scaling auction solver for exact minimum-cost assignment with
squared Euclidean costs, and the exact sweep for the maximum multiplicity
of equal axis-aligned cubes.  Each has a numpy/scipy twin in
``brinklab._fallback`` that produces identical results.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, llround, sqrt
from libc.stdlib cimport free, malloc
from libc.string cimport memset

cnp.import_array()

ctypedef cnp.int64_t i64


# ----------------------------------------------------------------------
# nearest neighbors on a uniform cell grid
# ----------------------------------------------------------------------

cdef inline Py_ssize_t _imax3(Py_ssize_t a, Py_ssize_t b, Py_ssize_t c) noexcept nogil:
    cdef Py_ssize_t m = a
    if b > m:
        m = b
    if c > m:
        m = c
    return m


def nn_distances(const double[:, ::1] pts, double cell):
    """Exact distance to the nearest other point, via a cell grid.

    Identical to the O(N^2) brute force: candidate distances are compared
    in plain double arithmetic and the grid only prunes cells that provably
    cannot contain the nearest neighbor (cells at Chebyshev index distance
    m hold points farther than (m-1)*cell).
    """
    cdef Py_ssize_t n = pts.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j, t
    cdef double best2, d2, dx, dy, dz
    if n == 1:
        out[0] = INFINITY
        return out_arr
    if n <= 64:
        for i in range(n):
            best2 = INFINITY
            for j in range(n):
                if j == i:
                    continue
                dx = pts[i, 0] - pts[j, 0]
                dy = pts[i, 1] - pts[j, 1]
                dz = pts[i, 2] - pts[j, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < best2:
                    best2 = d2
            out[i] = sqrt(best2)
        return out_arr

    cdef double lox = pts[0, 0], hix = pts[0, 0]
    cdef double loy = pts[0, 1], hiy = pts[0, 1]
    cdef double loz = pts[0, 2], hiz = pts[0, 2]
    for i in range(n):
        if pts[i, 0] < lox: lox = pts[i, 0]
        if pts[i, 0] > hix: hix = pts[i, 0]
        if pts[i, 1] < loy: loy = pts[i, 1]
        if pts[i, 1] > hiy: hiy = pts[i, 1]
        if pts[i, 2] < loz: loz = pts[i, 2]
        if pts[i, 2] > hiz: hiz = pts[i, 2]

    if cell <= 0.0 or not np.isfinite(cell):
        raise ValueError("cell size must be positive and finite")

    cdef Py_ssize_t nx, ny, nz
    while True:
        nx = <Py_ssize_t>((hix - lox) / cell) + 1
        ny = <Py_ssize_t>((hiy - loy) / cell) + 1
        nz = <Py_ssize_t>((hiz - loz) / cell) + 1
        if nx * ny * nz <= 16_777_216:
            break
        cell *= 1.5

    cdef Py_ssize_t ncell = nx * ny * nz
    cid_arr = np.empty(n, dtype=np.int64)
    starts_arr = np.zeros(ncell + 1, dtype=np.int64)
    order_arr = np.empty(n, dtype=np.int64)
    cursor_arr = np.empty(ncell, dtype=np.int64)
    cdef i64[::1] cid = cid_arr
    cdef i64[::1] starts = starts_arr
    cdef i64[::1] order = order_arr
    cdef i64[::1] cursor = cursor_arr
    cdef Py_ssize_t ix, iy, iz

    for i in range(n):
        ix = <Py_ssize_t>((pts[i, 0] - lox) / cell)
        iy = <Py_ssize_t>((pts[i, 1] - loy) / cell)
        iz = <Py_ssize_t>((pts[i, 2] - loz) / cell)
        if ix >= nx: ix = nx - 1
        if iy >= ny: iy = ny - 1
        if iz >= nz: iz = nz - 1
        cid[i] = (ix * ny + iy) * nz + iz
        starts[cid[i] + 1] += 1
    for t in range(ncell):
        starts[t + 1] += starts[t]
        cursor[t] = starts[t]
    for i in range(n):
        order[cursor[cid[i]]] = i
        cursor[cid[i]] += 1

    cdef Py_ssize_t sh, cx, cy, cz, cxlo, cxhi, cylo, cyhi, czlo, czhi
    cdef Py_ssize_t cell_id, a, b
    cdef Py_ssize_t smax = _imax3(nx, ny, nz)
    cdef double lim

    for i in range(n):
        ix = cid[i] // (ny * nz)
        iy = (cid[i] // nz) % ny
        iz = cid[i] % nz
        best2 = INFINITY
        for sh in range(smax + 1):
            if sh >= 1:
                lim = (sh - 1) * cell
                if best2 <= lim * lim:
                    break
            cxlo = ix - sh if ix - sh > 0 else 0
            cxhi = ix + sh if ix + sh < nx - 1 else nx - 1
            cylo = iy - sh if iy - sh > 0 else 0
            cyhi = iy + sh if iy + sh < ny - 1 else ny - 1
            czlo = iz - sh if iz - sh > 0 else 0
            czhi = iz + sh if iz + sh < nz - 1 else nz - 1
            for cx in range(cxlo, cxhi + 1):
                for cy in range(cylo, cyhi + 1):
                    for cz in range(czlo, czhi + 1):
                        if _imax3(cx - ix if cx > ix else ix - cx,
                                  cy - iy if cy > iy else iy - cy,
                                  cz - iz if cz > iz else iz - cz) != sh:
                            continue
                        cell_id = (cx * ny + cy) * nz + cz
                        a = starts[cell_id]
                        b = starts[cell_id + 1]
                        for t in range(a, b):
                            j = order[t]
                            if j == i:
                                continue
                            dx = pts[i, 0] - pts[j, 0]
                            dy = pts[i, 1] - pts[j, 1]
                            dz = pts[i, 2] - pts[j, 2]
                            d2 = dx * dx + dy * dy + dz * dz
                            if d2 < best2:
                                best2 = d2
        out[i] = sqrt(best2)
    return out_arr


# ----------------------------------------------------------------------
# epsilon-scaling auction for exact assignment (squared Euclidean costs)
# ----------------------------------------------------------------------

cdef inline i64 _icost(i64[:, ::1] qa, i64[:, ::1] qb, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    cdef i64 d0 = qa[i, 0] - qb[j, 0]
    cdef i64 d1 = qa[i, 1] - qb[j, 1]
    cdef i64 d2 = qa[i, 2] - qb[j, 2]
    return d0 * d0 + d1 * d1 + d2 * d2


def auction_assignment(const double[:, ::1] A, const double[:, ::1] B, Py_ssize_t k_short=64):
    """Exact minimum-cost assignment between equal-size 3D point sets.

    Costs are squared Euclidean distances quantized onto an integer grid
    fine enough that the integer optimum coincides with the float optimum
    for generic inputs; the auction runs epsilon scaling down to eps=1 with
    all benefits premultiplied by (n+1), which guarantees an exactly
    optimal assignment for the integer costs.  Per-person shortlists of the
    k cheapest objects make bids O(k); a shortlist bid is accepted only
    when a conservative price bound proves no outside object can win.
    Persons with identical (quantized) coordinates bid as one batch for
    their top objects, which avoids intra-group price wars when rows are
    replicated (the empirical-measure surrogate replicates every center).
    """
    cdef Py_ssize_t n = A.shape[0]
    if B.shape[0] != n:
        raise ValueError("point sets must have equal size")
    perm_arr = np.empty(n, dtype=np.int64)
    cdef i64[::1] perm = perm_arr
    cdef Py_ssize_t i, j, t, d
    if n == 0:
        return perm_arr
    if n == 1:
        perm[0] = 0
        return perm_arr

    # --- integer quantization on a common bounding box
    cdef double lo0 = A[0, 0], lo1 = A[0, 1], lo2 = A[0, 2]
    cdef double hi0 = A[0, 0], hi1 = A[0, 1], hi2 = A[0, 2]
    for i in range(n):
        if A[i, 0] < lo0: lo0 = A[i, 0]
        if A[i, 0] > hi0: hi0 = A[i, 0]
        if A[i, 1] < lo1: lo1 = A[i, 1]
        if A[i, 1] > hi1: hi1 = A[i, 1]
        if A[i, 2] < lo2: lo2 = A[i, 2]
        if A[i, 2] > hi2: hi2 = A[i, 2]
        if B[i, 0] < lo0: lo0 = B[i, 0]
        if B[i, 0] > hi0: hi0 = B[i, 0]
        if B[i, 1] < lo1: lo1 = B[i, 1]
        if B[i, 1] > hi1: hi1 = B[i, 1]
        if B[i, 2] < lo2: lo2 = B[i, 2]
        if B[i, 2] > hi2: hi2 = B[i, 2]
    cdef double span = hi0 - lo0
    if hi1 - lo1 > span: span = hi1 - lo1
    if hi2 - lo2 > span: span = hi2 - lo2
    if span == 0.0:
        for i in range(n):
            perm[i] = i
        return perm_arr

    cdef double smax = sqrt((2.0 ** 59) / (3.0 * (n + 1)))
    cdef i64 scale = <i64>smax
    if scale > (1 << 24):
        scale = 1 << 24

    qa_arr = np.empty((n, 3), dtype=np.int64)
    qb_arr = np.empty((n, 3), dtype=np.int64)
    cdef i64[:, ::1] qa = qa_arr
    cdef i64[:, ::1] qb = qb_arr
    for i in range(n):
        qa[i, 0] = llround((A[i, 0] - lo0) / span * scale)
        qa[i, 1] = llround((A[i, 1] - lo1) / span * scale)
        qa[i, 2] = llround((A[i, 2] - lo2) / span * scale)
        qb[i, 0] = llround((B[i, 0] - lo0) / span * scale)
        qb[i, 1] = llround((B[i, 1] - lo1) / span * scale)
        qb[i, 2] = llround((B[i, 2] - lo2) / span * scale)

    # --- shortlist build: k+1 smallest costs per person via a max-heap
    cdef Py_ssize_t k = k_short
    if k < 2:
        k = 2
    cdef bint have_outside = (k + 1) < n
    cdef Py_ssize_t klist = k + 1 if have_outside else n
    sl_arr = np.empty((n, klist), dtype=np.int64)
    slc_arr = np.empty((n, klist), dtype=np.int64)
    thr_arr = np.empty(n, dtype=np.int64)
    cdef i64[:, ::1] sl = sl_arr
    cdef i64[:, ::1] slc = slc_arr
    cdef i64[::1] thr = thr_arr
    cdef i64 c, tmpc, mult = n + 1
    cdef Py_ssize_t hsize, parent, child, pos, tmpj

    for i in range(n):
        hsize = 0
        for j in range(n):
            c = _icost(qa, qb, i, j)
            if hsize < klist:
                # push
                sl[i, hsize] = j
                slc[i, hsize] = c
                pos = hsize
                hsize += 1
                while pos > 0:
                    parent = (pos - 1) >> 1
                    if slc[i, parent] < slc[i, pos]:
                        tmpc = slc[i, parent]; slc[i, parent] = slc[i, pos]; slc[i, pos] = tmpc
                        tmpj = sl[i, parent]; sl[i, parent] = sl[i, pos]; sl[i, pos] = tmpj
                        pos = parent
                    else:
                        break
            elif c < slc[i, 0]:
                # replace root
                slc[i, 0] = c
                sl[i, 0] = j
                pos = 0
                while True:
                    child = 2 * pos + 1
                    if child >= klist:
                        break
                    if child + 1 < klist and slc[i, child + 1] > slc[i, child]:
                        child += 1
                    if slc[i, child] > slc[i, pos]:
                        tmpc = slc[i, child]; slc[i, child] = slc[i, pos]; slc[i, pos] = tmpc
                        tmpj = sl[i, child]; sl[i, child] = sl[i, pos]; sl[i, pos] = tmpj
                        pos = child
                    else:
                        break
        thr[i] = slc[i, 0] if have_outside else 0

    # --- group persons with identical quantized coordinates
    lex = np.lexsort((qa_arr[:, 2], qa_arr[:, 1], qa_arr[:, 0]))
    cdef i64[::1] lexv = lex.astype(np.int64)
    gid_arr = np.empty(n, dtype=np.int64)
    cdef i64[::1] gid = gid_arr
    cdef Py_ssize_t ngroups = 0
    cdef Py_ssize_t a0, b0
    for t in range(n):
        a0 = lexv[t]
        if t > 0:
            b0 = lexv[t - 1]
            if qa[a0, 0] != qa[b0, 0] or qa[a0, 1] != qa[b0, 1] or qa[a0, 2] != qa[b0, 2]:
                ngroups += 1
        gid[a0] = ngroups
    ngroups += 1
    gstart_arr = np.zeros(ngroups + 1, dtype=np.int64)
    glist_arr = np.empty(n, dtype=np.int64)
    cdef i64[::1] gstart = gstart_arr
    cdef i64[::1] glist = glist_arr
    for i in range(n):
        gstart[gid[i] + 1] += 1
    for t in range(ngroups):
        gstart[t + 1] += gstart[t]
    gcur_arr = gstart_arr[0:ngroups].copy()
    cdef i64[::1] gcur = gcur_arr
    for i in range(n):
        glist[gcur[gid[i]]] = i
        gcur[gid[i]] += 1

    # --- auction with epsilon scaling and batch bids per group
    p_arr = np.zeros(n, dtype=np.int64)
    owner_arr = np.empty(n, dtype=np.int64)
    asg_arr = np.empty(n, dtype=np.int64)
    stack_arr = np.empty(n, dtype=np.int64)
    memb_arr = np.empty(n, dtype=np.int64)
    topv_arr = np.empty(n + 1, dtype=np.int64)
    topj_arr = np.empty(n + 1, dtype=np.int64)
    cdef i64[::1] p = p_arr
    cdef i64[::1] owner = owner_arr
    cdef i64[::1] asg = asg_arr
    cdef i64[::1] stack = stack_arr
    cdef i64[::1] memb = memb_arr
    cdef i64[::1] topv = topv_arr
    cdef i64[::1] topj = topj_arr
    cdef i64 eps, v, outside, minp, vlast
    cdef i64 sentinel = -(<i64>1 << 62)
    cdef Py_ssize_t sp, jj, prev, u, nt, pos2, gi

    eps = (mult * 3 * scale * scale) // 4 + 1
    while True:
        # phase init
        for j in range(n):
            owner[j] = -1
        for i in range(n):
            asg[i] = -1
        sp = 0
        for i in range(n - 1, -1, -1):
            stack[sp] = i
            sp += 1
        minp = p[0]
        for j in range(1, n):
            if p[j] < minp:
                minp = p[j]

        while sp > 0:
            sp -= 1
            i = stack[sp]
            if asg[i] >= 0:
                continue
            # unassigned members of i's group bid as a batch of size u
            gi = gid[i]
            u = 0
            for t in range(gstart[gi], gstart[gi + 1]):
                if asg[glist[t]] < 0:
                    memb[u] = glist[t]
                    u += 1
            # top-(u+1) values over the shortlist (descending insertion)
            nt = 0
            for t in range(klist):
                jj = sl[i, t]
                v = -mult * slc[i, t] - p[jj]
                if nt <= u:
                    pos2 = nt
                    nt += 1
                elif v > topv[u]:
                    pos2 = u
                else:
                    continue
                while pos2 > 0 and topv[pos2 - 1] < v:
                    topv[pos2] = topv[pos2 - 1]
                    topj[pos2] = topj[pos2 - 1]
                    pos2 -= 1
                topv[pos2] = v
                topj[pos2] = jj
            outside = sentinel
            if have_outside:
                outside = -mult * thr[i] - minp
            if nt < u + 1 or (have_outside and topv[u - 1] < outside):
                # shortlist cannot certify the top-u: full row scan
                nt = 0
                for jj in range(n):
                    v = -mult * _icost(qa, qb, i, jj) - p[jj]
                    if nt <= u:
                        pos2 = nt
                        nt += 1
                    elif v > topv[u]:
                        pos2 = u
                    else:
                        continue
                    while pos2 > 0 and topv[pos2 - 1] < v:
                        topv[pos2] = topv[pos2 - 1]
                        topj[pos2] = topj[pos2 - 1]
                        pos2 -= 1
                    topv[pos2] = v
                    topj[pos2] = jj
                vlast = topv[u] if nt > u else topv[nt - 1]
            else:
                vlast = topv[u] if nt > u else sentinel
                if have_outside and outside > vlast:
                    # conservative (u+1)-th best keeps eps-CS valid
                    vlast = outside
                if vlast == sentinel:
                    vlast = topv[u - 1]
            for t in range(u):
                jj = topj[t]
                p[jj] += topv[t] - vlast + eps
                prev = owner[jj]
                if prev >= 0:
                    asg[prev] = -1
                    stack[sp] = prev
                    sp += 1
                owner[jj] = memb[t]
                asg[memb[t]] = jj
        if eps == 1:
            break
        eps = eps // 7
        if eps < 1:
            eps = 1

    for i in range(n):
        perm[i] = asg[i]
    return perm_arr


# ----------------------------------------------------------------------
# exact max multiplicity of equal closed axis-aligned cubes
# ----------------------------------------------------------------------

cdef void _seg_update(i64* mx, i64* add, Py_ssize_t node, Py_ssize_t nl,
                      Py_ssize_t nr, Py_ssize_t l, Py_ssize_t r, i64 val) noexcept nogil:
    if r < nl or nr < l:
        return
    if l <= nl and nr <= r:
        add[node] += val
        mx[node] += val
        return
    cdef Py_ssize_t mid = (nl + nr) // 2
    _seg_update(mx, add, 2 * node, nl, mid, l, r, val)
    _seg_update(mx, add, 2 * node + 1, mid + 1, nr, l, r, val)
    mx[node] = (mx[2 * node] if mx[2 * node] > mx[2 * node + 1] else mx[2 * node + 1]) + add[node]


cdef Py_ssize_t _bisect_left(double* arr, Py_ssize_t n, double x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if arr[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def max_cover_multiplicity(const double[:, ::1] centers, double side):
    """Exact maximum of sum_i 1[|p - c_i|_inf <= side/2] over p in R^3.

    Sweeps x-anchored slabs; inside a slab, a two-pointer pass over the
    y-sorted members drives a range-add segment tree over compressed
    z-interval endpoints whose root tracks the max stabbing count.
    """
    cdef Py_ssize_t n = centers.shape[0]
    if n == 0:
        return 0
    cdef double s = side
    order_arr = np.argsort(np.asarray(centers)[:, 0], kind="stable")
    pts_arr = np.ascontiguousarray(np.asarray(centers)[order_arr], dtype=np.float64)
    cdef const double[:, ::1] pts = pts_arr
    yord_arr = np.argsort(pts_arr[:, 1], kind="stable").astype(np.int64)
    cdef i64[::1] yord = yord_arr

    cdef Py_ssize_t best = 1, i, lo, hi, m, t, jj, head, tail, seg_size, ncoord
    cdef double xlim

    # work arrays (worst case slice = n)
    ys_arr = np.empty(n, dtype=np.float64)
    zs_arr = np.empty(n, dtype=np.float64)
    ev_arr = np.empty(2 * n, dtype=np.float64)
    lpos_arr = np.empty(n, dtype=np.int64)
    rpos_arr = np.empty(n, dtype=np.int64)
    cdef double[::1] ys = ys_arr
    cdef double[::1] zs = zs_arr
    cdef double[::1] ev = ev_arr
    cdef i64[::1] lpos = lpos_arr
    cdef i64[::1] rpos = rpos_arr

    cdef Py_ssize_t cap = 4
    while cap < 2 * n:
        cap <<= 1
    mx_arr = np.zeros(2 * cap, dtype=np.int64)
    add_arr = np.zeros(2 * cap, dtype=np.int64)
    cdef i64[::1] mxv = mx_arr
    cdef i64[::1] addv = add_arr
    cdef i64* mxp = &mxv[0]
    cdef i64* addp = &addv[0]

    for i in range(n):
        xlim = pts[i, 0] - s
        # binary search over the x column (stride 3 rules out _bisect_left)
        lo = 0
        hi = i
        while lo < hi:
            t = (lo + hi) // 2
            if pts[t, 0] < xlim:
                lo = t + 1
            else:
                hi = t
        m = i + 1 - lo
        if m <= best:
            continue

        # slice members in global y order
        t = 0
        for jj in range(n):
            if lo <= yord[jj] <= i:
                ys[t] = pts[yord[jj], 1]
                zs[t] = pts[yord[jj], 2]
                t += 1
        # compress z endpoints
        for t in range(m):
            ev[2 * t] = zs[t] - s / 2
            ev[2 * t + 1] = zs[t] + s / 2
        ev_view = np.asarray(ev_arr[: 2 * m])
        ev_view.sort(kind="stable")
        ncoord = 1
        for t in range(1, 2 * m):
            if ev[t] != ev[ncoord - 1]:
                ev[ncoord] = ev[t]
                ncoord += 1
        for t in range(m):
            lpos[t] = _bisect_left(&ev[0], ncoord, zs[t] - s / 2)
            rpos[t] = _bisect_left(&ev[0], ncoord, zs[t] + s / 2)

        seg_size = 4
        while seg_size < ncoord:
            seg_size <<= 1
        memset(mxp, 0, 2 * seg_size * sizeof(i64))
        memset(addp, 0, 2 * seg_size * sizeof(i64))

        head = 0
        for tail in range(m):
            _seg_update(mxp, addp, 1, 0, seg_size - 1, lpos[tail], rpos[tail], 1)
            while ys[head] < ys[tail] - s:
                _seg_update(mxp, addp, 1, 0, seg_size - 1, lpos[head], rpos[head], -1)
                head += 1
            if mxp[1] > best:
                best = mxp[1]
    return best
