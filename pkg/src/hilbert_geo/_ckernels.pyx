# cython: language_level=3
"""Compiled RK4 kernels for level-set models.

Same algorithm and signatures as ``ls_geodesic`` / ``ls_flow`` in
``_pykernels``; matrix products go through BLAS (scipy.linalg.cython_blas).
The flow state is packed into one contiguous buffer:
``[x (N), v (N), F (N*n), Y (n*k), Yd (n*k)]``, matrices row-major.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


from hilbert_geo._pykernels import stored_steps


cdef void _geo_deriv(const double* a, const double* s, double* d,
                     Py_ssize_t N) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s2 = 0.0, c = 0.0, ax
    cdef const double* x = s
    cdef const double* v = s + N
    for i in range(N):
        ax = a[i] * x[i]
        s2 += ax * ax
        c += a[i] * v[i] * v[i]
    for i in range(N):
        d[i] = v[i]
        d[N + i] = -(c / s2) * a[i] * x[i]


cdef void _project(const double* a, double* s, Py_ssize_t N, Py_ssize_t n,
                   double* nu) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double q = 0.0, nrm = 0.0, dot
    cdef double* x = s
    cdef double* v = s + N
    cdef double* F = s + 2 * N
    for i in range(N):
        q += a[i] * x[i] * x[i]
    q = sqrt(q)
    for i in range(N):
        x[i] /= q
        nu[i] = a[i] * x[i]
        nrm += nu[i] * nu[i]
    nrm = sqrt(nrm)
    dot = 0.0
    for i in range(N):
        nu[i] /= nrm
        dot += v[i] * nu[i]
    for i in range(N):
        v[i] -= dot * nu[i]
    for j in range(n):
        dot = 0.0
        for i in range(N):
            dot += nu[i] * F[i * n + j]
        for i in range(N):
            F[i * n + j] -= dot * nu[i]


cdef void _flow_deriv(const double* a, const double* s, double* d,
                      Py_ssize_t N, Py_ssize_t n, Py_ssize_t k,
                      double* R, double* AF, double* w) noexcept nogil:
    cdef Py_ssize_t i, j, p, q
    cdef double s2 = 0.0, c = 0.0, ax, avi, r
    cdef const double* x = s
    cdef const double* v = s + N
    cdef const double* F = s + 2 * N
    cdef const double* Y = s + 2 * N + N * n
    cdef const double* Yd = Y + n * k
    cdef double* dF = d + 2 * N
    cdef double* dY = d + 2 * N + N * n
    cdef double* dYd = dY + n * k
    cdef int bn = <int>n, bN = <int>N, bk = <int>k
    cdef double one = 1.0, zero = 0.0, minus_one = -1.0

    for i in range(N):
        ax = a[i] * x[i]
        s2 += ax * ax
        c += a[i] * v[i] * v[i]
    for j in range(n):
        w[j] = 0.0
    for i in range(N):
        avi = a[i] * v[i]
        for j in range(n):
            w[j] += F[i * n + j] * avi
    for i in range(N):
        d[i] = v[i]
        ax = a[i] * x[i]
        d[N + i] = -(c / s2) * ax
        for j in range(n):
            dF[i * n + j] = -ax * w[j] / s2
    if k == 0:
        return
    for i in range(N):
        for j in range(n):
            AF[i * n + j] = a[i] * F[i * n + j]
    # column-major view of row-major F is F^T, so R <- F^T (A F)
    dgemm(b"N", b"T", &bn, &bn, &bN, &one, <double*>F, &bn, AF, &bn, &zero, R, &bn)
    for p in range(n):
        for q in range(p, n):
            r = 0.5 * (R[p * n + q] + R[q * n + p])
            r = (c * r - w[p] * w[q]) / s2
            R[p * n + q] = r
            R[q * n + p] = r
    for i in range(n * k):
        dY[i] = Yd[i]
    # column-major view of dYd is dYd^T = -Y^T R  (R symmetric)
    dgemm(b"N", b"N", &bk, &bn, &bn, &minus_one, <double*>Y, &bk, R, &bn, &zero, dYd, &bk)


def ls_geodesic(a, x0, v0, double h, Py_ssize_t nsteps, Py_ssize_t stride):
    cdef cnp.ndarray[cnp.double_t, ndim=1] ac = np.ascontiguousarray(a, dtype=np.float64)
    cdef Py_ssize_t N = ac.shape[0]
    keep = stored_steps(nsteps, stride)
    cdef Py_ssize_t ns = len(keep)
    cdef cnp.ndarray[cnp.double_t, ndim=2] xs = np.empty((ns, N))
    cdef cnp.ndarray[cnp.double_t, ndim=2] vs = np.empty((ns, N))
    cdef Py_ssize_t[:] keep_arr = np.asarray(keep, dtype=np.intp)
    cdef Py_ssize_t L = 2 * N
    cdef double* s = <double*>malloc(6 * L * sizeof(double))
    cdef double* k1 = s + L
    cdef double* k2 = s + 2 * L
    cdef double* k3 = s + 3 * L
    cdef double* k4 = s + 4 * L
    cdef double* tmp = s + 5 * L
    cdef double* nu = <double*>malloc(N * sizeof(double))
    cdef const double* ap = &ac[0]
    cdef Py_ssize_t i, step, slot = 1
    if s == NULL or nu == NULL:
        raise MemoryError()
    try:
        for i in range(N):
            s[i] = x0[i]
            s[N + i] = v0[i]
            xs[0, i] = s[i]
            vs[0, i] = s[N + i]
        with nogil:
            for step in range(1, nsteps + 1):
                _geo_deriv(ap, s, k1, N)
                for i in range(L):
                    tmp[i] = s[i] + 0.5 * h * k1[i]
                _geo_deriv(ap, tmp, k2, N)
                for i in range(L):
                    tmp[i] = s[i] + 0.5 * h * k2[i]
                _geo_deriv(ap, tmp, k3, N)
                for i in range(L):
                    tmp[i] = s[i] + h * k3[i]
                _geo_deriv(ap, tmp, k4, N)
                for i in range(L):
                    s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                _project(ap, s, N, 0, nu)
                if slot < ns and keep_arr[slot] == step:
                    for i in range(N):
                        xs[slot, i] = s[i]
                        vs[slot, i] = s[N + i]
                    slot += 1
    finally:
        free(s)
        free(nu)
    return xs, vs


def ls_flow(a, x0, v0, f0, y0, yd0, double h, Py_ssize_t nsteps, Py_ssize_t stride):
    cdef cnp.ndarray[cnp.double_t, ndim=1] ac = np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray[cnp.double_t, ndim=2] f0c = np.ascontiguousarray(f0, dtype=np.float64)
    cdef cnp.ndarray[cnp.double_t, ndim=2] y0c = np.ascontiguousarray(y0, dtype=np.float64)
    cdef cnp.ndarray[cnp.double_t, ndim=2] yd0c = np.ascontiguousarray(yd0, dtype=np.float64)
    cdef Py_ssize_t N = ac.shape[0]
    cdef Py_ssize_t n = f0c.shape[1]
    cdef Py_ssize_t k = y0c.shape[1]
    cdef bint with_jacobi = k > 0
    cdef double[:] f_flat = f0c.ravel()
    cdef double[:] y_flat = y0c.ravel()
    cdef double[:] yd_flat = yd0c.ravel()
    cdef double[:] x0c = np.ascontiguousarray(x0, dtype=np.float64)
    cdef double[:] v0c = np.ascontiguousarray(v0, dtype=np.float64)
    keep = stored_steps(nsteps, stride)
    cdef Py_ssize_t ns = len(keep)
    cdef Py_ssize_t[:] keep_arr = np.asarray(keep, dtype=np.intp)
    cdef Py_ssize_t L = 2 * N + N * n + 2 * n * k
    xs = np.empty((ns, N))
    vs = np.empty((ns, N))
    fs = np.empty((ns, N, n))
    ys = yds = rs = None
    if with_jacobi:
        ys = np.empty((ns, n, k))
        yds = np.empty((ns, n, k))
        rs = np.empty((ns, n, n))
    # packed output buffers, one row per stored node
    cdef cnp.ndarray[cnp.double_t, ndim=2] out_state = np.empty((ns, L))
    cdef cnp.ndarray[cnp.double_t, ndim=2] out_r = np.empty((ns, n * n if with_jacobi else 1))

    cdef double* buf = <double*>malloc((6 * L + n * n + N * n + n + N) * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef double* s = buf
    cdef double* k1 = buf + L
    cdef double* k2 = buf + 2 * L
    cdef double* k3 = buf + 3 * L
    cdef double* k4 = buf + 4 * L
    cdef double* tmp = buf + 5 * L
    cdef double* R = buf + 6 * L
    cdef double* AF = R + n * n
    cdef double* w = AF + N * n
    cdef double* nu = w + n
    cdef const double* ap = &ac[0]
    cdef Py_ssize_t i, step, slot = 0
    try:
        for i in range(N):
            s[i] = x0c[i]
            s[N + i] = v0c[i]
        for i in range(N * n):
            s[2 * N + i] = f_flat[i]
        for i in range(n * k):
            s[2 * N + N * n + i] = y_flat[i]
            s[2 * N + N * n + n * k + i] = yd_flat[i]
        with nogil:
            for step in range(nsteps + 1):
                _flow_deriv(ap, s, k1, N, n, k, R, AF, w)
                if slot < ns and keep_arr[slot] == step:
                    for i in range(L):
                        out_state[slot, i] = s[i]
                    if with_jacobi:
                        for i in range(n * n):
                            out_r[slot, i] = R[i]
                    slot += 1
                if step == nsteps:
                    break
                for i in range(L):
                    tmp[i] = s[i] + 0.5 * h * k1[i]
                _flow_deriv(ap, tmp, k2, N, n, k, R, AF, w)
                for i in range(L):
                    tmp[i] = s[i] + 0.5 * h * k2[i]
                _flow_deriv(ap, tmp, k3, N, n, k, R, AF, w)
                for i in range(L):
                    tmp[i] = s[i] + h * k3[i]
                _flow_deriv(ap, tmp, k4, N, n, k, R, AF, w)
                for i in range(L):
                    s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                _project(ap, s, N, n, nu)
    finally:
        free(buf)
    xs[:] = out_state[:, :N]
    vs[:] = out_state[:, N:2 * N]
    fs[:] = out_state[:, 2 * N:2 * N + N * n].reshape(ns, N, n)
    if with_jacobi:
        off = 2 * N + N * n
        ys[:] = out_state[:, off:off + n * k].reshape(ns, n, k)
        yds[:] = out_state[:, off + n * k:off + 2 * n * k].reshape(ns, n, k)
        rs[:] = out_r.reshape(ns, n, n)
    return xs, vs, fs, ys, yds, rs


# -- conformal charts: g = lambda(x)^2 <.,.>, lambda = 2 / (1 + K0 |x|^2); K0 = 0 is flat space
# (with lambda = 1) --


cdef inline double _dot(const double* u, const double* w, Py_ssize_t N) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(N):
        s += u[i] * w[i]
    return s


cdef void _gam(const double* g, const double* u, const double* w, double* out,
               Py_ssize_t N) noexcept nogil:
    # Gamma(u, w) = (g.u) w + (g.w) u - (u.w) g
    cdef Py_ssize_t i
    cdef double gu = _dot(g, u, N), gw = _dot(g, w, N), uw = _dot(u, w, N)
    for i in range(N):
        out[i] = gu * w[i] + gw * u[i] - uw * g[i]


cdef void _hess_apply(double k0, double D, const double* x, const double* u, double* out,
                      Py_ssize_t N) noexcept nogil:
    cdef Py_ssize_t i
    cdef double xu = _dot(x, u, N)
    cdef double c1 = -2.0 * k0 / D, c2 = 4.0 * k0 * k0 / (D * D) * xu
    for i in range(N):
        out[i] = c1 * u[i] + c2 * x[i]


cdef void _conf_deriv(double k0, const double* s, double* d,
                      Py_ssize_t N, Py_ssize_t n, Py_ssize_t k,
                      double* R, double* cols, double* work) noexcept nogil:
    cdef Py_ssize_t i, j, c
    cdef const double* x = s
    cdef const double* v = s + N
    cdef const double* F = s + 2 * N
    cdef const double* Y = s + 2 * N + N * n
    cdef const double* Yd = Y + n * k
    cdef double* dF = d + 2 * N
    cdef double* dY = d + 2 * N + N * n
    cdef double* dYd = dY + n * k
    cdef double* g = work
    cdef double* fi = work + N
    cdef double* hv = work + 2 * N
    cdef double* hf = work + 3 * N
    cdef double* gvv = work + 4 * N
    cdef double* t1 = work + 5 * N
    cdef double* t2 = work + 6 * N
    cdef double xx = _dot(x, x, N)
    cdef double D = 1.0 + k0 * xx
    cdef double lam2 = 4.0 / (D * D) if k0 != 0.0 else 1.0
    cdef double gv, vv, gf, vf, hfv, hvv, hvf, acc
    cdef int bn = <int>n, bN = <int>N, bk = <int>k
    cdef double zero = 0.0, minus_one = -1.0

    for i in range(N):
        g[i] = -2.0 * k0 * x[i] / D
    gv = _dot(g, v, N)
    vv = _dot(v, v, N)
    for i in range(N):
        d[i] = v[i]
        d[N + i] = -2.0 * gv * v[i] + vv * g[i]
    for c in range(n):
        for i in range(N):
            fi[i] = F[i * n + c]
        gf = _dot(g, fi, N)
        vf = _dot(v, fi, N)
        for i in range(N):
            dF[i * n + c] = -(gf * v[i] + gv * fi[i] - vf * g[i])
    if k == 0:
        return
    # R(F_c, v)v = D(H F_c; v, v) - D(H v; F_c, v) + G(F_c, G(v, v)) - G(v, G(F_c, v))
    _gam(g, v, v, gvv, N)
    _hess_apply(k0, D, x, v, hv, N)
    hvv = _dot(hv, v, N)
    for c in range(n):
        for i in range(N):
            fi[i] = F[i * n + c]
        _hess_apply(k0, D, x, fi, hf, N)
        hfv = _dot(hf, v, N)
        hvf = _dot(hv, fi, N)
        vf = _dot(v, fi, N)
        _gam(g, fi, v, t1, N)
        _gam(g, v, t1, t2, N)
        _gam(g, fi, gvv, t1, N)
        for i in range(N):
            acc = 2.0 * hfv * v[i] - vv * hf[i]
            acc -= hvf * v[i] + hvv * fi[i] - vf * hv[i]
            cols[c * N + i] = acc + t1[i] - t2[i]
    for c in range(n):
        for j in range(c, n):
            acc = 0.0
            for i in range(N):
                acc += 0.5 * (F[i * n + j] * cols[c * N + i] + F[i * n + c] * cols[j * N + i])
            R[c * n + j] = lam2 * acc
            R[j * n + c] = lam2 * acc
    for i in range(n * k):
        dY[i] = Yd[i]
    dgemm(b"N", b"N", &bk, &bn, &bn, &minus_one, <double*>Y, &bk, R, &bn, &zero, dYd, &bk)


def conf_flow(double k0, double radius, x0, v0, f0, y0, yd0, double h,
              Py_ssize_t nsteps, Py_ssize_t stride):
    """Chart counterpart of :func:`ls_flow`; raises ``ValueError`` on chart escape."""
    cdef cnp.ndarray[cnp.double_t, ndim=2] f0c = np.ascontiguousarray(f0, dtype=np.float64)
    cdef cnp.ndarray[cnp.double_t, ndim=2] y0c = np.ascontiguousarray(y0, dtype=np.float64)
    cdef cnp.ndarray[cnp.double_t, ndim=2] yd0c = np.ascontiguousarray(yd0, dtype=np.float64)
    cdef double[:] x0c = np.ascontiguousarray(x0, dtype=np.float64)
    cdef double[:] v0c = np.ascontiguousarray(v0, dtype=np.float64)
    cdef Py_ssize_t N = x0c.shape[0]
    cdef Py_ssize_t n = f0c.shape[1]
    cdef Py_ssize_t k = y0c.shape[1]
    cdef bint with_jacobi = k > 0
    cdef double[:] f_flat = f0c.ravel()
    cdef double[:] y_flat = y0c.ravel()
    cdef double[:] yd_flat = yd0c.ravel()
    keep = stored_steps(nsteps, stride)
    cdef Py_ssize_t ns = len(keep)
    cdef Py_ssize_t[:] keep_arr = np.asarray(keep, dtype=np.intp)
    cdef Py_ssize_t L = 2 * N + N * n + 2 * n * k
    cdef cnp.ndarray[cnp.double_t, ndim=2] out_state = np.empty((ns, L))
    cdef cnp.ndarray[cnp.double_t, ndim=2] out_r = np.empty((ns, n * n if with_jacobi else 1))
    cdef double* buf = <double*>malloc((6 * L + n * n + N * n + 7 * N) * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef double* s = buf
    cdef double* k1 = buf + L
    cdef double* k2 = buf + 2 * L
    cdef double* k3 = buf + 3 * L
    cdef double* k4 = buf + 4 * L
    cdef double* tmp = buf + 5 * L
    cdef double* R = buf + 6 * L
    cdef double* cols = R + n * n
    cdef double* work = cols + N * n
    cdef Py_ssize_t i, step, slot = 0, escaped = -1
    cdef double r2 = radius * radius
    try:
        for i in range(N):
            s[i] = x0c[i]
            s[N + i] = v0c[i]
        for i in range(N * n):
            s[2 * N + i] = f_flat[i]
        for i in range(n * k):
            s[2 * N + N * n + i] = y_flat[i]
            s[2 * N + N * n + n * k + i] = yd_flat[i]
        with nogil:
            for step in range(nsteps + 1):
                _conf_deriv(k0, s, k1, N, n, k, R, cols, work)
                if slot < ns and keep_arr[slot] == step:
                    for i in range(L):
                        out_state[slot, i] = s[i]
                    if with_jacobi:
                        for i in range(n * n):
                            out_r[slot, i] = R[i]
                    slot += 1
                if step == nsteps:
                    break
                for i in range(L):
                    tmp[i] = s[i] + 0.5 * h * k1[i]
                _conf_deriv(k0, tmp, k2, N, n, k, R, cols, work)
                for i in range(L):
                    tmp[i] = s[i] + 0.5 * h * k2[i]
                _conf_deriv(k0, tmp, k3, N, n, k, R, cols, work)
                for i in range(L):
                    tmp[i] = s[i] + h * k3[i]
                _conf_deriv(k0, tmp, k4, N, n, k, R, cols, work)
                for i in range(L):
                    s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                if not _dot(s, s, N) < r2:
                    escaped = step + 1
                    break
    finally:
        free(buf)
    if escaped >= 0:
        raise ValueError(f"trajectory left the chart at step {escaped}")
    xs = out_state[:, :N].copy()
    vs = out_state[:, N:2 * N].copy()
    fs = out_state[:, 2 * N:2 * N + N * n].reshape(ns, N, n).copy()
    ys = yds = rs = None
    if with_jacobi:
        off = 2 * N + N * n
        ys = out_state[:, off:off + n * k].reshape(ns, n, k).copy()
        yds = out_state[:, off + n * k:off + 2 * n * k].reshape(ns, n, k).copy()
        rs = out_r.reshape(ns, n, n).copy()
    return xs, vs, fs, ys, yds, rs
