# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops. Signatures mirror ``_pykernels``."""
import numpy as np

from libc.math cimport sqrt
from scipy.linalg.cython_lapack cimport dsyev

cdef double ZERO_BETA = 1e-6


cdef class _Scanner:
    """Running first and second moments of a growing neighborhood."""

    cdef int D, d, lwork, n
    cdef bint affine
    cdef double r2
    cdef double[::1] s1, y, w, work, center
    cdef double[::1, :] s2, m

    def __init__(self, int D, int d, bint affine, center):
        self.D = D
        self.d = d
        self.affine = affine
        self.lwork = max(1, 3 * D - 1) * 4
        self.s1 = np.zeros(D)
        self.y = np.empty(D)
        self.w = np.empty(D)
        self.work = np.empty(self.lwork)
        self.s2 = np.zeros((D, D), order="F")
        self.m = np.empty((D, D), order="F")
        self.center = np.array(center, dtype=float)
        self.n = 0
        self.r2 = 0.0

    cdef void add(self, const double[::1] x, double sq):
        cdef int a, b, D = self.D
        for a in range(D):
            self.y[a] = x[a] - self.center[a] if self.affine else x[a]
            self.s1[a] += self.y[a]
        for b in range(D):
            for a in range(b + 1):
                self.s2[a, b] += self.y[a] * self.y[b]
        if sq > self.r2:
            self.r2 = sq
        self.n += 1

    cdef double beta(self) except -1.0:
        cdef int a, b, i, D = self.D, info = 0, lwork = self.lwork
        cdef char jobz = b'N'
        cdef char uplo = b'U'
        cdef double inv_n = 1.0 / self.n, res = 0.0, beta
        for b in range(D):
            for a in range(b + 1):
                if self.affine:
                    self.m[a, b] = self.s2[a, b] - self.s1[a] * self.s1[b] * inv_n
                else:
                    self.m[a, b] = self.s2[a, b]
        dsyev(&jobz, &uplo, &D, &self.m[0, 0], &D, &self.w[0], &self.work[0], &lwork, &info)
        if info != 0:
            raise ArithmeticError(f"eigenvalue solver failed (info={info})")
        for i in range(D - self.d):
            if self.w[i] > 0.0:
                res += self.w[i]
        if self.r2 <= 0.0:
            return 0.0
        beta = sqrt(res / (self.n * self.r2))
        if beta > 1.0:
            return 1.0
        if beta <= ZERO_BETA:
            return 0.0
        return beta


cdef inline int _stop_rule(double[::1] b, int k, bint allow_first_min):
    """Selected index if the rule fires on ``b[:k+1]``, else -1."""
    if k >= 1 and b[k - 1] == 0.0 and b[k] > 0.0:
        return k - 1
    if allow_first_min and k == 1 and b[0] < b[1]:
        return 0
    if k >= 2 and b[k - 1] < b[k - 2] and b[k - 1] < b[k]:
        return k - 1
    return -1


cdef tuple _finish(double[::1] betas, int count, int sel):
    out = np.asarray(betas)[:count].copy()
    if sel < 0:
        sel = count - 1 - int(np.argmin(out[::-1]))
    return out, sel


def beta2_scan(const double[:, ::1] pts, const double[::1] sqrad, const double[::1] center,
               int d, bint affine, int start, int step, int stop_size, bint allow_first_min):
    cdef int nsizes = (stop_size - start) // step + 1
    cdef double[::1] betas = np.empty(nsizes)
    cdef _Scanner sc = _Scanner(pts.shape[1], d, affine, center)
    cdef int k, sel = -1, count = 0
    for k in range(nsizes):
        while sc.n < start + k * step:
            sc.add(pts[sc.n], sqrad[sc.n])
        betas[k] = sc.beta()
        count = k + 1
        sel = _stop_rule(betas, k, allow_first_min)
        if sel >= 0:
            break
    return _finish(betas, count, sel)


cdef inline bint _before(double[::1] hd, long[::1] hi, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    return hd[a] < hd[b] or (hd[a] == hd[b] and hi[a] < hi[b])


cdef void _sift_down(double[::1] hd, long[::1] hi, Py_ssize_t pos, Py_ssize_t size) noexcept nogil:
    cdef Py_ssize_t child
    cdef double td
    cdef long ti
    while True:
        child = 2 * pos + 1
        if child >= size:
            return
        if child + 1 < size and _before(hd, hi, child + 1, child):
            child += 1
        if not _before(hd, hi, child, pos):
            return
        td = hd[pos]; hd[pos] = hd[child]; hd[child] = td
        ti = hi[pos]; hi[pos] = hi[child]; hi[child] = ti
        pos = child


def scan_neighborhoods(const double[:, ::1] pts, const double[:, ::1] centers, int d, bint affine,
                       int start, int step, int stop_size, bint allow_first_min):
    """Nearest-neighbor ordering and beta_2 scan for every row of ``centers``.

    Neighbors are popped lazily from a binary heap keyed on (squared
    distance, index), so a scan that stops after ``n`` points costs
    ``O(N + n log N)``. Returns a list of ``(betas, selected_index, order)``
    with ``order`` the nearest neighbors up to the selected size's successor.
    """
    cdef Py_ssize_t N = pts.shape[0], D = pts.shape[1], c, i, a, size
    cdef int nsizes = (stop_size - start) // step + 1
    cdef double[::1] hd = np.empty(N)
    cdef long[::1] hi = np.empty(N, dtype=np.int_)
    cdef double[::1] betas = np.empty(nsizes)
    cdef long[::1] order
    cdef double diff, acc
    cdef int k, sel, count
    cdef _Scanner sc
    out = []
    for c in range(centers.shape[0]):
        for i in range(N):
            acc = 0.0
            for a in range(D):
                diff = pts[i, a] - centers[c, a]
                acc += diff * diff
            hd[i] = acc
            hi[i] = i
        size = N
        i = N // 2
        while i > 0:
            i -= 1
            _sift_down(hd, hi, i, size)
        order_arr = np.empty(stop_size, dtype=np.int_)
        order = order_arr
        sc = _Scanner(D, d, affine, centers[c])
        sel = -1
        count = 0
        for k in range(nsizes):
            while sc.n < start + k * step:
                order[sc.n] = hi[0]
                sc.add(pts[hi[0]], hd[0])
                size -= 1
                hd[0] = hd[size]
                hi[0] = hi[size]
                _sift_down(hd, hi, 0, size)
            betas[k] = sc.beta()
            count = k + 1
            sel = _stop_rule(betas, k, allow_first_min)
            if sel >= 0:
                break
        out.append(_finish(betas, count, sel) + (order_arr[: sc.n],))
    return out


def swap_scores(const double[:, ::1] dist, const double[::1] base):
    cdef Py_ssize_t N = dist.shape[0], C = dist.shape[1], i, j
    cdef double bi, v
    out_arr = np.zeros(C)
    cdef double[::1] out = out_arr
    for i in range(N):
        bi = base[i]
        for j in range(C):
            v = dist[i, j]
            out[j] += v if v < bi else bi
    return out_arr
