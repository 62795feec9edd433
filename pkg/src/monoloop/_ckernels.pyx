# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numerical kernels (see ``_pykernels`` for the reference twin)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, pow, fabs, floor, ceil, INFINITY, isnan

cnp.import_array()

BACKEND = "cython"

cdef enum:
    ST_OK = 0
    ST_DIVERGED = 1
    ST_DOMAIN = 2
    ST_UNDERFLOW = 3
    ST_MAXSTEPS = 4


cdef inline int run(const int* code, int start, int stop, const double* consts,
                    const double* env, double* stack, double* result) nogil:
    """Evaluate one postfix expression. Returns -1 or the failing pc."""
    cdef int sp = 0
    cdef int pc, op, arg
    cdef double a, b, r
    for pc in range(start, stop):
        op = code[2 * pc]
        arg = code[2 * pc + 1]
        if op == 0:
            stack[sp] = consts[arg]
            sp += 1
        elif op == 1:
            stack[sp] = env[arg]
            sp += 1
        elif op == 2:
            stack[sp - 1] = -stack[sp - 1]
        elif op <= 7 or op >= 12:
            sp -= 1
            a = stack[sp - 1]
            b = stack[sp]
            if op == 3:
                r = a + b
            elif op == 4:
                r = a - b
            elif op == 5:
                r = a * b
            elif op == 6:
                if b == 0.0:
                    return pc
                r = a / b
            elif op == 7:
                if (a == 0.0 and b < 0.0) or (a < 0.0 and b != floor(b)):
                    return pc
                r = pow(a, b)
            elif op == 12:
                r = a if a < b else b
            else:
                r = a if a > b else b
            stack[sp - 1] = r
        else:
            a = stack[sp - 1]
            if op == 8:
                r = exp(a)
            elif op == 9:
                if a <= 0.0:
                    return pc
                r = log(a)
            elif op == 10:
                if a < 0.0:
                    return pc
                r = sqrt(a)
            else:
                r = fabs(a)
            stack[sp - 1] = r
    result[0] = stack[0]
    return -1


cdef inline int rhs(const int* code, const int* offs, const double* consts, double* env,
                    double* stack, int n, const double* x, double* out) nogil:
    cdef int i, err
    for i in range(n):
        env[i] = x[i]
    for i in range(n):
        err = run(code, offs[i], offs[i + 1], consts, env, stack, &out[i])
        if err >= 0:
            return err
    return -1


cdef inline double norm_inf(const double* x, int n) nogil:
    cdef double m = 0.0, a
    cdef int i
    for i in range(n):
        a = fabs(x[i])
        if isnan(a):
            return INFINITY
        if a > m:
            m = a
    return m


cdef class _Buf:
    """Growable (t, x) sample store."""
    cdef object ts, xs
    cdef double[::1] tv
    cdef double[:, ::1] xv
    cdef Py_ssize_t size
    cdef int n

    def __init__(self, int n, Py_ssize_t cap):
        self.n = n
        self.ts = np.empty(max(cap, 16))
        self.xs = np.empty((max(cap, 16), max(n, 1)))
        self.tv = self.ts
        self.xv = self.xs
        self.size = 0

    cdef void push(self, double t, const double* x):
        cdef Py_ssize_t cap = self.tv.shape[0]
        cdef int i
        if self.size == cap:
            self.ts = np.concatenate([self.ts, np.empty(cap)])
            self.xs = np.concatenate([self.xs, np.empty((cap, self.xs.shape[1]))])
            self.tv = self.ts
            self.xv = self.xs
        self.tv[self.size] = t
        for i in range(self.n):
            self.xv[self.size, i] = x[i]
        self.size += 1

    cdef double* row(self, Py_ssize_t k):
        return &self.xv[k, 0]

    def result(self):
        return self.ts[:self.size].copy(), self.xs[:self.size, :self.n].copy()


def _arrays(code, offs, consts, env):
    return (np.ascontiguousarray(code, dtype=np.intc).reshape(-1),
            np.ascontiguousarray(offs, dtype=np.intc),
            np.ascontiguousarray(consts, dtype=float) if len(consts) else np.zeros(1),
            np.array(env, dtype=float) if len(env) else np.zeros(1))


def eval_program(code, offs, consts, env):
    c, o, k, e = _arrays(code, offs, consts, env)
    cdef int[::1] cv = c
    cdef int[::1] ov = o
    cdef double[::1] kv = k
    cdef double[::1] ev = e
    cdef int count = o.shape[0] - 1
    out = np.empty(count)
    cdef double[::1] outv = out
    stack = np.empty(c.shape[0] // 2 + 1)
    cdef double[::1] sv = stack
    cdef int i, err
    for i in range(count):
        err = run(&cv[0], ov[i], ov[i + 1], &kv[0], &ev[0], &sv[0], &outv[i])
        if err >= 0:
            return out, err
    return out, -1


def rk4(code, offs, consts, env, int n, x0, double t0, double t1, double h, double bound):
    c, o, k, e = _arrays(code, offs, consts, env)
    cdef int[::1] cv = c
    cdef int[::1] ov = o
    cdef double[::1] kv = k
    cdef double[::1] ev = e
    stack_arr = np.empty(c.shape[0] // 2 + 1)
    cdef double[::1] sv = stack_arr
    work = np.zeros((6, n))
    cdef double[:, ::1] wv = work
    cdef double* x = &wv[0, 0]
    cdef double* k1 = &wv[1, 0]
    cdef double* k2 = &wv[2, 0]
    cdef double* k3 = &wv[3, 0]
    cdef double* k4 = &wv[4, 0]
    cdef double* tmp = &wv[5, 0]
    cdef int i, err = -1, status = ST_OK
    cdef long kk, nsteps = max(1, <long>ceil((t1 - t0) / h - 1e-9))
    cdef double t, hk
    cdef long nfev = 0
    for i in range(n):
        x[i] = x0[i]
    buf = _Buf(n, nsteps + 1)
    cdef _Buf b = buf
    b.push(t0, x)
    for kk in range(nsteps):
        t = t0 + kk * h
        hk = h if kk < nsteps - 1 else t1 - t
        err = rhs(&cv[0], &ov[0], &kv[0], &ev[0], &sv[0], n, x, k1)
        if err < 0:
            for i in range(n):
                tmp[i] = x[i] + 0.5 * hk * k1[i]
            err = rhs(&cv[0], &ov[0], &kv[0], &ev[0], &sv[0], n, tmp, k2)
        if err < 0:
            for i in range(n):
                tmp[i] = x[i] + 0.5 * hk * k2[i]
            err = rhs(&cv[0], &ov[0], &kv[0], &ev[0], &sv[0], n, tmp, k3)
        if err < 0:
            for i in range(n):
                tmp[i] = x[i] + hk * k3[i]
            err = rhs(&cv[0], &ov[0], &kv[0], &ev[0], &sv[0], n, tmp, k4)
        if err >= 0:
            status = ST_DOMAIN
            break
        nfev += 4
        for i in range(n):
            x[i] = x[i] + hk / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        b.push(t1 if kk == nsteps - 1 else t0 + (kk + 1) * h, x)
        if not norm_inf(x, n) <= bound:
            status = ST_DIVERGED
            break
    ts, xs = b.result()
    return ts, xs, status, err if status == ST_DOMAIN else -1, b.size - 1, 0, nfev


# Fehlberg 4(5) tableau, row-major 6x5
cdef double A_[30]
A_[:] = [
    0, 0, 0, 0, 0,
    1.0 / 4, 0, 0, 0, 0,
    3.0 / 32, 9.0 / 32, 0, 0, 0,
    1932.0 / 2197, -7200.0 / 2197, 7296.0 / 2197, 0, 0,
    439.0 / 216, -8.0, 3680.0 / 513, -845.0 / 4104, 0,
    -8.0 / 27, 2.0, -3544.0 / 2565, 1859.0 / 4104, -11.0 / 40,
]
cdef double B4_[6]
B4_[:] = [25.0 / 216, 0.0, 1408.0 / 2565, 2197.0 / 4104, -1.0 / 5, 0.0]
cdef double B5_[6]
B5_[:] = [16.0 / 135, 0.0, 6656.0 / 12825, 28561.0 / 56430, -9.0 / 50, 2.0 / 55]



def rkf45(code, offs, consts, env, int n, x0, double t0, double t1, double h0,
          double rtol, double atol, long max_steps, double bound, double hmin):
    c, o, kc, e = _arrays(code, offs, consts, env)
    cdef int[::1] cv = c
    cdef int[::1] ov = o
    cdef double[::1] kv = kc
    cdef double[::1] ev = e
    stack_arr = np.empty(c.shape[0] // 2 + 1)
    cdef double[::1] sv = stack_arr
    stages = np.zeros((6, n))
    cdef double[:, ::1] K = stages
    work = np.zeros((3, n))
    cdef double[:, ::1] wv = work
    cdef double* x = &wv[0, 0]
    cdef double* tmp = &wv[1, 0]
    cdef double* x4 = &wv[2, 0]
    cdef int i, j, s, err = -1, status = ST_OK
    cdef long nacc = 0, nrej = 0, nfev = 0
    cdef double t = t0, h = min(h0, t1 - t0), errn, ee, acc, d4, d5, sc, fac
    cdef bint last
    for i in range(n):
        x[i] = x0[i]
    buf = _Buf(n, 256)
    cdef _Buf b = buf
    b.push(t0, x)
    while t < t1:
        if nacc + nrej >= max_steps:
            status = ST_MAXSTEPS
            break
        if h < hmin:
            status = ST_UNDERFLOW
            break
        last = t + h >= t1
        if last:
            h = t1 - t
        for s in range(6):
            for i in range(n):
                acc = x[i]
                for j in range(s):
                    acc += h * A_[s * 5 + j] * K[j, i]
                tmp[i] = acc
            err = rhs(&cv[0], &ov[0], &kv[0], &ev[0], &sv[0], n, tmp, &K[s, 0])
            if err >= 0:
                break
        if err >= 0:
            status = ST_DOMAIN
            break
        nfev += 6
        errn = 0.0
        for i in range(n):
            d4 = 0.0
            d5 = 0.0
            for s in range(6):
                d4 += B4_[s] * K[s, i]
                d5 += B5_[s] * K[s, i]
            x4[i] = x[i] + h * d4
            sc = atol + rtol * max(fabs(x[i]), fabs(x4[i]))
            ee = fabs(h * (d5 - d4)) / sc
            if isnan(ee):
                ee = INFINITY
            if ee > errn:
                errn = ee
        if errn <= 1.0:
            t = t1 if last else t + h
            for i in range(n):
                x[i] = x4[i]
            nacc += 1
            b.push(t, x)
            if not norm_inf(x, n) <= bound:
                status = ST_DIVERGED
                break
            fac = 5.0 if errn == 0.0 else min(5.0, max(0.2, 0.9 * pow(errn, -0.2)))
        else:
            nrej += 1
            fac = 0.2 if not errn < INFINITY else max(0.2, 0.9 * pow(errn, -0.25))
        h = h * fac
    ts, xs = b.result()
    return ts, xs, status, err if status == ST_DOMAIN else -1, nacc, nrej, nfev


cdef int dde_field(const int* code, const int* offs, const double* consts, double* env,
                   double* stack, int n, int m, double tt, double r, double t0, double h,
                   const double* hist, _Buf b, double[:, ::1] ds, long nds,
                   const double* state, double* delayed, double* out):
    cdef double s = tt - r, q, th, h00, h10, h01, h11
    cdef long j
    cdef int i, err
    cdef double* xa
    cdef double* xb
    if s <= t0:
        for i in range(n):
            delayed[i] = hist[i]
    else:
        q = (s - t0) / h
        j = <long>floor(q)
        th = q - j
        if j >= nds:
            j = nds - 1
            th = 1.0
        if th == 0.0 or j + 1 >= b.size:
            xa = b.row(j)
            for i in range(n):
                delayed[i] = xa[i]
        else:
            h00 = (1 + 2 * th) * (1 - th) * (1 - th)
            h10 = th * (1 - th) * (1 - th)
            h01 = th * th * (3 - 2 * th)
            h11 = th * th * (th - 1)
            xa = b.row(j)
            xb = b.row(j + 1)
            for i in range(n):
                delayed[i] = (h00 * xa[i] + h10 * h * ds[j, i]
                              + h01 * xb[i] + h11 * h * ds[j + 1, i])
    for i in range(n):
        env[i] = delayed[i]
    for i in range(m):
        err = run(code, offs[n + i], offs[n + i + 1], consts, env, stack, &env[n + i])
        if err >= 0:
            return err
    return rhs(code, offs, consts, env, stack, n, state, out)


def dde_rk4(code, offs, consts, env, int n, int m, xhist, double r, double t0, double t1,
            double h, double bound):
    c, o, kc, e = _arrays(code, offs, consts, env)
    cdef int[::1] cv = c
    cdef int[::1] ov = o
    cdef double[::1] kv = kc
    cdef double[::1] ev = e
    stack_arr = np.empty(c.shape[0] // 2 + 1)
    cdef double[::1] sv = stack_arr
    cdef long kk, nsteps = max(1, <long>ceil((t1 - t0) / h - 1e-9))
    deriv = np.zeros((nsteps + 1, n))
    cdef double[:, ::1] ds = deriv
    work = np.zeros((8, n))
    cdef double[:, ::1] wv = work
    cdef double* x = &wv[0, 0]
    cdef double* hist = &wv[1, 0]
    cdef double* k1 = &wv[2, 0]
    cdef double* k2 = &wv[3, 0]
    cdef double* k3 = &wv[4, 0]
    cdef double* k4 = &wv[5, 0]
    cdef double* tmp = &wv[6, 0]
    cdef double* delayed = &wv[7, 0]
    cdef int i, err = -1, status = ST_OK
    cdef long nfev = 0
    cdef double t, hk
    for i in range(n):
        hist[i] = xhist[i]
        x[i] = xhist[i]
    buf = _Buf(n, nsteps + 1)
    cdef _Buf b = buf
    b.push(t0, x)
    cdef int* cp = &cv[0]
    cdef int* op = &ov[0]
    cdef double* kp = &kv[0]
    cdef double* ep = &ev[0]
    cdef double* sp = &sv[0]
    for kk in range(nsteps):
        t = t0 + kk * h
        hk = h if kk < nsteps - 1 else t1 - t
        err = dde_field(cp, op, kp, ep, sp, n, m, t, r, t0, h, hist, b, ds, kk, x, delayed, k1)
        if err >= 0:
            status = ST_DOMAIN
            break
        for i in range(n):
            ds[kk, i] = k1[i]
            tmp[i] = x[i] + 0.5 * hk * k1[i]
        err = dde_field(cp, op, kp, ep, sp, n, m, t + 0.5 * hk, r, t0, h, hist, b, ds, kk + 1,
                        tmp, delayed, k2)
        if err < 0:
            for i in range(n):
                tmp[i] = x[i] + 0.5 * hk * k2[i]
            err = dde_field(cp, op, kp, ep, sp, n, m, t + 0.5 * hk, r, t0, h, hist, b, ds,
                            kk + 1, tmp, delayed, k3)
        if err < 0:
            for i in range(n):
                tmp[i] = x[i] + hk * k3[i]
            err = dde_field(cp, op, kp, ep, sp, n, m, t + hk, r, t0, h, hist, b, ds, kk + 1,
                            tmp, delayed, k4)
        if err >= 0:
            status = ST_DOMAIN
            break
        nfev += 4
        for i in range(n):
            x[i] = x[i] + hk / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        b.push(t1 if kk == nsteps - 1 else t0 + (kk + 1) * h, x)
        if not norm_inf(x, n) <= bound:
            status = ST_DIVERGED
            break
    ts, xs = b.result()
    return ts, xs, status, err if status == ST_DOMAIN else -1, b.size - 1, 0, nfev


# --- eigenvalues ---------------------------------------------------------------

cdef void balance(double[:, ::1] a, int n) nogil:
    cdef double radix = 2.0, sqrdx = 4.0, c, r, g, f, s
    cdef int i, j
    cdef bint done = False
    while not done:
        done = True
        for i in range(n):
            c = 0.0
            r = 0.0
            for j in range(n):
                if j != i:
                    c += fabs(a[j, i])
                    r += fabs(a[i, j])
            if c != 0.0 and r != 0.0:
                g = r / radix
                f = 1.0
                s = c + r
                while c < g:
                    f *= radix
                    c *= sqrdx
                g = r * radix
                while c > g:
                    f /= radix
                    c /= sqrdx
                if (c + r) / f < 0.95 * s:
                    done = False
                    g = 1.0 / f
                    for j in range(n):
                        a[i, j] *= g
                    for j in range(n):
                        a[j, i] *= f


cdef void hessenberg(double[:, ::1] a, int n, double* v) nogil:
    cdef int i, j, k
    cdef double alpha, vn, s
    for k in range(n - 2):
        alpha = 0.0
        for i in range(k + 1, n):
            alpha += a[i, k] * a[i, k]
        alpha = sqrt(alpha)
        if alpha == 0.0:
            continue
        if a[k + 1, k] > 0:
            alpha = -alpha
        for i in range(n):
            v[i] = 0.0
        for i in range(k + 1, n):
            v[i] = a[i, k]
        v[k + 1] -= alpha
        vn = 0.0
        for i in range(k + 1, n):
            vn += v[i] * v[i]
        if vn == 0.0:
            continue
        for j in range(k, n):
            s = 0.0
            for i in range(k + 1, n):
                s += v[i] * a[i, j]
            s = 2.0 * s / vn
            for i in range(k + 1, n):
                a[i, j] -= s * v[i]
        for i in range(n):
            s = 0.0
            for j in range(k + 1, n):
                s += a[i, j] * v[j]
            s = 2.0 * s / vn
            for j in range(k + 1, n):
                a[i, j] -= s * v[j]
        for i in range(k + 2, n):
            a[i, k] = 0.0


cdef inline double sign_of(double a, double b) nogil:
    return fabs(a) if b >= 0.0 else -fabs(a)


cdef int hqr(double[:, ::1] a, int n, double[::1] wr, double[::1] wi, int max_total,
             bint* ok) nogil:
    cdef int nn, l, ll, mm, k, j, i, its, mmin, total = 0
    cdef double anorm = 0.0, t = 0.0, x = 0, y = 0, z = 0, w = 0, p = 0, q = 0, r = 0
    cdef double s = 0, u, v
    for i in range(n):
        for j in range(max(i - 1, 0), n):
            anorm += fabs(a[i, j])
    nn = n - 1
    ok[0] = True
    while nn >= 0:
        its = 0
        while True:
            l = 0
            ll = nn
            while ll >= 1:
                s = fabs(a[ll - 1, ll - 1]) + fabs(a[ll, ll])
                if s == 0.0:
                    s = anorm
                if fabs(a[ll, ll - 1]) + s == s:
                    a[ll, ll - 1] = 0.0
                    l = ll
                    break
                ll -= 1
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
                break
            y = a[nn - 1, nn - 1]
            w = a[nn, nn - 1] * a[nn - 1, nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = sqrt(fabs(q))
                x += t
                if q >= 0.0:
                    z = p + sign_of(z, p)
                    wr[nn - 1] = x + z
                    wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                    wi[nn - 1] = 0.0
                    wi[nn] = 0.0
                else:
                    wr[nn - 1] = x + p
                    wr[nn] = x + p
                    wi[nn - 1] = -z
                    wi[nn] = z
                nn -= 2
                break
            if total >= max_total:
                ok[0] = False
                return total
            if its == 10 or its == 20:
                t += x
                for i in range(nn + 1):
                    a[i, i] -= x
                s = fabs(a[nn, nn - 1]) + fabs(a[nn - 1, nn - 2])
                x = 0.75 * s
                y = x
                w = -0.4375 * s * s
            its += 1
            total += 1
            mm = nn - 2
            while mm >= l:
                z = a[mm, mm]
                r = x - z
                s = y - z
                p = (r * s - w) / a[mm + 1, mm] + a[mm, mm + 1]
                q = a[mm + 1, mm + 1] - z - r - s
                r = a[mm + 2, mm + 1]
                s = fabs(p) + fabs(q) + fabs(r)
                p /= s
                q /= s
                r /= s
                if mm == l:
                    break
                u = fabs(a[mm, mm - 1]) * (fabs(q) + fabs(r))
                v = fabs(p) * (fabs(a[mm - 1, mm - 1]) + fabs(z) + fabs(a[mm + 1, mm + 1]))
                if u + v == v:
                    break
                mm -= 1
            for i in range(mm + 2, nn + 1):
                a[i, i - 2] = 0.0
                if i != mm + 2:
                    a[i, i - 3] = 0.0
            for k in range(mm, nn):
                if k != mm:
                    p = a[k, k - 1]
                    q = a[k + 1, k - 1]
                    r = a[k + 2, k - 1] if k != nn - 1 else 0.0
                    x = fabs(p) + fabs(q) + fabs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = sign_of(sqrt(p * p + q * q + r * r), p)
                if s != 0.0:
                    if k == mm:
                        if l != mm:
                            a[k, k - 1] = -a[k, k - 1]
                    else:
                        a[k, k - 1] = -s * x
                    p += s
                    x = p / s
                    y = q / s
                    z = r / s
                    q /= p
                    r /= p
                    for j in range(k, nn + 1):
                        p = a[k, j] + q * a[k + 1, j]
                        if k != nn - 1:
                            p += r * a[k + 2, j]
                            a[k + 2, j] -= p * z
                        a[k + 1, j] -= p * y
                        a[k, j] -= p * x
                    mmin = nn if nn < k + 3 else k + 3
                    for i in range(l, mmin + 1):
                        p = x * a[i, k] + y * a[i, k + 1]
                        if k != nn - 1:
                            p += z * a[i, k + 2]
                            a[i, k + 2] -= p * r
                        a[i, k + 1] -= p * q
                        a[i, k] -= p
    return total


def hqr_eigen(m, int max_total):
    a_arr = np.array(m, dtype=float, order="C", copy=True)
    cdef int n = a_arr.shape[0]
    wr_arr = np.full(n, np.nan)
    wi_arr = np.full(n, np.nan)
    if n == 0:
        return wr_arr, wi_arr, 0, True
    cdef double[:, ::1] a = a_arr
    cdef double[::1] wr = wr_arr
    cdef double[::1] wi = wi_arr
    v_arr = np.zeros(n)
    cdef double[::1] v = v_arr
    cdef bint ok = True
    cdef int its
    balance(a, n)
    hessenberg(a, n, &v[0])
    its = hqr(a, n, wr, wi, max_total, &ok)
    return wr_arr, wi_arr, its, bool(ok)
