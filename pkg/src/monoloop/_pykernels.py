"""Pure-Python numerical kernels.

Line-for-line twin of ``_ckernels.pyx``; used when the compiled extension is
unavailable. Both modules expose the same functions with the same return
conventions:

* integrators return ``(ts, xs, status, err_pc, n_accepted, n_rejected, n_fev)``
  where ``status`` is one of the ``ST_*`` codes and ``err_pc`` is the index of
  the failing instruction on a domain error (else -1);
* ``eval_program`` returns ``(values, err_pc)``;
* ``hqr_eigen`` returns ``(wr, wi, iterations, ok)``.
"""

import math

import numpy as np

ST_OK, ST_DIVERGED, ST_DOMAIN, ST_UNDERFLOW, ST_MAXSTEPS = range(5)

BACKEND = "python"


class _Domain(Exception):
    def __init__(self, pc):
        self.pc = pc


def _run(code, start, stop, consts, env, stack):
    sp = 0
    for pc in range(start, stop):
        op, arg = code[pc]
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
                    raise _Domain(pc)
                r = a / b
            elif op == 7:
                if (a == 0.0 and b < 0.0) or (a < 0.0 and b != math.floor(b)):
                    raise _Domain(pc)
                try:
                    r = a ** b
                except OverflowError:
                    r = math.inf if a > 0 or b % 2 == 0 else -math.inf
            elif op == 12:
                r = a if a < b else b
            else:
                r = a if a > b else b
            stack[sp - 1] = r
        else:
            a = stack[sp - 1]
            if op == 8:
                try:
                    r = math.exp(a)
                except OverflowError:
                    r = math.inf
            elif op == 9:
                if a <= 0.0:
                    raise _Domain(pc)
                r = math.log(a)
            elif op == 10:
                if a < 0.0:
                    raise _Domain(pc)
                r = math.sqrt(a)
            else:
                r = abs(a)
            stack[sp - 1] = r
    return stack[0]


def _prep(code, offs, consts):
    code = [(int(o), int(a)) for o, a in np.asarray(code).reshape(-1, 2)]
    offs = [int(o) for o in offs]
    consts = [float(c) for c in consts]
    return code, offs, consts, [0.0] * (len(code) + 1)


def eval_program(code, offs, consts, env):
    code, offs, consts, stack = _prep(code, offs, consts)
    env = [float(v) for v in env]
    out = np.empty(len(offs) - 1)
    try:
        for i in range(len(offs) - 1):
            out[i] = _run(code, offs[i], offs[i + 1], consts, env, stack)
    except _Domain as e:
        return out, e.pc
    return out, -1


def _rhs(code, offs, consts, env, stack, n, x, out):
    for i in range(n):
        env[i] = x[i]
    for i in range(n):
        out[i] = _run(code, offs[i], offs[i + 1], consts, env, stack)


def _norm_inf(x):
    m = 0.0
    for v in x:
        a = abs(v)
        if not a <= m:  # catches nan
            m = a if a == a else math.inf
    return m


def rk4(code, offs, consts, env, n, x0, t0, t1, h, bound):
    code, offs, consts, stack = _prep(code, offs, consts)
    env = [float(v) for v in env]
    nsteps = max(1, int(math.ceil((t1 - t0) / h - 1e-9)))
    x = [float(v) for v in x0]
    ts = [t0]
    xs = [list(x)]
    k1, k2, k3, k4 = ([0.0] * n for _ in range(4))
    tmp = [0.0] * n
    status, err_pc, nfev = ST_OK, -1, 0
    try:
        for k in range(nsteps):
            t = t0 + k * h
            hk = h if k < nsteps - 1 else t1 - t
            _rhs(code, offs, consts, env, stack, n, x, k1)
            for i in range(n):
                tmp[i] = x[i] + 0.5 * hk * k1[i]
            _rhs(code, offs, consts, env, stack, n, tmp, k2)
            for i in range(n):
                tmp[i] = x[i] + 0.5 * hk * k2[i]
            _rhs(code, offs, consts, env, stack, n, tmp, k3)
            for i in range(n):
                tmp[i] = x[i] + hk * k3[i]
            _rhs(code, offs, consts, env, stack, n, tmp, k4)
            nfev += 4
            for i in range(n):
                x[i] = x[i] + hk / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            ts.append(t1 if k == nsteps - 1 else t0 + (k + 1) * h)
            xs.append(list(x))
            if not _norm_inf(x) <= bound:
                status = ST_DIVERGED
                break
    except _Domain as e:
        status, err_pc = ST_DOMAIN, e.pc
    return (np.asarray(ts), np.asarray(xs, dtype=float).reshape(-1, n),
            status, err_pc, len(ts) - 1, 0, nfev)


# Fehlberg 4(5) tableau
_C = (0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2)
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_B4 = (25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0)
_B5 = (16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55)


def rkf45(code, offs, consts, env, n, x0, t0, t1, h0, rtol, atol, max_steps, bound, hmin):
    code, offs, consts, stack = _prep(code, offs, consts)
    env = [float(v) for v in env]
    x = [float(v) for v in x0]
    ts = [t0]
    xs = [list(x)]
    K = [[0.0] * n for _ in range(6)]
    tmp = [0.0] * n
    x4 = [0.0] * n
    t = t0
    h = min(h0, t1 - t0)
    status, err_pc = ST_OK, -1
    nacc = nrej = nfev = 0
    try:
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
                        acc += h * _A[s][j] * K[j][i]
                    tmp[i] = acc
                _rhs(code, offs, consts, env, stack, n, tmp, K[s])
            nfev += 6
            err = 0.0
            for i in range(n):
                d4 = 0.0
                d5 = 0.0
                for s in range(6):
                    d4 += _B4[s] * K[s][i]
                    d5 += _B5[s] * K[s][i]
                x4[i] = x[i] + h * d4
                sc = atol + rtol * max(abs(x[i]), abs(x4[i]))
                e = abs(h * (d5 - d4)) / sc
                if not e <= err:
                    err = e if e == e else math.inf
            if err <= 1.0:
                t = t1 if last else t + h
                for i in range(n):
                    x[i] = x4[i]
                nacc += 1
                ts.append(t)
                xs.append(list(x))
                if not _norm_inf(x) <= bound:
                    status = ST_DIVERGED
                    break
                fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            else:
                nrej += 1
                fac = 0.2 if not err < math.inf else max(0.2, 0.9 * err ** -0.25)
            h = h * fac
    except _Domain as e:
        status, err_pc = ST_DOMAIN, e.pc
    return (np.asarray(ts), np.asarray(xs, dtype=float).reshape(-1, n),
            status, err_pc, nacc, nrej, nfev)


def dde_rk4(code, offs, consts, env, n, m, xhist, r, t0, t1, h, bound):
    """Method of steps for x'(t) = f(x(t), h(x(t - r))), constant history.

    ``code`` holds n right-hand sides followed by m output expressions; input
    slots are ``n .. n+m-1``. ``h`` must divide ``r``. Delayed states between
    grid points come from cubic Hermite interpolation of stored samples and
    their derivatives.
    """
    code, offs, consts, stack = _prep(code, offs, consts)
    env = [float(v) for v in env]
    nsteps = max(1, int(math.ceil((t1 - t0) / h - 1e-9)))
    hist = [float(v) for v in xhist]
    xs = [list(hist)]
    ds = []
    ts = [t0]
    x = list(hist)
    delayed = [0.0] * n
    K = [[0.0] * n for _ in range(4)]
    tmp = [0.0] * n
    status, err_pc, nfev = ST_OK, -1, 0

    def lagged(s):
        if s <= t0:
            for i in range(n):
                delayed[i] = hist[i]
            return
        q = (s - t0) / h
        j = int(math.floor(q))
        th = q - j
        if j >= len(ds):  # only reachable when r < h, excluded by the caller
            j = len(ds) - 1
            th = 1.0
        if th == 0.0 or j + 1 >= len(xs):
            for i in range(n):
                delayed[i] = xs[j][i]
            return
        h00 = (1 + 2 * th) * (1 - th) ** 2
        h10 = th * (1 - th) ** 2
        h01 = th * th * (3 - 2 * th)
        h11 = th * th * (th - 1)
        xa, xb, da, db = xs[j], xs[j + 1], ds[j], ds[j + 1]
        for i in range(n):
            delayed[i] = h00 * xa[i] + h10 * h * da[i] + h01 * xb[i] + h11 * h * db[i]

    def field(tt, state, out):
        lagged(tt - r)
        for i in range(n):
            env[i] = delayed[i]
        for j in range(m):
            env[n + j] = _run(code, offs[n + j], offs[n + j + 1], consts, env, stack)
        _rhs(code, offs, consts, env, stack, n, state, out)

    try:
        for k in range(nsteps):
            t = t0 + k * h
            hk = h if k < nsteps - 1 else t1 - t
            field(t, x, K[0])
            ds.append(list(K[0]))
            for i in range(n):
                tmp[i] = x[i] + 0.5 * hk * K[0][i]
            field(t + 0.5 * hk, tmp, K[1])
            for i in range(n):
                tmp[i] = x[i] + 0.5 * hk * K[1][i]
            field(t + 0.5 * hk, tmp, K[2])
            for i in range(n):
                tmp[i] = x[i] + hk * K[2][i]
            field(t + hk, tmp, K[3])
            nfev += 4
            for i in range(n):
                x[i] = x[i] + hk / 6.0 * (K[0][i] + 2.0 * K[1][i] + 2.0 * K[2][i] + K[3][i])
            ts.append(t1 if k == nsteps - 1 else t0 + (k + 1) * h)
            xs.append(list(x))
            if not _norm_inf(x) <= bound:
                status = ST_DIVERGED
                break
    except _Domain as e:
        status, err_pc = ST_DOMAIN, e.pc
    return (np.asarray(ts), np.asarray(xs, dtype=float).reshape(-1, n),
            status, err_pc, len(ts) - 1, 0, nfev)


# --- eigenvalues ---------------------------------------------------------------

def _balance(a, n):
    radix = 2.0
    sqrdx = radix * radix
    done = False
    while not done:
        done = True
        for i in range(n):
            c = r = 0.0
            for j in range(n):
                if j != i:
                    c += abs(a[j][i])
                    r += abs(a[i][j])
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
                        a[i][j] *= g
                    for j in range(n):
                        a[j][i] *= f


def _hessenberg(a, n):
    """Householder reduction to upper Hessenberg form, in place."""
    for k in range(n - 2):
        alpha = 0.0
        for i in range(k + 1, n):
            alpha += a[i][k] * a[i][k]
        alpha = math.sqrt(alpha)
        if alpha == 0.0:
            continue
        if a[k + 1][k] > 0:
            alpha = -alpha
        v = [0.0] * n
        for i in range(k + 1, n):
            v[i] = a[i][k]
        v[k + 1] -= alpha
        vn = 0.0
        for i in range(k + 1, n):
            vn += v[i] * v[i]
        if vn == 0.0:
            continue
        # A <- (I - 2vv^T/vn) A (I - 2vv^T/vn)
        for j in range(k, n):
            s = 0.0
            for i in range(k + 1, n):
                s += v[i] * a[i][j]
            s = 2.0 * s / vn
            for i in range(k + 1, n):
                a[i][j] -= s * v[i]
        for i in range(n):
            s = 0.0
            for j in range(k + 1, n):
                s += a[i][j] * v[j]
            s = 2.0 * s / vn
            for j in range(k + 1, n):
                a[i][j] -= s * v[j]
        for i in range(k + 2, n):
            a[i][k] = 0.0


def _sign(a, b):
    return abs(a) if b >= 0.0 else -abs(a)


def _hqr(a, n, wr, wi, max_total):
    """Francis double-shift QR on an upper Hessenberg matrix.

    Returns ``(iterations, ok)``. Eigenvalues not reached when the iteration
    budget runs out are left as nan.
    """
    anorm = 0.0
    for i in range(n):
        for j in range(max(i - 1, 0), n):
            anorm += abs(a[i][j])
    nn = n - 1
    t = 0.0
    total = 0
    x = y = z = w = p = q = r = s = 0.0
    while nn >= 0:
        its = 0
        while True:
            l = 0
            for ll in range(nn, 0, -1):
                s = abs(a[ll - 1][ll - 1]) + abs(a[ll][ll])
                if s == 0.0:
                    s = anorm
                if abs(a[ll][ll - 1]) + s == s:
                    a[ll][ll - 1] = 0.0
                    l = ll
                    break
            x = a[nn][nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
                break
            y = a[nn - 1][nn - 1]
            w = a[nn][nn - 1] * a[nn - 1][nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = math.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + _sign(z, p)
                    wr[nn - 1] = wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                    wi[nn - 1] = wi[nn] = 0.0
                else:
                    wr[nn - 1] = wr[nn] = x + p
                    wi[nn - 1] = -z
                    wi[nn] = z
                nn -= 2
                break
            if total >= max_total:
                return total, False
            if its == 10 or its == 20:
                # exceptional shift
                t += x
                for i in range(nn + 1):
                    a[i][i] -= x
                s = abs(a[nn][nn - 1]) + abs(a[nn - 1][nn - 2])
                x = y = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            total += 1
            mm = nn - 2
            while mm >= l:
                z = a[mm][mm]
                r = x - z
                s = y - z
                p = (r * s - w) / a[mm + 1][mm] + a[mm][mm + 1]
                q = a[mm + 1][mm + 1] - z - r - s
                r = a[mm + 2][mm + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if mm == l:
                    break
                u = abs(a[mm][mm - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[mm - 1][mm - 1]) + abs(z) + abs(a[mm + 1][mm + 1]))
                if u + v == v:
                    break
                mm -= 1
            for i in range(mm + 2, nn + 1):
                a[i][i - 2] = 0.0
                if i != mm + 2:
                    a[i][i - 3] = 0.0
            for k in range(mm, nn):
                if k != mm:
                    p = a[k][k - 1]
                    q = a[k + 1][k - 1]
                    r = a[k + 2][k - 1] if k != nn - 1 else 0.0
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = _sign(math.sqrt(p * p + q * q + r * r), p)
                if s != 0.0:
                    if k == mm:
                        if l != mm:
                            a[k][k - 1] = -a[k][k - 1]
                    else:
                        a[k][k - 1] = -s * x
                    p += s
                    x = p / s
                    y = q / s
                    z = r / s
                    q /= p
                    r /= p
                    for j in range(k, nn + 1):
                        p = a[k][j] + q * a[k + 1][j]
                        if k != nn - 1:
                            p += r * a[k + 2][j]
                            a[k + 2][j] -= p * z
                        a[k + 1][j] -= p * y
                        a[k][j] -= p * x
                    mmin = nn if nn < k + 3 else k + 3
                    for i in range(l, mmin + 1):
                        p = x * a[i][k] + y * a[i][k + 1]
                        if k != nn - 1:
                            p += z * a[i][k + 2]
                            a[i][k + 2] -= p * r
                        a[i][k + 1] -= p * q
                        a[i][k] -= p
    return total, True


def hqr_eigen(m, max_total):
    a = [[float(v) for v in row] for row in np.asarray(m, dtype=float)]
    n = len(a)
    wr = [math.nan] * n
    wi = [math.nan] * n
    if n == 0:
        return np.empty(0), np.empty(0), 0, True
    _balance(a, n)
    _hessenberg(a, n)
    its, ok = _hqr(a, n, wr, wi, max_total)
    return np.asarray(wr), np.asarray(wi), its, ok
