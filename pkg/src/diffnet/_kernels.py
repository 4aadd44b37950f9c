"""Compiled inner loops shared by the batch and online samplers.

State layout: ``z`` and ``t`` are int64 vectors with ``NULL`` (-1) for
missing values; ``alpha`` is a dense N x N float matrix. Potential parents
are padded index rows ``P[i, :deg[i]]`` and their inverse ``rev[j, :revcnt[j]]``
lists the nodes that have ``j`` as a potential parent.

Data enter only through ``tab[i, t - lo + 1]``: the log-likelihood of node
``i``'s window ``lo..hi`` when its infection time is ``t`` (``t < lo``
collapses to ``lo - 1``; null collapses to ``hi``).

Kernels report failures through integer status codes; the Python layer
turns them into exceptions.
"""
import math

import numpy as np
from numba import njit

NULL = -1
OK = 0
INFEASIBLE = 1
NUMERICAL = 2

NEG_INF = -np.inf


@njit(cache=True)
def log_gamma_pdf(a, k, th):
    if a < 0.0:
        return NEG_INF
    if a == 0.0:
        if k < 1.0:
            return np.inf
        if k > 1.0:
            return NEG_INF
        return -math.log(th)
    return (k - 1.0) * math.log(a) - a / th - math.lgamma(k) - k * math.log(th)


@njit(cache=True)
def law_logmass(i, zi, ti, t, alpha, P, deg, delay, hi):
    d = deg[i]
    if d == 0:
        return 0.0 if zi == NULL else NEG_INF
    tot = 0.0
    for q in range(d):
        tot += alpha[i, P[i, q]]
    if not tot > 0.0:
        return NEG_INF
    if ti == NULL:
        if zi != NULL:
            return NEG_INF
        s = 0.0
        for q in range(d):
            l = P[i, q]
            a = alpha[i, l]
            tl = t[l]
            if tl == NULL:
                s += a
            else:
                start = tl + delay[i, l]
                if start >= hi:
                    s += a
                else:
                    s += a * math.exp(-a * (hi - start))
        if not s > 0.0:
            return NEG_INF
        return math.log(s) - math.log(tot)
    if zi == NULL or ti > hi:
        return NEG_INF
    member = False
    for q in range(d):
        if P[i, q] == zi:
            member = True
            break
    if not member:
        return NEG_INF
    tl = t[zi]
    if tl == NULL:
        return NEG_INF
    start = tl + delay[i, zi]
    if ti <= start:
        return NEG_INF
    a = alpha[i, zi]
    if not a > 0.0:
        return NEG_INF
    return math.log(a) - math.log(tot) + math.log(-math.expm1(-a)) - a * (ti - start - 1)


@njit(cache=True)
def tab_index(x, lo, hi):
    if x == NULL:
        return hi - lo + 1
    if x < lo - 1:
        return 0
    return x - lo + 1


@njit(cache=True)
def sample_log_weights(w, n, rng):
    m = NEG_INF
    for k in range(n):
        if w[k] > m:
            m = w[k]
    if m == NEG_INF or math.isnan(m):
        return -1
    tot = 0.0
    for k in range(n):
        tot += math.exp(w[k] - m)
    u = rng.random() * tot
    acc = 0.0
    for k in range(n):
        acc += math.exp(w[k] - m)
        if u < acc:
            return k
    for k in range(n - 1, -1, -1):
        if w[k] > NEG_INF:
            return k
    return -1


@njit(cache=True)
def node_candidates(i, z, t, alpha, P, deg, rev, revcnt, delay, frozen,
                    clamp_mask, clamp_val, tab, lo, hi, fixed_time,
                    buf_z, buf_t, buf_s):
    """Enumerate the joint (parent, time) conditional of node ``i``.

    ``fixed_time`` restricts the time to its current value (parent-only
    update). Returns the number of candidates written to the buffers.
    """
    n = z.shape[0]
    has_child = False
    maxx = hi
    for k in range(n):
        if z[k] == i:
            has_child = True
            bound = t[k] - delay[k, i] - 1
            if bound < maxx:
                maxx = bound
    told = t[i]
    cnt = 0
    # candidate times: NULL first, then lo..maxx
    first = lo
    last = maxx
    allow_null = not has_child
    if fixed_time or clamp_mask[i]:
        x0 = told if fixed_time else clamp_val[i]
        if x0 != NULL and x0 > hi:
            x0 = NULL
        allow_null = allow_null and x0 == NULL
        if x0 == NULL:
            first = 1
            last = 0
        else:
            if x0 > maxx:
                first = 1
                last = 0
            else:
                first = x0
                last = x0
    ntimes = (1 if allow_null else 0) + max(0, last - first + 1)
    for c in range(ntimes):
        if allow_null and c == 0:
            x = NULL
        else:
            x = first + c - (1 if allow_null else 0)
        t[i] = x
        r = tab[i, tab_index(x, lo, hi)]
        for k in range(n):
            if z[k] == i and not frozen[k]:
                r += law_logmass(k, z[k], t[k], t, alpha, P, deg, delay, hi)
        for q in range(revcnt[i]):
            k = rev[i, q]
            if t[k] == NULL and not frozen[k]:
                r += law_logmass(k, NULL, NULL, t, alpha, P, deg, delay, hi)
        if deg[i] == 0 or x == NULL:
            buf_z[cnt] = NULL
            buf_t[cnt] = x
            buf_s[cnt] = r + law_logmass(i, NULL, x, t, alpha, P, deg, delay, hi)
            cnt += 1
        else:
            for q in range(deg[i]):
                l = P[i, q]
                if t[l] != NULL and t[l] + delay[i, l] < x:
                    buf_z[cnt] = l
                    buf_t[cnt] = x
                    buf_s[cnt] = r + law_logmass(i, l, x, t, alpha, P, deg, delay, hi)
                    cnt += 1
    t[i] = told
    return cnt


@njit(cache=True)
def update_node_zt(i, z, t, alpha, P, deg, rev, revcnt, delay, frozen,
                   clamp_mask, clamp_val, tab, lo, hi, fixed_time,
                   buf_z, buf_t, buf_s, rng):
    cnt = node_candidates(i, z, t, alpha, P, deg, rev, revcnt, delay, frozen,
                          clamp_mask, clamp_val, tab, lo, hi, fixed_time,
                          buf_z, buf_t, buf_s)
    k = sample_log_weights(buf_s, cnt, rng)
    if k < 0:
        return INFEASIBLE
    z[i] = buf_z[k]
    t[i] = buf_t[k]
    return OK


@njit(cache=True)
def alpha_logcond(a, i, j, z, t, alpha, P, deg, delay, kappa, theta, hi):
    if a <= 0.0:
        return NEG_INF
    old = alpha[i, j]
    alpha[i, j] = a
    v = law_logmass(i, z[i], t[i], t, alpha, P, deg, delay, hi)
    alpha[i, j] = old
    return v + log_gamma_pdf(a, kappa[i, j], theta[i, j])


@njit(cache=True)
def slice_alpha(i, j, z, t, alpha, P, deg, delay, kappa, theta, hi, max_steps, rng):
    """Stepping-out slice sampler on alpha[i, j] > 0 with width theta[i, j]."""
    x0 = alpha[i, j]
    w = theta[i, j]
    f0 = alpha_logcond(x0, i, j, z, t, alpha, P, deg, delay, kappa, theta, hi)
    if math.isnan(f0) or f0 == NEG_INF:
        return NUMERICAL
    y = f0 - rng.exponential()
    left = x0 - w * rng.random()
    right = left + w
    jl = int(max_steps * rng.random())
    kr = max_steps - 1 - jl
    while jl > 0 and left > 0.0 and y < alpha_logcond(left, i, j, z, t, alpha, P, deg, delay, kappa, theta, hi):
        left -= w
        jl -= 1
    while kr > 0 and y < alpha_logcond(right, i, j, z, t, alpha, P, deg, delay, kappa, theta, hi):
        right += w
        kr -= 1
    if left < 0.0:
        left = 0.0
    for _ in range(10000):
        x1 = left + rng.random() * (right - left)
        if y < alpha_logcond(x1, i, j, z, t, alpha, P, deg, delay, kappa, theta, hi):
            alpha[i, j] = x1
            return OK
        if x1 < x0:
            left = x1
        else:
            right = x1
    return NUMERICAL


@njit(cache=True)
def sweep(z, t, alpha, P, deg, rev, revcnt, delay, kappa, theta, frozen,
          clamp_mask, clamp_val, tab, lo, hi, update_zt, update_alpha,
          random_scan, max_steps, buf_z, buf_t, buf_s, order, rng, fail):
    n = z.shape[0]
    for k in range(n):
        order[k] = k
    if random_scan:
        for k in range(n - 1, 0, -1):
            m = rng.integers(0, k + 1)
            tmp = order[k]
            order[k] = order[m]
            order[m] = tmp
    for k in range(n):
        i = order[k]
        if frozen[i]:
            continue
        if update_zt:
            st = update_node_zt(i, z, t, alpha, P, deg, rev, revcnt, delay, frozen,
                                clamp_mask, clamp_val, tab, lo, hi, False,
                                buf_z, buf_t, buf_s, rng)
            if st != OK:
                fail[0] = i
                return st
        if update_alpha:
            for q in range(deg[i]):
                st = slice_alpha(i, P[i, q], z, t, alpha, P, deg, delay, kappa, theta,
                                 hi, max_steps, rng)
                if st != OK:
                    fail[0] = i
                    return st
    return OK


@njit(cache=True)
def log_target(z, t, alpha, P, deg, delay, kappa, theta, frozen, tab, lo, hi):
    """Data term plus law and gamma prior of every non-frozen node."""
    n = z.shape[0]
    s = 0.0
    for i in range(n):
        s += tab[i, tab_index(t[i], lo, hi)]
        if frozen[i]:
            continue
        s += law_logmass(i, z[i], t[i], t, alpha, P, deg, delay, hi)
        for q in range(deg[i]):
            j = P[i, q]
            s += log_gamma_pdf(alpha[i, j], kappa[i, j], theta[i, j])
    return s


@njit(cache=True)
def run_chain(z, t, alpha, P, deg, rev, revcnt, delay, kappa, theta, frozen,
              clamp_mask, clamp_val, tab, lo, hi, update_zt, update_alpha,
              random_scan, max_steps, n_mcmc, n_burn, n_thin, rng,
              out_z, out_t, out_a, out_iter, out_lp, fail):
    n = z.shape[0]
    width = 1
    for i in range(n):
        width += max(1, deg[i]) * (hi - lo + 2)
    buf_z = np.empty(width, dtype=np.int64)
    buf_t = np.empty(width, dtype=np.int64)
    buf_s = np.empty(width, dtype=np.float64)
    order = np.empty(n, dtype=np.int64)
    rec = 0
    for m in range(n_mcmc):
        st = sweep(z, t, alpha, P, deg, rev, revcnt, delay, kappa, theta, frozen,
                   clamp_mask, clamp_val, tab, lo, hi, update_zt, update_alpha,
                   random_scan, max_steps, buf_z, buf_t, buf_s, order, rng, fail)
        if st != OK:
            fail[1] = m
            return st
        step = m + 1 - n_burn
        if step > 0 and step % n_thin == 0:
            out_z[rec] = z
            out_t[rec] = t
            out_a[rec] = alpha
            out_iter[rec] = m + 1
            out_lp[rec] = log_target(z, t, alpha, P, deg, delay, kappa, theta,
                                     frozen, tab, lo, hi)
            rec += 1
    return OK


# ---------------------------------------------------------------------------
# Online block: transition, proposal, Metropolis-Hastings


@njit(cache=True)
def log_transition(z, t, alpha, zp, tp, ap, P, deg, delay, kappa, theta, hi):
    n = z.shape[0]
    s = 0.0
    for i in range(n):
        if tp[i] != NULL:
            if t[i] != tp[i] or z[i] != zp[i]:
                return NEG_INF
            for q in range(deg[i]):
                j = P[i, q]
                if alpha[i, j] != ap[i, j]:
                    return NEG_INF
            continue
        s += law_logmass(i, z[i], t[i], t, alpha, P, deg, delay, hi)
        for q in range(deg[i]):
            j = P[i, q]
            s += log_gamma_pdf(alpha[i, j], kappa[i, j], theta[i, j])
    return s


@njit(cache=True)
def time_proposal_null_mass(r, tml, lo, hi):
    s = 0.0
    for x in range(lo, hi + 1):
        s += 0.5 * r * (1.0 - r) ** abs(x - tml)
    return 1.0 - s


@njit(cache=True)
def clamp_in_window(v, hi):
    if v == NULL or v > hi:
        return NULL
    return v


@njit(cache=True)
def log_proposal(z, t, alpha, zp, tp, ap, P, deg, kappa, theta, rate, tml,
                 clamp_mask, clamp_val, lo, hi, consistent):
    n = z.shape[0]
    s = 0.0
    for i in range(n):
        if tp[i] != NULL:
            if t[i] != tp[i] or z[i] != zp[i]:
                return NEG_INF
            for q in range(deg[i]):
                j = P[i, q]
                if alpha[i, j] != ap[i, j]:
                    return NEG_INF
            continue
        # time
        if clamp_mask[i]:
            if t[i] != clamp_in_window(clamp_val[i], hi):
                return NEG_INF
        elif t[i] == NULL:
            s += math.log(time_proposal_null_mass(rate[i], tml[i], lo, hi))
        elif lo <= t[i] <= hi:
            r = rate[i]
            s += math.log(0.5 * r) + abs(t[i] - tml[i]) * math.log(1.0 - r)
        else:
            return NEG_INF
        # strengths
        for q in range(deg[i]):
            j = P[i, q]
            s += log_gamma_pdf(alpha[i, j], kappa[i, j], theta[i, j])
        # parent
        if t[i] == NULL:
            if z[i] != NULL:
                return NEG_INF
            continue
        tot = 0.0
        avail = 0.0
        rest = 0.0
        for q in range(deg[i]):
            l = P[i, q]
            tot += alpha[i, l]
            if t[l] != NULL and t[l] < t[i]:
                avail += alpha[i, l]
            else:
                rest += alpha[i, l]
        if z[i] == NULL:
            if deg[i] == 0 or avail == 0.0:
                continue
            if consistent or not rest > 0.0:
                return NEG_INF
            s += math.log(rest) - math.log(tot)
        else:
            l = z[i]
            ok = False
            for q in range(deg[i]):
                if P[i, q] == l:
                    ok = True
            if not ok or t[l] == NULL or t[l] >= t[i]:
                return NEG_INF
            s += math.log(alpha[i, l]) - math.log(avail if consistent else tot)
    return s


@njit(cache=True)
def propose(zp, tp, ap, P, deg, kappa, theta, rate, tml, clamp_mask, clamp_val,
            lo, hi, consistent, z, t, alpha, rng):
    """Three-stage draw (times, strengths, parents) anchored on a previous
    particle; writes into ``z, t, alpha``."""
    n = zp.shape[0]
    for i in range(n):
        if tp[i] != NULL:
            t[i] = tp[i]
        elif clamp_mask[i]:
            t[i] = clamp_in_window(clamp_val[i], hi)
        else:
            r = rate[i]
            u = rng.random()
            acc = 0.0
            t[i] = NULL
            for x in range(lo, hi + 1):
                acc += 0.5 * r * (1.0 - r) ** abs(x - tml[i])
                if u < acc:
                    t[i] = x
                    break
    for i in range(n):
        if tp[i] != NULL:
            for q in range(deg[i]):
                j = P[i, q]
                alpha[i, j] = ap[i, j]
        else:
            for q in range(deg[i]):
                j = P[i, q]
                alpha[i, j] = rng.gamma(kappa[i, j], theta[i, j])
    for i in range(n):
        if tp[i] != NULL:
            z[i] = zp[i]
            continue
        z[i] = NULL
        if t[i] == NULL or deg[i] == 0:
            continue
        tot = 0.0
        avail = 0.0
        for q in range(deg[i]):
            l = P[i, q]
            tot += alpha[i, l]
            if t[l] != NULL and t[l] < t[i]:
                avail += alpha[i, l]
        norm = avail if consistent else tot
        if not norm > 0.0:
            continue
        u = rng.random() * norm
        acc = 0.0
        for q in range(deg[i]):
            l = P[i, q]
            if t[l] != NULL and t[l] < t[i]:
                acc += alpha[i, l]
                if u < acc:
                    z[i] = l
                    break


@njit(cache=True)
def data_term(t, tab, lo, hi):
    s = 0.0
    for i in range(t.shape[0]):
        s += tab[i, tab_index(t[i], lo, hi)]
    return s


@njit(cache=True)
def online_block(Zp, Tp, Ap, P, deg, rev, revcnt, delay, kappa, theta, rate,
                 clamp_mask, clamp_val, tab, lo, hi, tml, n_mcmc, n_burn, n_thin,
                 n_sweeps, consistent, update_alpha, random_scan, max_steps, rng,
                 out_z, out_t, out_a, out_iter, out_lp, out_anchor, stats, fail):
    S, n = Zp.shape
    width = 1
    for i in range(n):
        width += max(1, deg[i]) * (hi - lo + 2)
    buf_z = np.empty(width, dtype=np.int64)
    buf_t = np.empty(width, dtype=np.int64)
    buf_s = np.empty(width, dtype=np.float64)
    order = np.empty(n, dtype=np.int64)
    zs = np.empty(n, dtype=np.int64)
    ts = np.empty(n, dtype=np.int64)
    as_ = np.zeros((n, n), dtype=np.float64)

    sc = rng.integers(0, S)
    z = Zp[sc].copy()
    t = Tp[sc].copy()
    alpha = Ap[sc].copy()
    frozen = Tp[sc] != NULL
    for _ in range(n_sweeps):
        st = sweep(z, t, alpha, P, deg, rev, revcnt, delay, kappa, theta, frozen,
                   clamp_mask, clamp_val, tab, lo, hi, True, update_alpha,
                   random_scan, max_steps, buf_z, buf_t, buf_s, order, rng, fail)
        if st != OK:
            fail[1] = -1
            return st
    accepted = 0
    rec = 0
    for m in range(n_mcmc):
        # joint draw
        sn = rng.integers(0, S)
        propose(Zp[sn], Tp[sn], Ap[sn], P, deg, kappa, theta, rate, tml, clamp_mask,
                clamp_val, lo, hi, consistent, zs, ts, as_, rng)
        lp_new = (data_term(ts, tab, lo, hi)
                  + log_transition(zs, ts, as_, Zp[sn], Tp[sn], Ap[sn], P, deg, delay, kappa, theta, hi)
                  - log_proposal(zs, ts, as_, Zp[sn], Tp[sn], Ap[sn], P, deg, kappa, theta, rate, tml,
                                 clamp_mask, clamp_val, lo, hi, consistent))
        lp_cur = (data_term(t, tab, lo, hi)
                  + log_transition(z, t, alpha, Zp[sc], Tp[sc], Ap[sc], P, deg, delay, kappa, theta, hi)
                  - log_proposal(z, t, alpha, Zp[sc], Tp[sc], Ap[sc], P, deg, kappa, theta, rate, tml,
                                 clamp_mask, clamp_val, lo, hi, consistent))
        if math.isnan(lp_new) or math.isnan(lp_cur):
            fail[1] = m
            return NUMERICAL
        if lp_new > NEG_INF:
            log_rho = lp_new - lp_cur
            if log_rho >= 0.0 or rng.random() < math.exp(log_rho):
                z[:] = zs
                t[:] = ts
                alpha[:] = as_
                sc = sn
                accepted += 1
        # refinement
        for i in range(n):
            frozen[i] = Tp[sc, i] != NULL
        for _ in range(n_sweeps):
            st = sweep(z, t, alpha, P, deg, rev, revcnt, delay, kappa, theta, frozen,
                       clamp_mask, clamp_val, tab, lo, hi, True, update_alpha,
                       random_scan, max_steps, buf_z, buf_t, buf_s, order, rng, fail)
            if st != OK:
                fail[1] = m
                return st
        step = m + 1 - n_burn
        if step > 0 and step % n_thin == 0:
            out_z[rec] = z
            out_t[rec] = t
            out_a[rec] = alpha
            out_iter[rec] = m + 1
            out_anchor[rec] = sc
            out_lp[rec] = log_target(z, t, alpha, P, deg, delay, kappa, theta, frozen, tab, lo, hi)
            rec += 1
    stats[0] = accepted
    return OK
