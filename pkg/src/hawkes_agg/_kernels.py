"""Compiled inner loops.

Event data are passed as one flat sorted-per-process array plus offsets, so
process ``p`` occupies ``flat[offsets[p]:offsets[p + 1]]``. Flattened
parameter order everywhere is ``(nu_1..nu_P, alpha row-major, beta row-major)``.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def pair_recursions(tm, tn, beta, order):
    """Exponential sums of source ``tn`` evaluated at each receiving time in ``tm``.

    Returns ``(R0, R1, R2)`` where ``R_d[k] = sum_{i: tn[i] < tm[k]}
    (tm[k] - tn[i])**d * exp(-beta * (tm[k] - tn[i]))``. ``R1``/``R2`` are only
    filled when ``order`` is at least 1/2.
    """
    K = tm.shape[0]
    Nn = tn.shape[0]
    R0 = np.zeros(K)
    R1 = np.zeros(K)
    R2 = np.zeros(K)
    r0 = 0.0
    r1 = 0.0
    r2 = 0.0
    prev = 0.0
    j = 0
    for k in range(K):
        t = tm[k]
        if k > 0:
            d = t - prev
            if d > 0.0:
                e = math.exp(-beta * d)
                if order >= 2:
                    r2 = e * (r2 + 2.0 * d * r1 + d * d * r0)
                if order >= 1:
                    r1 = e * (r1 + d * r0)
                r0 = e * r0
        # strict inequality: ties across processes do not excite each other
        while j < Nn and tn[j] < t:
            u = t - tn[j]
            e = math.exp(-beta * u)
            r0 += e
            if order >= 1:
                r1 += u * e
            if order >= 2:
                r2 += u * u * e
            j += 1
        R0[k] = r0
        R1[k] = r1
        R2[k] = r2
        prev = t
    return R0, R1, R2


@njit(cache=True)
def exact_loglik(flat, offsets, T, nu, alpha, beta, order):
    """Continuous-time log-likelihood with optional gradient and Hessian."""
    P = nu.shape[0]
    D = P * (1 + 2 * P)
    L = 1 + 2 * P
    grad = np.zeros(D)
    hess = np.zeros((D, D))
    value = 0.0
    loc = np.empty(L, dtype=np.int64)
    dl = np.zeros(L)
    for m in range(P):
        tm = flat[offsets[m]:offsets[m + 1]]
        K = tm.shape[0]
        R0 = np.zeros((P, K))
        R1 = np.zeros((P, K))
        R2 = np.zeros((P, K))
        loc[0] = m
        for n in range(P):
            ia = P + m * P + n
            ib = P + P * P + m * P + n
            loc[1 + n] = ia
            loc[1 + P + n] = ib
            tn = flat[offsets[n]:offsets[n + 1]]
            b = beta[m, n]
            a = alpha[m, n]
            r0, r1, r2 = pair_recursions(tm, tn, b, order)
            R0[n, :] = r0
            R1[n, :] = r1
            R2[n, :] = r2
            A = 0.0
            B = 0.0
            C = 0.0
            for i in range(tn.shape[0]):
                u = T - tn[i]
                e = math.exp(-b * u)
                A += -math.expm1(-b * u)
                B += u * e
                C += u * u * e
            value -= a / b * A
            if order >= 1:
                grad[ia] += -A / b
                grad[ib] += a * A / (b * b) - a * B / b
            if order >= 2:
                hab = A / (b * b) - B / b
                hess[ia, ib] += hab
                hess[ib, ia] += hab
                hess[ib, ib] += -2.0 * a * A / (b * b * b) + 2.0 * a * B / (b * b) + a * C / b
        value -= nu[m] * T
        if order >= 1:
            grad[m] -= T
        for k in range(K):
            lam = nu[m]
            for n in range(P):
                lam += alpha[m, n] * R0[n, k]
            value += math.log(lam)
            if order >= 1:
                inv = 1.0 / lam
                dl[0] = 1.0
                for n in range(P):
                    dl[1 + n] = R0[n, k]
                    dl[1 + P + n] = -alpha[m, n] * R1[n, k]
                for x in range(L):
                    grad[loc[x]] += dl[x] * inv
                if order >= 2:
                    inv2 = inv * inv
                    for x in range(L):
                        for y in range(L):
                            hess[loc[x], loc[y]] -= dl[x] * dl[y] * inv2
                    for n in range(P):
                        ia = loc[1 + n]
                        ib = loc[1 + P + n]
                        v = -R1[n, k] * inv
                        hess[ia, ib] += v
                        hess[ib, ia] += v
                        hess[ib, ib] += alpha[m, n] * R2[n, k] * inv
    return value, grad, hess


@njit(cache=True)
def binned_loglik(counts, delta, nu, alpha, beta, order):
    """Poisson log-likelihood of counts with the CIF frozen at each left bin edge.

    Past counts act as point masses at the left edge of their own bin.
    """
    K = counts.shape[0]
    P = nu.shape[0]
    D = P * (1 + 2 * P)
    L = 1 + 2 * P
    grad = np.zeros(D)
    hess = np.zeros((D, D))
    value = 0.0
    loc = np.empty(L, dtype=np.int64)
    dl = np.zeros(L)
    S0 = np.zeros(P)
    S1 = np.zeros(P)
    S2 = np.zeros(P)
    for p in range(P):
        loc[0] = p
        for m in range(P):
            loc[1 + m] = P + p * P + m
            loc[1 + P + m] = P + P * P + p * P + m
        S0[:] = 0.0
        S1[:] = 0.0
        S2[:] = 0.0
        for j in range(K):
            if j > 0:
                for m in range(P):
                    e = math.exp(-beta[p, m] * delta)
                    prevc = counts[j - 1, m]
                    s0 = S0[m]
                    s1 = S1[m]
                    S2[m] = e * (S2[m] + 2.0 * delta * s1 + delta * delta * (s0 + prevc))
                    S1[m] = e * (s1 + delta * (s0 + prevc))
                    S0[m] = e * (s0 + prevc)
            lam = nu[p]
            for m in range(P):
                lam += alpha[p, m] * S0[m]
            c = counts[j, p]
            if c > 0.0:
                value += c * math.log(delta * lam)
            value -= delta * lam
            if order >= 1:
                f1 = c / lam - delta
                dl[0] = 1.0
                for m in range(P):
                    dl[1 + m] = S0[m]
                    dl[1 + P + m] = -alpha[p, m] * S1[m]
                for x in range(L):
                    grad[loc[x]] += f1 * dl[x]
                if order >= 2:
                    f2 = c / (lam * lam)
                    for x in range(L):
                        for y in range(L):
                            hess[loc[x], loc[y]] -= f2 * dl[x] * dl[y]
                    for m in range(P):
                        ia = loc[1 + m]
                        ib = loc[1 + P + m]
                        v = -f1 * S1[m]
                        hess[ia, ib] += v
                        hess[ib, ia] += v
                        hess[ib, ib] += f1 * alpha[p, m] * S2[m]
    return value, grad, hess


@njit(cache=True)
def simulate_thinning(rng, nu, alpha, beta, T):
    """Ogata thinning; the bound is the total CIF just after the latest point."""
    P = nu.shape[0]
    exc = np.zeros((P, P))
    lam = np.zeros(P)
    cap = 1024
    times = np.empty(cap)
    labels = np.empty(cap, dtype=np.int64)
    n = 0
    t = 0.0
    tau = 0.0
    bound = 0.0
    for p in range(P):
        bound += nu[p]
    while bound > 0.0:
        t += rng.standard_exponential() / bound
        if t >= T:
            break
        total = 0.0
        for p in range(P):
            s = nu[p]
            for m in range(P):
                exc[p, m] *= math.exp(-beta[p, m] * (t - tau))
                s += exc[p, m]
            lam[p] = s
            total += s
        tau = t
        u = rng.random() * bound
        if u <= total:
            acc = 0.0
            q = P - 1
            for p in range(P):
                acc += lam[p]
                if u <= acc:
                    q = p
                    break
            if n == cap:
                cap *= 2
                nt = np.empty(cap)
                nl = np.empty(cap, dtype=np.int64)
                nt[:n] = times[:n]
                nl[:n] = labels[:n]
                times = nt
                labels = nl
            times[n] = t
            labels[n] = q
            n += 1
            bound = total
            for p in range(P):
                exc[p, q] += alpha[p, q]
                bound += alpha[p, q]
        else:
            bound = total
    return times[:n].copy(), labels[:n].copy()


@njit(cache=True)
def _superposed_integral(nu, exc, beta, d):
    return nu * d - exc / beta * math.expm1(-beta * d)


@njit(cache=True)
def sample_superposed(rng, counts, delta, nu, alpha, beta, tol):
    """Draw consistent superposed times bin by bin and return their log-density.

    Within bin ``[a, b)`` holding ``n`` points, the points are iid with density
    proportional to ``nu + E * exp(-beta * (t - a))``, the CIF carried in from
    earlier bins (``E`` is the excitation at ``a``), then sorted. This is the
    law of an inhomogeneous Poisson process conditioned on its count, so the
    sorted set has log-density ``log n! + sum log lam(t_i) - n log U`` with
    ``U`` the integrated CIF over the bin. Each draw inverts the CDF by bisection.
    """
    K = counts.shape[0]
    N = 0
    for j in range(K):
        N += counts[j]
    out = np.empty(N)
    logq = 0.0
    idx = 0
    E = 0.0
    decay_bin = math.exp(-beta * delta)
    for j in range(K):
        n = counts[j]
        a = j * delta
        b = (j + 1) * delta
        if n > 0:
            U = _superposed_integral(nu, E, beta, delta)
            logq += math.lgamma(n + 1.0) - n * math.log(U)
            start = idx
            for i in range(n):
                target = rng.random() * U
                lo = a
                hi = b
                while hi - lo > tol:
                    mid = 0.5 * (lo + hi)
                    if _superposed_integral(nu, E, beta, mid - a) < target:
                        lo = mid
                    else:
                        hi = mid
                t = 0.5 * (lo + hi)
                if t >= b:
                    t = np.nextafter(b, a)
                out[idx] = t
                idx += 1
                logq += math.log(nu + E * math.exp(-beta * (t - a)))
            out[start:idx] = np.sort(out[start:idx])
            E *= decay_bin
            for i in range(start, idx):
                E += alpha * math.exp(-beta * (b - out[i]))
        else:
            E *= decay_bin
    return out, logq
