# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner-loop kernels. Mirrors ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, tanh

cdef double CONST_RTOL = 1e-12

cnp.import_array()


def log_softmax_rows(const double[:, ::1] z):
    cdef Py_ssize_t C = z.shape[0], A = z.shape[1], x, a
    cdef double zmax, s
    out = np.empty((C, A))
    cdef double[:, ::1] o = out
    for x in range(C):
        zmax = z[x, 0]
        for a in range(1, A):
            if z[x, a] > zmax:
                zmax = z[x, a]
        s = 0.0
        for a in range(A):
            s += exp(z[x, a] - zmax)
        s = log(s)
        for a in range(A):
            o[x, a] = z[x, a] - zmax - s
    return out


def sample_actions(const double[:, ::1] probs, const cnp.int64_t[::1] xs, const double[::1] u):
    cdef Py_ssize_t B = xs.shape[0], A = probs.shape[1], b, a, x
    cdef double c
    out = np.empty(B, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    for b in range(B):
        x = xs[b]
        c = 0.0
        o[b] = A - 1
        for a in range(A):
            c += probs[x, a]
            if c > u[b]:
                o[b] = a
                break
    return out


def score_dlogits(const double[:, ::1] probs, const cnp.int64_t[::1] xs, const cnp.int64_t[::1] acts, const double[::1] coef):
    cdef Py_ssize_t B = xs.shape[0], A = probs.shape[1], b, a, x
    out = np.empty((B, A))
    cdef double[:, ::1] o = out
    for b in range(B):
        x = xs[b]
        for a in range(A):
            o[b, a] = -probs[x, a] * coef[b]
        o[b, acts[b]] += coef[b]
    return out


def tabular_vjp(Py_ssize_t num_contexts, const cnp.int64_t[::1] xs, const double[:, ::1] dz):
    cdef Py_ssize_t B = xs.shape[0], A = dz.shape[1], b, a, x
    grad = np.zeros((num_contexts, A))
    cdef double[:, ::1] g = grad
    for b in range(B):
        x = xs[b]
        for a in range(A):
            g[x, a] += dz[b, a]
    return grad


def mlp2_forward(const double[:, ::1] W1, const double[::1] b1, const double[:, ::1] W2, const double[::1] b2, const double[:, ::1] F):
    cdef Py_ssize_t C = F.shape[0], d = F.shape[1], h = W1.shape[0], A = W2.shape[0]
    cdef Py_ssize_t x, j, k, a
    cdef double s
    H = np.empty((C, h))
    Z = np.empty((C, A))
    cdef double[:, ::1] Hv = H
    cdef double[:, ::1] Zv = Z
    for x in range(C):
        for j in range(h):
            s = b1[j]
            for k in range(d):
                s += W1[j, k] * F[x, k]
            Hv[x, j] = tanh(s)
        for a in range(A):
            s = b2[a]
            for j in range(h):
                s += W2[a, j] * Hv[x, j]
            Zv[x, a] = s
    return H, Z


def mlp2_vjp(const double[:, ::1] W2, const double[:, ::1] H, const double[:, ::1] F, const cnp.int64_t[::1] xs, const double[:, ::1] dz):
    cdef Py_ssize_t B = xs.shape[0], d = F.shape[1], h = W2.shape[1], A = W2.shape[0]
    cdef Py_ssize_t b, x, j, k, a
    cdef double s, hv
    gW1 = np.zeros((h, d))
    gb1 = np.zeros(h)
    gW2 = np.zeros((A, h))
    gb2 = np.zeros(A)
    cdef double[:, ::1] gW1v = gW1
    cdef double[::1] gb1v = gb1
    cdef double[:, ::1] gW2v = gW2
    cdef double[::1] gb2v = gb2
    for b in range(B):
        x = xs[b]
        for a in range(A):
            gb2v[a] += dz[b, a]
            for j in range(h):
                gW2v[a, j] += dz[b, a] * H[x, j]
        for j in range(h):
            s = 0.0
            for a in range(A):
                s += dz[b, a] * W2[a, j]
            hv = H[x, j]
            s *= 1.0 - hv * hv
            gb1v[j] += s
            for k in range(d):
                gW1v[j, k] += s * F[x, k]
    return gW1, gb1, gW2, gb2


def kl_rows(const double[:, ::1] probs, const double[:, ::1] logp, const double[:, ::1] ref_logp):
    cdef Py_ssize_t C = probs.shape[0], A = probs.shape[1], x, a
    cdef double s
    out = np.empty(C)
    cdef double[::1] o = out
    for x in range(C):
        s = 0.0
        for a in range(A):
            if probs[x, a] > 0:
                s += probs[x, a] * (logp[x, a] - ref_logp[x, a])
        o[x] = s if s > 0 else 0.0
    return out


def rollout_batch(const double[:, ::1] probs, const double[:, ::1] logp, const double[:, ::1] ref_logp,
                  const double[:, :, ::1] rewards, const double[::1] w, double alpha,
                  const cnp.int64_t[::1] xs, const double[::1] u, const double[:, ::1] V,
                  const double[::1] kl_x, double eps, bint normalize):
    cdef Py_ssize_t B = xs.shape[0], A = probs.shape[1], m = w.shape[0], b, a, i, x, act
    cdef double c, scal, base, mean_r = 0.0, mean_a = 0.0, var = 0.0, sd, mean_kl = 0.0, d
    cdef double lo, hi
    acts = sample_actions(probs, xs, u)
    cdef cnp.int64_t[::1] av = acts
    raw = np.empty((B, m))
    adv = np.empty(B)
    cdef double[:, ::1] rv = raw
    cdef double[::1] advv = adv
    for b in range(B):
        x = xs[b]
        act = av[b]
        scal = 0.0
        base = 0.0
        for i in range(m):
            rv[b, i] = rewards[x, act, i]
            scal += w[i] * rewards[x, act, i]
            base += w[i] * V[x, i]
        c = (1.0 - alpha) * scal - alpha * (logp[x, act] - ref_logp[x, act])
        mean_r += c
        mean_kl += kl_x[x]
        advv[b] = c - ((1.0 - alpha) * base - alpha * kl_x[x])
    mean_r /= B
    mean_kl /= B
    for b in range(B):
        mean_a += advv[b]
    mean_a /= B
    for b in range(B):
        d = advv[b] - mean_a
        var += d * d
    sd = (var / B) ** 0.5
    if normalize:
        lo = advv[0]
        hi = advv[0]
        for b in range(B):
            lo = min(lo, advv[b])
            hi = max(hi, advv[b])
        # a batch that is constant up to rounding counts as zero-variance
        if hi - lo <= CONST_RTOL * max(1.0, max(-lo, hi)):
            for b in range(B):
                advv[b] = 0.0
        else:
            for b in range(B):
                advv[b] = (advv[b] - mean_a) / (sd + eps)
        mean_a = 0.0
        var = 0.0
        for b in range(B):
            mean_a += advv[b]
        mean_a /= B
        for b in range(B):
            d = advv[b] - mean_a
            var += d * d
        sd = (var / B) ** 0.5
    dz = score_dlogits(probs, xs, acts, adv)
    return acts, raw, dz, np.array([mean_r, mean_a, sd, mean_kl])


def baseline_update(double[:, ::1] V, const cnp.int64_t[::1] xs, const double[:, ::1] raw, double lr):
    cdef Py_ssize_t B = xs.shape[0], m = V.shape[1], b, i, x
    cdef double scale = lr / B
    g = np.zeros((V.shape[0], m))
    cdef double[:, ::1] gv = g
    for b in range(B):
        x = xs[b]
        for i in range(m):
            gv[x, i] += V[x, i] - raw[b, i]
    for x in range(V.shape[0]):
        for i in range(m):
            V[x, i] -= scale * gv[x, i]
