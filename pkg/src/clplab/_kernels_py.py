"""Pure numpy implementations of the inner-loop kernels.

Same signatures as the compiled ``_kernels`` module; used when the
extension is unavailable or ``CLPLAB_PURE_PYTHON=1``.
"""

import numpy as np

# relative range below which a batch of advantages counts as constant
CONST_RTOL = 1e-12


def log_softmax_rows(z):
    z = np.asarray(z, dtype=float)
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def sample_actions(probs, xs, u):
    """Inverse-CDF draw of one action per ``(context, uniform)`` pair."""
    cdf = np.cumsum(probs[xs], axis=1)
    acts = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(acts, probs.shape[1] - 1).astype(np.int64)


def score_dlogits(probs, xs, acts, coef):
    """Rows ``coef[b] * (onehot(acts[b]) - probs[xs[b]])``."""
    dz = -probs[xs] * coef[:, None]
    dz[np.arange(len(xs)), acts] += coef
    return dz


def tabular_vjp(num_contexts, xs, dz):
    grad = np.zeros((num_contexts, dz.shape[1]))
    np.add.at(grad, xs, dz)
    return grad


def mlp2_forward(W1, b1, W2, b2, F):
    H = np.tanh(F @ W1.T + b1)
    return H, H @ W2.T + b2


def mlp2_vjp(W2, H, F, xs, dz):
    """Backpropagate per-example logit cotangents ``dz`` (summed over the batch)."""
    h = H[xs]
    gW2 = dz.T @ h
    gb2 = dz.sum(axis=0)
    dpre = (dz @ W2) * (1.0 - h * h)
    gW1 = dpre.T @ F[xs]
    gb1 = dpre.sum(axis=0)
    return gW1, gb1, gW2, gb2


def kl_rows(probs, logp, ref_logp):
    with np.errstate(invalid="ignore"):
        terms = np.where(probs > 0, probs * (logp - ref_logp), 0.0)
    return np.maximum(terms.sum(axis=1), 0.0)


def rollout_batch(probs, logp, ref_logp, rewards, w, alpha, xs, u, V, kl_x, eps, normalize):
    """Fused REINFORCE batch.

    Draws actions, forms the regularized per-sample objective and its
    baselined (optionally batch-normalized) advantage, and returns the score
    cotangents. ``stats`` holds mean objective, advantage mean, advantage
    std and mean per-context KL.
    """
    acts = sample_actions(probs, xs, u)
    raw = rewards[xs, acts]
    r = (1.0 - alpha) * (raw @ w) - alpha * (logp[xs, acts] - ref_logp[xs, acts])
    adv = r - ((1.0 - alpha) * (V[xs] @ w) - alpha * kl_x[xs])
    if normalize:
        adv = normalize_advantages(adv, eps)
    dz = score_dlogits(probs, xs, acts, adv)
    stats = np.array([r.mean(), adv.mean(), adv.std(), kl_x[xs].mean()])
    return acts, raw, dz, stats


def baseline_update(V, xs, raw, lr):
    """In-place MSE step of the per-context value table toward ``raw``."""
    g = np.zeros_like(V)
    np.add.at(g, xs, V[xs] - raw)
    V -= lr * g / len(xs)


def normalize_advantages(adv, eps):
    """``(A - mean) / (std + eps)``; a batch constant up to rounding maps to zeros."""
    lo, hi = float(adv.min()), float(adv.max())
    if hi - lo <= CONST_RTOL * max(1.0, -lo, hi):
        return np.zeros_like(adv)
    centered = adv - adv.mean()
    return centered / (centered.std() + eps)
