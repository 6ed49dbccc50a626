"""Random draws and density evaluations used by the mixture samplers.

The Wishart convention used throughout is W(alpha, V) with density

    f(Y | alpha, V) propto |Y|^(alpha - (r+1)/2) exp{-tr(V Y)},

which equals a standard Wishart with degrees of freedom 2*alpha and scale
matrix (2V)^-1, so E[Y] = alpha * V^-1.  The inverse Wishart W^-1(alpha, V)
is the distribution of the inverse of such a draw, with mean
2V / (2*alpha - r - 1) when 2*alpha > r + 1.  This translation lives only
in this module; everything else calls these functions.
"""

import numpy as np
from scipy.special import betaln, gammaln


class WishartParams:
    """Parameter pair (alpha, V) for the W(alpha, V) convention above.

    Parameters
    ----------
    alpha : float
        Must exceed (r - 1)/2 so the normalizer is finite.
    V : ndarray, shape (r, r)
        Symmetric positive definite.
    """

    def __init__(self, alpha, V):
        V = np.asarray(V, dtype=float)
        if V.ndim != 2 or V.shape[0] != V.shape[1]:
            raise ValueError("V must be a square matrix")
        if not np.all(np.abs(V - V.T) < 1e-10):
            raise ValueError("V must be symmetric within 1e-10")
        # symmetrize exactly so the Cholesky factor is well defined
        V = 0.5 * (V + V.T)
        try:
            np.linalg.cholesky(V)
        except np.linalg.LinAlgError as exc:
            raise ValueError("V must be positive definite") from exc
        r = V.shape[0]
        if not alpha > (r - 1) / 2:
            raise ValueError(f"alpha must exceed (r-1)/2 = {(r - 1) / 2}")
        self.alpha = float(alpha)
        self.V = V
        self.r = r


def sample_dirichlet(e, rng):
    """Draw a weight vector from Dirichlet(e_1, ..., e_K)."""
    e = np.asarray(e, dtype=float)
    if e.ndim != 1 or e.size == 0 or not np.all(np.isfinite(e)) or np.any(e <= 0):
        raise ValueError("Dirichlet parameters must be finite and positive")
    draw = rng.dirichlet(e)
    # tiny parameters can underflow single coordinates to zero; the sum
    # stays positive, so renormalizing keeps the simplex constraint exact
    return draw / draw.sum()


def sample_categorical(p, rng):
    """Draw one index with probability proportional to the weights p."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0 or not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("categorical weights must be finite and nonnegative")
    total = p.sum()
    if total <= 0:
        raise ValueError("categorical weights must have positive mass")
    idx = np.searchsorted(np.cumsum(p / total), rng.random(), side="right")
    # rounding can leave the final cumulative weight a hair below 1
    return int(min(idx, p.size - 1))


def sample_mvnormal(b, B, rng):
    """Draw from N(b, B) via the Cholesky factor of B."""
    b = np.asarray(b, dtype=float)
    B = np.asarray(B, dtype=float)
    try:
        L = np.linalg.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance must be positive definite") from exc
    return b + L @ rng.standard_normal(b.shape[0])


def sample_mvnormal_batch(b, B, rng):
    """Draw one N(b[k], B[k]) vector for each k; b is (m, r), B is (m, r, r)."""
    b = np.asarray(b, dtype=float)
    B = np.asarray(B, dtype=float)
    L = np.linalg.cholesky(B)
    z = rng.standard_normal(b.shape)
    return b + np.einsum("kij,kj->ki", L, z)


def _bartlett_batch(alpha, V, rng):
    """Stacked W(alpha[k], V[k]) draws via the Bartlett decomposition.

    Degrees of freedom 2*alpha need not be integer: the diagonal uses
    chi-square draws with df = 2*alpha - i for row i, the strict lower
    triangle standard normals.
    """
    alpha = np.asarray(alpha, dtype=float)
    V = np.asarray(V, dtype=float)
    m, r = V.shape[0], V.shape[1]
    if np.any(alpha <= (r - 1) / 2):
        raise ValueError(f"alpha must exceed (r-1)/2 = {(r - 1) / 2}")
    scale = 0.5 * np.linalg.inv(V)
    scale = 0.5 * (scale + np.transpose(scale, (0, 2, 1)))
    L = np.linalg.cholesky(scale)
    df = 2.0 * alpha[:, None] - np.arange(r)[None, :]
    A = np.zeros((m, r, r))
    idx = np.arange(r)
    A[:, idx, idx] = np.sqrt(rng.chisquare(df))
    il, jl = np.tril_indices(r, -1)
    if il.size:
        A[:, il, jl] = rng.standard_normal((m, il.size))
    LA = L @ A
    return LA @ np.transpose(LA, (0, 2, 1))


def sample_wishart(params, rng):
    """Draw one matrix from W(alpha, V) in the convention of this module."""
    return _bartlett_batch(np.array([params.alpha]), params.V[None, :, :], rng)[0]


def sample_wishart_batch(alpha, V, rng):
    """Stacked W(alpha[k], V[k]) draws; alpha is (m,), V is (m, r, r)."""
    return _bartlett_batch(alpha, V, rng)


def sample_inv_wishart(params, rng):
    """Draw one matrix from W^-1(alpha, V): the inverse of a W(alpha, V) draw."""
    return np.linalg.inv(sample_wishart(params, rng))


def sample_inv_wishart_batch(alpha, V, rng):
    """Stacked W^-1(alpha[k], V[k]) draws."""
    return np.linalg.inv(_bartlett_batch(alpha, V, rng))


def log_mvnormal_density(y, mu, Sigma):
    """Log density of N(mu, Sigma) at y, via the Cholesky factor of Sigma."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    r = y.shape[0]
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Sigma must be positive definite") from exc
    dev = np.linalg.solve(L, y - mu)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * (r * np.log(2.0 * np.pi) + logdet + dev @ dev)


def log_mvnormal_density_batch(Y, mu, Sigma):
    """Matrix of log N(mu[k], Sigma[k]) densities at the rows of Y.

    Parameters
    ----------
    Y : ndarray, shape (N, r)
    mu : ndarray, shape (K, r)
    Sigma : ndarray, shape (K, r, r)

    Returns
    -------
    ndarray, shape (N, K)
    """
    Y = np.asarray(Y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    N, r = Y.shape
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("every Sigma must be positive definite") from exc
    dev = Y[None, :, :] - mu[:, None, :]                      # (K, N, r)
    sol = np.linalg.solve(L, np.transpose(dev, (0, 2, 1)))    # (K, r, N)
    maha = np.sum(sol * sol, axis=1)                          # (K, N)
    ii = np.arange(r)
    logdet = 2.0 * np.sum(np.log(L[:, ii, ii]), axis=1)       # (K,)
    out = -0.5 * (r * np.log(2.0 * np.pi) + logdet[:, None] + maha)
    return out.T


def log_multivariate_gamma(alpha, r):
    """Log of Gamma_r(alpha) = pi^(r(r-1)/4) * prod_j Gamma((2*alpha + 1 - j)/2)."""
    j = np.arange(1, r + 1)
    args = (2.0 * alpha + 1.0 - j) / 2.0
    if np.any(args <= 0):
        raise ValueError("every gamma argument (2*alpha + 1 - j)/2 must be positive")
    return r * (r - 1) / 4.0 * np.log(np.pi) + np.sum(gammaln(args))


def bnb_log_pmf(k_minus_1, a_l, a_pi, b_pi):
    """Log pmf of the beta-negative-binomial BNB(a_l, a_pi, b_pi) at k_minus_1.

    P(X = x) = Gamma(a_l + x) / (x! Gamma(a_l)) * B(a_pi + a_l, b_pi + x) / B(a_pi, b_pi)

    Accepts scalar or array x; x must be a nonnegative integer value.
    """
    if a_l <= 0 or a_pi <= 0 or b_pi <= 0:
        raise ValueError("BNB parameters must be positive")
    x = np.asarray(k_minus_1, dtype=float)
    if np.any(x < 0) or np.any(x != np.floor(x)):
        raise ValueError("BNB support is the nonnegative integers")
    out = (gammaln(a_l + x) - gammaln(x + 1.0) - gammaln(a_l)
           + betaln(a_pi + a_l, b_pi + x) - betaln(a_pi, b_pi))
    return out if out.ndim else float(out)
