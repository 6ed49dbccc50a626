"""Data model, prior construction, likelihoods, and the generative model.

The prior follows the hierarchical conjugate setup

    eta ~ Dirichlet(gamma_K, ..., gamma_K)
    mu_k ~ N(b0, B0)
    Sigma_k | C0 ~ W^-1(c0, C0)
    C0 ~ W(g0, G0)

with data-driven defaults: b0 the column medians, B0 the diagonal of
squared column ranges, c0 = c + (r+1)/2, g0 = 1 + (r-1)/2,
C0_init = c * phi * S and G0 = g0 * C0_init^-1, where S is the diagonal
of the empirical covariance.  Under these choices the prior mean of
Sigma_k is phi * S.
"""

from dataclasses import dataclass, field

import numpy as np

from . import distributions as dist


# ---------------------------------------------------------------------------
# configuration types


@dataclass(frozen=True)
class FixedGamma:
    """Constant Dirichlet parameter, whatever the number of components."""
    gamma: float

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    def gamma_for(self, K):
        return self.gamma


@dataclass(frozen=True)
class DynamicGamma:
    """Dirichlet parameter gamma_K = alpha / K."""
    alpha: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    def gamma_for(self, K):
        return self.alpha / K


@dataclass(frozen=True)
class FixedK:
    K: int


@dataclass(frozen=True)
class SparseK:
    """Deliberately overfitted mixture: K components, tiny fixed gamma."""
    K: int
    gamma: float


@dataclass(frozen=True)
class RandomK:
    """Beta-negative-binomial prior on K - 1, truncated at k_max.

    k_init sets the starting K (= starting K_plus) of the chain.
    """
    a_l: float
    a_pi: float
    b_pi: float
    k_max: int = 100
    k_init: int = 10


@dataclass
class Dataset:
    y: np.ndarray                      # (N, r)
    feature_names: list
    true_labels: np.ndarray = None     # optional, length N, any label values

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 2 or self.y.shape[0] < 1 or self.y.shape[1] < 1:
            raise ValueError("y must be a nonempty N x r matrix")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("y must be finite")
        if len(self.feature_names) != self.y.shape[1]:
            raise ValueError("feature_names must have one entry per column")
        if self.true_labels is not None:
            self.true_labels = np.asarray(self.true_labels)
            if self.true_labels.shape[0] != self.y.shape[0]:
                raise ValueError("true_labels must have one entry per row")

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def r(self):
        return self.y.shape[1]


@dataclass
class PriorConfig:
    gamma_spec: object                 # FixedGamma or DynamicGamma
    b0: np.ndarray
    B0: np.ndarray
    c: float
    phi: float
    c0: float
    g0: float
    C0_init: np.ndarray
    G0: np.ndarray
    k_prior: object                    # FixedK, SparseK, or RandomK


@dataclass
class MixtureState:
    """One point of the MCMC state space.

    S holds 0-based component labels; N_k and K_plus are derived from it
    via refresh_counts and must be kept in sync by every mutating step.
    """
    K: int
    eta: np.ndarray                    # (K,)
    mu: np.ndarray                     # (K, r)
    Sigma: np.ndarray                  # (K, r, r)
    C0: np.ndarray                     # (r, r)
    S: np.ndarray                      # (N,) ints in 0..K-1
    N_k: np.ndarray = field(default=None)
    K_plus: int = field(default=None)

    def __post_init__(self):
        if self.N_k is None:
            self.refresh_counts()

    def refresh_counts(self):
        self.N_k = np.bincount(self.S, minlength=self.K)
        self.K_plus = int(np.count_nonzero(self.N_k))


@dataclass
class ChainConfig:
    n_iter: int = 30000
    burn_in: int = 5000
    seed: int = 0
    store_assignments: bool = True
    permutation_step: bool = False
    thinning: int = 1

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_iter")
        if self.thinning < 1:
            raise ValueError("thinning must be at least 1")


# ---------------------------------------------------------------------------
# prior construction


def build_default_prior(data, c=2.5, phi=0.75, gamma_spec=None, k_prior=None):
    """Assemble the data-driven hierarchical prior described above.

    Raises on degenerate input: fewer than two observations or a
    zero-range column would produce a singular B0 or S.
    """
    if c <= 0 or phi <= 0:
        raise ValueError("c and phi must be positive")
    y = data.y
    if data.n < 2:
        raise ValueError("prior construction needs at least two observations")
    r = data.r
    b0 = np.median(y, axis=0)
    ranges = y.max(axis=0) - y.min(axis=0)
    if np.any(ranges <= 0):
        bad = [data.feature_names[j] for j in np.flatnonzero(ranges <= 0)]
        raise ValueError(f"constant column(s) make the prior degenerate: {bad}")
    B0 = np.diag(ranges ** 2)
    S = np.diag(np.atleast_1d(np.var(y, axis=0, ddof=1)))
    c0 = c + (r + 1) / 2.0
    g0 = 1.0 + (r - 1) / 2.0
    C0_init = c * phi * S
    G0 = g0 * np.linalg.inv(C0_init)
    if gamma_spec is None:
        gamma_spec = FixedGamma(1.0)
    if k_prior is None:
        k_prior = FixedK(1)
    return PriorConfig(gamma_spec=gamma_spec, b0=b0, B0=B0, c=c, phi=phi,
                       c0=c0, g0=g0, C0_init=C0_init, G0=G0, k_prior=k_prior)


# ---------------------------------------------------------------------------
# likelihoods


def _log_weighted_densities(data, state):
    with np.errstate(divide="ignore"):
        log_eta = np.log(state.eta)
    return log_eta[None, :] + dist.log_mvnormal_density_batch(
        data.y, state.mu, state.Sigma)


def mixture_log_likelihood(data, state):
    """Sum over observations of log sum_k eta_k f_N(y_i | mu_k, Sigma_k).

    The inner sum is evaluated over sorted terms, which makes the value
    bit-identical under any permutation of the component labels.
    """
    logm = _log_weighted_densities(data, state)
    rowmax = logm.max(axis=1)
    if np.any(np.isneginf(rowmax)):
        return float("-inf")
    terms = np.exp(np.sort(logm - rowmax[:, None], axis=1))
    return float(np.sum(np.log(terms.sum(axis=1)) + rowmax))


def complete_data_log_likelihood(data, state):
    """Sum over observations of log eta_{S_i} + log f_N(y_i | mu_{S_i}, Sigma_{S_i})."""
    logm = _log_weighted_densities(data, state)
    return float(logm[np.arange(data.n), state.S].sum())


# ---------------------------------------------------------------------------
# generative model


def generate_synthetic(prior, N, rng):
    """Draw a dataset from the hierarchical model, returning the truth too.

    K comes from the prior's k_prior: fixed for FixedK/SparseK, a draw of
    1 + BNB(a_l, a_pi, b_pi) for RandomK (via the beta mixture of
    negative binomials).
    """
    kp = prior.k_prior
    if isinstance(kp, (FixedK, SparseK)):
        K = kp.K
    elif isinstance(kp, RandomK):
        p = rng.beta(kp.a_pi, kp.b_pi)
        K = 1 + int(rng.negative_binomial(kp.a_l, p))
    else:
        raise ValueError(f"unsupported k_prior: {kp!r}")
    r = prior.b0.shape[0]
    gamma_K = prior.gamma_spec.gamma_for(K)
    eta = dist.sample_dirichlet(np.full(K, gamma_K), rng)
    C0 = dist.sample_wishart(dist.WishartParams(prior.g0, prior.G0), rng)
    Sigma = dist.sample_inv_wishart_batch(
        np.full(K, prior.c0), np.broadcast_to(C0, (K, r, r)).copy(), rng)
    mu = dist.sample_mvnormal_batch(
        np.broadcast_to(prior.b0, (K, r)).copy(),
        np.broadcast_to(prior.B0, (K, r, r)).copy(), rng)
    cum = np.cumsum(eta)
    S = np.minimum(np.searchsorted(cum, rng.random(N), side="right"), K - 1)
    L = np.linalg.cholesky(Sigma)
    z = rng.standard_normal((N, r))
    y = mu[S] + np.einsum("nij,nj->ni", L[S], z)
    state = MixtureState(K=K, eta=eta, mu=mu, Sigma=Sigma, C0=C0, S=S)
    names = [f"x{j + 1}" for j in range(r)]
    data = Dataset(y=y, feature_names=names, true_labels=S.copy())
    return data, state
