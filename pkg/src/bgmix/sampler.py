"""Gibbs samplers for the Gaussian mixture model.

Three modes share the same conditional updates:

* ``fixed_k``: data augmentation Gibbs sweep with K constant.
* ``sfm``: the same sweep run deliberately overfitted (large K, tiny
  Dirichlet parameter) so superfluous components empty out.
* ``telescoping``: K itself is sampled each sweep conditional on the
  current partition, empty components are re-drawn from the prior.

All updates are written against stacked arrays so a sweep costs a fixed
number of numpy calls regardless of K.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import distributions as dist
from .clustering import kmeans
from .model import (ChainConfig, Dataset, FixedK, MixtureState, PriorConfig,
                    RandomK, SparseK, mixture_log_likelihood)


class NumericalError(RuntimeError):
    """A conditional update lost all probability mass to underflow."""


class SamplerError(RuntimeError):
    """A sweep failed; the message carries the iteration index."""


@dataclass
class SweepRecord:
    iter: int
    K: int
    K_plus: int
    eta: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray
    N_k: np.ndarray
    S: np.ndarray          # None when assignments are not stored
    log_lik: float


@dataclass
class ChainOutput:
    records: list
    config: ChainConfig
    prior: PriorConfig
    wall_time: float
    seed: int
    mode: str
    trace: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# initialization


def init_from_kmeans(data, prior, K, rng):
    """Rough-partition start: k-means labels, cluster means, Sigma_k = phi*S.

    k-means runs on column-standardized data so no single scale dominates
    the starting partition; all state built from it uses the raw data.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    sd = np.std(data.y, axis=0, ddof=1)
    sd[sd == 0] = 1.0
    result = kmeans((data.y - data.y.mean(axis=0)) / sd, K, rng)
    S = result.labels.copy()
    mu = np.empty((K, data.r))
    grand = data.y.mean(axis=0)
    for k in range(K):
        members = S == k
        mu[k] = data.y[members].mean(axis=0) if np.any(members) else grand
    Svar = np.diag(np.atleast_1d(np.var(data.y, axis=0, ddof=1)))
    Sigma = np.broadcast_to(prior.phi * Svar, (K, data.r, data.r)).copy()
    eta = np.full(K, 1.0 / K)
    return MixtureState(K=K, eta=eta, mu=mu, Sigma=Sigma,
                        C0=prior.C0_init.copy(), S=S)


# ---------------------------------------------------------------------------
# conditional updates


def step_classify(data, state, rng):
    """Redraw every assignment S_i from its conditional given the parameters."""
    with np.errstate(divide="ignore"):
        log_eta = np.log(state.eta)
    logp = log_eta[None, :] + dist.log_mvnormal_density_batch(
        data.y, state.mu, state.Sigma)
    rowmax = logp.max(axis=1)
    dead = np.isneginf(rowmax)
    if np.any(dead):
        i = int(np.flatnonzero(dead)[0])
        raise NumericalError(f"all component densities underflowed for "
                             f"observation {i}")
    p = np.exp(logp - rowmax[:, None])
    p /= p.sum(axis=1, keepdims=True)
    u = rng.random(data.n)
    state.S = np.minimum((np.cumsum(p, axis=1) < u[:, None]).sum(axis=1),
                         state.K - 1)
    state.refresh_counts()
    return state


def step_weights(state, gamma_K, rng):
    """Redraw eta ~ Dirichlet(gamma_K + N_1, ..., gamma_K + N_K), empty slots included."""
    state.eta = dist.sample_dirichlet(gamma_K + state.N_k, rng)
    return state


def step_component_params(data, state, prior, rng):
    """Redraw (mu_k, Sigma_k) for every component slot in the state.

    Empty slots reduce to prior-conditional draws: mu_k ~ N(b0, B0) and
    Sigma_k ~ W^-1(c0, C0), since the posterior factors collapse at
    N_k = 0.
    """
    K, r = state.K, data.r
    Nk = state.N_k.astype(float)
    B0_inv = np.linalg.inv(prior.B0)
    Sig_inv = np.linalg.inv(state.Sigma)
    Bk = np.linalg.inv(B0_inv[None, :, :] + Nk[:, None, None] * Sig_inv)
    Bk = 0.5 * (Bk + np.transpose(Bk, (0, 2, 1)))
    sums = np.zeros((K, r))
    np.add.at(sums, state.S, data.y)
    rhs = (B0_inv @ prior.b0)[None, :] + np.einsum("kij,kj->ki", Sig_inv, sums)
    bk = np.einsum("kij,kj->ki", Bk, rhs)
    state.mu = dist.sample_mvnormal_batch(bk, Bk, rng)

    dev = data.y - state.mu[state.S]
    scatter = np.zeros((K, r, r))
    np.add.at(scatter, state.S, dev[:, :, None] * dev[:, None, :])
    Ck = state.C0[None, :, :] + 0.5 * scatter
    state.Sigma = dist.sample_inv_wishart_batch(prior.c0 + Nk / 2.0, Ck, rng)
    return state


def step_hyper(state, prior, rng, filled_only):
    """Redraw the hyperparameter C0 given the component covariances.

    With filled_only the conditional uses only components that currently
    hold observations; otherwise all K slots enter.
    """
    if filled_only:
        idx = np.flatnonzero(state.N_k > 0)
        if idx.size == 0:
            raise ValueError("hyperparameter update needs at least one "
                             "filled component")
        Sigmas = state.Sigma[idx]
    else:
        Sigmas = state.Sigma
    kprime = Sigmas.shape[0]
    rate = prior.G0 + np.linalg.inv(Sigmas).sum(axis=0)
    params = dist.WishartParams(prior.g0 + kprime * prior.c0, rate)
    state.C0 = dist.sample_wishart(params, rng)
    return state


def _log_partition_given_k(K, N_k, gamma_K):
    """log p(partition | K, gamma_K) from the Dirichlet-multinomial law.

    p = K!/(K-K+)! * gamma^K+ * Gamma(K gamma)/Gamma(K gamma + N)
        * prod_k Gamma(N_k + gamma)/Gamma(1 + gamma)

    The gamma^K+ factor matters whenever gamma_K varies with K; without
    it the expression is not a partition probability (at N = 1 it would
    equal 1/gamma_K instead of 1).
    """
    K = np.asarray(K, dtype=float)
    gamma_K = np.asarray(gamma_K, dtype=float)
    N_k = np.asarray(N_k, dtype=float)
    kplus = N_k.size
    N = N_k.sum()
    per_cluster = (gammaln(N_k[None, :] + gamma_K[:, None])
                   - gammaln(1.0 + gamma_K[:, None])).sum(axis=1)
    return (gammaln(K + 1) - gammaln(K - kplus + 1)
            + kplus * np.log(gamma_K)
            + gammaln(K * gamma_K) - gammaln(K * gamma_K + N)
            + per_cluster)


def step_sample_K(state, prior, rng):
    """Redraw K conditional on the current cluster sizes (telescoping step).

    Evaluated in log space over K in {K_plus, ..., k_max} and normalized;
    the Dirichlet parameter is resolved per candidate K, so the dynamic
    gamma_K = alpha/K specification enters every factor.
    """
    kp = prior.k_prior
    if not isinstance(kp, RandomK):
        raise ValueError("sampling K requires a RandomK prior")
    kplus = state.K_plus
    if kp.k_max < kplus:
        raise ValueError(f"k_max = {kp.k_max} is below the current number "
                         f"of clusters {kplus}")
    Kcand = np.arange(kplus, kp.k_max + 1)
    gam = np.array([prior.gamma_spec.gamma_for(K) for K in Kcand])
    filled = state.N_k[state.N_k > 0]
    logw = (_log_partition_given_k(Kcand, filled, gam)
            + dist.bnb_log_pmf(Kcand - 1, kp.a_l, kp.a_pi, kp.b_pi))
    logw -= logw.max()
    w = np.exp(logw)
    state.K = int(Kcand[dist.sample_categorical(w, rng)])
    return state


def compact_filled(state):
    """Drop empty component slots, keeping filled ones in their relative order."""
    filled = np.flatnonzero(state.N_k > 0)
    remap = np.full(state.K, -1)
    remap[filled] = np.arange(filled.size)
    state.S = remap[state.S]
    state.eta = state.eta[filled]
    state.mu = state.mu[filled]
    state.Sigma = state.Sigma[filled]
    state.K = int(filled.size)
    state.refresh_counts()
    return state


def step_add_empty(state, prior, rng):
    """Grow the state to K slots by drawing empty components from the prior.

    Precondition: filled components occupy the leading slots (state was
    compacted) and state.K already holds the target K.
    """
    m = state.K - state.mu.shape[0]
    if m < 0:
        raise ValueError("state holds more components than K")
    if m == 0:
        state.refresh_counts()
        return state
    r = state.mu.shape[1]
    mu_new = dist.sample_mvnormal_batch(
        np.broadcast_to(prior.b0, (m, r)).copy(),
        np.broadcast_to(prior.B0, (m, r, r)).copy(), rng)
    Sigma_new = dist.sample_inv_wishart_batch(
        np.full(m, prior.c0), np.broadcast_to(state.C0, (m, r, r)).copy(), rng)
    state.mu = np.concatenate([state.mu, mu_new])
    state.Sigma = np.concatenate([state.Sigma, Sigma_new])
    state.eta = np.concatenate([state.eta, np.zeros(m)])
    state.refresh_counts()
    return state


def permute_labels_random(state, rng):
    """Apply a uniformly random permutation to the component labels."""
    perm = rng.permutation(state.K)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(state.K)
    state.eta = state.eta[perm]
    state.mu = state.mu[perm]
    state.Sigma = state.Sigma[perm]
    state.S = inv[state.S]
    state.refresh_counts()
    return state


# ---------------------------------------------------------------------------
# chain driver


_MODE_PRIORS = {"fixed_k": FixedK, "sfm": SparseK, "telescoping": RandomK}


def run_chain(data, prior, config, mode, rng=None):
    """Run one MCMC chain and return its stored records plus trace series.

    Parameters
    ----------
    data : Dataset
    prior : PriorConfig
        k_prior must match the mode: FixedK for "fixed_k", SparseK for
        "sfm", RandomK for "telescoping".
    config : ChainConfig
    mode : str
        One of "fixed_k", "sfm", "telescoping".
    rng : numpy Generator, optional
        Defaults to default_rng(config.seed); pass one only to continue
        an existing stream.

    Returns
    -------
    ChainOutput
        Records cover post-burn-in sweeps at the configured thinning;
        the trace dict carries per-iteration series for every sweep
        including burn-in.
    """
    if mode not in _MODE_PRIORS:
        raise ValueError(f"unknown mode {mode!r}")
    if not isinstance(prior.k_prior, _MODE_PRIORS[mode]):
        raise ValueError(f"mode {mode!r} needs a {_MODE_PRIORS[mode].__name__} "
                         f"prior, got {type(prior.k_prior).__name__}")
    if mode == "sfm":
        gamma_check = prior.gamma_spec.gamma_for(prior.k_prior.K)
        if abs(gamma_check - prior.k_prior.gamma) > 1e-12:
            raise ValueError("SparseK gamma and gamma_spec disagree")
    if rng is None:
        rng = np.random.default_rng(config.seed)

    if isinstance(prior.k_prior, RandomK):
        k_init = prior.k_prior.k_init
    else:
        k_init = prior.k_prior.K

    t0 = time.perf_counter()
    state = init_from_kmeans(data, prior, k_init, rng)
    telescoping = mode == "telescoping"
    M, burn, thin = config.n_iter, config.burn_in, config.thinning
    records = []
    trace_loglik = np.empty(M)
    trace_K = np.empty(M, dtype=int)
    trace_Kplus = np.empty(M, dtype=int)
    trace_mu1 = None if telescoping else np.empty((M, k_init))

    for it in range(M):
        try:
            if telescoping:
                step_classify(data, state, rng)
                compact_filled(state)
                step_component_params(data, state, prior, rng)
                step_sample_K(state, prior, rng)
                step_add_empty(state, prior, rng)
                step_weights(state, prior.gamma_spec.gamma_for(state.K), rng)
                step_hyper(state, prior, rng, filled_only=True)
            else:
                step_classify(data, state, rng)
                step_component_params(data, state, prior, rng)
                step_hyper(state, prior, rng, filled_only=False)
                step_weights(state, prior.gamma_spec.gamma_for(state.K), rng)
            if config.permutation_step:
                permute_labels_random(state, rng)
        except Exception as exc:
            raise SamplerError(f"iteration {it}: {exc}") from exc

        log_lik = mixture_log_likelihood(data, state)
        trace_loglik[it] = log_lik
        trace_K[it] = state.K
        trace_Kplus[it] = state.K_plus
        if trace_mu1 is not None:
            trace_mu1[it] = state.mu[:, 0]
        if it >= burn and (it - burn) % thin == 0:
            records.append(SweepRecord(
                iter=it, K=state.K, K_plus=state.K_plus,
                eta=state.eta.copy(), mu=state.mu.copy(),
                Sigma=state.Sigma.copy(), N_k=state.N_k.copy(),
                S=state.S.copy() if config.store_assignments else None,
                log_lik=log_lik))

    trace = {"log_lik": trace_loglik, "K": trace_K, "K_plus": trace_Kplus}
    if trace_mu1 is not None:
        trace["mu1"] = trace_mu1
    return ChainOutput(records=records, config=config, prior=prior,
                       wall_time=time.perf_counter() - t0, seed=config.seed,
                       mode=mode, trace=trace)
