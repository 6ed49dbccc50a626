"""Post-processing of mixture MCMC output.

Turns raw sweeps into an identified model and point partitions:

1. restrict to sweeps with a chosen number of filled clusters,
2. resolve label switching by clustering the pooled component means,
3. summarize the relabeled draws and extract point partitions
   (marginal mode and minimum expected variation of information),
4. score partitions against a reference (adjusted Rand, misclassification).
"""

from dataclasses import dataclass

import numpy as np

from .clustering import kmeans


class EmptySelectionError(ValueError):
    """No sweep matches the requested number of filled clusters."""


class IdentificationError(RuntimeError):
    """Relabeling failed to produce an identified model."""


@dataclass
class Partition:
    """A hard clustering of the observations, labels 1..n_groups."""
    labels: np.ndarray
    n_groups: int


@dataclass
class FilteredDraws:
    k_plus: int
    sweep_indices: np.ndarray
    eta: np.ndarray       # (T, k_plus)
    mu: np.ndarray        # (T, k_plus, r)
    Sigma: np.ndarray     # (T, k_plus, r, r)
    N_k: np.ndarray       # (T, k_plus)
    S: np.ndarray         # (T, N) or None


@dataclass
class IdentifiedDraws:
    k_plus: int
    kept: np.ndarray                  # indices into the filtered sweeps
    non_permutation_rate: float
    eta: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray
    N_k: np.ndarray
    S: np.ndarray                     # relabeled assignments or None


@dataclass
class PosteriorSummary:
    """Posterior means in identified-label order plus a size-ascending view."""
    mean_eta: np.ndarray
    mean_mu: np.ndarray
    mean_Sigma: np.ndarray
    mean_N_k: np.ndarray
    report_order: np.ndarray


@dataclass
class ConfusionResult:
    table: np.ndarray
    mcr: float
    row_labels: np.ndarray
    col_labels: np.ndarray


def _as_labels(partition):
    if isinstance(partition, Partition):
        return np.asarray(partition.labels)
    return np.asarray(partition)


def kplus_distribution(chain):
    """Relative frequency of the number of filled clusters across records."""
    counts = {}
    for rec in chain.records:
        counts[rec.K_plus] = counts.get(rec.K_plus, 0) + 1
    total = len(chain.records)
    return {k: counts[k] / total for k in sorted(counts)}


def filter_to_kplus(chain, k_plus):
    """Keep sweeps with exactly k_plus filled components, dropping empty slots.

    Filled components keep their relative order; assignments are remapped
    to the compacted slots when they were stored.
    """
    keep, eta, mu, Sigma, N_k, S = [], [], [], [], [], []
    have_S = all(rec.S is not None for rec in chain.records)
    for t, rec in enumerate(chain.records):
        if rec.K_plus != k_plus:
            continue
        filled = np.flatnonzero(rec.N_k > 0)
        keep.append(t)
        eta.append(rec.eta[filled])
        mu.append(rec.mu[filled])
        Sigma.append(rec.Sigma[filled])
        N_k.append(rec.N_k[filled])
        if have_S:
            remap = np.full(rec.K, -1)
            remap[filled] = np.arange(k_plus)
            S.append(remap[rec.S])
    if not keep:
        raise EmptySelectionError(f"no sweep has {k_plus} filled clusters")
    return FilteredDraws(
        k_plus=k_plus, sweep_indices=np.array(keep),
        eta=np.array(eta), mu=np.array(mu), Sigma=np.array(Sigma),
        N_k=np.array(N_k), S=np.array(S) if have_S else None)


def ppr_identify(filtered, rng, functional=None):
    """Resolve label switching by clustering the pooled sweep-level draws.

    The component functionals of all sweeps (by default the means mu_k)
    are pooled and clustered into k_plus groups by k-means. A sweep whose
    k_plus draws land in k_plus distinct groups defines a relabeling
    permutation; sweeps that fail this are dropped and their fraction is
    reported as the non-permutation rate.

    Parameters
    ----------
    filtered : FilteredDraws
    rng : numpy Generator
    functional : callable, optional
        Maps FilteredDraws to a (T, k_plus, d) array to cluster on;
        defaults to the component means.

    Returns
    -------
    IdentifiedDraws
    """
    pooled_src = filtered.mu if functional is None else functional(filtered)
    T, kp = pooled_src.shape[0], filtered.k_plus
    pooled = pooled_src.reshape(T * kp, -1)
    result = kmeans(pooled, kp, rng)
    if result.n_nonempty < kp:
        raise IdentificationError(
            f"pooled draws collapse to {result.n_nonempty} < {kp} groups")
    lab = result.labels.reshape(T, kp)
    ok = np.array([np.unique(row).size == kp for row in lab])
    kept = np.flatnonzero(ok)
    if kept.size == 0:
        raise IdentificationError("no sweep maps to a label permutation")
    rate = 1.0 - kept.size / T

    perms = lab[kept]
    idx = np.arange(kept.size)[:, None]
    eta = np.empty_like(filtered.eta[kept])
    mu = np.empty_like(filtered.mu[kept])
    Sigma = np.empty_like(filtered.Sigma[kept])
    N_k = np.empty_like(filtered.N_k[kept])
    eta[idx, perms] = filtered.eta[kept]
    mu[idx, perms] = filtered.mu[kept]
    Sigma[idx, perms] = filtered.Sigma[kept]
    N_k[idx, perms] = filtered.N_k[kept]
    S = None
    if filtered.S is not None:
        S = np.take_along_axis(perms, filtered.S[kept], axis=1)
    return IdentifiedDraws(k_plus=kp, kept=kept, non_permutation_rate=rate,
                           eta=eta, mu=mu, Sigma=Sigma, N_k=N_k, S=S)


def posterior_summary(identified):
    """Posterior means per identified cluster.

    Arrays are indexed by identified label; report_order lists labels by
    ascending mean cluster size for stable presentation.
    """
    mean_N = identified.N_k.mean(axis=0)
    return PosteriorSummary(
        mean_eta=identified.eta.mean(axis=0),
        mean_mu=identified.mu.mean(axis=0),
        mean_Sigma=identified.Sigma.mean(axis=0),
        mean_N_k=mean_N,
        report_order=np.argsort(mean_N, kind="stable"))


def map_partition(S):
    """Observation-wise modal assignment over relabeled sweeps.

    Ties go to the smallest label. Labels are compacted to 1..n_groups,
    preserving the ascending order of the original labels.
    """
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[0] < 1:
        raise ValueError("need a (T, N) array of assignments")
    kmax = int(S.max()) + 1
    N = S.shape[1]
    counts = np.zeros((N, kmax), dtype=int)
    for t in range(S.shape[0]):
        np.add.at(counts, (np.arange(N), S[t]), 1)
    modal = counts.argmax(axis=1)
    used = np.unique(modal)
    remap = np.zeros(kmax, dtype=int)
    remap[used] = np.arange(1, used.size + 1)
    return Partition(labels=remap[modal], n_groups=int(used.size))


def coallocation_matrix(S):
    """Mean co-clustering indicator over sweeps; (N, N), unit diagonal."""
    S = np.asarray(S)
    T, N = S.shape
    kmax = int(S.max()) + 1
    C = np.zeros((N, N))
    for lo in range(0, T, 2000):
        block = S[lo:lo + 2000]
        H = (block[:, :, None] == np.arange(kmax)[None, None, :]).astype(float)
        C += np.tensordot(H, H, axes=([0, 2], [0, 2]))
    return C / T


def _canonical_rows(S):
    """Relabel each row by order of first appearance so equal partitions match."""
    out = np.empty_like(S)
    for t in range(S.shape[0]):
        first = {}
        row = S[t]
        canon = np.empty_like(row)
        nxt = 0
        for i, v in enumerate(row):
            if v not in first:
                first[v] = nxt
                nxt += 1
            canon[i] = first[v]
        out[t] = canon
    return out


def _entropy_and_joint(a, b):
    na = int(a.max()) + 1
    nb = int(b.max()) + 1
    n = a.size
    cont = np.bincount(a * nb + b, minlength=na * nb).reshape(na, nb)
    p = cont / n
    pa = p.sum(axis=1)
    pb = p.sum(axis=0)

    def ent(q):
        q = q[q > 0]
        return -np.sum(q * np.log(q))

    return ent(pa), ent(pb), ent(p.ravel())


def variation_of_information(a, b):
    """VI distance between two partitions, natural log."""
    a = _as_labels(a)
    b = _as_labels(b)
    ha, hb, hab = _entropy_and_joint(a - a.min(), b - b.min())
    return 2.0 * hab - ha - hb


def vi_partition(S, thin_to=2000):
    """Sampled partition minimizing the expected VI distance.

    Sweeps are thinned deterministically (evenly spaced) to at most
    thin_to, duplicate partitions collapse to one candidate weighted by
    multiplicity, and every candidate is scored against the weighted set.
    Ties go to the earliest candidate.
    """
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[0] < 2:
        raise ValueError("need at least two sweeps of assignments")
    T = S.shape[0]
    if T > thin_to:
        S = S[np.linspace(0, T - 1, thin_to).astype(int)]
    canon = _canonical_rows(S)
    uniq, first_idx, weights = np.unique(canon, axis=0, return_index=True,
                                         return_counts=True)
    order = np.argsort(first_idx, kind="stable")
    uniq, weights = uniq[order], weights[order]
    U = uniq.shape[0]
    scores = np.zeros(U)
    for i in range(U):
        for j in range(i + 1, U):
            d = variation_of_information(uniq[i], uniq[j])
            scores[i] += weights[j] * d
            scores[j] += weights[i] * d
    best = uniq[int(np.argmin(scores))]
    groups = np.unique(best)
    remap = np.zeros(groups.max() + 1, dtype=int)
    remap[groups] = np.arange(1, groups.size + 1)
    return Partition(labels=remap[best], n_groups=int(groups.size))


def ari(a, b):
    """Adjusted Rand index (Hubert-Arabie) between two partitions."""
    a = _as_labels(a)
    b = _as_labels(b)
    if a.shape != b.shape:
        raise ValueError("partitions must cover the same observations")
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    cont = np.bincount(ia * ub.size + ib,
                       minlength=ua.size * ub.size).reshape(ua.size, ub.size)
    n = a.size

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_ij = comb2(cont).sum()
    sum_a = comb2(cont.sum(axis=1)).sum()
    sum_b = comb2(cont.sum(axis=0)).sum()
    expected = sum_a * sum_b / comb2(n)
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def confusion_and_mcr(estimated, truth):
    """Confusion table and misclassification rate against reference labels.

    Rows are reference groups, columns estimated groups, both ordered by
    ascending group size (ties by label); the i-th row is matched with
    the i-th column for the error count.
    """
    est = _as_labels(estimated)
    ref = _as_labels(truth)
    if est.shape != ref.shape:
        raise ValueError("label vectors must have equal length")
    ur, ir = np.unique(ref, return_inverse=True)
    ue, ie = np.unique(est, return_inverse=True)
    cont = np.bincount(ir * ue.size + ie,
                       minlength=ur.size * ue.size).reshape(ur.size, ue.size)
    row_order = np.argsort(cont.sum(axis=1), kind="stable")
    col_order = np.argsort(cont.sum(axis=0), kind="stable")
    table = cont[np.ix_(row_order, col_order)]
    matched = np.trace(table[:min(table.shape), :min(table.shape)])
    mcr = 1.0 - matched / est.size
    return ConfusionResult(table=table, mcr=float(mcr),
                           row_labels=ur[row_order], col_labels=ue[col_order])
