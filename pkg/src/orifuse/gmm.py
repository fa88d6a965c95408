"""Mixture modeling of projected demonstrations and reference extraction.

Demonstrations are projected into the angle-axis chart of an auxiliary frame,
stacked as (t, psi, psi_dot) rows in R^7, fit with a Gaussian mixture, and
condensed into a probabilistic reference trajectory by conditioning on time.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import so3
from .errors import DegenerateData, SeriesTooShort

DEFAULT_COMPONENTS = 5
COVARIANCE_FLOOR = 1e-8
EM_MAX_ITER = 500
EM_REL_TOL = 1e-8


@dataclass(frozen=True)
class Demonstration:
    """Uniformly sampled orientation trajectory (t_n, R_n)."""

    times: np.ndarray       # (N,)
    rotations: np.ndarray   # (N, 3, 3)
    positions: np.ndarray | None = None  # optional (N, 3), carried for interop

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        R = np.asarray(self.rotations, dtype=float)
        if t.ndim != 1 or R.shape != (t.shape[0], 3, 3):
            raise ValueError("times must be (N,) and rotations (N, 3, 3)")
        if t.shape[0] >= 2 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "rotations", R)

    def __len__(self):
        return self.times.shape[0]

    @property
    def dt(self):
        if len(self) < 2:
            raise SeriesTooShort("demonstration has fewer than 2 samples")
        return float(self.times[1] - self.times[0])


@dataclass(frozen=True)
class ProjectedDemonstration:
    """Chart-space trajectory (t_n, eta_n) with eta = [psi, psi_dot]."""

    times: np.ndarray  # (N,)
    eta: np.ndarray    # (N, 6)


@dataclass(frozen=True)
class GaussianMixture:
    priors: np.ndarray        # (K,)
    means: np.ndarray         # (K, 7)
    covariances: np.ndarray   # (K, 7, 7)
    log_likelihoods: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def n_components(self):
        return self.priors.shape[0]


@dataclass(frozen=True)
class ReferenceTrajectory:
    times: np.ndarray        # (N,)
    means: np.ndarray        # (N, 6)
    covariances: np.ndarray  # (N, 6, 6)

    def __len__(self):
        return self.times.shape[0]


def project_demonstrations(demos, R_aux):
    """Project each demonstration into the chart around R_aux.

    psi_n = log(R_aux^T R_n); psi_dot by finite differences on the uniform
    time grid of each demonstration.
    """
    R_aux = so3.check_rotation(R_aux, name="R_aux")
    out = []
    for demo in demos:
        if len(demo) < 2:
            raise SeriesTooShort("demonstrations need at least 2 samples")
        psi = so3.log_map_many(np.einsum("ji,njk->nik", R_aux, demo.rotations))
        psi_dot = so3.finite_difference_velocity(psi, demo.dt)
        out.append(ProjectedDemonstration(demo.times.copy(), np.hstack([psi, psi_dot])))
    return out


def stack_training_rows(projected):
    """Stack projected demonstrations into (t, eta) rows in R^7."""
    rows = [np.column_stack([p.times, p.eta]) for p in projected]
    return np.vstack(rows)


def _log_gaussian(data, mean, cov):
    """Row-wise log N(x; mean, cov) via a Cholesky solve."""
    dim = mean.shape[0]
    try:
        factor = cho_factor(cov, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DegenerateData(f"covariance not positive definite: {exc}") from exc
    diff = data - mean
    solved = cho_solve(factor, diff.T)
    maha = np.einsum("ij,ji->i", diff, solved)
    logdet = 2.0 * np.sum(np.log(np.diag(factor[0])))
    return -0.5 * (maha + logdet + dim * np.log(2.0 * np.pi))


def _kmeanspp_init(data, k, rng):
    """k-means++ seeding followed by a hard assignment."""
    n = data.shape[0]
    centers = np.empty((k, data.shape[1]))
    centers[0] = data[rng.integers(n)]
    d2 = np.sum((data - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = data[rng.integers(n)]
        else:
            centers[j] = data[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((data - centers[j]) ** 2, axis=1))
    dists = ((data[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(dists, axis=1)
    priors = np.empty(k)
    means = np.empty_like(centers)
    covs = np.empty((k, data.shape[1], data.shape[1]))
    eye = np.eye(data.shape[1])
    for j in range(k):
        members = data[labels == j]
        if members.shape[0] == 0:
            members = data[[rng.integers(n)]]
        priors[j] = max(members.shape[0], 1) / n
        means[j] = members.mean(axis=0)
        diff = members - means[j]
        covs[j] = diff.T @ diff / members.shape[0] + COVARIANCE_FLOOR * eye
    priors /= priors.sum()
    return priors, means, covs


def fit_gmm(data, n_components=DEFAULT_COMPONENTS, seed=0, max_iter=EM_MAX_ITER,
            rel_tol=EM_REL_TOL, cov_floor=COVARIANCE_FLOOR):
    """Fit a Gaussian mixture over (t, eta) rows by EM.

    k-means++ initialization from the given seed, responsibilities computed in
    log space, a cov_floor * I added in every M-step.  Stops when the relative
    log-likelihood improvement drops below rel_tol.  The per-iteration
    log-likelihood trace is kept on the returned mixture.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("data must be a 2-d row matrix")
    n, dim = data.shape
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    if n < 10 * n_components:
        raise DegenerateData(
            f"{n} rows cannot support {n_components} components (need >= {10 * n_components})"
        )
    rng = np.random.default_rng(seed)
    priors, means, covs = _kmeanspp_init(data, n_components, rng)
    eye = np.eye(dim)
    trace = []
    prev_ll = -np.inf
    for _ in range(max_iter):
        # E-step in log space
        log_prob = np.empty((n, n_components))
        for k in range(n_components):
            log_prob[:, k] = np.log(priors[k]) + _log_gaussian(data, means[k], covs[k])
        top = log_prob.max(axis=1, keepdims=True)
        log_norm = top[:, 0] + np.log(np.exp(log_prob - top).sum(axis=1))
        ll = float(log_norm.mean())
        trace.append(ll)
        resp = np.exp(log_prob - log_norm[:, None])
        # M-step with covariance floor
        weights = resp.sum(axis=0)
        if np.any(weights <= 0):
            raise DegenerateData("a mixture component lost all responsibility")
        priors = weights / n
        means = (resp.T @ data) / weights[:, None]
        for k in range(n_components):
            diff = data - means[k]
            covs[k] = (resp[:, k][:, None] * diff).T @ diff / weights[k] + cov_floor * eye
        if np.isfinite(prev_ll) and ll - prev_ll < rel_tol * max(abs(prev_ll), 1.0):
            break
        prev_ll = ll
    priors = priors / priors.sum()
    for k in range(n_components):
        try:
            np.linalg.cholesky(covs[k])
        except np.linalg.LinAlgError as exc:
            raise DegenerateData("rank-deficient component after flooring") from exc
    return GaussianMixture(priors, means, covs, np.asarray(trace))


def _conditioning_terms(gmm):
    """Per-component terms reused across query times.

    Returns (slopes (K,6), cond_covs (K,6,6)): the conditional mean is
    mu_eta + slope * (t - mu_t) and the conditional covariance is constant.
    """
    k = gmm.n_components
    slopes = np.empty((k, 6))
    cond_covs = np.empty((k, 6, 6))
    for j in range(k):
        var_t = gmm.covariances[j, 0, 0]
        cross = gmm.covariances[j, 1:, 0]
        slopes[j] = cross / var_t
        cond_covs[j] = gmm.covariances[j, 1:, 1:] - np.outer(cross, cross) / var_t
        cond_covs[j] = 0.5 * (cond_covs[j] + cond_covs[j].T)
    return slopes, cond_covs


def _gmr_batch(gmm, times):
    """Condition the mixture on each query time (moment-matched covariance)."""
    times = np.asarray(times, dtype=float)
    q = times.shape[0]
    k = gmm.n_components
    slopes, cond_covs = _conditioning_terms(gmm)
    mu_t = gmm.means[:, 0]
    var_t = gmm.covariances[:, 0, 0]
    # responsibilities h_k(t) in log space
    dt = times[:, None] - mu_t[None, :]
    log_h = (
        np.log(gmm.priors)[None, :]
        - 0.5 * (dt**2 / var_t[None, :] + np.log(2.0 * np.pi * var_t)[None, :])
    )
    log_h -= log_h.max(axis=1, keepdims=True)
    h = np.exp(log_h)
    h /= h.sum(axis=1, keepdims=True)
    # component conditional means, (Q, K, 6)
    mu_k = gmm.means[None, :, 1:] + dt[:, :, None] * slopes[None, :, :]
    mu = np.einsum("qk,qkd->qd", h, mu_k)
    # law of total variance
    sigma = np.einsum("qk,kde->qde", h, cond_covs)
    sigma += np.einsum("qk,qkd,qke->qde", h, mu_k, mu_k)
    sigma -= np.einsum("qd,qe->qde", mu, mu)
    sigma = 0.5 * (sigma + sigma.transpose(0, 2, 1))
    return mu, sigma


def gmr_condition(gmm, t):
    """Conditional mean and covariance of eta given time t."""
    mu, sigma = _gmr_batch(gmm, np.array([float(t)]))
    return mu[0], sigma[0]


def extract_reference(gmm, times):
    """Probabilistic reference trajectory on a strictly increasing grid."""
    times = np.asarray(times, dtype=float)
    if times.size and np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if times.size == 0:
        return ReferenceTrajectory(times, np.empty((0, 6)), np.empty((0, 6, 6)))
    mu, sigma = _gmr_batch(gmm, times)
    return ReferenceTrajectory(times.copy(), mu, sigma)
