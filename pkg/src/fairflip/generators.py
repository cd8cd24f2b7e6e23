"""Synthetic data generators and exact finite distributions.

Two families live here:

* a four-component Gaussian mixture with majority class means at +/-(mu+psi)
  and minority class means at +/-(mu-psi), the standard spurious-correlation
  benchmark for a small protected group, plus its group-erasure counterfactual
  feature map;
* fully enumerated finite causal models (attribute and latent cause generate
  the features), used wherever results can be verified by exact computation
  instead of sampling.

Randomness: every sampler takes an explicit seed and uses numpy's
``default_rng`` (PCG64); normal deviates come from the generator's ziggurat
sampler. Tests therefore use distributional tolerances, never bit-level
comparisons of draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import TabularDataset

__all__ = [
    "Gmm4Params",
    "sample_gmm4",
    "counterfactual_gmm4",
    "counterfactual_features",
    "CausalModelSpec",
    "DiscreteDistribution",
    "enumerate_causal",
    "erasure_map",
    "random_causal_spec",
    "GaussianPairParams",
    "sample_gaussian_pair",
]

Atom = tuple[float, ...]


@dataclass(frozen=True)
class Gmm4Params:
    """Parameters of the 4-Gaussian mixture.

    ``mu`` is the core (label-aligned) mean component, ``psi`` the group-tied
    component; they must be orthogonal. ``n_major``/``n_minor`` are row counts
    and ``noise`` the per-coordinate standard deviation of the isotropic
    Gaussian around each cell mean.
    """

    mu: np.ndarray
    psi: np.ndarray
    n_major: int
    n_minor: int
    noise: float
    label_balance: float = 0.5

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        if mu.ndim != 1 or psi.shape != mu.shape:
            raise ValueError("mu and psi must be 1-d vectors of equal length")
        if abs(float(mu @ psi)) > 1e-9:
            raise ValueError(f"mu and psi must be orthogonal, got mu.psi={mu @ psi:g}")
        if self.n_major < 1 or self.n_minor < 0:
            raise ValueError("need n_major >= 1 and n_minor >= 0")
        if not self.noise > 0:
            raise ValueError("noise must be positive")
        if not 0.0 < self.label_balance < 1.0:
            raise ValueError("label_balance must be in (0, 1)")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "psi", psi)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def sample_gmm4(params: Gmm4Params, seed: int) -> TabularDataset:
    """Draw ``n_major`` majority rows followed by ``n_minor`` minority rows.

    Labels are Bernoulli(label_balance) per row; features are
    ``s*mu + s*g*psi + noise`` where s is the signed label and g is +1 for the
    majority, -1 for the minority (stored attribute: 0 = majority,
    1 = minority).
    """
    rng = np.random.default_rng(seed)
    d = params.dim
    p, m = params.n_major, params.n_minor
    y = (rng.random(p + m) < params.label_balance).astype(np.int64)
    s = 2.0 * y - 1.0
    g = np.concatenate([np.ones(p), -np.ones(m)])
    means = s[:, None] * params.mu[None, :] + (s * g)[:, None] * params.psi[None, :]
    features = means + params.noise * rng.standard_normal((p + m, d))
    attribute = np.concatenate([np.zeros(p, dtype=np.int64), np.ones(m, dtype=np.int64)])
    return TabularDataset(features, y, attribute)


def counterfactual_gmm4(x: np.ndarray, y: int, params: Gmm4Params) -> np.ndarray:
    """Group-erasure map for a minority point with known own label.

    Shifts the group-tied mean component to the majority side: x + 2*s*psi
    with s = +1 for label 1 and -1 for label 0. The residual around the cell
    mean is untouched.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (params.dim,):
        raise ValueError(f"expected a vector of length {params.dim}, got shape {x.shape}")
    s = 1.0 if y == 1 else -1.0
    return x + 2.0 * s * params.psi


def counterfactual_features(data: TabularDataset, params: Gmm4Params) -> np.ndarray:
    """Apply the erasure map to all minority rows of ``data``; majority rows
    are returned unchanged."""
    s = 2.0 * data.labels - 1.0
    shift = (data.attribute * s)[:, None] * (2.0 * params.psi)[None, :]
    return data.features + shift


# ---------------------------------------------------------------------------
# Finite causal models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CausalModelSpec:
    """A finite model where group a and latent u generate the features.

    ``u_support`` lists (value, probability) pairs; ``feature_map`` gives the
    deterministic feature atom for every (a, u); ``label_table`` holds
    P(y=1 | x) for every reachable atom. The group indicator is independent
    of u with P(a=1) = beta.
    """

    beta: float
    u_support: tuple[tuple[object, float], ...]
    feature_map: dict
    label_table: dict

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        support = tuple((u, float(p)) for u, p in self.u_support)
        total = sum(p for _, p in support)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"u probabilities must sum to 1, got {total!r}")
        if any(p < 0 for _, p in support):
            raise ValueError("u probabilities must be nonnegative")
        for a in (0, 1):
            for u, _ in support:
                if (a, u) not in self.feature_map:
                    raise ValueError(f"feature_map missing entry for (a={a}, u={u!r})")
        for x in set(self.feature_map.values()):
            if x not in self.label_table:
                raise ValueError(f"label_table missing reachable atom {x!r}")
            q = self.label_table[x]
            if not 0.0 <= q <= 1.0:
                raise ValueError(f"label probability for {x!r} out of [0,1]: {q}")
        object.__setattr__(self, "u_support", support)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Fully enumerated joint P(x, y, a) over finitely many atoms."""

    xs: tuple[Atom, ...]
    ys: tuple[int, ...]
    attrs: tuple[int, ...]
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if not (len(self.xs) == len(self.ys) == len(self.attrs) == probs.shape[0]):
            raise ValueError("atom table columns must have equal length")
        if np.any(probs < -1e-15):
            raise ValueError("negative probability mass")
        if abs(float(probs.sum()) - 1.0) > 1e-12:
            raise ValueError(f"total mass must be 1, got {probs.sum()!r}")
        object.__setattr__(self, "probs", probs)

    def support(self) -> tuple[Atom, ...]:
        seen: dict[Atom, None] = {}
        for x, p in zip(self.xs, self.probs):
            if p > 0 and x not in seen:
                seen[x] = None
        return tuple(seen)

    def p_x(self, x: Atom) -> float:
        return float(sum(p for xx, p in zip(self.xs, self.probs) if xx == x))

    def p_y_given_x(self, x: Atom) -> np.ndarray:
        """Conditional [P(y=0|x), P(y=1|x)], marginalised over the attribute."""
        mass = np.zeros(2)
        for xx, y, p in zip(self.xs, self.ys, self.probs):
            if xx == x:
                mass[y] += p
        total = mass.sum()
        if total <= 0:
            raise ValueError(f"atom {x!r} has zero mass")
        return mass / total

    def p_x_a(self, x: Atom, a: int) -> float:
        return float(
            sum(p for xx, aa, p in zip(self.xs, self.attrs, self.probs) if xx == x and aa == a)
        )

    def minority_fraction(self) -> float:
        return float(sum(p for aa, p in zip(self.attrs, self.probs) if aa == 1))


def enumerate_causal(spec: CausalModelSpec) -> DiscreteDistribution:
    """Expand a CausalModelSpec into the joint table over (x, y, a)."""
    xs: list[Atom] = []
    ys: list[int] = []
    attrs: list[int] = []
    probs: list[float] = []
    for a, pa in ((0, 1.0 - spec.beta), (1, spec.beta)):
        for u, pu in spec.u_support:
            x = spec.feature_map[(a, u)]
            q1 = float(spec.label_table[x])
            for y, py in ((1, q1), (0, 1.0 - q1)):
                xs.append(x)
                ys.append(y)
                attrs.append(a)
                probs.append(pa * pu * py)
    return DiscreteDistribution(tuple(xs), tuple(ys), tuple(attrs), np.array(probs))


def erasure_map(spec: CausalModelSpec) -> dict:
    """Atom-level counterfactual g: each minority atom maps to the atom the
    same latent value produces under a=0; every other atom maps to itself.

    Requires the minority feature map to be injective so the counterfactual
    is well defined per atom (g is then idempotent).
    """
    g: dict[Atom, Atom] = {}
    for x in set(spec.feature_map.values()):
        g[x] = x
    seen: dict[Atom, object] = {}
    for u, _ in spec.u_support:
        x1 = spec.feature_map[(1, u)]
        x0 = spec.feature_map[(0, u)]
        if x1 in seen and g[x1] != x0:
            raise ValueError(
                f"minority atom {x1!r} arises from several latents with different "
                "counterfactuals; the erasure map is ambiguous"
            )
        seen[x1] = u
        g[x1] = x0
    return g


def random_causal_spec(
    n_latent: int, seed: int, beta: float | None = None, shared_prob: float = 0.25
) -> CausalModelSpec:
    """Random finite causal model for verification sweeps.

    Each latent value gets its own majority atom; with probability
    ``shared_prob`` the minority reuses that atom (features ignore the group),
    otherwise it gets a distinct minority atom. Label probabilities are
    uniform draws. Atom encodings keep the minority feature map injective so
    the erasure map is always well defined.
    """
    if n_latent < 1:
        raise ValueError("need at least one latent value")
    rng = np.random.default_rng(seed)
    if beta is None:
        beta = float(rng.uniform(0.05, 0.5))
    raw = rng.uniform(0.2, 1.0, size=n_latent)
    u_probs = raw / raw.sum()
    u_support = tuple((f"u{i}", float(u_probs[i])) for i in range(n_latent))

    feature_map: dict = {}
    label_table: dict = {}
    for i, (u, _) in enumerate(u_support):
        x_major: Atom = (float(i), 0.0)
        feature_map[(0, u)] = x_major
        if rng.random() < shared_prob:
            feature_map[(1, u)] = x_major
        else:
            feature_map[(1, u)] = (float(i), 1.0)
    for x in set(feature_map.values()):
        label_table[x] = float(rng.uniform(0.0, 1.0))
    return CausalModelSpec(beta, u_support, feature_map, label_table)


# ---------------------------------------------------------------------------
# Gaussian class pair (majority references vs. minority test points)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianPairParams:
    """Two-class Gaussian geometry: majority classes at +/-mu with covariance
    sigma, minority classes at +/-mu_min with covariance sigma_min."""

    mu: np.ndarray
    sigma: np.ndarray
    mu_min: np.ndarray
    sigma_min: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        mu_min = np.asarray(self.mu_min, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        sigma_min = np.asarray(self.sigma_min, dtype=float)
        d = mu.shape[0]
        if mu.ndim != 1 or mu_min.shape != (d,):
            raise ValueError("mu and mu_min must be vectors of equal length")
        for name, cov in (("sigma", sigma), ("sigma_min", sigma_min)):
            if cov.shape != (d, d):
                raise ValueError(f"{name} must be {d}x{d}")
            if not np.allclose(cov, cov.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise ValueError(f"{name} must be positive definite") from None
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "mu_min", mu_min)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "sigma_min", sigma_min)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def sample_gaussian_pair(
    params: GaussianPairParams, n_major: int, n_minor: int, seed: int
) -> TabularDataset:
    """Sample majority rows from N(+/-mu, sigma) and minority rows from
    N(+/-mu_min, sigma_min), labels balanced Bernoulli(1/2)."""
    rng = np.random.default_rng(seed)
    d = params.dim
    L = np.linalg.cholesky(params.sigma)
    Lm = np.linalg.cholesky(params.sigma_min)
    y = (rng.random(n_major + n_minor) < 0.5).astype(np.int64)
    s = 2.0 * y - 1.0
    noise_major = rng.standard_normal((n_major, d)) @ L.T
    noise_minor = rng.standard_normal((n_minor, d)) @ Lm.T
    means = np.vstack(
        [
            s[:n_major, None] * params.mu[None, :],
            s[n_major:, None] * params.mu_min[None, :],
        ]
    )
    features = means + np.vstack([noise_major, noise_minor])
    attribute = np.concatenate(
        [np.zeros(n_major, dtype=np.int64), np.ones(n_minor, dtype=np.int64)]
    )
    return TabularDataset(features, y, attribute)
