"""Synthetic fixtures with planted subgroups, and their oracles."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import AuditFrame, AuditTable, Subgroup, membership
from .errors import DomainError

# ---------------------------------------------------------------- features


def categorical_frame(n: int, cardinalities: Mapping[str, int], seed) -> dict[str, list[str]]:
    """Independent uniform categorical columns with values ``v0, v1, ...``."""
    rng = np.random.default_rng(seed)
    out = {}
    for name, k in cardinalities.items():
        if k < 1:
            raise DomainError(f"attribute {name!r} needs at least one value")
        out[name] = [f"v{c}" for c in rng.integers(0, k, n)]
    return out


DEMOGRAPHICS = ("sex", "race", "under_25")

_SEX = (("Female", 0.19), ("Male", 0.81))
_RACE = (
    ("African-American", 0.51),
    ("Asian", 0.005),
    ("Caucasian", 0.34),
    ("Hispanic", 0.088),
    ("Native American", 0.003),
    ("Other", 0.054),
)
_UNDER_25 = (("False", 0.78), ("True", 0.22))
_PRIORS = ("None", "1 to 5", "Over 5")
_CHARGE = ("Misdemeanor", "Felony")
_JUVENILE = ("None", "One", "Several")
_CUSTODY = ("Under 1 day", "1 to 7 days", "1 to 4 weeks", "Over 4 weeks")
_FIRST_ARREST = ("Under 18", "18 to 24", "25 to 34", "35 or older")
_FAILURES = ("None", "One", "Several")


def _pick(rng, pairs, n):
    names = [v for v, _ in pairs]
    w = np.array([w for _, w in pairs])
    return np.array(names, dtype=object)[rng.choice(len(names), n, p=w / w.sum())]


def _ordinal(rng, levels, shift, spread=1.0):
    """Ordered categories from a shifted logistic latent."""
    z = shift + spread * rng.logistic(size=len(shift))
    cuts = np.linspace(-1.0, 1.0, len(levels) - 1) * 1.2
    return np.array(levels, dtype=object)[np.searchsorted(cuts, z)]


def compas_like_features(n: int = 7214, seed=0, demographic_effect: float = 1.0) -> dict[str, list[str]]:
    """Categorical frame shaped like the recidivism data.

    Demographics (sex, race, under_25) shift the distribution of the
    criminal-history attributes, so demographic groups differ in base rate
    even though the outcome model never uses demographics directly.
    ``demographic_effect`` scales those shifts.
    """
    rng = np.random.default_rng(seed)
    sex = _pick(rng, _SEX, n)
    race = _pick(rng, _RACE, n)
    young = _pick(rng, _UNDER_25, n)
    history = demographic_effect * (
        0.6 * (race == "African-American")
        + 0.3 * (race == "Native American")
        - 0.3 * (race == "Asian")
        + 0.4 * (sex == "Male")
        - 0.5 * (young == "True")
    )
    severity = demographic_effect * (0.3 * (young == "True") + 0.2 * (sex == "Male"))
    return {
        "sex": list(sex),
        "race": list(race),
        "under_25": list(young),
        "priors": list(_ordinal(rng, _PRIORS, history)),
        "charge_degree": list(_ordinal(rng, _CHARGE, severity)),
        "juvenile": list(
            _ordinal(rng, _JUVENILE, demographic_effect * (0.8 * (young == "True") + 0.3 * (race == "African-American")) - 1.0)
        ),
        "custody": list(_ordinal(rng, _CUSTODY, history * 0.5 + severity)),
        "first_arrest": list(_ordinal(rng, _FIRST_ARREST, -history - demographic_effect * 1.0 * (young == "True"))),
        "failed_appearances": list(_ordinal(rng, _FAILURES, 0.5 * history - 0.5)),
    }


@dataclass(frozen=True)
class BaseModel:
    """Logistic outcome model over categorical features.

    ``coefficients[attr][value]`` adds to the logit; unlisted values add 0.
    ``latent_sd`` adds per-record unobserved risk on the logit scale.
    """

    intercept: float
    coefficients: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    latent_sd: float = 0.0

    def logits(self, features: Mapping[str, Sequence[str]], rng: np.random.Generator | None = None) -> np.ndarray:
        n = len(next(iter(features.values())))
        out = np.full(n, float(self.intercept))
        for attr, coefs in self.coefficients.items():
            if attr not in features:
                raise DomainError(f"base model uses attribute {attr!r} missing from the features")
            col = features[attr]
            out += np.array([coefs.get(str(v), 0.0) for v in col])
        if self.latent_sd > 0.0:
            if rng is None:
                raise DomainError("a latent risk term needs a random generator")
            out += rng.normal(0.0, self.latent_sd, n)
        return out


# Risk comes from observed criminal-history attributes plus a moderate
# unobserved term; demographics act only through the history attributes.
COMPAS_LIKE_MODEL = BaseModel(
    intercept=-3.15,
    coefficients={
        "priors": {"1 to 5": 1.05, "Over 5": 2.4},
        "charge_degree": {"Felony": 0.45},
        "juvenile": {"One": 0.6, "Several": 1.35},
        "custody": {"1 to 7 days": 0.3, "1 to 4 weeks": 0.75, "Over 4 weeks": 1.2},
        "first_arrest": {"18 to 24": -0.75, "25 to 34": -1.5, "35 or older": -2.4},
        "failed_appearances": {"One": 0.75, "Several": 1.65},
    },
    latent_sd=1.25,
)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


# ------------------------------------------------------------ experiment 1


@dataclass(frozen=True)
class Exp1Config:
    k: float
    planted: Subgroup
    theta: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.k >= 0:
            raise DomainError(f"k must be non-negative, got {self.k!r}")
        if 0.51 + 0.01 * self.k > 1.0 + 1e-12 or 0.49 - 0.01 * self.k < -1e-12:
            raise DomainError(f"k = {self.k} pushes the probability bands outside [0, 1]")
        if not 0.0 <= self.theta <= 1.0:
            raise DomainError("theta must lie in [0, 1]")


def _planted_mask(features: Mapping[str, Sequence[str]], planted: Subgroup) -> np.ndarray:
    n = len(next(iter(features.values())))
    mask = np.ones(n, dtype=bool)
    for attr, values in planted.included.items():
        if attr not in features:
            raise DomainError(f"planted subgroup uses unknown attribute {attr!r}")
        mask &= np.array([str(v) in values for v in features[attr]])
    if not mask.any() or mask.all():
        raise DomainError("planted subgroup must be neither empty nor the whole table")
    return mask


def generate_exp1(features: Mapping[str, Sequence[str]], config: Exp1Config) -> tuple[AuditTable, Subgroup]:
    """Uniform-band probabilities around 0.51 inside the planted group and 0.49 outside.

    Predictions equal the true probabilities and outcomes are Bernoulli draws.
    """
    mask = _planted_mask(features, config.planted)
    rng = np.random.default_rng(config.seed)
    half = 0.01 * config.k
    centre = np.where(mask, 0.51, 0.49)
    p = centre + half * rng.uniform(-1.0, 1.0, len(mask)) if half > 0 else centre.copy()
    p = np.clip(p, 0.0, 1.0)
    y0 = (rng.random(len(p)) < p).astype(np.int8)
    table = AuditTable.from_columns(features, y0, p, p, theta=config.theta)
    return table, config.planted


def lambda_star(k: float) -> float:
    """Lambda at which the planted group's error-rate gap is exactly justified.

    >>> lambda_star(0)
    50.0
    """
    if not k >= 0:
        raise DomainError(f"k must be non-negative, got {k!r}")
    if k < 1:
        return 50.0
    return 75.0 / k * (4999.0 - k * k) / (7497.0 - k * k)


@dataclass(frozen=True)
class LambdaStarEstimate:
    ratio: float
    fpr_gap: float
    base_rate_gap: float
    samples: int


def lambda_star_monte_carlo(k: float, samples: int = 1_000_000, seed=0, side: str = "negative") -> LambdaStarEstimate:
    """Simulated error-rate gap over base-rate gap for the Experiment 1 bands.

    Draws probabilities from both bands and Bernoulli outcomes, keeps the
    records of the requested outcome class, and compares recommendation rates
    and mean probabilities. Both groups share the same uniform draws (common
    random numbers), which cancels most of the sampling noise in the gaps.
    """
    if not 0 <= k <= 49:
        raise DomainError("k must lie in [0, 49]")
    keep = 0 if side == "negative" else 1
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, samples)
    v = rng.random(samples)
    rates, means = [], []
    for centre in (0.51, 0.49):
        p = centre + 0.01 * k * u
        y = (v < p).astype(int)
        kept = p[y == keep]
        rates.append(np.mean(kept > 0.5))
        means.append(np.mean(kept))
    gap_rate = float(rates[0] - rates[1])
    gap_p = float(means[0] - means[1])
    return LambdaStarEstimate(gap_rate / gap_p, gap_rate, gap_p, samples)


# ------------------------------------------------------------ experiment 2


def logit_shift_probability(p, gamma: float):
    """Probability whose log-odds exceed those of ``p`` by ``gamma``.

    >>> round(float(logit_shift_probability(0.5, math.log(2))), 12)
    0.666666666667
    """
    p = np.asarray(p, dtype=float)
    if ((p < 0) | (p > 1)).any():
        raise DomainError("probabilities must lie in [0, 1]")
    num = p * math.exp(gamma)
    return num / (num + 1.0 - p)


def logit_shift_threshold(theta0, gamma: float):
    """Threshold whose log-odds are ``gamma`` below those of ``theta0``."""
    theta0 = np.asarray(theta0, dtype=float)
    if ((theta0 <= 0) | (theta0 >= 1)).any():
        raise DomainError("theta0 must lie strictly inside (0, 1)")
    num = theta0 * math.exp(-gamma)
    return num / (num + 1.0 - theta0)


class ShiftMode(str, enum.Enum):
    SHIFT_PROBABILITY = "ShiftProbability"
    SHIFT_THRESHOLD = "ShiftThreshold"


@dataclass(frozen=True)
class Exp2Config:
    gamma: float
    planted: Subgroup
    mode: ShiftMode = ShiftMode.SHIFT_PROBABILITY
    base_model: BaseModel = COMPAS_LIKE_MODEL
    theta0: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.theta0 < 1.0:
            raise DomainError("theta0 must lie strictly inside (0, 1)")
        object.__setattr__(self, "mode", ShiftMode(self.mode))


def generate_exp2(features: Mapping[str, Sequence[str]], config: Exp2Config) -> tuple[AuditTable, Subgroup]:
    """Logistic-model probabilities with a log-odds shift on the planted group.

    Probability mode shifts the members' predictions up by ``gamma``;
    threshold mode shifts their thresholds down by ``gamma``. Both modes
    yield the same recommendations.
    """
    mask = _planted_mask(features, config.planted)
    overlap = set(config.base_model.coefficients) & set(config.planted.included)
    if overlap:
        raise DomainError(f"base model must not use the planted attributes {sorted(overlap)}")
    rng = np.random.default_rng(config.seed)
    p = sigmoid(config.base_model.logits(features, rng))
    y0 = (rng.random(len(p)) < p).astype(np.int8)
    theta = np.full(len(p), config.theta0)
    p_hat0 = p.copy()
    shifted_p = logit_shift_probability(p[mask], config.gamma)
    shifted_theta = float(logit_shift_threshold(config.theta0, config.gamma))
    if config.mode is ShiftMode.SHIFT_PROBABILITY:
        p_hat0[mask] = shifted_p
    else:
        theta[mask] = shifted_theta
    table = AuditTable.from_columns(features, y0, p_hat0, p, theta=theta)
    return table, config.planted


def random_planted(features: Mapping[str, Sequence[str]], attributes: Sequence[str], seed, min_size: int = 1) -> Subgroup:
    """One uniformly chosen value per attribute, redrawn until the cell has ``min_size`` rows."""
    rng = np.random.default_rng(seed)
    domains = {a: sorted(set(map(str, features[a]))) for a in attributes}
    for _ in range(1000):
        sg = Subgroup({a: frozenset([domains[a][rng.integers(len(domains[a]))]]) for a in attributes})
        if int(_planted_mask_count(features, sg)) >= min_size:
            return sg
    raise DomainError(f"no cell over {list(attributes)} has {min_size} rows")


def _planted_mask_count(features, sg: Subgroup) -> int:
    n = len(next(iter(features.values())))
    mask = np.ones(n, dtype=bool)
    for attr, values in sg.included.items():
        mask &= np.array([str(v) in values for v in features[attr]])
    return int(mask.sum())


# ------------------------------------------------------------ learned model


def one_hot(features: Mapping[str, Sequence[str]], attributes: Sequence[str] | None = None) -> tuple[np.ndarray, list[str]]:
    """Design matrix with the first (sorted) value of each attribute as reference."""
    attributes = list(features) if attributes is None else list(attributes)
    cols, names = [], []
    for attr in attributes:
        col = np.array([str(v) for v in features[attr]], dtype=object)
        for value in sorted(set(col))[1:]:
            cols.append((col == value).astype(float))
            names.append(f"{attr}={value}")
    n = len(next(iter(features.values())))
    x = np.column_stack(cols) if cols else np.zeros((n, 0))
    return x, names


def _loglik(x1, y, w, ridge):
    z = x1 @ w
    return float(np.sum(y * z - np.logaddexp(0.0, z)) - 0.5 * ridge * np.dot(w[1:], w[1:]))


@dataclass(frozen=True, eq=False)
class LogisticFit:
    coefficients: np.ndarray  # intercept first
    iterations: int
    gradient_norm: float
    loglik_trace: tuple[float, ...]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return sigmoid(self.coefficients[0] + x @ self.coefficients[1:])


def fit_logistic(x, y, ridge: float = 1e-6, max_iter: int = 100, tol: float = 1e-8) -> LogisticFit:
    """Maximum-likelihood logistic regression with intercept by damped Newton steps.

    A small ridge penalty on the slopes keeps separable data finite. Each
    step is halved until the penalized log-likelihood does not decrease.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or len(x) != len(y):
        raise DomainError("x must be an (n, d) matrix matching y")
    if not (np.any(y == 1) and np.any(y == 0)):
        raise DomainError("logistic fit needs at least one positive and one negative outcome")
    if not np.isin(y, (0, 1)).all():
        raise DomainError("outcomes must be binary")
    x1 = np.column_stack([np.ones(len(x)), x])
    d = x1.shape[1]
    w = np.zeros(d)
    w[0] = math.log(y.mean() / (1 - y.mean()))
    penalty = np.full(d, ridge)
    penalty[0] = 0.0
    ll = _loglik(x1, y, w, ridge)
    trace = [ll]
    gnorm = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        mu = sigmoid(x1 @ w)
        g = x1.T @ (y - mu) - penalty * w
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            it -= 1
            break
        h = (x1 * (mu * (1 - mu))[:, None]).T @ x1 + np.diag(penalty)
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(h, g, rcond=None)[0]
        t = 1.0
        while True:
            cand = w + t * step
            ll_new = _loglik(x1, y, cand, ridge)
            if ll_new >= ll or t < 1e-10:
                break
            t *= 0.5
        if ll_new < ll:
            break
        w, ll = cand, ll_new
        trace.append(ll)
    return LogisticFit(w, it, gnorm, tuple(trace))


def learned_probabilities(table: AuditTable, attributes: Sequence[str] | None = None) -> np.ndarray:
    """Fitted outcome probabilities from the table's own categorical features."""
    attributes = list(table.attributes) if attributes is None else list(attributes)
    features = {a: table.feature_column(a) for a in attributes}
    x, _ = one_hot(features, attributes)
    return fit_logistic(x, table.y0).predict(x)


# ------------------------------------------------------------ evaluation


def iou_masks(a: np.ndarray, b: np.ndarray) -> float:
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / union


def iou(detected: Subgroup, planted: Subgroup, frame: AuditFrame | AuditTable) -> float:
    """Intersection over union of the two memberships within ``frame``."""
    return iou_masks(membership(detected, frame), membership(planted, frame))
