"""Two-class Gaussian setting with a sigmoid model and clamped log loss.

Features are ``x = y * v + z`` with ``z ~ N(0, sigma^2 I)``; each label flips with
probability ``delta``. The model predicts ``p(y=1) = sigmoid(theta . x)`` and
is trained from ``theta = 0`` by full-batch gradient descent on

    l(theta) = mean_i min(log(1 + exp(-y~_i theta . x_i)), B)

Matrix-vector products are written as elementwise sums so results do not
depend on BLAS threading.
"""
from dataclasses import asdict, dataclass, field
import math

import numpy as np

from .exceptions import UndefinedAlignmentError
from .loss_matrix import LossMatrix
from .noise_sim import flip_labels, gen_symmetric


@dataclass(frozen=True)
class GaussianTwoClassConfig:
    dim: int = 10
    sigma: float = 0.1
    n: int = 1000
    delta: float = 0.2
    B: float = 4.0
    eta: float = 1.0
    epochs: int = 30
    direction: tuple = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not 0 < self.delta < 0.5:
            raise ValueError(f"delta must be in (0, 0.5), got {self.delta}")
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.direction is None:
            v = np.zeros(self.dim)
            v[0] = 1.0
        else:
            v = np.asarray(self.direction, dtype=float)
            if v.shape != (self.dim,):
                raise ValueError(f"direction must have length {self.dim}")
            if abs(np.linalg.norm(v) - 1.0) > 1e-9:
                raise ValueError("direction must be a unit vector")
        object.__setattr__(self, "direction", tuple(float(c) for c in v))

    @property
    def v(self):
        return np.asarray(self.direction)

    def to_dict(self):
        return asdict(self)


@dataclass
class TheoryRunResult:
    theta_trajectory: np.ndarray  # (epochs, d); row t is the parameter the column-t losses were taken at
    theta_final: np.ndarray
    loss_matrix: LossMatrix
    clean_set: np.ndarray
    noisy_set: np.ndarray
    mean_clean_loss: np.ndarray
    mean_noisy_loss: np.ndarray
    config: GaussianTwoClassConfig = field(repr=False, default=None)


def sample_gaussian_dataset(config, seed):
    """Returns ``(X, y, y_observed, clean_indicator)`` with labels in {-1, +1}.

    True classes are balanced: the first ``n // 2`` samples are -1.
    """
    rng = np.random.default_rng(seed)
    n, d = config.n, config.dim
    y = np.where(np.arange(n) < n // 2, -1, 1)
    X = y[:, None] * config.v[None, :] + config.sigma * rng.standard_normal((n, d))
    flip_seed = int(rng.integers(2**63))
    observed01, clean = flip_labels((y + 1) // 2, gen_symmetric(2, config.delta), flip_seed)
    return X, y, 2 * observed01 - 1, clean


def _margins(theta, X, y):
    return y * (X * theta).sum(axis=1)


def sample_losses(theta, X, y, B):
    """Per-sample clamped log loss ``min(log(1 + exp(-y theta.x)), B)``."""
    return np.minimum(np.logaddexp(0.0, -_margins(theta, X, y)), B)


def mean_loss(theta, X, y, B):
    return float(sample_losses(theta, X, y, B).mean())


def loss_gradient(theta, X, y, B):
    """Gradient of the mean clamped loss.

    Each unclamped sample contributes ``x_i (tanh(theta.x_i / 2) - y_i) / (2n)``;
    samples whose loss exceeds ``B`` contribute nothing.
    """
    raw = np.logaddexp(0.0, -_margins(theta, X, y))
    active = raw <= B
    resid = np.where(active, np.tanh(0.5 * (X * theta).sum(axis=1)) - y, 0.0)
    return (X * resid[:, None]).sum(axis=0) / (2 * X.shape[0])


def gradient_step(theta, X, y, config):
    return theta - config.eta * loss_gradient(theta, X, y, config.B)


def predict(theta, X):
    """Hard predictions in {-1, +1}; a zero margin predicts +1."""
    return np.where((X * theta).sum(axis=1) >= 0, 1, -1)


def logistic_train(X, y_observed, config, clean_indicator=None):
    """Full-batch gradient descent from ``theta = 0``, recording every epoch.

    Column ``t`` of the loss matrix holds the losses at ``theta_t``, before
    the ``t``-th update, so column 0 is ``ln 2`` everywhere.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y_observed)
    n, d = X.shape
    theta = np.zeros(d)
    thetas = np.empty((config.epochs, d))
    losses = np.empty((n, config.epochs))
    for t in range(config.epochs):
        thetas[t] = theta
        losses[:, t] = sample_losses(theta, X, y, config.B)
        theta = gradient_step(theta, X, y, config)

    if clean_indicator is None:
        clean_indicator = np.ones(n, dtype=np.int64)
    clean_indicator = np.asarray(clean_indicator).astype(bool)
    clean_set = np.flatnonzero(clean_indicator)
    noisy_set = np.flatnonzero(~clean_indicator)
    nan_row = np.full(config.epochs, np.nan)
    return TheoryRunResult(
        theta_trajectory=thetas,
        theta_final=theta,
        loss_matrix=LossMatrix(losses),
        clean_set=clean_set,
        noisy_set=noisy_set,
        mean_clean_loss=losses[clean_set].mean(axis=0) if clean_set.size else nan_row,
        mean_noisy_loss=losses[noisy_set].mean(axis=0) if noisy_set.size else nan_row,
        config=config,
    )


def alignment(theta, v):
    theta = np.asarray(theta, dtype=float)
    norm = math.sqrt(float((theta * theta).sum()))
    if norm == 0:
        raise UndefinedAlignmentError("alignment is undefined for theta = 0")
    return float((np.asarray(v, dtype=float) * theta).sum() / norm)


def loss_gap_bound(theta, v, sigma):
    """``1 - 2 exp(-theta.v + |theta|^2 sigma^2 / 2)``, the early-learning gap bound."""
    theta = np.asarray(theta, dtype=float)
    proj = float((np.asarray(v, dtype=float) * theta).sum())
    sq = float((theta * theta).sum())
    return 1.0 - 2.0 * math.exp(-proj + 0.5 * sq * sigma**2)


def run_summary(result):
    """Per-epoch alignment, mean clean/noisy loss and gap bound, JSON-ready."""
    cfg = result.config
    align = []
    bound = []
    for theta in result.theta_trajectory:
        try:
            align.append(alignment(theta, cfg.v))
        except UndefinedAlignmentError:
            align.append(None)
        bound.append(loss_gap_bound(theta, cfg.v, cfg.sigma))
    return {
        "config": cfg.to_dict(),
        "alignment": align,
        "l_clean": result.mean_clean_loss.tolist(),
        "l_noisy": result.mean_noisy_loss.tolist(),
        "bound": bound,
        "n_clean": int(result.clean_set.size),
        "n_noisy": int(result.noisy_set.size),
        "theta_final": result.theta_final.tolist(),
    }
