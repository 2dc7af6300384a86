"""Sparse autoencoder for learning temporal filters from sampled windows.

A single logistic hidden layer encodes a window, a linear layer decodes it.
The training objective is mean squared reconstruction plus a KL penalty that
pins the mean hidden activation of each unit near a target rate, plus squared
weight decay. Training is full-batch gradient descent with a backtracking
step size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import ConfigError, WindowSet

_REL_TOL = 1e-8
_MIN_STEP = 1e-20

_BANK_MAGIC = "vtfilterbank"
_BANK_VERSION = 1
_PAYLOAD_MARKER = "payload"


class DivergenceError(RuntimeError):
    """Training hit a non-finite cost."""

    def __init__(self, iteration: int, message: str | None = None):
        self.iteration = iteration
        super().__init__(message or f"non-finite cost at iteration {iteration}")


@dataclass(frozen=True)
class AEHyper:
    """Autoencoder hyperparameters; lam is the weight decay strength."""

    k: int
    rho: float = 0.03
    beta: float = 1.0
    lam: float = 1e-4
    max_iters: int = 400
    step_size: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError("rho must lie in (0, 1)")
        if self.beta < 0.0:
            raise ConfigError("beta must be non-negative")
        if self.lam < 0.0:
            raise ConfigError("lam must be non-negative")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        if self.step_size <= 0.0:
            raise ConfigError("step_size must be positive")


@dataclass
class AEParams:
    """Encoder and decoder weights. W1 rows are the learned filters."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.W2 = np.asarray(self.W2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        k, tau = self.W1.shape
        if self.b1.shape != (k,) or self.W2.shape != (tau, k) or self.b2.shape != (tau,):
            raise ConfigError("parameter shapes are inconsistent")

    @property
    def k(self) -> int:
        return self.W1.shape[0]

    @property
    def tau(self) -> int:
        return self.W1.shape[1]


@dataclass(frozen=True)
class CostBreakdown:
    total: float
    reconstruction: float
    sparsity: float
    weight_decay: float


@dataclass
class FilterBank:
    """Trained temporal filters (the encoder weight rows) plus provenance."""

    filters: np.ndarray
    tau: int
    hyper: AEHyper
    final_cost: float

    def __post_init__(self):
        self.filters = np.asarray(self.filters, dtype=np.float64)
        if self.filters.ndim != 2 or self.filters.shape != (self.hyper.k, self.tau):
            raise ConfigError("filters must be a (k, tau) matrix")
        if not np.all(np.isfinite(self.filters)):
            raise ConfigError("filters must be finite")
        if np.any(np.all(self.filters == 0.0, axis=1)):
            raise ConfigError("filter bank contains an all-zero filter")

    @property
    def k(self) -> int:
        return self.filters.shape[0]


def init_params(tau: int, k: int, seed: int) -> AEParams:
    """Uniform weight init in [-r, r] with r = sqrt(6 / (tau + k)), zero biases."""
    if tau < 1 or k < 1:
        raise ConfigError("tau and k must be at least 1")
    rng = np.random.default_rng(seed)
    r = np.sqrt(6.0 / (tau + k))
    return AEParams(
        W1=rng.uniform(-r, r, size=(k, tau)),
        b1=np.zeros(k),
        W2=rng.uniform(-r, r, size=(tau, k)),
        b2=np.zeros(tau),
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(params: AEParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hidden activations and reconstruction for a single window."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.tau,):
        raise ConfigError(f"input must have length {params.tau}")
    h = _sigmoid(params.W1 @ x + params.b1)
    return h, params.W2 @ h + params.b2


def _forward_batch(params: AEParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    H = _sigmoid(X @ params.W1.T + params.b1)
    return H, H @ params.W2.T + params.b2


def kl_sparsity(rho: float, rho_hat: np.ndarray) -> float:
    """Sum over units of KL(rho || rho_hat) for Bernoulli rates."""
    if not 0.0 < rho < 1.0:
        raise ConfigError("rho must lie in (0, 1)")
    rho_hat = np.asarray(rho_hat, dtype=np.float64)
    if np.any(rho_hat <= 0.0) or np.any(rho_hat >= 1.0):
        raise ValueError("rho_hat outside (0, 1); hidden units saturated")
    return float(np.sum(rho * np.log(rho / rho_hat)
                        + (1.0 - rho) * np.log((1.0 - rho) / (1.0 - rho_hat))))


def cost(params: AEParams, batch: WindowSet, hyper: AEHyper) -> CostBreakdown:
    if len(batch) == 0:
        raise ConfigError("batch is empty")
    if batch.tau != params.tau:
        raise ConfigError("batch window length does not match parameters")
    X = batch.windows
    H, Xt = _forward_batch(params, X)
    resid = Xt - X
    recon = 0.5 * float(np.sum(resid * resid)) / X.shape[0]
    if hyper.beta > 0.0:
        sparsity = hyper.beta * kl_sparsity(hyper.rho, H.mean(axis=0))
    else:
        sparsity = 0.0
    decay = hyper.lam * (float(np.sum(params.W1 * params.W1)) + float(np.sum(params.W2 * params.W2)))
    return CostBreakdown(recon + sparsity + decay, recon, sparsity, decay)


def gradient(params: AEParams, batch: WindowSet, hyper: AEHyper) -> AEParams:
    """Analytic gradient of the full cost, one entry per parameter.

    The KL penalty reaches each window through the batch mean of the hidden
    activations, contributing beta/N * (-rho/rho_hat + (1-rho)/(1-rho_hat))
    per unit to every hidden pre-activation.
    """
    if len(batch) == 0:
        raise ConfigError("batch is empty")
    if batch.tau != params.tau:
        raise ConfigError("batch window length does not match parameters")
    X = batch.windows
    N = X.shape[0]
    H, Xt = _forward_batch(params, X)
    resid = (Xt - X) / N

    gW2 = resid.T @ H + 2.0 * hyper.lam * params.W2
    gb2 = resid.sum(axis=0)

    dH = resid @ params.W2
    if hyper.beta > 0.0:
        rho_hat = H.mean(axis=0)
        if np.any(rho_hat <= 0.0) or np.any(rho_hat >= 1.0):
            raise ValueError("rho_hat outside (0, 1); hidden units saturated")
        dH = dH + (hyper.beta / N) * (-hyper.rho / rho_hat + (1.0 - hyper.rho) / (1.0 - rho_hat))
    dZ = dH * H * (1.0 - H)

    gW1 = dZ.T @ X + 2.0 * hyper.lam * params.W1
    gb1 = dZ.sum(axis=0)
    return AEParams(gW1, gb1, gW2, gb2)


def _cost_or_inf(params: AEParams, batch: WindowSet, hyper: AEHyper) -> float:
    try:
        total = cost(params, batch, hyper).total
    except ValueError:
        return np.inf
    except FloatingPointError:
        return np.inf
    return total if np.isfinite(total) else np.inf


def train(batch: WindowSet, hyper: AEHyper, on_iteration=None) -> FilterBank:
    """Full-batch gradient descent with a backtracking step size.

    The step halves whenever a trial point raises the cost and grows by 1.1
    after each accepted step, so the recorded cost sequence never increases.
    Training stops at max_iters or when the relative improvement drops below
    1e-8. A non-finite cost at an accepted point raises DivergenceError.
    on_iteration, if given, is called as on_iteration(iteration, cost, params)
    after the initial evaluation and after every accepted step.
    """
    if len(batch) == 0:
        raise ConfigError("batch is empty")
    params = init_params(batch.tau, hyper.k, hyper.seed)
    current = _cost_or_inf(params, batch, hyper)
    if not np.isfinite(current):
        raise DivergenceError(0)
    if on_iteration is not None:
        on_iteration(0, current, params)

    step = hyper.step_size
    for it in range(1, hyper.max_iters + 1):
        try:
            g = gradient(params, batch, hyper)
        except ValueError as exc:
            raise DivergenceError(it, f"non-finite gradient at iteration {it}: {exc}") from exc
        if not all(np.all(np.isfinite(a)) for a in (g.W1, g.b1, g.W2, g.b2)):
            raise DivergenceError(it, f"non-finite gradient at iteration {it}")

        accepted = False
        while step >= _MIN_STEP:
            trial = AEParams(
                params.W1 - step * g.W1,
                params.b1 - step * g.b1,
                params.W2 - step * g.W2,
                params.b2 - step * g.b2,
            )
            trial_cost = _cost_or_inf(trial, batch, hyper)
            if trial_cost <= current:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break

        improvement = (current - trial_cost) / max(abs(current), np.finfo(float).tiny)
        params, current = trial, trial_cost
        step *= 1.1
        if on_iteration is not None:
            on_iteration(it, current, params)
        if improvement < _REL_TOL:
            break

    return FilterBank(params.W1.copy(), batch.tau, hyper, float(current))


def _bank_header_lines(bank: FilterBank) -> list[str]:
    return [
        f"format={_BANK_MAGIC}",
        f"version={_BANK_VERSION}",
        f"tau={bank.tau}",
        f"k={bank.k}",
        f"rho={bank.hyper.rho!r}",
        f"beta={bank.hyper.beta!r}",
        f"lambda={bank.hyper.lam!r}",
        f"final_cost={bank.final_cost!r}",
        _PAYLOAD_MARKER,
    ]


def save_filterbank(bank: FilterBank, path) -> None:
    with open(path, "wb") as fh:
        fh.write(("\n".join(_bank_header_lines(bank)) + "\n").encode("ascii"))
        fh.write(bank.filters.astype("<f8").tobytes(order="C"))


def _parse_bank_blob(blob: bytes) -> tuple[FilterBank, bytes]:
    """Parse one serialized bank, returning it and any trailing bytes."""
    from .dataset import HeaderError, PayloadError, VersionError

    marker = (_PAYLOAD_MARKER + "\n").encode("ascii")
    head, sep, rest = blob.partition(b"\n" + marker)
    if not sep:
        raise HeaderError("missing payload marker in filter bank")
    fields = {}
    for line in head.decode("ascii").splitlines():
        key, eq, value = line.partition("=")
        if not eq:
            raise HeaderError(f"malformed filter bank header line {line!r}")
        fields[key] = value
    if fields.get("format") != _BANK_MAGIC:
        raise HeaderError(f"not a {_BANK_MAGIC} block")
    if fields.get("version") != str(_BANK_VERSION):
        raise VersionError(f"unsupported filter bank version {fields.get('version')!r}")
    try:
        tau = int(fields["tau"])
        k = int(fields["k"])
        rho = float(fields["rho"])
        beta = float(fields["beta"])
        lam = float(fields["lambda"])
        final_cost = float(fields["final_cost"])
    except (KeyError, ValueError) as exc:
        raise HeaderError(f"bad filter bank header: {exc}") from exc
    nbytes = tau * k * 8
    if len(rest) < nbytes:
        raise PayloadError(f"filter bank payload holds {len(rest)} bytes, header implies {nbytes}")
    filters = np.frombuffer(rest[:nbytes], dtype="<f8").reshape(k, tau).copy()
    # training-only fields (max_iters, step_size, seed) are not persisted
    hyper = AEHyper(k=k, rho=rho, beta=beta, lam=lam)
    return FilterBank(filters, tau, hyper, final_cost), rest[nbytes:]


def load_filterbank(path) -> FilterBank:
    from .dataset import PayloadError

    with open(path, "rb") as fh:
        blob = fh.read()
    bank, rest = _parse_bank_blob(blob)
    if rest:
        raise PayloadError(f"{len(rest)} unexpected trailing bytes")
    return bank
