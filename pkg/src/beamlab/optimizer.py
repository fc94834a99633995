"""Learning filterbank taps end-to-end through the oracle-mask beamforming chain.

Gradients are central finite differences of the negated SI-SDR. Every
probe perturbs one tap, which only touches one filter, so the default
``"fast"`` method re-runs the chain for that single bin (analysis taps) or
adds the rank-one change of the output (synthesis taps) instead of running
the whole pipeline per probe. ``method="direct"`` evaluates
:func:`pipeline_loss` for every probe and is kept as the reference.
Cost is O(P) chain evaluations per gradient for P parameters.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .beamformer import BEAMFORMERS, mvdr_solution, mwf_solution
from .filterbank import Filterbank, analytic_filters, macs
from .masking import wlm_values
from .metrics import si_sdr_loss_values
from .pipeline import pipeline_loss, valid_span
from .scm import DEFAULT_DIAG_LOAD, LOAD_FLOOR
from .signal import frame_signal, overlap_add

__all__ = [
    "OptimizerConfig",
    "TrainingTrace",
    "Adam",
    "clip_gradient",
    "finite_difference_gradient",
    "train",
    "DivergenceError",
]

logger = logging.getLogger(__name__)

DIVERGENCE_LOSS = 1e6


class DivergenceError(RuntimeError):
    pass


@dataclass
class OptimizerConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    grad_clip_norm: float = 5.0
    max_epochs: int = 100
    early_stop_patience: int = 10
    lr_halve_patience: int = 5
    fd_step: float = 1e-4
    beamformer: str = "mwf"
    batch_size: int = 1
    diag_load: float = DEFAULT_DIAG_LOAD
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.early_stop_patience < 1 or self.lr_halve_patience < 1:
            raise ValueError("patience values must be >= 1")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be >= 1")
        if self.beamformer not in BEAMFORMERS:
            raise ValueError(f"beamformer must be one of {BEAMFORMERS}")

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizerConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown optimizer config fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainingTrace:
    train_loss: list = field(default_factory=list)
    validation_loss: list = field(default_factory=list)
    macs_analysis: list = field(default_factory=list)
    learning_rate: list = field(default_factory=list)
    initial_validation_loss: float = float("nan")
    initial_macs: float = float("nan")
    best_epoch: int = 0

    def __len__(self) -> int:
        return len(self.validation_loss)

    def append(self, train_loss, validation_loss, macs_value, lr) -> None:
        self.train_loss.append(float(train_loss))
        self.validation_loss.append(float(validation_loss))
        self.macs_analysis.append(float(macs_value))
        self.learning_rate.append(float(lr))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss", "macs", "lr"])
        for i in range(len(self)):
            writer.writerow([i + 1, repr(self.train_loss[i]), repr(self.validation_loss[i]),
                             repr(self.macs_analysis[i]), repr(self.learning_rate[i])])
        return buf.getvalue()


class Adam:
    """Bias-corrected first/second moment update."""

    def __init__(self, size: int, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad ** 2
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def clip_gradient(grad: np.ndarray, max_norm: float) -> np.ndarray:
    norm = np.linalg.norm(grad)
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad


# -- per-bin chain shared by the fast gradient --------------------------------

def _bin_outputs(y, x, v, beamformer, ref, diag_load):
    """Beamformer output for stacked bins.

    y: [..., M, K] mixture coefficients, x / v: [..., K] target / interferer
    coefficients at ``ref``. Mirrors ``enhance`` with an oracle mask.
    """
    n_frames = y.shape[-1]
    n_ch = y.shape[-2]
    mask = np.clip(wlm_values(x, v), 0.0, 1.0)
    outer = y[..., :, None, :] * y.conj()[..., None, :, :]  # [..., M, M, K]
    rx = (outer * mask[..., None, None, :]).sum(-1) / n_frames
    rv = (outer * (1.0 - mask)[..., None, None, :]).sum(-1) / n_frames
    rx = 0.5 * (rx + np.conj(np.swapaxes(rx, -1, -2)))
    rv = 0.5 * (rv + np.conj(np.swapaxes(rv, -1, -2)))
    level = diag_load * (np.trace(rv, axis1=-2, axis2=-1).real / n_ch + LOAD_FLOOR)
    rv = rv + level[..., None, None] * np.eye(n_ch)
    if beamformer == "mvdr":
        w, _ = mvdr_solution(rx, rv, ref)
    else:
        w = mwf_solution(rx, rv, ref)
    return np.einsum("...m,...mk->...k", np.conj(w), y)


def _directions(fb: Filterbank) -> np.ndarray:
    """Complex filter perturbation per unit change of each learnable tap of one filter."""
    eye = np.eye(fb.kernel_size)
    if fb.kind == "analytic":
        return analytic_filters(eye)
    return np.concatenate([eye, 1j * eye]).astype(np.complex128)


def _scene_gradient_fast(fb, scene, ref, beamformer, diag_load, step):
    """(loss, gradient) for one scene with the bin-local probing scheme."""
    L, H, N = fb.kernel_size, fb.hop, fb.num_filters
    fm = frame_signal(scene.mixture.samples, L, H)            # M x K x L
    fx = frame_signal(scene.target_image.samples[ref], L, H)  # K x L
    fv = frame_signal(scene.interferer_image.samples[ref], L, H)
    A, S = fb.analysis, fb.synthesis
    y = np.einsum("mkl,nl->nmk", fm, A)  # N x M x K
    x = (fx @ A.T).T                     # N x K
    v = (fv @ A.T).T
    out = _bin_outputs(y, x, v, beamformer, ref, diag_load)  # N x K
    est = overlap_add((out.T @ S).real, H)
    span = valid_span(len(est), L)
    target = scene.target_image.samples[ref][:len(est)][span]
    base = float(si_sdr_loss_values(target, est[span]))

    D = _directions(fb)          # P x L
    dy = np.einsum("mkl,pl->pmk", fm, D)
    dx = fx @ D.T                # K x P
    dv = fv @ D.T

    def losses(delta_est):
        return si_sdr_loss_values(target, (est + delta_est)[..., span])

    grad_a = np.empty((N, len(D)))
    grad_s = np.empty((N, len(D)))
    for n in range(N):
        vals = []
        for sign in (1.0, -1.0):
            out_p = _bin_outputs(y[n] + sign * step * dy, x[n] + sign * step * dx.T,
                                 v[n] + sign * step * dv.T, beamformer, ref, diag_load)
            delta = overlap_add(((out_p - out[n])[:, :, None] * S[n]).real, H)
            vals.append(losses(delta))
        grad_a[n] = (vals[0] - vals[1]) / (2 * step)
        contrib = overlap_add((out[n][None, :, None] * D[:, None, :]).real, H)  # P x T
        grad_s[n] = (losses(step * contrib) - losses(-step * contrib)) / (2 * step)

    grad = _pack(fb, grad_a, grad_s)
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise FloatingPointError(f"non-finite loss at probe of parameter {int(bad[0])}")
    return base, grad


def _pack(fb, grad_a, grad_s):
    L = fb.kernel_size
    if fb.kind == "analytic":
        return np.concatenate([grad_a.ravel(), grad_s.ravel()])
    return np.concatenate([grad_a[:, :L].ravel(), grad_a[:, L:].ravel(),
                           grad_s[:, :L].ravel(), grad_s[:, L:].ravel()])


def _gradient_direct(fb, loss_fn, step):
    params = fb.parameters()
    grad = np.empty_like(params)
    for i in range(len(params)):
        probe = params.copy()
        probe[i] += step
        up = loss_fn(fb.with_parameters(probe))
        probe[i] = params[i] - step
        down = loss_fn(fb.with_parameters(probe))
        if not (np.isfinite(up) and np.isfinite(down)):
            raise FloatingPointError(f"non-finite loss at probe of parameter {i}")
        grad[i] = (up - down) / (2 * step)
    return grad


def finite_difference_gradient(fb: Filterbank, scenes=(), refs=None,
                               config: OptimizerConfig | None = None, loss_fn=None,
                               method: str = "fast") -> tuple[float, np.ndarray]:
    """Central-difference gradient w.r.t. ``fb.parameters()``.

    By default differentiates the mean :func:`pipeline_loss` over ``scenes``
    (reference mics ``refs``, default 0). A custom ``loss_fn(fb) -> float``
    replaces the pipeline and forces the direct method. Returns the loss at
    the current taps and the gradient (length 4NL, or 2NL for analytic).
    """
    config = config or OptimizerConfig()
    step = config.fd_step
    if loss_fn is not None:
        return float(loss_fn(fb)), _gradient_direct(fb, loss_fn, step)
    scenes = list(scenes)
    if not scenes:
        raise ValueError("need at least one scene")
    refs = [0] * len(scenes) if refs is None else list(refs)
    if method == "direct":
        def mean_loss(candidate):
            return float(np.mean([pipeline_loss(candidate, s, config.beamformer, r,
                                                 config.diag_load)
                                  for s, r in zip(scenes, refs)]))
        return mean_loss(fb), _gradient_direct(fb, mean_loss, step)
    if method != "fast":
        raise ValueError(f"unknown method {method!r}")
    results = [_scene_gradient_fast(fb, s, r, config.beamformer, config.diag_load, step)
               for s, r in zip(scenes, refs)]
    loss = float(np.mean([r[0] for r in results]))
    grad = np.mean([r[1] for r in results], axis=0)
    return loss, grad


def _validation_loss(fb, scenes, config):
    return float(np.mean([pipeline_loss(fb, s, config.beamformer, 0, config.diag_load)
                          for s in scenes]))


def train(fb: Filterbank, train_scenes, val_scenes,
          config: OptimizerConfig | None = None) -> tuple[Filterbank, TrainingTrace]:
    """Adam on the finite-difference gradient with clipping, LR halving and early stopping.

    Training scenes use a random reference mic per visit; validation always
    uses mic 0. Returns the filterbank of the epoch with the best validation
    loss and the per-epoch trace.
    """
    config = config or OptimizerConfig()
    train_scenes, val_scenes = list(train_scenes), list(val_scenes)
    if not train_scenes or not val_scenes:
        raise ValueError("need non-empty training and validation scene sets")
    rng = np.random.default_rng(config.seed)
    params = fb.parameters()
    adam = Adam(len(params), config.beta1, config.beta2, config.eps)
    lr = config.learning_rate

    trace = TrainingTrace()
    trace.initial_validation_loss = _validation_loss(fb, val_scenes, config)
    trace.initial_macs = macs(fb, "analysis")
    # the first epoch always counts as an improvement
    best_loss, best_fb = np.inf, fb
    stale = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_scenes))
        batch_losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = [train_scenes[i] for i in idx]
            refs = [int(rng.integers(s.mixture.num_channels)) for s in batch]
            loss, grad = finite_difference_gradient(fb, batch, refs, config)
            if loss > DIVERGENCE_LOSS:
                raise DivergenceError(f"training diverged at epoch {epoch} (loss {loss:.3g})")
            if config.weight_decay:
                grad = grad + config.weight_decay * params
            grad = clip_gradient(grad, config.grad_clip_norm)
            params = adam.step(params, grad, lr)
            fb = fb.with_parameters(params)
            # analytic banks re-derive their imaginary taps; keep params in sync
            params = fb.parameters()
            batch_losses.append(loss)

        val_loss = _validation_loss(fb, val_scenes, config)
        if val_loss > DIVERGENCE_LOSS:
            raise DivergenceError(f"validation loss diverged at epoch {epoch}")
        trace.append(np.mean(batch_losses), val_loss, macs(fb, "analysis"), lr)
        logger.info("epoch %d train %.4f val %.4f lr %.3g", epoch, trace.train_loss[-1],
                    val_loss, lr)
        if val_loss < best_loss:
            best_loss, best_fb, stale = val_loss, fb, 0
            trace.best_epoch = epoch
            continue
        stale += 1
        if stale >= config.early_stop_patience:
            break
        if stale % config.lr_halve_patience == 0:
            lr /= 2
    return best_fb, trace
