"""Adam training loop over the network parameters.

Parameters are flattened to one real vector (complex tensors contribute their
interleaved real/imag view), so the optimizer is a plain elementwise Adam.
Runs are bitwise deterministic given the dataset, config, and seeds, and can
be resumed from a checkpoint with identical continuation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import raster
from .fno import FnoParams, N_HIDDEN_LAYERS
from .model import FnoBpModel, loss_gradient, save_checkpoint, load_checkpoint
from .phantoms import load_manifest, load_sample
from .projector import Sinogram


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 8
    shuffle_seed: int = 0
    checkpoint_every: int = 5  # epochs

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        for b in (self.beta1, self.beta2):
            if not (0 <= b < 1):
                raise ValueError("Adam betas must be in [0, 1)")


def _tensor_order(p: FnoParams) -> list[str]:
    return list(p.tensors().keys())


def flatten_params(p: FnoParams) -> np.ndarray:
    parts = []
    for name in _tensor_order(p):
        arr = p.tensors()[name]
        parts.append(arr.view(float).ravel() if np.iscomplexobj(arr)
                     else arr.ravel())
    return np.concatenate(parts)


def flatten_grads(p: FnoParams, grads: dict) -> np.ndarray:
    parts = []
    for name in _tensor_order(p):
        g = grads[name]
        parts.append(g.view(float).ravel() if np.iscomplexobj(g) else g.ravel())
    return np.concatenate(parts)


def unflatten_params(p: FnoParams, flat: np.ndarray) -> FnoParams:
    out = p.copy()
    pos = 0
    for name in _tensor_order(out):
        arr = out.tensors()[name]
        view = arr.view(float) if np.iscomplexobj(arr) else arr
        n = view.size
        view.ravel()[:] = flat[pos:pos + n]
        pos += n
    assert pos == flat.size
    return out


@dataclass
class TrainState:
    params: FnoParams
    m: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    step: int = 0
    loss_history: list = field(default_factory=list)  # (step, epoch, loss)

    @classmethod
    def fresh(cls, params: FnoParams) -> "TrainState":
        n = flatten_params(params).size
        return cls(params.copy(), np.zeros(n), np.zeros(n))


def adam_step(state: TrainState, grads: dict, cfg: TrainConfig) -> TrainState:
    """Bias-corrected Adam update; raises on non-finite gradients."""
    g = flatten_grads(state.params, grads)
    if not np.all(np.isfinite(g)):
        bad = int(np.flatnonzero(~np.isfinite(g))[0])
        raise FloatingPointError(
            f"non-finite gradient at flat index {bad} (step {state.step})")
    t = state.step + 1
    m = cfg.beta1 * state.m + (1 - cfg.beta1) * g
    v = cfg.beta2 * state.v + (1 - cfg.beta2) * g * g
    m_hat = m / (1 - cfg.beta1 ** t)
    v_hat = v / (1 - cfg.beta2 ** t)
    theta = flatten_params(state.params)
    theta = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return TrainState(unflatten_params(state.params, theta), m, v, t,
                      list(state.loss_history))


def save_train_state(path, state: TrainState, model: FnoBpModel,
                     cfg: TrainConfig, epoch_done: int) -> None:
    path = Path(path)
    model_for_ckpt = FnoBpModel(model.geom, model.grid, model.extrapolator,
                                model.filter_spec, state.params, model.fbp_scale)
    save_checkpoint(path, model_for_ckpt,
                    extra_meta={"epoch_done": epoch_done, "step": state.step})
    raster.write(path / "adam_m", state.m)
    raster.write(path / "adam_v", state.v)
    with open(path / "loss_history.csv", "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["step", "epoch", "loss"])
        wr.writerows(state.loss_history)


def load_train_state(path, cache_dir=None):
    path = Path(path)
    model, manifest = load_checkpoint(path, cache_dir=cache_dir)
    m = raster.read(path / "adam_m")
    v = raster.read(path / "adam_v")
    history = []
    with open(path / "loss_history.csv") as f:
        rd = csv.reader(f)
        next(rd)
        for row in rd:
            history.append((int(row[0]), int(row[1]), float(row[2])))
    state = TrainState(model.fno, m, v, int(manifest["step"]), history)
    return state, model, int(manifest["epoch_done"])


def train(data_dir, cfg: TrainConfig, model: FnoBpModel, out_dir,
          resume_from=None, log=print) -> dict:
    """Epoch-shuffled minibatch Adam training.

    Extrapolated full sinograms have no trainable dependencies, so they are
    computed once per sample up front and reused every epoch.  Writes the
    final checkpoint and a step,epoch,loss CSV to out_dir; returns a summary
    with per-epoch mean losses.
    """
    data_dir = Path(data_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(data_dir)
    if manifest["geometry"] != model.geom.to_json_dict():
        raise ValueError("dataset geometry differs from model geometry")
    stems = [e["stem"] for e in manifest["samples"]]
    samples = [load_sample(data_dir, s) for s in stems]

    geom = model.geom
    g_full = []
    for smp in samples:
        g_lim = Sinogram(geom, smp.sinogram)
        g_full.append(model.extrapolator.extrapolate(g_lim, smp.mask).values)

    if resume_from is not None:
        state, ckpt_model, start_epoch = load_train_state(resume_from)
        model = FnoBpModel(model.geom, model.grid, model.extrapolator,
                           model.filter_spec, ckpt_model.fno, model.fbp_scale)
        state = TrainState(model.fno, state.m, state.v, state.step,
                           state.loss_history)
    else:
        state = TrainState.fresh(model.fno)
        start_epoch = 0

    epoch_means = []
    for epoch in range(start_epoch, cfg.epochs):
        order = np.random.default_rng((cfg.shuffle_seed, epoch)).permutation(len(samples))
        losses = []
        for lo in range(0, len(order), cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            acc = None
            batch_loss = 0.0
            cur = FnoBpModel(model.geom, model.grid, model.extrapolator,
                             model.filter_spec, state.params, model.fbp_scale)
            for si in batch:
                smp = samples[si]
                value, grads = _precomputed_loss_gradient(
                    g_full[si], smp.image, cur)
                batch_loss += value
                if acc is None:
                    acc = grads
                else:
                    for k in acc:
                        acc[k] = acc[k] + grads[k]
            nb = len(batch)
            for k in acc:
                acc[k] = acc[k] / nb
            batch_loss /= nb
            state = adam_step(state, acc, cfg)
            state.loss_history.append((state.step, epoch, batch_loss))
            losses.append(batch_loss)
        mean_loss = float(np.mean(losses)) if losses else float("nan")
        epoch_means.append(mean_loss)
        log(f"epoch {epoch}: mean loss {mean_loss:.6g}")
        if (epoch + 1) % cfg.checkpoint_every == 0 and epoch + 1 < cfg.epochs:
            save_train_state(out_dir / f"ckpt_epoch{epoch:04d}", state, model,
                             cfg, epoch + 1)
    save_train_state(out_dir / "ckpt_final", state, model, cfg, cfg.epochs)
    return {"epoch_mean_losses": epoch_means,
            "checkpoint": str(out_dir / "ckpt_final"),
            "steps": state.step}


def _precomputed_loss_gradient(g_full_values: np.ndarray, target, m: FnoBpModel):
    """loss_gradient with the extrapolation stage already applied."""
    from .filtering import ram_lak
    from .fno import fno_backward, fno_forward
    from .projector import Image, back_project, back_project_transpose

    g_full = Sinogram(m.geom, g_full_values)
    filtered = ram_lak(g_full, m.filter_spec)
    correction, tape = fno_forward(g_full, m.fno)
    combined = Sinogram(m.geom, filtered.values + correction.values)
    pre_relu = m.fbp_scale * back_project(combined, m.grid).values
    pred = np.maximum(pre_relu, 0.0)
    diff = pred - target.values
    value = float(np.mean(diff * diff))
    up_img = (2.0 / diff.size) * diff * (pre_relu > 0.0) * m.fbp_scale
    up_sino = back_project_transpose(Image(m.grid, up_img), m.geom)
    grads, _ = fno_backward(tape, up_sino.values, m.fno)
    return value, grads
