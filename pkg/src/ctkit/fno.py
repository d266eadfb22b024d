"""1D Fourier neural operator over the detector axis.

Every angle row of the (full-scan) sinogram is one channel.  The network is
lifting -> 3 x (spectral convolution + pointwise skip) -> projection, with
GELU between the hidden layers and none after the last.  Forward and backward
passes are written out explicitly; the backward pass is the exact adjoint of
the forward, verified against finite differences in the tests.

DFT convention: forward transform unnormalized, inverse carries 1/U, so
parameter files are interchangeable across runs.  Note the imaginary parts of
the spectral weights at the DC bin (and Nyquist, when retained) cannot reach
the real-valued output; their gradients are identically zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .projector import Sinogram

N_HIDDEN_LAYERS = 3


@dataclass
class FnoParams:
    lifting: np.ndarray = field(repr=False)      # (C, L) real
    spectral: list = field(repr=False)           # 3 x (C, C, M) complex
    skips: list = field(repr=False)              # 3 x (C, C) real
    projection: np.ndarray = field(repr=False)   # (L, C) real

    def __post_init__(self):
        C, L = self.lifting.shape
        if len(self.spectral) != N_HIDDEN_LAYERS or len(self.skips) != N_HIDDEN_LAYERS:
            raise ValueError("expected 3 hidden layers")
        for w, s in zip(self.spectral, self.skips):
            if w.shape[:2] != (C, C) or s.shape != (C, C):
                raise ValueError("hidden layer shape mismatch")
        if self.projection.shape != (L, C):
            raise ValueError("projection shape mismatch")
        for arr in self.tensors().values():
            if not np.all(np.isfinite(arr.view(float) if np.iscomplexobj(arr) else arr)):
                raise ValueError("non-finite parameter")

    @property
    def channel_count(self) -> int:
        return self.lifting.shape[0]

    @property
    def angle_count(self) -> int:
        return self.lifting.shape[1]

    @property
    def mode_count(self) -> int:
        return self.spectral[0].shape[2]

    def tensors(self) -> dict[str, np.ndarray]:
        out = {"lifting": self.lifting, "projection": self.projection}
        for i in range(N_HIDDEN_LAYERS):
            out[f"spectral{i}"] = self.spectral[i]
            out[f"skip{i}"] = self.skips[i]
        return out

    def copy(self) -> "FnoParams":
        return FnoParams(self.lifting.copy(), [w.copy() for w in self.spectral],
                         [s.copy() for s in self.skips], self.projection.copy())


@dataclass
class Tape:
    """Intermediates of one forward pass, enough to run every adjoint."""
    x_in: np.ndarray
    h0: np.ndarray
    layer_in: list            # inputs to each hidden layer
    pre_act: list             # spectral + skip outputs, before activation
    spectra: list             # rfft of each hidden layer input
    h_final: np.ndarray
    U: int


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact Gaussian-CDF GELU: x * Phi(x)."""
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    phi = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return 0.5 * (1.0 + erf(x / np.sqrt(2.0))) + x * phi


def _check_modes(M: int, U: int) -> None:
    if M > U // 2 + 1:
        raise ValueError(f"mode count {M} exceeds rfft bins {U // 2 + 1}")


def spectral_conv(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Per-frequency complex channel mixing on the first M rfft modes.

    x: (C_in, U) real; w: (C_out, C_in, M) complex; returns (C_out, U) real.
    Modes at index >= M are zeroed.
    """
    U = x.shape[1]
    M = w.shape[2]
    _check_modes(M, U)
    X = np.fft.rfft(x, axis=1)
    Y = np.zeros((w.shape[0], U // 2 + 1), dtype=complex)
    Y[:, :M] = np.einsum("oim,im->om", w, X[:, :M])
    return np.fft.irfft(Y, n=U, axis=1)


def _spectral_forward(x: np.ndarray, w: np.ndarray):
    U = x.shape[1]
    M = w.shape[2]
    _check_modes(M, U)
    X = np.fft.rfft(x, axis=1)
    Y = np.zeros((w.shape[0], U // 2 + 1), dtype=complex)
    Y[:, :M] = np.einsum("oim,im->om", w, X[:, :M])
    return np.fft.irfft(Y, n=U, axis=1), X


def _irfft_adjoint(gy: np.ndarray, U: int) -> np.ndarray:
    """Adjoint of Y -> irfft(Y, n=U) as a real-linear map C^K -> R^U.

    Interior bins carry weight 2/U, DC and Nyquist 1/U; the imaginary parts of
    DC and Nyquist are ignored by irfft, so their adjoint components are zero.
    """
    G = np.fft.rfft(gy, axis=-1)
    K = U // 2 + 1
    scale = np.full(K, 2.0 / U)
    scale[0] = 1.0 / U
    if U % 2 == 0:
        scale[-1] = 1.0 / U
    G = G * scale
    G[..., 0] = G[..., 0].real
    if U % 2 == 0:
        G[..., -1] = G[..., -1].real
    return G


def _rfft_adjoint(gX: np.ndarray, U: int) -> np.ndarray:
    """Adjoint of x -> rfft(x) as a real-linear map R^U -> C^K."""
    Z = gX.copy()
    K = U // 2 + 1
    half = np.full(K, 0.5)
    half[0] = 1.0
    if U % 2 == 0:
        half[-1] = 1.0
    return U * np.fft.irfft(Z * half, n=U, axis=-1)


def _spectral_backward(gy: np.ndarray, X: np.ndarray, w: np.ndarray, U: int):
    """Gradients of the spectral convolution.

    Complex gradients use the convention grad = dL/dRe + i dL/dIm, so a flat
    real view of the gradient lines up with a flat real view of the weights.
    """
    M = w.shape[2]
    gY = _irfft_adjoint(gy, U)                       # (C_out, K)
    gYm = gY[:, :M]
    grad_w = np.einsum("om,im->oim", gYm, np.conj(X[:, :M]))
    gX = np.zeros_like(X)
    gX[:, :M] = np.einsum("oim,om->im", np.conj(w), gYm)
    gx = _rfft_adjoint(gX, U)
    return grad_w, gx


def fno_forward(g: Sinogram, p: FnoParams) -> tuple[Sinogram, Tape]:
    """Apply the network to a sinogram; channels are angle rows."""
    x = g.values
    L, U = x.shape
    if L != p.angle_count:
        raise ValueError(f"sinogram has {L} angle rows, params expect {p.angle_count}")
    h = p.lifting @ x                                 # (C, U)
    h0 = h
    layer_in, pre_act, spectra = [], [], []
    for i in range(N_HIDDEN_LAYERS):
        layer_in.append(h)
        conv, X = _spectral_forward(h, p.spectral[i])
        spectra.append(X)
        y = conv + p.skips[i] @ h
        pre_act.append(y)
        h = gelu(y) if i < N_HIDDEN_LAYERS - 1 else y
    out = p.projection @ h
    tape = Tape(x, h0, layer_in, pre_act, spectra, h, U)
    return Sinogram(g.geom, out), tape


def fno_backward(tape: Tape, upstream: np.ndarray, p: FnoParams):
    """Reverse-mode gradients of fno_forward.

    Returns (param_grads dict keyed like FnoParams.tensors(), input_grad).
    """
    if upstream.shape != (p.angle_count, tape.U):
        raise ValueError("upstream gradient shape mismatch")
    grads: dict[str, np.ndarray] = {}
    grads["projection"] = upstream @ tape.h_final.T
    gh = p.projection.T @ upstream
    for i in reversed(range(N_HIDDEN_LAYERS)):
        gy = gh if i == N_HIDDEN_LAYERS - 1 else gh * gelu_grad(tape.pre_act[i])
        grads[f"skip{i}"] = gy @ tape.layer_in[i].T
        gw, gx_conv = _spectral_backward(gy, tape.spectra[i], p.spectral[i], tape.U)
        grads[f"spectral{i}"] = gw
        gh = gx_conv + p.skips[i].T @ gy
    grads["lifting"] = gh @ tape.x_in.T
    input_grad = p.lifting.T @ gh
    return grads, input_grad


def init_params(rng: np.random.Generator, L: int, C: int, M: int) -> FnoParams:
    """Deterministic-per-seed initialization.

    Spectral weights are complex Gaussian scaled by 1/(C_in * C_out); the real
    pointwise maps are uniform in +-sqrt(1/fan_in).
    """
    lifting = rng.uniform(-1, 1, (C, L)) * np.sqrt(1.0 / L)
    projection = rng.uniform(-1, 1, (L, C)) * np.sqrt(1.0 / C)
    spectral = []
    skips = []
    for _ in range(N_HIDDEN_LAYERS):
        w = (rng.standard_normal((C, C, M)) + 1j * rng.standard_normal((C, C, M)))
        spectral.append(w / (C * C))
        skips.append(rng.uniform(-1, 1, (C, C)) * np.sqrt(1.0 / C))
    return FnoParams(lifting, spectral, skips, projection)
