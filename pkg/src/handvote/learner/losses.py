"""Multi-stack L2 loss on dense outputs, and the gradient plumbing through the predictor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..codec import DenseTargets, OffsetField
from ..geometry import DepthFrame
from .ops import Tape
from .predictor import Predictor, prepare_input, v_channels_to_grid, v_grid_to_channels

TERMS = ("R", "S", "V")


class ShapeError(ValueError):
    pass


@dataclass
class StackOutput:
    R: np.ndarray  # (..., J, H, W)
    S: np.ndarray  # (..., J, H, W)
    V: np.ndarray  # (..., J, H, W, 3)


@dataclass
class DenseOutputs:
    stacks: list[StackOutput]

    @property
    def last(self) -> StackOutput:
        return self.stacks[-1]

    def as_targets(self, theta: float, tau: float, joint_names=(), index: int | None = None) -> DenseTargets:
        """Final-stack estimates packaged for the aggregator (pick one sample of a batch by index)."""
        s = self.last
        R, S, V = (s.R, s.S, s.V) if index is None else (s.R[index], s.S[index], s.V[index])
        return DenseTargets(R, S, V, theta, tau, list(joint_names))


@dataclass
class LossBreakdown:
    terms: np.ndarray  # (T, 3): per stack [L_R, L_S, L_V]

    @property
    def total(self) -> float:
        return float(self.terms.sum())

    @property
    def per_term(self) -> dict[str, float]:
        return {k: float(v) for k, v in zip(TERMS, self.terms.sum(axis=0))}


def _sq(a, b):
    d = a - b
    return float(np.sum(d * d))


def loss(pred: DenseOutputs, gt: DenseTargets, weights=(1.0, 1.0, 1.0)) -> LossBreakdown:
    """Sum over stacks, joints and grid cells of squared R, S and V residuals."""
    terms = np.zeros((len(pred.stacks), 3))
    for t, s in enumerate(pred.stacks):
        for i, (p, g) in enumerate(((s.R, gt.R), (s.S, gt.S), (s.V, gt.V))):
            if p.shape[-g.ndim:] != g.shape:
                raise ShapeError(f"stack {t} {TERMS[i]}: prediction {p.shape} vs target {g.shape}")
            terms[t, i] = weights[i] * _sq(p, g)
    return LossBreakdown(terms)


def loss_masked(pred_offsets: np.ndarray, gt: OffsetField) -> float:
    """Squared L2 on raw offsets, restricted to the per-joint mask."""
    pred_offsets = np.asarray(pred_offsets, dtype=np.float64)
    if pred_offsets.shape != gt.offsets.shape:
        raise ShapeError(f"prediction {pred_offsets.shape} vs target {gt.offsets.shape}")
    d = np.where(gt.mask[..., None], pred_offsets - gt.offsets, 0.0)
    return float(np.sum(d * d))


def loss_masked_grad(pred_offsets: np.ndarray, gt: OffsetField) -> np.ndarray:
    return np.where(gt.mask[..., None], 2.0 * (pred_offsets - gt.offsets), 0.0)


def _collect(outs) -> DenseOutputs:
    return DenseOutputs([
        StackOutput(R.value, S.value, v_channels_to_grid(V.value)) for R, S, V in outs
    ])


def forward_batch(predictor: Predictor, params: np.ndarray, x: np.ndarray) -> DenseOutputs:
    return _collect(predictor.forward(params, x))


def forward(predictor: Predictor, params: np.ndarray, frame: DepthFrame) -> DenseOutputs:
    """Single-frame forward pass; outputs drop the batch axis."""
    out = forward_batch(predictor, params, prepare_input(frame)[None])
    return DenseOutputs([StackOutput(s.R[0], s.S[0], s.V[0]) for s in out.stacks])


def loss_and_grad(predictor: Predictor, params: np.ndarray, x: np.ndarray, R: np.ndarray,
                  S: np.ndarray, V: np.ndarray, weights=(1.0, 1.0, 1.0), scale: float = 1.0):
    """Batch loss (times ``scale``) and its exact gradient with respect to params.

    x: (N, 4, H, W); R, S: (N, J, H, W); V: (N, J, H, W, 3).
    """
    grad = np.zeros_like(params)
    tape = Tape()
    outs = predictor.forward(params, x, tape, grad)
    Vc = v_grid_to_channels(V)
    terms = np.zeros((len(outs), 3))
    for t, (Rp, Sp, Vp) in enumerate(outs):
        for i, (var, g) in enumerate(((Rp, R), (Sp, S), (Vp, Vc))):
            d = var.value - g
            terms[t, i] = scale * weights[i] * float(np.sum(d * d))
            var.accumulate(2.0 * scale * weights[i] * d)
    tape.backward()
    return LossBreakdown(terms), grad


def backward(predictor: Predictor, params: np.ndarray, frame: DepthFrame, gt: DenseTargets,
             weights=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Gradient of ``loss(forward(params, frame), gt)`` with respect to params."""
    _, grad = loss_and_grad(
        predictor, params, prepare_input(frame)[None], gt.R[None], gt.S[None], gt.V[None], weights)
    return grad
