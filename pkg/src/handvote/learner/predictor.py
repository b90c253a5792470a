"""Tiny stacked encoder-decoder predicting R, S and V maps per pixel.

Per stack:
  trunk   : input -> conv3 encoder over ``levels`` resolutions -> decoder with skip adds -> F
  R head  : 1x1 conv on F
  S head  : 1x1 conv on [F, depth]
  V head  : conv3 + 1x1 conv on [F * mask, F, R, S, depth]
Stack t+1 sees the input channels together with stack t's R, S, V.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..geometry import DepthFrame, depth_to_pointmap
from .ops import Tape, Var

DEPTH_SCALE = 100.0  # mm per unit of the normalized depth/coordinate channels
INPUT_CHANNELS = 4  # centered depth, validity mask, centered camera-space x and y


@dataclass(frozen=True)
class Architecture:
    size: int = 48
    joints: int = 5
    channels: int = 16
    stacks: int = 2
    levels: int = 3
    activation: str = "relu"
    mask_outputs: bool = True

    def __post_init__(self):
        if self.size % (2 ** (self.levels - 1)):
            raise ValueError(f"size {self.size} not divisible by 2^(levels-1) = {2 ** (self.levels - 1)}")
        if min(self.joints, self.channels, self.stacks, self.levels) < 1:
            raise ValueError("joints, channels, stacks and levels must be >= 1")
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(**d)

    def layers(self) -> list[tuple[str, tuple[int, int, int, int]]]:
        """(name, weight shape) for every conv, in parameter-vector order."""
        J, C = self.joints, self.channels
        out = []
        for t in range(self.stacks):
            cin = INPUT_CHANNELS if t == 0 else INPUT_CHANNELS + 5 * J
            for lvl in range(self.levels):
                out.append((f"s{t}.enc{lvl}", (C, cin if lvl == 0 else C, 3, 3)))
            for lvl in reversed(range(self.levels - 1)):
                out.append((f"s{t}.dec{lvl}", (C, C, 3, 3)))
            out.append((f"s{t}.r", (J, C, 1, 1)))
            out.append((f"s{t}.s", (J, C + 1, 1, 1)))
            out.append((f"s{t}.vhid", (C, 2 * C + 2 * J + 1, 3, 3)))
            out.append((f"s{t}.v", (3 * J, C, 1, 1)))
        return out

    def param_count(self) -> int:
        return sum(int(np.prod(s)) + s[0] for _, s in self.layers())


def prepare_input(frame: DepthFrame) -> np.ndarray:
    """(4, H, W) network input: depth, mask and x, y of the point map, centered on the valid pixels."""
    valid = frame.valid
    xyz = np.zeros(frame.shape + (3,))
    if valid.any():
        pts = depth_to_pointmap(frame).points[valid]
        xyz[valid] = (pts - pts.mean(axis=0)) / DEPTH_SCALE
    return np.stack([xyz[..., 2], valid.astype(np.float64), xyz[..., 0], xyz[..., 1]])


class Predictor:
    def __init__(self, arch: Architecture):
        self.arch = arch
        self._slices = {}
        pos = 0
        for name, shape in arch.layers():
            nw = int(np.prod(shape))
            self._slices[name] = (pos, shape, pos + nw, shape[0])
            pos += nw + shape[0]
        self.size = pos

    def views(self, flat: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        out = {}
        for name, (a, shape, b, nb) in self._slices.items():
            out[name] = (flat[a:b].reshape(shape), flat[b:b + nb])
        return out

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases."""
        flat = np.zeros(self.size)
        for name, (w, _b) in self.views(flat).items():
            cout, cin, k, _ = w.shape
            a = np.sqrt(6.0 / ((cin + cout) * k * k))
            w[...] = rng.uniform(-a, a, size=w.shape)
        return flat

    def forward(self, params: np.ndarray, x: np.ndarray, tape: Tape | None = None,
                grad: np.ndarray | None = None) -> list[tuple[Var, Var, Var]]:
        """Run all stacks on a batch x of shape (N, INPUT_CHANNELS, H, W).

        Returns per stack (R, S, V) Vars shaped (N, J, H, W), (N, J, H, W), (N, 3J, H, W).
        With a tape and a grad buffer, the tape's backward pass fills ``grad``.
        """
        arch = self.arch
        if x.shape[1:] != (INPUT_CHANNELS, arch.size, arch.size):
            raise ValueError(f"input {x.shape[1:]} does not match architecture size {arch.size}")
        tape = tape or Tape(record=False)
        P = self.views(params)
        G = self.views(grad) if grad is not None else {}
        act = tape.relu if arch.activation == "relu" else tape.identity

        def conv(name, v):
            w, b = P[name]
            dw, db = G.get(name, (None, None))
            return tape.conv(v, w, b, dw, db)

        depth = Var(x[:, :1])
        mask_arr = x[:, 1:2]
        base = Var(x)
        outputs = []
        prev = None
        for t in range(arch.stacks):
            inp = base if prev is None else tape.concat([base, *prev])
            skips = []
            h = inp
            for lvl in range(arch.levels):
                if lvl > 0:
                    h = tape.avgpool2(h)
                h = act(conv(f"s{t}.enc{lvl}", h))
                skips.append(h)
            for lvl in reversed(range(arch.levels - 1)):
                h = act(conv(f"s{t}.dec{lvl}", tape.add(tape.upsample2(h), skips[lvl])))
            feat = h
            R = conv(f"s{t}.r", feat)
            S = conv(f"s{t}.s", tape.concat([feat, depth]))
            if arch.mask_outputs:
                # S and V are only defined on surface pixels
                S = tape.mul_const(S, mask_arr)
            masked = tape.mul_const(feat, mask_arr)
            vh = act(conv(f"s{t}.vhid", tape.concat([masked, feat, R, S, depth])))
            V = conv(f"s{t}.v", vh)
            if arch.mask_outputs:
                V = tape.mul_const(V, mask_arr)
            outputs.append((R, S, V))
            prev = (R, S, V)
        return outputs


def v_channels_to_grid(v: np.ndarray) -> np.ndarray:
    """(N, 3J, H, W) channel layout -> (N, J, H, W, 3) target layout."""
    n, c, h, w = v.shape
    return v.reshape(n, c // 3, 3, h, w).transpose(0, 1, 3, 4, 2)


def v_grid_to_channels(v: np.ndarray) -> np.ndarray:
    n, j, h, w, _ = v.shape
    return v.transpose(0, 1, 4, 2, 3).reshape(n, 3 * j, h, w)
