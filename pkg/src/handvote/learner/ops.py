"""Minimal reverse-mode differentiation over NCHW numpy arrays.

Only the handful of ops the dense predictor needs. Every op records a closure on
the tape; ``Tape.backward`` replays them in reverse, accumulating into ``Var.grad``
and into caller-provided parameter-gradient views.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Var:
    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g


class Tape:
    def __init__(self, record: bool = True):
        self.record = record
        self._ops = []

    def push(self, fn) -> None:
        if self.record:
            self._ops.append(fn)

    def backward(self) -> None:
        for fn in reversed(self._ops):
            fn()
        self._ops.clear()

    # -- ops ------------------------------------------------------------------

    def conv(self, x: Var, w: np.ndarray, b: np.ndarray, dw: np.ndarray | None = None,
             db: np.ndarray | None = None) -> Var:
        """Stride-1 'same' convolution with an odd square kernel w of shape (Cout, Cin, k, k)."""
        k = w.shape[-1]
        p = k // 2
        n, c, h, wd = x.value.shape
        if k == 1:
            y = np.einsum("nchw,oc->nohw", x.value, w[:, :, 0, 0], optimize=True)
            win = None
        else:
            xp = np.pad(x.value, ((0, 0), (0, 0), (p, p), (p, p)))
            win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (N, C, H, W, k, k)
            y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        y = y + b[None, :, None, None]
        out = Var(np.ascontiguousarray(y))

        def back():
            g = out.grad
            if g is None:
                return
            if db is not None:
                db[...] += g.sum(axis=(0, 2, 3))
            if k == 1:
                if dw is not None:
                    dw[:, :, 0, 0] += np.einsum("nohw,nchw->oc", g, x.value, optimize=True)
                x.accumulate(np.einsum("nohw,oc->nchw", g, w[:, :, 0, 0], optimize=True))
                return
            if dw is not None:
                dw[...] += np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
            dxp = np.zeros((n, c, h + 2 * p, wd + 2 * p))
            for a in range(k):
                for bb in range(k):
                    dxp[:, :, a:a + h, bb:bb + wd] += np.einsum(
                        "nohw,oc->nchw", g, w[:, :, a, bb], optimize=True)
            x.accumulate(dxp[:, :, p:p + h, p:p + wd])

        self.push(back)
        return out

    def relu(self, x: Var) -> Var:
        on = x.value > 0
        out = Var(np.where(on, x.value, 0.0))

        def back():
            if out.grad is not None:
                x.accumulate(np.where(on, out.grad, 0.0))

        self.push(back)
        return out

    def identity(self, x: Var) -> Var:
        return x

    def avgpool2(self, x: Var) -> Var:
        n, c, h, w = x.value.shape
        out = Var(x.value.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5)))

        def back():
            if out.grad is not None:
                g = np.repeat(np.repeat(out.grad, 2, axis=2), 2, axis=3) * 0.25
                x.accumulate(g)

        self.push(back)
        return out

    def upsample2(self, x: Var) -> Var:
        n, c, h, w = x.value.shape
        out = Var(np.repeat(np.repeat(x.value, 2, axis=2), 2, axis=3))

        def back():
            if out.grad is not None:
                x.accumulate(out.grad.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)))

        self.push(back)
        return out

    def add(self, a: Var, b: Var) -> Var:
        out = Var(a.value + b.value)

        def back():
            if out.grad is not None:
                a.accumulate(out.grad)
                b.accumulate(out.grad)

        self.push(back)
        return out

    def mul_const(self, x: Var, m: np.ndarray) -> Var:
        """Multiply by a constant (broadcastable) array, e.g. a binary mask."""
        out = Var(x.value * m)

        def back():
            if out.grad is not None:
                x.accumulate(out.grad * m)

        self.push(back)
        return out

    def concat(self, xs: list[Var]) -> Var:
        sizes = [x.value.shape[1] for x in xs]
        out = Var(np.concatenate([x.value for x in xs], axis=1))

        def back():
            if out.grad is None:
                return
            start = 0
            for x, s in zip(xs, sizes):
                x.accumulate(out.grad[:, start:start + s])
                start += s

        self.push(back)
        return out
