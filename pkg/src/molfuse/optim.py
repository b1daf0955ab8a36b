"""Named parameter storage and the Adam optimizer."""

from __future__ import annotations

from typing import Iterator, Mapping

import numpy as np

from .autodiff import Tensor


class ParamStore:
    """Ordered mapping of parameter name to float64 array."""

    def __init__(self, arrays: Mapping[str, np.ndarray] | None = None):
        self.arrays: dict[str, np.ndarray] = {}
        if arrays:
            for name, arr in arrays.items():
                self.add(name, arr)

    def add(self, name: str, values) -> np.ndarray:
        if name in self.arrays:
            raise ValueError(f"parameter {name!r} already exists")
        arr = np.array(values, dtype=np.float64)
        self.arrays[name] = arr
        return arr

    def glorot(self, name: str, shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
        """Uniform init in +-sqrt(6 / (fan_in + fan_out))."""
        fan_in, fan_out = shape[0], shape[-1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return self.add(name, rng.uniform(-bound, bound, size=shape))

    def zeros(self, name: str, shape) -> np.ndarray:
        return self.add(name, np.zeros(shape, dtype=np.float64))

    def copy(self) -> "ParamStore":
        return ParamStore({k: v.copy() for k, v in self.arrays.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __contains__(self, name: str) -> bool:
        return name in self.arrays

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def __len__(self) -> int:
        return len(self.arrays)


class Adam:
    """Adam with bias correction; lr = 0 leaves parameters bit-identical.

    ``lr_overrides`` maps a name prefix (e.g. "head.") to a different
    learning rate; the longest matching prefix wins.
    """

    def __init__(self, store: ParamStore, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 lr_overrides: Mapping[str, float] | None = None):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.lr_overrides = dict(lr_overrides or {})
        self.t = 0
        self._m = {k: np.zeros_like(v) for k, v in store.arrays.items()}
        self._v = {k: np.zeros_like(v) for k, v in store.arrays.items()}

    def _lr_for(self, name: str) -> float:
        best = None
        for prefix, lr in self.lr_overrides.items():
            if name.startswith(prefix) and (best is None or len(prefix) > len(best)):
                best = prefix
        return self.lr if best is None else self.lr_overrides[best]

    def step(self, grads: Mapping[str, Tensor | np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, grad in grads.items():
            if name not in self.store.arrays:
                raise KeyError(f"gradient for unknown parameter {name!r}")
            g = grad.values if isinstance(grad, Tensor) else np.asarray(grad)
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            lr = self._lr_for(name)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            self.store.arrays[name] -= lr * update
