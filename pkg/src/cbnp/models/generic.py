from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import DynamicalModel, register


@register
@dataclass(frozen=True)
class AffineModel(DynamicalModel):
    """dM/dt = A M + B u + c with linear running cost and quadratic terminal cost.

    Used for the generic problem kind and for constructing test fixtures whose
    plan costs are deliberately non-convex in the decisions.
    """

    model_id = "affine"
    A: tuple = ((0.0,),)
    B: tuple = ((1.0,),)
    c: tuple = (0.0,)
    q: tuple = (0.0,)
    h_lin: tuple = (0.0,)
    h_quad: tuple = ((0.0,),)
    normalize_rate: bool = False
    dynamic_params = ("c",)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        r = A.shape[0]
        if A.shape != (r, r) or B.shape[0] != r:
            raise ValueError("affine model: A must be r x r and B must have r rows")
        for name, shape in (("c", (r,)), ("q", (r,)), ("h_lin", (r,)), ("h_quad", (r, r))):
            if np.asarray(getattr(self, name), dtype=float).shape != shape:
                raise ValueError(f"affine model: {name} must have shape {shape}")
        object.__setattr__(self, "_A", A)
        object.__setattr__(self, "_B", B)
        object.__setattr__(self, "_c", np.asarray(self.c, dtype=float))
        object.__setattr__(self, "_q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "_hl", np.asarray(self.h_lin, dtype=float))
        object.__setattr__(self, "_hq", np.asarray(self.h_quad, dtype=float))

    @property
    def compartments(self):
        return tuple(f"m{k}" for k in range(self._A.shape[0]))

    @property
    def control_names(self):
        return tuple(f"u{k}" for k in range(self._B.shape[1]))

    @property
    def rate_normalized(self):
        return self.normalize_rate

    def derivative(self, states, controls, epoch, t=0.0):
        return states @ self._A.T + controls @ self._B.T + self._c

    def running_cost(self, states, epoch):
        return states @ self._q

    def terminal_cost(self, states):
        return states @ self._hl + 0.5 * np.einsum("bi,ij,bj->b", states, self._hq, states)

    def to_dict(self):
        return {
            "A": self._A.tolist(), "B": self._B.tolist(), "c": self._c.tolist(), "q": self._q.tolist(),
            "h_lin": self._hl.tolist(), "h_quad": self._hq.tolist(), "normalize_rate": self.normalize_rate,
        }

