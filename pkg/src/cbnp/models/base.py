from __future__ import annotations

import dataclasses

import numpy as np

MODEL_REGISTRY: dict[str, type] = {}


def register(cls):
    MODEL_REGISTRY[cls.model_id] = cls
    return cls


class DynamicalModel:
    """Interface shared by every segment model.

    Subclasses are frozen dataclasses of parameters. Batched methods take
    ``states`` of shape ``(B, r)`` and ``controls`` of shape ``(B, d)``.
    """

    model_id = "abstract"
    compartments: tuple[str, ...] = ()
    control_names: tuple[str, ...] = ()
    rate_normalized = True
    # parameters scaled by perturbation studies; cost weights are never perturbed
    dynamic_params: tuple[str, ...] = ()
    # upper limits for perturbed parameters that are probabilities
    param_ceilings: dict = {}

    @property
    def dim(self) -> int:
        return len(self.compartments)

    @property
    def control_dim(self) -> int:
        return len(self.control_names)

    def derivative(self, states, controls, epoch, t=0.0):
        raise NotImplementedError

    def running_cost(self, states, epoch):
        return np.zeros(np.shape(states)[0])

    def terminal_cost(self, states):
        return np.zeros(np.shape(states)[0])

    def decision_cost(self, decision, epoch) -> float:
        return 0.0

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else (list(v) if isinstance(v, tuple) else v)
        return out

    @classmethod
    def from_dict(cls, data: dict):
        return cls(**{k: _tupleize(v) for k, v in data.items()})

    def perturbed(self, rng: np.random.Generator, magnitude: float):
        """Copy with every dynamic parameter multiplied by an independent U[1-m, 1+m] draw.

        Draws that would push a probability past its ceiling are clipped to it.
        """
        changes = {}
        for name in self.dynamic_params:
            v = getattr(self, name)
            top = self.param_ceilings.get(name, np.inf)
            if isinstance(v, (tuple, list, np.ndarray)):
                arr = np.asarray(v, dtype=float)
                draw = arr * rng.uniform(1 - magnitude, 1 + magnitude, size=arr.shape)
                changes[name] = tuple(np.minimum(draw, top).tolist())
            else:
                changes[name] = min(float(v) * rng.uniform(1 - magnitude, 1 + magnitude), top)
        return dataclasses.replace(self, **changes)


def per_epoch(value, epoch: int) -> float:
    """Piecewise-constant lookup: scalars are constant, sequences are indexed by epoch (last value repeats)."""
    if isinstance(value, (tuple, list, np.ndarray)):
        return float(value[min(epoch, len(value) - 1)])
    return float(value)


def model_from_dict(data: dict) -> DynamicalModel:
    data = dict(data)
    kind = data.pop("model")
    try:
        cls = MODEL_REGISTRY[kind]
    except KeyError:
        raise ValueError(f"unknown model id {kind!r}") from None
    return cls.from_dict(data)


def model_to_dict(model: DynamicalModel) -> dict:
    return {"model": model.model_id, **model.to_dict()}


def _tupleize(v):
    if isinstance(v, list):
        return tuple(_tupleize(x) for x in v)
    return v
