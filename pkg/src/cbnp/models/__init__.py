from .base import MODEL_REGISTRY, DynamicalModel, model_from_dict, model_to_dict, per_epoch
from .bass import BassModel, bass_transition
from .delphi import DelphiV, delphi_v_transition
from .generic import AffineModel
from .sair import Sair2Model, sair2_transition, city_rates_model

__all__ = [
    "MODEL_REGISTRY", "DynamicalModel", "model_from_dict", "model_to_dict", "per_epoch",
    "BassModel", "bass_transition", "DelphiV", "delphi_v_transition", "AffineModel",
    "Sair2Model", "sair2_transition", "city_rates_model",
]
