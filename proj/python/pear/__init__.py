"""HEALPix windowed-attention weather model."""

from ._core import (
    ConfigError,
    ContractError,
    DimensionError,
    FormatError,
    Model,
    NonFiniteError,
    RangeError,
    acc,
    ang2pix,
    count_parameters,
    gen_synthetic,
    hpx_to_latlon,
    latlon_to_hpx,
    n_pix,
    nest2ring,
    persistence_l1,
    pixel_area,
    pixel_centers,
    ring2nest,
    rmse,
    train,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DimensionError",
    "FormatError",
    "Model",
    "NonFiniteError",
    "RangeError",
    "acc",
    "ang2pix",
    "count_parameters",
    "gen_synthetic",
    "hpx_to_latlon",
    "latlon_to_hpx",
    "n_pix",
    "nest2ring",
    "persistence_l1",
    "pixel_area",
    "pixel_centers",
    "ring2nest",
    "rmse",
    "train",
]
