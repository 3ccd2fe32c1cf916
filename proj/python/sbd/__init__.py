"""Spatial birth-death processes: exact simulation and perfect sampling."""

from ._core import (
    SpaceSpec,
    RateModel,
    constant,
    pairwise,
    cell_pairwise,
    area_interaction,
    nearest_neighbor,
    birth_rate,
    envelope_bound,
    contraction_constant,
    energy,
    simulate,
    perfect_sample,
    minimal_stationary_sample,
    maximal_stationary_sample,
    oracle_stationary,
    gibbs_table,
    tv_distance,
    mecke_test,
    exponential_ks_test,
    chi_square_poisson,
    ripley_k,
)

__all__ = [
    "SpaceSpec",
    "RateModel",
    "constant",
    "pairwise",
    "cell_pairwise",
    "area_interaction",
    "nearest_neighbor",
    "birth_rate",
    "envelope_bound",
    "contraction_constant",
    "energy",
    "simulate",
    "perfect_sample",
    "minimal_stationary_sample",
    "maximal_stationary_sample",
    "oracle_stationary",
    "gibbs_table",
    "tv_distance",
    "mecke_test",
    "exponential_ks_test",
    "chi_square_poisson",
    "ripley_k",
]
