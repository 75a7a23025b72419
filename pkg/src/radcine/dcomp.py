"""Analytic radial density compensation.

Stands in for Voronoi-based weights: for evenly spread full spokes the
Voronoi cell of a sample at radius |k| has area ``dk * pi |k| / S`` (S spokes
per frame), and the centre sample owns a 1/S share of a disc of radius dk/2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .trajectory import Trajectory


@dataclass(frozen=True, eq=False)
class DensityWeights:
    weights: np.ndarray  # (n_frames, samples_per_frame), same layout as Trajectory.coords

    def __post_init__(self):
        w = self.weights
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("density weights must be finite and non-negative")


def ramp_density(traj: Trajectory, image_shape: tuple[int, int] | None = None) -> DensityWeights:
    """Per-sample weights making ``A^H W`` an approximate inverse of ``A``.

    Cell areas are rescaled per frame so they sum to the sampled disc area
    pi^3, then multiplied by ``n_x n_y / (2 pi)^2`` to match the unitary
    scaling of the NUFFT.
    """
    if traj.samples_per_frame == 0:
        raise ValueError("empty frame")
    n_x, n_y = image_shape if image_shape is not None else (traj.n_x, traj.n_x)
    s = traj.spokes_per_frame
    dk = traj.radial_step
    kr = np.abs(-math.pi + dk * np.arange(traj.samples_per_spoke))
    area = dk * math.pi * kr / s
    area[kr == 0] = math.pi * (dk / 2) ** 2 / s
    profile = np.tile(area, s)
    profile *= math.pi ** 3 / profile.sum()
    profile *= n_x * n_y / (4 * math.pi ** 2)
    w = np.broadcast_to(profile, (traj.n_frames, profile.size)).copy()
    w.setflags(write=False)
    return DensityWeights(w)
