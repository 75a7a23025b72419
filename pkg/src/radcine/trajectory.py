"""Golden-angle radial trajectories split into cardiac frames."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GOLDEN_RATIO = (1 + math.sqrt(5)) / 2
GOLDEN_ANGLE = math.pi / GOLDEN_RATIO  # ~111.246 degrees


@dataclass(frozen=True, eq=False)
class Trajectory:
    n_x: int
    n_frames: int
    spokes_per_frame: int
    samples_per_spoke: int
    coords: np.ndarray          # (n_frames, spokes_per_frame * samples_per_spoke, 2)
    spoke_angles: np.ndarray    # (n_frames, spokes_per_frame)
    nyquist_spokes: int
    total_spokes: int
    partition: str = "consecutive"

    @property
    def samples_per_frame(self) -> int:
        return self.spokes_per_frame * self.samples_per_spoke

    @property
    def radial_step(self) -> float:
        return 2 * math.pi / self.samples_per_spoke


def nyquist_spoke_count(n_x: int) -> int:
    """Spokes needed to sample an ``n_x`` image at the Nyquist limit: ceil(pi/2 * n_x)."""
    if n_x < 2:
        raise ValueError("n_x must be >= 2")
    return math.ceil(math.pi / 2 * n_x)


def spoke_angles(n_spokes: int) -> np.ndarray:
    j = np.arange(n_spokes, dtype=np.float64)
    return np.mod(j * GOLDEN_ANGLE, math.pi)


def golden_angle_trajectory(n_x: int, n_frames: int, spokes_per_frame: int,
                            samples_per_spoke: int | None = None,
                            partition: str = "consecutive") -> Trajectory:
    """Build the sampling pattern of a golden-angle radial cine.

    Spoke ``j`` (counted over the whole acquisition) lies at ``j * pi/phi mod pi``
    and carries ``samples_per_spoke`` points uniformly spaced on [-pi, pi).
    With ``partition="consecutive"`` frame ``t`` receives spokes
    ``t*S .. t*S + S - 1``; ``"interleaved"`` deals spoke ``j`` to frame ``j % n_frames``.
    """
    if samples_per_spoke is None:
        samples_per_spoke = 2 * n_x
    for name, v in (("n_x", n_x), ("n_frames", n_frames), ("spokes_per_frame", spokes_per_frame),
                    ("samples_per_spoke", samples_per_spoke)):
        if v <= 0:
            raise ValueError(f"{name} must be positive, got {v}")
    if samples_per_spoke % 2:
        raise ValueError("samples_per_spoke must be even")
    total = n_frames * spokes_per_frame
    angles = spoke_angles(total)
    if partition == "consecutive":
        per_frame = angles.reshape(n_frames, spokes_per_frame)
    elif partition == "interleaved":
        per_frame = angles.reshape(spokes_per_frame, n_frames).T.copy()
    else:
        raise ValueError(f"unknown partition {partition!r}")

    kr = -math.pi + 2 * math.pi * np.arange(samples_per_spoke) / samples_per_spoke
    kx = kr[None, None, :] * np.cos(per_frame)[..., None]
    ky = kr[None, None, :] * np.sin(per_frame)[..., None]
    coords = np.stack([kx, ky], axis=-1).reshape(n_frames, -1, 2)
    # -pi * cos(theta) can round up to +pi for theta close to pi
    coords = np.where(coords >= math.pi, np.nextafter(math.pi, 0.0), coords)
    coords.setflags(write=False)
    per_frame.setflags(write=False)
    return Trajectory(n_x=n_x, n_frames=n_frames, spokes_per_frame=spokes_per_frame,
                      samples_per_spoke=samples_per_spoke, coords=coords,
                      spoke_angles=per_frame, nyquist_spokes=nyquist_spoke_count(n_x),
                      total_spokes=total, partition=partition)


def acceleration_factor(traj: Trajectory) -> float:
    """Nyquist spoke budget of all frames divided by the spokes actually acquired."""
    if traj.total_spokes <= 0:
        raise ValueError("trajectory has no spokes")
    return traj.n_frames * traj.nyquist_spokes / traj.total_spokes
