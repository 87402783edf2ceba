"""
Synthetic test images and noise injection.

- gen_square:  centred square of side floor(n/3) on a constant background
               (pixel units, h = 1); the side grows by one pixel when
               n - floor(n/3) is odd so both margins are equal.
- gen_pyramid: u(x, y) = max(0, 1 - 2 max(|x - 1/2|, |y - 1/2|)) sampled on
               [0, 1]^2 including both end points (h = 1/(n - 1)).
- gen_cartoon: piecewise-constant shapes plus a sinusoidal texture patch, a
               stand-in for natural photographs in denoising runs.
- add_gaussian_noise: i.i.d. zero-mean Gaussian noise from a seeded
               generator; no clamping.
"""

from __future__ import annotations

import math

import numpy as np

from ..grid_ops import Grid, ScalarField

__all__ = ["gen_square", "gen_pyramid", "gen_cartoon", "add_gaussian_noise"]

MIN_SIZE = 8


def _check_size(n: int) -> None:
    if int(n) != n or n < MIN_SIZE:
        raise ValueError(f"n must be an integer >= {MIN_SIZE}; got {n}")


def gen_square(
    n: int, inside: float = 1.0, outside: float = 0.0, h: float = 1.0
) -> ScalarField:
    """n x n field with a centred square block of side about n / 3 set to `inside`."""
    _check_size(n)
    side = n // 3
    side += (n - side) % 2
    start = (n - side) // 2
    values = np.full((n, n), float(outside))
    values[start : start + side, start : start + side] = float(inside)
    return ScalarField(Grid(nx=n, ny=n, h=h), values)


def gen_pyramid(n: int) -> ScalarField:
    """Square-based pyramid with apex 1 at the centre of [0, 1]^2."""
    _check_size(n)
    grid = Grid.unit_square(n)
    x = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    values = np.maximum(0.0, 1.0 - 2.0 * np.maximum(np.abs(X - 0.5), np.abs(Y - 0.5)))
    return ScalarField(grid, values)


def gen_cartoon(n: int = 200, h: float = 1.0) -> ScalarField:
    """
    Cartoon-plus-texture image in [0, 1]: a bright disc, a mid-grey
    rectangle, a dark triangle and a striped texture patch on a grey
    background.
    """
    _check_size(n)
    axis = np.arange(n, dtype=float)
    i, j = np.meshgrid(axis, axis, indexing="ij")
    s = n / 200.0
    values = np.full((n, n), 0.3)

    disc = (i - 60 * s) ** 2 + (j - 60 * s) ** 2 <= (35 * s) ** 2
    values[disc] = 0.85

    rect = (i >= 110 * s) & (i < 175 * s) & (j >= 25 * s) & (j < 85 * s)
    values[rect] = 0.55

    tri = (i >= 30 * s) & (i < 100 * s) & (j >= 120 * s) & (j - 120 * s <= (i - 30 * s))
    values[tri] = 0.1

    patch = (i >= 120 * s) & (i < 180 * s) & (j >= 115 * s) & (j < 175 * s)
    stripes = 0.6 + 0.15 * np.sin(2.0 * math.pi * (i + j) / (8.0 * s))
    values[patch] = stripes[patch]

    return ScalarField(Grid(nx=n, ny=n, h=h), values)


def add_gaussian_noise(u: ScalarField, variance: float, seed: int) -> ScalarField:
    """
    Return u + noise with noise ~ N(0, variance) i.i.d. per pixel.

    Raises:
        ValueError: if variance is negative.
    """
    if variance < 0:
        raise ValueError(f"variance must be >= 0; got {variance}")
    if variance == 0:
        return u.with_values(u.values.copy())
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, math.sqrt(variance), size=u.values.shape)
    return u.with_values(u.values + noise)
