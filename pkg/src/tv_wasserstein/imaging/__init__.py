"""
Phantoms, noise, image I/O and quality metrics used by the experiments.

    from tv_wasserstein.imaging import gen_pyramid, add_gaussian_noise, psnr
"""

from .formats import (
    ImageBuffer,
    ImageFormatError,
    preview_buffer,
    read_field,
    read_image,
    write_field,
    write_image,
)
from .metrics import discrete_tv, l2_distance, mass, psnr, support_area
from .phantoms import add_gaussian_noise, gen_cartoon, gen_pyramid, gen_square

__all__ = [
    "ImageBuffer",
    "ImageFormatError",
    "read_image",
    "write_image",
    "read_field",
    "write_field",
    "preview_buffer",
    "mass",
    "psnr",
    "discrete_tv",
    "l2_distance",
    "support_area",
    "gen_square",
    "gen_pyramid",
    "gen_cartoon",
    "add_gaussian_noise",
]
