"""
Experiment data: synthetic dictionary learning instances, grayscale
images and the patch pipeline of the denoising runs.
"""
import logging
import math
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np
from PIL import Image

from ipad.error import (ConfigError, ShapeError, TruncatedImageError,
                        UnsupportedFormatError, UnsupportedMaxvalError)
from ipad.framework import BlockPoint
from ipad.prox import project_unit_columns
from ipad.sdl import SdlInstance

logger = logging.getLogger(__name__)

PATCH_SIZE = 8
PSNR_CAP = 99.0
# init draws use their own stream so D0 never repeats the data's D*
INIT_STREAM = 1


@dataclass
class SyntheticSpec:
    n: int = 64
    m: int = 600
    p: int = 4000
    k: int = 5
    noise_sigma: float = 0.01
    lam: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.n, self.m, self.p) < 1:
            raise ConfigError('synthetic shapes must be positive, got '
                              'n=%r m=%r p=%r' % (self.n, self.m, self.p))
        if not 0 <= self.k <= self.m:
            raise ConfigError('k=%r must lie in [0, m=%r]' % (self.k, self.m))
        if self.noise_sigma < 0 or self.lam < 0:
            raise ConfigError('noise_sigma and lam must be nonnegative')


@dataclass
class SyntheticData:
    instance: SdlInstance
    D_true: np.ndarray
    W_true: np.ndarray


def random_dictionary(n, m, rng):
    return project_unit_columns(rng.standard_normal((n, m)))


def gen_synthetic(spec):
    """
    ``I = D* W*^T + sigma * noise`` with random unit atoms ``D*`` and
    exactly ``k`` standard normal entries per row of ``W*``.
    """
    rng = np.random.default_rng(spec.seed)
    D_true = random_dictionary(spec.n, spec.m, rng)
    positions = np.argsort(rng.random((spec.p, spec.m)), axis=1)[:, :spec.k]
    W_true = np.zeros((spec.p, spec.m))
    rows = np.arange(spec.p)[:, np.newaxis]
    W_true[rows, positions] = rng.standard_normal((spec.p, spec.k))
    data = D_true @ W_true.T
    if spec.noise_sigma > 0:
        data = data + spec.noise_sigma * rng.standard_normal(data.shape)
    instance = SdlInstance(data=data, lam=spec.lam, m=spec.m)
    return SyntheticData(instance, D_true, W_true)


def synthetic_init(instance, seed):
    """``W0 = 0`` and random unit atoms for ``D0``."""
    rng = np.random.default_rng((seed, INIT_STREAM))
    return BlockPoint(x=np.zeros((instance.p, instance.m)),
                      y=random_dictionary(instance.n, instance.m, rng))


@dataclass
class GrayImage:
    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.shape != (self.height, self.width):
            raise ShapeError('pixels of shape %r do not match %dx%d'
                             % (self.pixels.shape, self.width, self.height))

    @classmethod
    def from_array(cls, pixels):
        pixels = np.asarray(pixels)
        return cls(pixels.shape[1], pixels.shape[0], pixels)


def _positions(span, stride):
    positions = list(range(0, span - PATCH_SIZE + 1, stride))
    if positions[-1] != span - PATCH_SIZE:
        positions.append(span - PATCH_SIZE)
    return np.array(positions)


@dataclass
class PatchGrid:
    """
    Top-left corners of the 8x8 patches sampled from an image. When the
    stride does not divide the span the last patch is pinned to the image
    border.
    """
    height: int
    width: int
    stride: int = 4
    patch_size: int = PATCH_SIZE

    def __post_init__(self):
        if not 1 <= self.stride <= self.patch_size:
            raise ConfigError('stride must lie in [1, %d], got %r'
                              % (self.patch_size, self.stride))
        if self.height < self.patch_size or self.width < self.patch_size:
            raise ShapeError('image %dx%d is smaller than a %dx%d patch' % (
                self.width, self.height, self.patch_size, self.patch_size))
        self.rows = _positions(self.height, self.stride)
        self.cols = _positions(self.width, self.stride)

    @classmethod
    def for_image(cls, img, stride=4):
        return cls(img.height, img.width, stride)

    @property
    def count(self):
        return len(self.rows) * len(self.cols)


def extract_patches(img, stride=4):
    """
    ``count x 64`` matrix of the image's 8x8 patches, each flattened row
    major, patches ordered row by row.
    """
    grid = PatchGrid.for_image(img, stride)
    windows = np.lib.stride_tricks.sliding_window_view(
        img.pixels.astype(float), (PATCH_SIZE, PATCH_SIZE))
    selected = windows[grid.rows][:, grid.cols]
    return selected.reshape(grid.count, PATCH_SIZE * PATCH_SIZE)


def reconstruct(patches, grid):
    """
    Averages overlapping patch values per pixel, then rounds and clips to
    8 bits.
    """
    patches = np.asarray(patches, dtype=float)
    if patches.shape != (grid.count, PATCH_SIZE * PATCH_SIZE):
        raise ShapeError('expected %d patches of %d pixels, got %r' % (
            grid.count, PATCH_SIZE * PATCH_SIZE, patches.shape))
    acc = np.zeros((grid.height, grid.width))
    weight = np.zeros((grid.height, grid.width))
    blocks = patches.reshape(len(grid.rows), len(grid.cols),
                             PATCH_SIZE, PATCH_SIZE)
    # one offset at a time so every fancy-indexed target is unique
    for dy in range(PATCH_SIZE):
        for dx in range(PATCH_SIZE):
            index = np.ix_(grid.rows + dy, grid.cols + dx)
            acc[index] += blocks[:, :, dy, dx]
            weight[index] += 1.0
    pixels = np.clip(np.rint(acc / weight), 0, 255).astype(np.uint8)
    return GrayImage(grid.width, grid.height, pixels)


def add_noise(img, sigma, seed):
    rng = np.random.default_rng(seed)
    noisy = img.pixels + sigma * rng.standard_normal(img.pixels.shape)
    return GrayImage(img.width, img.height,
                     np.clip(np.rint(noisy), 0, 255).astype(np.uint8))


def psnr(a, b):
    """
    ``10 log10(255^2 / MSE)`` in dB, capped at 99 dB.
    """
    if (a.width, a.height) != (b.width, b.height):
        raise ShapeError('cannot compare %dx%d and %dx%d images'
                         % (a.width, a.height, b.width, b.height))
    diff = a.pixels.astype(float) - b.pixels.astype(float)
    mse = float(np.mean(diff ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(255.0 ** 2 / mse))


_PGM_HEADER = re.compile(rb'(\S+)\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*'
                         rb'(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s')


def pgm_read(path):
    """
    Reads a binary (P5) PGM file with maxval 255.

    The header is checked here so that each defect gets its own error;
    Pillow decodes the pixels.
    """
    with open(path, 'rb') as f:
        content = f.read()
    if not content.startswith(b'P5'):
        raise UnsupportedFormatError('%s: not a binary PGM (magic %r)'
                                     % (path, content[:2]))
    match = _PGM_HEADER.match(content)
    if match is None:
        raise TruncatedImageError('%s: incomplete PGM header' % path)
    width, height, maxval = (int(match.group(i)) for i in (2, 3, 4))
    if maxval != 255:
        raise UnsupportedMaxvalError('%s: maxval %d, only 255 is supported'
                                     % (path, maxval))
    if len(content) - match.end() < width * height:
        raise TruncatedImageError('%s: expected %d pixels, found %d'
                                  % (path, width * height,
                                     len(content) - match.end()))
    try:
        with Image.open(path) as pil:
            pixels = np.asarray(pil.convert('L'))
    except OSError as e:
        raise TruncatedImageError('%s: %s' % (path, e))
    return GrayImage(width, height, pixels)


def pgm_write(img, path):
    # a 2-D uint8 array maps to mode L, which the PPM writer stores as P5
    Image.fromarray(np.ascontiguousarray(img.pixels, dtype=np.uint8)).save(
        path, format='PPM')


def center_crop(img, size):
    if size > img.width or size > img.height:
        raise ShapeError('cannot crop %dx%d out of a %dx%d image'
                         % (size, size, img.width, img.height))
    top = (img.height - size) // 2
    left = (img.width - size) // 2
    return GrayImage(size, size,
                     img.pixels[top:top + size, left:left + size].copy())


def overcomplete_dct(patch_size=PATCH_SIZE, atoms=256):
    """
    Separable overcomplete DCT dictionary with ``atoms`` unit columns.

    ``atoms`` must be a perfect square; every 1-D cosine except the
    constant one has its mean removed.
    """
    k = int(round(math.sqrt(atoms)))
    if k * k != atoms or k < patch_size:
        raise ConfigError('atoms must be a square >= %d, got %r'
                          % (patch_size ** 2, atoms))
    basis = np.cos(np.outer(np.arange(patch_size), np.arange(k)) *
                   np.pi / k)
    basis[:, 1:] -= basis[:, 1:].mean(axis=0)
    basis /= np.linalg.norm(basis, axis=0)
    return project_unit_columns(np.kron(basis, basis))


# penalties tuned on 512x512 images sampled with stride 1
REFERENCE_PATCHES = 505 ** 2


def denoise_lambda(sigma):
    """
    Penalty per nonzero code entry for noise level ``sigma``.

    The reference totals (2500, 3500, 4500, 5500 for sigma 15, 20, 25, 30)
    follow ``200 sigma - 500``; they are spread over the reference patch
    count so the total penalty scales with the number of patches.
    """
    if sigma <= 0:
        raise ConfigError('sigma must be positive, got %r' % (sigma,))
    return max(200.0 * sigma - 500.0, 0.0) / REFERENCE_PATCHES


@dataclass
class DenoiseSpec:
    sigma: float = 20.0
    stride: int = 4
    lam: Optional[float] = None
    atoms: int = 256
    bound: float = 10.0
    crop: Optional[int] = None
    noise_seed: int = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError('sigma must be positive, got %r'
                              % (self.sigma,))
        if self.lam is not None and self.lam < 0:
            raise ConfigError('lam must be nonnegative')

    @property
    def resolved_lam(self):
        return denoise_lambda(self.sigma) if self.lam is None else self.lam


@dataclass
class DenoiseResult:
    clean: GrayImage
    noisy: GrayImage
    recovered: GrayImage
    psnr_noisy: float
    psnr_recovered: float
    lam: float
    patch_count: int
    solve: object


def denoise_image(img, spec, variant, config):
    """
    Learns a dictionary on the noisy patches of ``img`` and rebuilds the
    image from the sparse approximation.

    Patches have their means removed and intensities scaled to [0, 1]
    before coding; ``D0`` is the overcomplete DCT and ``W0 = 0``.
    """
    from ipad.baselines import run_variant

    if spec.crop:
        img = center_crop(img, spec.crop)
    noisy = add_noise(img, spec.sigma, spec.noise_seed)
    grid = PatchGrid.for_image(noisy, spec.stride)
    patches = extract_patches(noisy, spec.stride)
    means = patches.mean(axis=1, keepdims=True)
    data = ((patches - means) / 255.0).T

    lam = spec.resolved_lam
    instance = SdlInstance(data=data, lam=lam, m=spec.atoms,
                           bound=spec.bound)
    init = BlockPoint(x=np.zeros((instance.p, instance.m)),
                      y=overcomplete_dct(PATCH_SIZE, spec.atoms))
    logger.info('denoising %dx%d image: sigma=%g, %d patches, lam=%.6g',
                img.width, img.height, spec.sigma, grid.count, lam)
    solve = run_variant(variant, instance, config, init)

    D, W = solve.final.y, solve.final.x
    restored = (D @ W.T).T * 255.0 + means
    recovered = reconstruct(restored, grid)
    return DenoiseResult(clean=img, noisy=noisy, recovered=recovered,
                         psnr_noisy=psnr(img, noisy),
                         psnr_recovered=psnr(img, recovered), lam=lam,
                         patch_count=grid.count, solve=solve)
