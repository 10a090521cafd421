#!/usr/bin/env python
'''
File			:	augment.py
Package			:	ssm_segtools.train
Brief			:	Random flips, rotations and translations applied identically to
					an image, its mask and its point cloud.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from ssm_segtools.geometry.affine import AffineParams, apply_affine, invert_affine
from ssm_segtools.geometry.pointcloud import PointCloud
from ssm_segtools.masks import BinaryMask, as_binary
from ssm_segtools.train.config import AugmentConfig


@dataclass(frozen=True)
class AugmentDraw:
	flip_lr: bool = False
	flip_ud: bool = False
	rotation: float = 0.0
	translation: tuple = (0.0, 0.0)

	def affine(self, width: int, height: int) -> AffineParams:
		'''
		Flip, then rotate about the image center, then translate.
		'''
		cx, cy = 0.5 * width, 0.5 * height
		flip = np.diag([-1.0 if self.flip_lr else 1.0, -1.0 if self.flip_ud else 1.0])
		c, s = math.cos(self.rotation), math.sin(self.rotation)
		lin = np.array([[c, -s], [s, c]]) @ flip
		center = np.array([cx, cy])
		t = center + np.asarray(self.translation, dtype=float) - lin @ center
		return AffineParams.from_parts(lin, t)


def draw_augmentation(rng: np.random.Generator, cfg: AugmentConfig, width: int, height: int) -> AugmentDraw:
	if not cfg.enabled:
		return AugmentDraw()
	flip_lr = bool(rng.random() < cfg.flip_lr)
	flip_ud = bool(rng.random() < cfg.flip_ud)
	rotation = math.radians(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg))
	tx = rng.uniform(-cfg.translation_frac, cfg.translation_frac) * width
	ty = rng.uniform(-cfg.translation_frac, cfg.translation_frac) * height
	return AugmentDraw(flip_lr, flip_ud, rotation, (tx, ty))

def _sourceCoordinates(theta: AffineParams, shape):
	# output pixel centers pulled back through theta, as (row, col) indices
	height, width = shape
	xs, ys = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)
	src = invert_affine(theta).apply(np.stack([xs.ravel(), ys.ravel()], axis=1))
	return np.stack([src[:, 1] - 0.5, src[:, 0] - 0.5])

def warp_image(image, theta: AffineParams) -> np.ndarray:
	'''
	Bilinear resample of image under theta; pixels mapped from outside the
	source are 0.
	'''
	arr = np.asarray(image, dtype=float)
	coords = _sourceCoordinates(theta, arr.shape)
	return map_coordinates(arr, coords, order=1, mode='constant', cval=0.0).reshape(arr.shape)

def warp_mask(mask, theta: AffineParams) -> BinaryMask:
	binary = as_binary(mask)
	coords = _sourceCoordinates(theta, binary.shape)
	values = map_coordinates(binary.data.astype(float), coords, order=0, mode='constant', cval=0.0)
	return BinaryMask(values.reshape(binary.shape) >= 0.5, binary.spacing_mm)

def warp_points(pc: PointCloud, theta: AffineParams) -> PointCloud:
	'''
	Maps the cloud through theta. A mirroring theta reverses each chain so the
	cloud keeps its inner-first, same-direction layout.
	'''
	moved = apply_affine(theta, pc)
	if theta.determinant < 0:
		return moved.reversed_chains()
	return moved

def augment_sample(image, points: PointCloud, rng: np.random.Generator, cfg: AugmentConfig | None = None):
	'''
	One random draw applied to an image and its point cloud.
	'''
	arr = np.asarray(image, dtype=float)
	draw = draw_augmentation(rng, cfg or AugmentConfig(), arr.shape[1], arr.shape[0])
	theta = draw.affine(arr.shape[1], arr.shape[0])
	return warp_image(arr, theta), warp_points(points, theta)
