#!/usr/bin/env python
'''
File			:	synthgen.py
Package			:	ssm_segtools
Brief			:	Synthetic U-ring dataset generator: images, masks, landmarks,
					ground-truth point clouds and parameters, either from an
					analytic ring family or drawn from a shape model.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.spatial import cKDTree

from ssm_segtools.alignment.contour import LandmarkTriple, resample_polyline
from ssm_segtools.errors import ConfigError
from ssm_segtools.geometry.affine import AffineParams, SimilarityParams, apply_affine, similarity_to_affine
from ssm_segtools.geometry.pointcloud import MIN_POINTS, PointCloud
from ssm_segtools.masks import BinaryMask
from ssm_segtools.metrics import is_simply_connected
from ssm_segtools.raster.faces import FaceList, build_faces
from ssm_segtools.raster.hard import oriented_face, rasterize_hard
from ssm_segtools.ssm.model import DeformParams, ShapeModel, synthesize
from ssm_segtools.utility import ordered_map

logger = logging.getLogger(__name__)

# Consecutive rejected draws tolerated per sample.
MAX_RETRIES = 100

# Dense centerline samples before arc-length resampling.
DENSE_SAMPLES = 2001

BACKGROUND_LEVEL = 0.3
FOREGROUND_CONTRAST = 0.4

#-------------------------------------------------------------------------------
# class: GenConfig
#
# Public properties:
#	width, height - image size in pixels
#	T - points per cloud
#	span_deg - angular span of the ring's centerline ellipse
#	radius_range - horizontal centerline semi-axis, fraction of min(w, h)
#	elongation_range - vertical over horizontal semi-axis
#	thickness_range - wall thickness, fraction of min(w, h)
#	taper - relative thickness variation along the ring (thinnest at the apex)
#	mode_count, mode_amplitude - low-frequency radial bumps, amplitude as a
#		fraction of the radius
#	scale_range, rotation_deg, translation_frac - similarity jitter
#	model_scale - pixels per canonical unit for model-drawn shapes, as a
#		fraction of min(w, h)
#	noise_sigma, blur_sigma, texture - image appearance
#	spacing_mm - pixel spacing recorded with the masks
#	seed - base seed; sample i draws from default_rng([seed, i])
#
#-------------------------------------------------------------------------------
@dataclass(frozen=True)
class GenConfig:
	width: int = 64
	height: int = 64
	T: int = 88
	span_deg: float = 220.0
	radius_range: Tuple[float, float] = (0.15, 0.20)
	elongation_range: Tuple[float, float] = (1.1, 1.35)
	thickness_range: Tuple[float, float] = (0.07, 0.10)
	taper: float = 0.2
	mode_count: int = 3
	mode_amplitude: float = 0.06
	scale_range: Tuple[float, float] = (0.8, 1.2)
	rotation_deg: float = 25.0
	translation_frac: float = 0.1
	model_scale: float = 0.2
	noise_sigma: float = 0.05
	blur_sigma: float = 1.0
	texture: float = 0.05
	spacing_mm: float = 1.0
	seed: int = 0

	def __post_init__(self):
		src = 'GenConfig'
		if self.width < 8 or self.height < 8:
			raise ConfigError('image size must be at least 8x8, got %dx%d' % (self.width, self.height), src)
		if int(self.T) != self.T or self.T < MIN_POINTS or self.T % 2:
			raise ConfigError('T must be an even integer >= %d, got %r' % (MIN_POINTS, self.T), src)
		if not 0.0 < self.span_deg < 360.0:
			raise ConfigError('span_deg must lie in (0, 360)', src)
		for name in ('radius_range', 'elongation_range', 'thickness_range', 'scale_range'):
			lo, hi = getattr(self, name)
			if not 0.0 < lo <= hi:
				raise ConfigError('%s must satisfy 0 < low <= high, got %r' % (name, (lo, hi)), src)
		if not 0.0 <= self.taper < 1.0:
			raise ConfigError('taper must lie in [0, 1)', src)
		if self.mode_count < 0 or self.mode_amplitude < 0:
			raise ConfigError('mode_count and mode_amplitude must be >= 0', src)
		if min(self.rotation_deg, self.translation_frac, self.noise_sigma, self.blur_sigma, self.texture) < 0:
			raise ConfigError('jitter and appearance ranges must be >= 0', src)
		if not (self.model_scale > 0 and self.spacing_mm > 0):
			raise ConfigError('model_scale and spacing_mm must be positive', src)

	@property
	def size(self) -> int:
		return min(self.width, self.height)

	@property
	def center(self) -> np.ndarray:
		return np.array([0.5 * self.width, 0.5 * self.height])

#-------------------------------------------------------------------------------
# class: SyntheticSample
#
# image, mask, ground-truth cloud and landmarks of one generated sample, with
# the placement theta_gt and, for model-drawn samples, beta_gt.
#
#-------------------------------------------------------------------------------
@dataclass(frozen=True)
class SyntheticSample:
	sample_id: str
	image: np.ndarray
	mask: BinaryMask
	points: PointCloud
	landmarks: LandmarkTriple
	theta_gt: AffineParams
	beta_gt: DeformParams | None = None
	seed: Tuple[int, int] = (0, 0)


def base_ring(cfg: GenConfig, radius: float, elongation: float, thickness: float, coeffs: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
	'''
	Dense inner and outer curves of a U-ring, apex up (toward -y), in
	coordinates centred on their bounding box. Both run from the basal_a end
	(left) to the basal_b end (right).
	'''
	u = np.linspace(0.0, 1.0, DENSE_SAMPLES)
	span = math.radians(cfg.span_deg)
	# psi = pi/2 is the apex (0, -b); u = 0 is the left wall end
	psi = 0.5 * math.pi + 0.5 * span - u * span
	a = radius
	b = radius * elongation
	center = np.stack([a * np.cos(psi), -b * np.sin(psi)], axis=1)
	normal = np.stack([b * np.cos(psi), -a * np.sin(psi)], axis=1)
	normal /= np.hypot(normal[:, 0], normal[:, 1])[:, None]
	bump = np.zeros_like(u)
	for k, c in enumerate(coeffs, start=1):
		bump += c * radius * np.cos(k * math.pi * u)
	center = center + bump[:, None] * normal
	half = 0.5 * thickness * (1.0 + cfg.taper * np.cos(2.0 * math.pi * u))
	inner = center - half[:, None] * normal
	outer = center + half[:, None] * normal
	both = np.vstack([inner, outer])
	mid = 0.5 * (both.min(axis=0) + both.max(axis=0))
	return inner - mid, outer - mid


def _validSample(pc: PointCloud, faces: FaceList, mask: BinaryMask, cfg: GenConfig) -> bool:
	pts = pc.points
	if np.any(pts < 1.0) or np.any(pts[:, 0] > cfg.width - 1.0) or np.any(pts[:, 1] > cfg.height - 1.0):
		return False
	signs = []
	for face in faces.faces:
		oriented = oriented_face(pts, face)
		if oriented is None:
			return False
		signs.append(oriented[0] == tuple(int(v) for v in face))
	# the two strips wind opposite ways on a non-folded ring
	split = faces.T // 2 - 1
	strip1, strip2 = set(signs[:split]), set(signs[split:])
	if len(strip1) != 1 or len(strip2) != 1 or strip1 == strip2:
		return False
	if cKDTree(pc.outer).query(pc.inner)[0].min() <= 1.0:
		return False
	return is_simply_connected(mask)

def render_image(mask: BinaryMask, cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
	'''
	Blurred foreground over a textured background plus Gaussian noise,
	clipped to [0, 1].
	'''
	fg = mask.data.astype(float)
	if cfg.blur_sigma > 0:
		fg = gaussian_filter(fg, cfg.blur_sigma)
	image = BACKGROUND_LEVEL + FOREGROUND_CONTRAST * fg
	if cfg.texture > 0:
		field = gaussian_filter(rng.normal(size=mask.shape), 4.0)
		spread = float(np.abs(field).max()) or 1.0
		image = image + cfg.texture * field / spread
	if cfg.noise_sigma > 0:
		image = image + rng.normal(0.0, cfg.noise_sigma, mask.shape)
	return np.clip(image, 0.0, 1.0)

def _jitter(cfg: GenConfig, rng: np.random.Generator, base_scale: float = 1.0, base_rotation: float = 0.0) -> AffineParams:
	scale = base_scale * rng.uniform(*cfg.scale_range)
	rotation = base_rotation + math.radians(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg))
	shift = cfg.center + rng.uniform(-cfg.translation_frac, cfg.translation_frac, 2) * np.array([cfg.width, cfg.height])
	return similarity_to_affine(SimilarityParams(scale, rotation, (shift[0], shift[1])))

def _finish(sample_id: str, pc: PointCloud, theta: AffineParams, beta, cfg: GenConfig, faces: FaceList, rng, seed) -> SyntheticSample | None:
	mask = rasterize_hard(pc, faces, cfg.width, cfg.height, cfg.spacing_mm).threshold()
	if not _validSample(pc, faces, mask, cfg):
		return None
	image = render_image(mask, cfg, rng)
	return SyntheticSample(sample_id, image, mask, pc, LandmarkTriple.from_cloud(pc), theta, beta, seed)

def _generateOne(args) -> SyntheticSample:
	cfg, faces, index = args
	seed = (int(cfg.seed), int(index))
	rng = np.random.default_rng(list(seed))
	size = cfg.size
	for _ in range(MAX_RETRIES + 1):
		radius = rng.uniform(*cfg.radius_range) * size
		elongation = rng.uniform(*cfg.elongation_range)
		thickness = rng.uniform(*cfg.thickness_range) * size
		coeffs = rng.uniform(-cfg.mode_amplitude, cfg.mode_amplitude, cfg.mode_count)
		inner, outer = base_ring(cfg, radius, elongation, thickness, coeffs)
		half = cfg.T // 2
		base = PointCloud(np.vstack([resample_polyline(inner, half), resample_polyline(outer, half)]))
		theta = _jitter(cfg, rng)
		sample = _finish('%04d' % index, apply_affine(theta, base), theta, None, cfg, faces, rng, seed)
		if sample is not None:
			return sample
	raise ConfigError('infeasible config', 'generate')

#-------------------------------------------------------------------------------
# function: generate(cfg, n, threads=1)
#
# Description:
# n analytic U-ring samples. Each sample owns its random stream, so results
# do not depend on threads or on which other samples are generated. Draws
# that leave the image, self-intersect, bring the walls within 1 px, or
# render to anything but one hole-free component are redrawn.
#
#-------------------------------------------------------------------------------
def generate(cfg: GenConfig, n: int, threads: int = 1) -> List[SyntheticSample]:
	if n < 0:
		raise ConfigError('sample count must be >= 0, got %d' % n, 'generate')
	faces = build_faces(cfg.T)
	samples = ordered_map(_generateOne, [(cfg, faces, i) for i in range(n)], threads)
	logger.info('generate(): %d samples of %dx%d, T=%d', len(samples), cfg.width, cfg.height, cfg.T)
	return samples

def model_placement(model: ShapeModel, cfg: GenConfig) -> Tuple[float, float]:
	'''
	Scale and rotation that show the model mean apex up at the configured
	size.
	'''
	apex = LandmarkTriple.from_cloud(model.mean).apex - model.mean.centroid()
	rotation = -0.5 * math.pi - math.atan2(apex[1], apex[0])
	return cfg.model_scale * cfg.size, rotation

def _modelOne(args) -> SyntheticSample:
	model, faces, cfg, index = args
	seed = (int(cfg.seed), int(index))
	rng = np.random.default_rng(list(seed))
	scale, rotation = model_placement(model, cfg)
	limits = 2.0 * np.sqrt(model.eigenvalues)
	for _ in range(MAX_RETRIES + 1):
		beta = DeformParams(rng.uniform(-limits, limits))
		theta = _jitter(cfg, rng, scale, rotation)
		sample = _finish('%04d' % index, synthesize(model, theta, beta), theta, beta, cfg, faces, rng, seed)
		if sample is not None:
			return sample
	raise ConfigError('infeasible config', 'generate_from_model')

def generate_from_model(model: ShapeModel, faces: FaceList, cfg: GenConfig, n: int, threads: int = 1) -> List[SyntheticSample]:
	'''
	n samples synthesized from the model with beta_j ~ U(-2 sqrt(lambda_j),
	2 sqrt(lambda_j)) and theta from the jitter ranges around the apex-up
	placement of the mean.
	'''
	if faces.T != model.T:
		raise ConfigError('faces built for T=%d, model has T=%d' % (faces.T, model.T), 'generate_from_model')
	if n < 0:
		raise ConfigError('sample count must be >= 0, got %d' % n, 'generate_from_model')
	return ordered_map(_modelOne, [(model, faces, cfg, i) for i in range(n)], threads)

def generate_sequence(model: ShapeModel, faces: FaceList, cfg: GenConfig, frames: int, mode: int = 0, amplitude: float = 2.0) -> List[SyntheticSample]:
	'''
	A periodic sequence: fixed apex-up placement, beta on a single mode
	following amplitude * sqrt(lambda_mode) * sin(2 pi t / frames). Point k
	of every frame marks the same boundary location.
	'''
	if frames < 1:
		raise ConfigError('frames must be >= 1', 'generate_sequence')
	if not 0 <= mode < model.beta_dim:
		raise ConfigError('mode must lie in 0..%d, got %d' % (model.beta_dim - 1, mode), 'generate_sequence')
	scale, rotation = model_placement(model, cfg)
	theta = similarity_to_affine(SimilarityParams(scale, rotation, tuple(cfg.center)))
	rng = np.random.default_rng([int(cfg.seed), int(frames)])
	out = []
	for t in range(frames):
		beta = np.zeros(model.beta_dim)
		beta[mode] = amplitude * math.sqrt(model.eigenvalues[mode]) * math.sin(2.0 * math.pi * t / frames)
		pc = synthesize(model, theta, beta)
		mask = rasterize_hard(pc, faces, cfg.width, cfg.height, cfg.spacing_mm).threshold()
		if not is_simply_connected(mask):
			logger.warning('generate_sequence(): frame %d is not simply connected', t)
		out.append(SyntheticSample('%04d' % t, render_image(mask, cfg, rng), mask, pc,
			LandmarkTriple.from_cloud(pc), theta, DeformParams(beta), (int(cfg.seed), t)))
	return out
