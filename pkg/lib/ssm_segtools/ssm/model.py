#!/usr/bin/env python
'''
File			:	model.py
Package			:	ssm_segtools.ssm
Brief			:	PCA point distribution model: fitting from canonical clouds,
					shape synthesis P = theta(mean + beta C), projection and the
					closed-form Jacobians of synthesis.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import logging
from typing import Sequence, Tuple

import numpy as np

from ssm_segtools.base import ArtifactBase
from ssm_segtools.errors import ConfigError, DataError, FormatError
from ssm_segtools.geometry.affine import AffineParams, apply_affine
from ssm_segtools.geometry.pointcloud import PointCloud, as_points
from ssm_segtools.utility import body_lines, format_numbers, parse_numbers

logger = logging.getLogger(__name__)

MODEL_MAGIC = 'SSM1'

# Modes kept by default, capped by the sample count.
DEFAULT_BETA_DIM = 30

# beta_j is restricted to CLAMP_SIGMAS standard deviations of its mode.
CLAMP_SIGMAS = 3.0

#-------------------------------------------------------------------------------
# class: DeformParams
#
# Public properties:
#	beta - read-only (beta_dim,) array of mode coefficients
#
#-------------------------------------------------------------------------------
class DeformParams(object):

	def __init__(self, beta):
		values = np.array(beta, dtype=float).reshape(-1)
		if not np.all(np.isfinite(values)):
			raise DataError('deformation parameters must be finite', 'DeformParams')
		values.setflags(write=False)
		self.__beta = values
		return

	def __len__(self):
		return self.__beta.size

	def __repr__(self):
		return 'DeformParams(%s)' % ', '.join('%.4g' % v for v in self.__beta)

	def __eq__(self, other):
		return isinstance(other, DeformParams) and np.array_equal(self.__beta, other.beta)

	def __hash__(self):
		return hash(self.__beta.tobytes())

	@classmethod
	def zeros(cls, beta_dim: int) -> 'DeformParams':
		return cls(np.zeros(int(beta_dim)))

	@property
	def beta(self) -> np.ndarray:
		return self.__beta

	pass


def as_beta(beta) -> np.ndarray:
	if isinstance(beta, DeformParams):
		return beta.beta
	return np.asarray(beta, dtype=float).reshape(-1)

#-------------------------------------------------------------------------------
# class: ShapeModel
# inherits: ssm_segtools.base.ArtifactBase
#
# Public properties:
#	T - point count; the shape dimension is 2T
#	mean - PointCloud; the canonical mean shape
#	components - (beta_dim, 2T) read-only array; orthonormal rows
#	eigenvalues - (beta_dim,) read-only array; descending, >= 0
#	total_variance - float; sum of all 2T covariance eigenvalues
#	retained_fraction - float; share of total_variance in the kept modes
#
# Public methods:
#	cumulative_variance() - running retained fraction per kept mode
#	clamp_limits() - (beta_dim,) array of 3 sqrt(lambda_j)
#
#	The .ssm body: `SSM1 T beta_dim total_variance`, then the mean (2T
#	numbers), the eigenvalues, and one line per component.
#
#-------------------------------------------------------------------------------
class ShapeModel(ArtifactBase):

	EXTENSION = '.ssm'

	def __init__(self, mean: PointCloud, components, eigenvalues, total_variance: float | None = None):
		comps = np.array(components, dtype=float)
		eigs = np.array(eigenvalues, dtype=float).reshape(-1)
		if comps.ndim != 2 or comps.shape[1] != 2 * mean.T:
			raise DataError('components must be (beta_dim, %d), got %s' % (2 * mean.T, comps.shape), 'ShapeModel')
		if comps.shape[0] != eigs.size or eigs.size < 1:
			raise DataError('need one eigenvalue per component', 'ShapeModel')
		if not (np.all(np.isfinite(comps)) and np.all(np.isfinite(eigs))):
			raise DataError('model has non-finite entries', 'ShapeModel')
		if np.any(eigs < 0) or np.any(np.diff(eigs) > 1e-12 * max(1.0, float(eigs[0]))):
			raise DataError('eigenvalues must be non-negative and descending', 'ShapeModel')
		comps.setflags(write=False)
		eigs.setflags(write=False)
		self.__mean = mean
		self.__components = comps
		self.__eigenvalues = eigs
		self.__total = float(eigs.sum()) if total_variance is None else float(total_variance)
		return

	def __repr__(self):
		return 'ShapeModel(T=%d, beta_dim=%d, retained=%.4f)' % (self.T, self.beta_dim, self.retained_fraction)

	@property
	def T(self) -> int:
		return self.__mean.T

	@property
	def beta_dim(self) -> int:
		return int(self.__eigenvalues.size)

	@property
	def mean(self) -> PointCloud:
		return self.__mean

	@property
	def components(self) -> np.ndarray:
		return self.__components

	@property
	def eigenvalues(self) -> np.ndarray:
		return self.__eigenvalues

	@property
	def total_variance(self) -> float:
		return self.__total

	@property
	def retained_fraction(self) -> float:
		if self.__total <= 0:
			return 1.0
		return float(self.__eigenvalues.sum()) / self.__total

	def cumulative_variance(self) -> np.ndarray:
		if self.__total <= 0:
			return np.ones(self.beta_dim)
		return np.cumsum(self.__eigenvalues) / self.__total

	def clamp_limits(self) -> np.ndarray:
		return CLAMP_SIGMAS * np.sqrt(self.__eigenvalues)

	def _constructText(self) -> str:
		lines = ['%s %d %d %r' % (MODEL_MAGIC, self.T, self.beta_dim, self.__total)]
		lines.append(format_numbers(self.__mean.as_vector()))
		lines.append(format_numbers(self.__eigenvalues))
		lines.extend(format_numbers(row) for row in self.__components)
		return '\n'.join(lines) + '\n'

	@classmethod
	def _parseText(cls, text: str, source: str) -> 'ShapeModel':
		lines = body_lines(text)
		header = lines[0].split() if lines else []
		if len(header) not in (3, 4) or header[0] != MODEL_MAGIC:
			raise FormatError('not a %s model file' % MODEL_MAGIC, source)
		try:
			T, beta_dim = int(header[1]), int(header[2])
			total = float(header[3]) if len(header) == 4 else None
		except ValueError:
			raise FormatError('bad model header %r' % lines[0], source)
		if len(lines) != 3 + beta_dim:
			raise FormatError('expected %d lines, found %d' % (3 + beta_dim, len(lines)), source)
		mean = PointCloud.from_vector(parse_numbers(lines[1], 2 * T, source))
		eigs = parse_numbers(lines[2], beta_dim, source)
		comps = np.array([parse_numbers(line, 2 * T, source) for line in lines[3:]])
		return cls(mean, comps, eigs, total)

	pass


def default_beta_dim(shape_count: int) -> int:
	return max(1, min(DEFAULT_BETA_DIM, shape_count - 1))

#-------------------------------------------------------------------------------
# function: fit_pdm(canonical_shapes, beta_dim=None)
#
# Description:
# PCA of the canonical shape vectors. The covariance divides by K; each kept
# eigenvector is signed so its largest-magnitude entry is positive.
#
# Params:
#	canonical_shapes - K >= 2 PointClouds with identical T
#	beta_dim - modes to keep, 1..min(2T, K-1); min(30, K-1) when None
#
#-------------------------------------------------------------------------------
def fit_pdm(canonical_shapes: Sequence[PointCloud], beta_dim: int | None = None) -> ShapeModel:
	count = len(canonical_shapes)
	if count < 2:
		raise DataError('fit_pdm needs at least 2 shapes, got %d' % count, 'fit_pdm')
	arrays = [as_points(s) for s in canonical_shapes]
	if len(set(a.shape for a in arrays)) != 1:
		raise DataError('shapes differ in point count', 'fit_pdm')
	vectors = np.array([a.reshape(-1) for a in arrays])
	dim = vectors.shape[1]
	if beta_dim is None:
		beta_dim = min(default_beta_dim(count), dim)
	if int(beta_dim) != beta_dim or not 1 <= beta_dim <= min(dim, count - 1):
		raise ConfigError('beta_dim must lie in 1..%d, got %r' % (min(dim, count - 1), beta_dim), 'fit_pdm')
	beta_dim = int(beta_dim)

	mean = vectors.mean(axis=0)
	centered = vectors - mean
	cov = centered.T @ centered / count
	eigs, vecs = np.linalg.eigh(cov)
	eigs = np.clip(eigs[::-1], 0.0, None)
	vecs = vecs[:, ::-1]
	comps = vecs[:, :beta_dim].T.copy()
	for row in comps:
		if row[np.argmax(np.abs(row))] < 0:
			row *= -1.0
	model = ShapeModel(PointCloud.from_vector(mean), comps, eigs[:beta_dim], float(np.trace(cov)))
	logger.info('fit_pdm(): %d shapes, beta_dim %d, retained variance %.4f', count, beta_dim, model.retained_fraction)
	return model

def _checkBeta(model: ShapeModel, beta, source: str) -> np.ndarray:
	values = as_beta(beta)
	if values.size != model.beta_dim:
		raise DataError('beta has %d entries, model has %d modes' % (values.size, model.beta_dim), source)
	if not np.all(np.isfinite(values)):
		raise DataError('beta must be finite', source)
	return values

def deform(model: ShapeModel, beta) -> PointCloud:
	values = _checkBeta(model, beta, 'deform')
	return PointCloud.from_vector(model.mean.as_vector() + values @ model.components)

def clamp_beta(model: ShapeModel, beta) -> DeformParams:
	'''
	Clips every beta_j to [-3 sqrt(lambda_j), 3 sqrt(lambda_j)].
	'''
	values = _checkBeta(model, beta, 'clamp_beta')
	limits = model.clamp_limits()
	return DeformParams(np.clip(values, -limits, limits))

def synthesize(model: ShapeModel, theta: AffineParams, beta) -> PointCloud:
	return apply_affine(theta, deform(model, clamp_beta(model, beta)))

def project_with_residual(model: ShapeModel, canonical_shape) -> Tuple[DeformParams, float]:
	'''
	Least-squares beta of a canonical shape and the norm of what the kept
	modes cannot express.
	'''
	pts = as_points(canonical_shape)
	if pts.shape[0] != model.T:
		raise DataError('shape has %d points, model has %d' % (pts.shape[0], model.T), 'project')
	offset = pts.reshape(-1) - model.mean.as_vector()
	beta = model.components @ offset
	residual = float(np.linalg.norm(offset - beta @ model.components))
	return DeformParams(beta), residual

def project(model: ShapeModel, canonical_shape) -> DeformParams:
	return project_with_residual(model, canonical_shape)[0]

#-------------------------------------------------------------------------------
# function: synthesize_jacobians(model, theta, beta)
#
# Description:
# With q = deform(clamp(beta)), point t is x = t11 qx + t12 qy + t13 and
# y = t21 qx + t22 qy + t23. The beta Jacobian passes straight through the
# clamp.
#
# Returns:
#	(dP/dtheta as (T, 2, 6), dP/dbeta as (T, 2, beta_dim))
#
#-------------------------------------------------------------------------------
def synthesize_jacobians(model: ShapeModel, theta: AffineParams, beta) -> Tuple[np.ndarray, np.ndarray]:
	q = deform(model, clamp_beta(model, beta)).points
	count = q.shape[0]
	d_theta = np.zeros((count, 2, 6))
	d_theta[:, 0, 0] = q[:, 0]
	d_theta[:, 0, 1] = q[:, 1]
	d_theta[:, 0, 2] = 1.0
	d_theta[:, 1, 3] = q[:, 0]
	d_theta[:, 1, 4] = q[:, 1]
	d_theta[:, 1, 5] = 1.0
	modes = model.components.reshape(model.beta_dim, count, 2)
	d_beta = np.einsum('ij,btj->tib', theta.linear, modes)
	return d_theta, d_beta

def backprop_points(model: ShapeModel, theta: AffineParams, beta, grad_points) -> Tuple[np.ndarray, np.ndarray]:
	'''
	Chains a (T, 2) gradient on the synthesized points back to (theta, beta).
	'''
	g = np.asarray(grad_points, dtype=float)
	if g.shape != (model.T, 2):
		raise DataError('point gradient must be (%d, 2), got %s' % (model.T, g.shape), 'backprop_points')
	q = deform(model, clamp_beta(model, beta)).points
	g_theta = np.array([
		g[:, 0] @ q[:, 0], g[:, 0] @ q[:, 1], g[:, 0].sum(),
		g[:, 1] @ q[:, 0], g[:, 1] @ q[:, 1], g[:, 1].sum(),
	])
	g_beta = model.components @ (g @ theta.linear).reshape(-1)
	return g_theta, g_beta
