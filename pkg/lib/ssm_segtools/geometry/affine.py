#!/usr/bin/env python
'''
File			:	affine.py
Package			:	ssm_segtools.geometry
Brief			:	Affine and similarity warps of point clouds, and the closed
					form least-squares similarity between two point sets.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ssm_segtools.errors import DataError, NumericalError
from ssm_segtools.geometry.pointcloud import PointCloud, as_points

logger = logging.getLogger(__name__)

# |det| below this is treated as singular.
DET_EPS = 1e-12

#-------------------------------------------------------------------------------
# class: AffineParams
#
# Public properties:
#	theta - (6,) read-only array (t11, t12, t13, t21, t22, t23)
#	matrix - (2, 3) array [[t11, t12, t13], [t21, t22, t23]]
#	linear - (2, 2) linear part
#	translation - (2,) translation part
#	determinant - float; determinant of the linear part
#
#	A point (x, y) maps to (t11 x + t12 y + t13, t21 x + t22 y + t23).
#
# Public methods:
#	apply(points) - maps an (N, 2) array
#	compose(inner) - the warp "self after inner"
#	identity() (classmethod)
#
#-------------------------------------------------------------------------------
class AffineParams(object):

	def __init__(self, theta):
		values = np.array(theta, dtype=float).reshape(-1)
		if values.size != 6:
			raise DataError('affine needs 6 numbers, got %d' % values.size, 'AffineParams')
		if not np.all(np.isfinite(values)):
			raise DataError('affine has non-finite entries', 'AffineParams')
		values.setflags(write=False)
		self.__theta = values
		return

	def __repr__(self):
		return 'AffineParams(%s)' % ', '.join('%.6g' % v for v in self.__theta)

	def __eq__(self, other):
		return isinstance(other, AffineParams) and np.array_equal(self.__theta, other.theta)

	def __hash__(self):
		return hash(self.__theta.tobytes())

	@classmethod
	def identity(cls) -> 'AffineParams':
		return cls([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])

	@classmethod
	def from_parts(cls, linear, translation) -> 'AffineParams':
		lin = np.asarray(linear, dtype=float).reshape(2, 2)
		t = np.asarray(translation, dtype=float).reshape(2)
		return cls(np.hstack([lin, t[:, None]]))

	@property
	def theta(self) -> np.ndarray:
		return self.__theta

	@property
	def matrix(self) -> np.ndarray:
		return self.__theta.reshape(2, 3)

	@property
	def linear(self) -> np.ndarray:
		return self.matrix[:, :2]

	@property
	def translation(self) -> np.ndarray:
		return self.matrix[:, 2]

	@property
	def determinant(self) -> float:
		lin = self.linear
		return float(lin[0, 0] * lin[1, 1] - lin[0, 1] * lin[1, 0])

	def apply(self, points) -> np.ndarray:
		pts = as_points(points)
		return pts @ self.linear.T + self.translation

	def compose(self, inner: 'AffineParams') -> 'AffineParams':
		lin = self.linear @ inner.linear
		t = self.linear @ inner.translation + self.translation
		return AffineParams.from_parts(lin, t)

	pass

#-------------------------------------------------------------------------------
# class: SimilarityParams
#
# Rotation + uniform scale + translation; reflections are excluded.
#
#-------------------------------------------------------------------------------
@dataclass(frozen=True)
class SimilarityParams:
	scale: float = 1.0
	rotation: float = 0.0
	translation: tuple = field(default=(0.0, 0.0))

	def __post_init__(self):
		if not (math.isfinite(self.scale) and self.scale > 0):
			raise DataError('similarity scale must be positive, got %r' % self.scale, 'SimilarityParams')
		if not math.isfinite(self.rotation):
			raise DataError('similarity rotation must be finite', 'SimilarityParams')
		tx, ty = (float(v) for v in self.translation)
		object.__setattr__(self, 'translation', (tx, ty))


def apply_affine(theta: AffineParams, pc):
	'''
	Maps every point of pc through theta; order and inner_count are preserved.
	Plain (N, 2) arrays are accepted as well and returned as arrays.
	'''
	if isinstance(pc, PointCloud):
		if not np.all(np.isfinite(pc.points)):
			raise DataError('invalid point cloud', 'apply_affine')
		return PointCloud(theta.apply(pc.points))
	pts = as_points(pc)
	if not np.all(np.isfinite(pts)):
		raise DataError('invalid point cloud', 'apply_affine')
	return theta.apply(pts)

def compose_affine(outer: AffineParams, inner: AffineParams) -> AffineParams:
	'''
	The warp that applies inner first, then outer.
	'''
	return outer.compose(inner)

def invert_affine(theta: AffineParams) -> AffineParams:
	det = theta.determinant
	if abs(det) <= DET_EPS:
		raise NumericalError('degenerate affine', 'invert_affine')
	lin = theta.linear
	inv = np.array([[lin[1, 1], -lin[0, 1]], [-lin[1, 0], lin[0, 0]]]) / det
	return AffineParams.from_parts(inv, -inv @ theta.translation)

def similarity_to_affine(sp: SimilarityParams) -> AffineParams:
	c = sp.scale * math.cos(sp.rotation)
	s = sp.scale * math.sin(sp.rotation)
	tx, ty = sp.translation
	return AffineParams([c, -s, tx, s, c, ty])

#-------------------------------------------------------------------------------
# function: estimate_similarity(src, dst)
#
# Description:
# Closed-form least-squares similarity minimising sum |s R src_i + t - dst_i|^2
# over proper rotations. With centred coordinates the optimal angle is
# atan2(b, a) where a = sum(src . dst) and b = sum(src x dst), and the scale is
# sqrt(a^2 + b^2) / sum |src|^2.
#
# Params:
#	src, dst - PointCloud or (N, 2) array-likes of equal length, N >= 2
#
# Returns:
#	SimilarityParams mapping src onto dst
#
#-------------------------------------------------------------------------------
def estimate_similarity(src, dst) -> SimilarityParams:
	a_pts = as_points(src)
	b_pts = as_points(dst)
	if a_pts.shape != b_pts.shape:
		raise DataError('point sets differ in length: %d vs %d' % (a_pts.shape[0], b_pts.shape[0]), 'estimate_similarity')
	if a_pts.shape[0] < 2:
		raise DataError('need at least 2 point pairs', 'estimate_similarity')
	src_mean = a_pts.mean(axis=0)
	dst_mean = b_pts.mean(axis=0)
	sc = a_pts - src_mean
	dc = b_pts - dst_mean
	norm = float(np.sum(sc * sc))
	extent = max(1.0, float(np.max(np.abs(a_pts))))
	if norm <= 1e-24 * extent * extent:
		raise NumericalError('degenerate configuration', 'estimate_similarity')
	a = float(np.sum(sc * dc))
	b = float(np.sum(sc[:, 0] * dc[:, 1] - sc[:, 1] * dc[:, 0]))
	scale = math.hypot(a, b) / norm
	if scale <= 1e-15:
		raise NumericalError('degenerate configuration', 'estimate_similarity')
	rotation = math.atan2(b, a)
	rot = np.array([[math.cos(rotation), -math.sin(rotation)], [math.sin(rotation), math.cos(rotation)]])
	t = dst_mean - scale * (rot @ src_mean)
	return SimilarityParams(scale=scale, rotation=rotation, translation=(t[0], t[1]))
