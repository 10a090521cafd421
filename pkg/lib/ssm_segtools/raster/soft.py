#!/usr/bin/env python
'''
File			:	soft.py
Package			:	ssm_segtools.raster
Brief			:	Differentiable soft rasterizer. Each face contributes a logistic
					of its signed boundary distance; faces are merged as a
					probabilistic union so coverage stays in [0, 1]. The backward
					pass returns analytic per-vertex gradients.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ssm_segtools.errors import ConfigError, DataError
from ssm_segtools.masks import RasterMask
from ssm_segtools.raster.faces import FaceList
from ssm_segtools.raster.hard import check_inputs, oriented_face, pixel_window

logger = logging.getLogger(__name__)

# Faces farther than CUTOFF * tau outside a pixel are skipped. Gradients are
# only taken from pixels within CUTOFF * tau of a face boundary.
CUTOFF = 6.0

# Training renders use a wide kernel, evaluation renders a sharp one.
TRAIN_TAU = 0.5
EVAL_TAU = 0.05

#-------------------------------------------------------------------------------
# class: RasterConfig
#
# Grid and temperature shared by the soft renders of one dataset.
#
#-------------------------------------------------------------------------------
@dataclass(frozen=True)
class RasterConfig:
	width: int
	height: int
	spacing_mm: float = 1.0
	tau: float = TRAIN_TAU

	def __post_init__(self):
		if int(self.width) < 1 or int(self.height) < 1:
			raise ConfigError('raster size must be positive, got %rx%r' % (self.width, self.height), 'RasterConfig')
		if not self.spacing_mm > 0:
			raise ConfigError('spacing_mm must be positive', 'RasterConfig')
		_checkTau(self.tau, 'RasterConfig')

	def with_tau(self, tau: float) -> 'RasterConfig':
		return RasterConfig(self.width, self.height, self.spacing_mm, tau)


def _checkTau(tau, source):
	if not (np.isfinite(tau) and tau > 0):
		raise ConfigError('tau must be positive, got %r' % (tau,), source)
	return

#-------------------------------------------------------------------------------
# class: _FaceSample
#
# Signed distances from the pixel centers of one face window to the face
# boundary, and what the backward pass needs to push gradients to vertices.
#
#-------------------------------------------------------------------------------
class _FaceSample(object):
	__slots__ = ('window', 'vertex_ids', 'covered', 'coverage', 'active', 'sigma',
		'edge', 'grad_a', 'grad_b')

	pass


def _sampleFace(pts, face, tau, width, height):
	oriented = oriented_face(pts, face)
	if oriented is None:
		return None
	idx, _ = oriented
	corners = pts[list(idx)]
	window = pixel_window(corners, CUTOFF * tau, width, height)
	if window is None:
		return None
	c0, c1, r0, r1 = window
	px, py = np.meshgrid(np.arange(c0, c1 + 1) + 0.5, np.arange(r0, r1 + 1) + 0.5)
	p = np.stack([px.ravel(), py.ravel()], axis=1)

	dists = np.empty((p.shape[0], 3))
	params = np.empty((p.shape[0], 3))
	offsets = np.empty((3, p.shape[0], 2))
	inside = np.ones(p.shape[0], dtype=bool)
	for k in range(3):
		a = corners[k]
		e = corners[(k + 1) % 3] - a
		rel = p - a
		t = np.clip(rel @ e / float(e @ e), 0.0, 1.0)
		diff = rel - t[:, None] * e
		dists[:, k] = np.hypot(diff[:, 0], diff[:, 1])
		params[:, k] = t
		offsets[k] = diff
		inside &= (e[0] * rel[:, 1] - e[1] * rel[:, 0]) >= 0

	nearest = np.argmin(dists, axis=1)
	rows = np.arange(p.shape[0])
	dist = dists[rows, nearest]
	t = params[rows, nearest]
	sign = np.where(inside, 1.0, -1.0)
	z = sign * dist / tau

	# gradient of the signed distance with respect to the nearest edge's ends
	diff = offsets[nearest, rows]
	edges = corners[(nearest + 1) % 3] - corners[nearest]
	edge_len = np.hypot(edges[:, 0], edges[:, 1])
	outward = np.stack([edges[:, 1], -edges[:, 0]], axis=1) / edge_len[:, None]
	on_edge = dist <= 1e-12
	safe = np.where(on_edge, 1.0, dist)
	unit = diff / safe[:, None]
	direction = np.where(on_edge[:, None], outward, -sign[:, None] * unit)

	sample = _FaceSample()
	sample.window = window
	sample.vertex_ids = np.asarray(idx, dtype=np.int64)
	sample.covered = z >= -CUTOFF
	sample.coverage = 1.0 / (1.0 + np.exp(-z[sample.covered]))
	sample.active = np.abs(z) <= CUTOFF
	zs = z[sample.active]
	sample.sigma = 1.0 / (1.0 + np.exp(-zs))
	sample.edge = nearest[sample.active]
	sample.grad_a = ((1.0 - t)[:, None] * direction)[sample.active]
	sample.grad_b = (t[:, None] * direction)[sample.active]
	return sample

#-------------------------------------------------------------------------------
# class: SoftRasterizer
#
# Description:
#	Renders one point cloud and keeps what the backward pass needs.
#	m(p) = 1 - prod_f (1 - sigmoid(d_f(p) / tau)), d_f positive inside f.
#
# Public properties:
#	mask - RasterMask of the forward render
#
# Public methods:
#	backward(upstream_grad)
#		(T, 2) gradient of sum(upstream_grad * mask) with respect to the
#		vertices. Where the nearest boundary feature of a face switches the
#		gradient of the active feature is used.
#
#-------------------------------------------------------------------------------
class SoftRasterizer(object):

	def __init__(self, pc, faces: FaceList, width: int, height: int, spacing: float = 1.0, tau: float = TRAIN_TAU):
		_checkTau(tau, 'rasterize_soft')
		self.__pts = check_inputs(pc, faces, 'rasterize_soft')
		self.__tau = float(tau)
		self.__shape = (int(height), int(width))
		self.__spacing = float(spacing)
		keep = np.ones(self.__shape)
		self.__samples = []
		for face in faces.faces:
			sample = _sampleFace(self.__pts, face, self.__tau, self.__shape[1], self.__shape[0])
			if sample is None:
				continue
			c0, c1, r0, r1 = sample.window
			sub_keep = keep[r0:r1 + 1, c0:c1 + 1]
			flat = sub_keep.reshape(-1)
			flat[np.flatnonzero(sample.covered)] *= 1.0 - sample.coverage
			keep[r0:r1 + 1, c0:c1 + 1] = flat.reshape(sub_keep.shape)
			self.__samples.append(sample)
		self.__keep = keep
		self.__mask = RasterMask(1.0 - self.__keep, self.__spacing)
		return

	@property
	def mask(self) -> RasterMask:
		return self.__mask

	def backward(self, upstream_grad) -> np.ndarray:
		upstream = np.asarray(upstream_grad, dtype=float)
		if upstream.shape != self.__shape:
			raise DataError('upstream gradient shape %s does not match raster %s' % (upstream.shape, self.__shape), 'rasterize_soft_backward')
		# dm/dd_f = prod_{g != f}(1 - s_g) * s_f (1 - s_f) / tau = keep * s_f / tau
		weight = upstream * self.__keep / self.__tau
		grad = np.zeros_like(self.__pts)
		for sample in self.__samples:
			c0, c1, r0, r1 = sample.window
			w = weight[r0:r1 + 1, c0:c1 + 1].reshape(-1)[np.flatnonzero(sample.active)]
			coef = w * sample.sigma
			if not np.any(coef):
				continue
			local = np.zeros((3, 2))
			np.add.at(local, sample.edge, coef[:, None] * sample.grad_a)
			np.add.at(local, (sample.edge + 1) % 3, coef[:, None] * sample.grad_b)
			grad[sample.vertex_ids] += local
		return grad

	pass


def rasterize_soft(pc, faces: FaceList, width: int, height: int, spacing: float = 1.0, tau: float = TRAIN_TAU) -> RasterMask:
	return SoftRasterizer(pc, faces, width, height, spacing, tau).mask

def rasterize_soft_backward(pc, faces: FaceList, width: int, height: int, spacing: float, tau: float, upstream_grad) -> np.ndarray:
	return SoftRasterizer(pc, faces, width, height, spacing, tau).backward(upstream_grad)
