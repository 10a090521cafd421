#!/usr/bin/env python
'''
File			:	fitting.py
Package			:	ssm_segtools.train
Brief			:	Per-image inference of (theta, beta): gradient fitting to a
					mask through the soft rasterizer, and alternating least
					squares fitting to a point cloud.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from ssm_segtools.alignment.procrustes import normalize_to_template
from ssm_segtools.errors import ConfigError, DataError
from ssm_segtools.geometry.affine import AffineParams, similarity_to_affine
from ssm_segtools.geometry.pointcloud import PointCloud, as_points
from ssm_segtools.losses import point_loss, total_loss
from ssm_segtools.masks import BinaryMask, as_binary
from ssm_segtools.metrics import dice
from ssm_segtools.raster.faces import FaceList
from ssm_segtools.raster.hard import rasterize_hard
from ssm_segtools.raster.soft import RasterConfig
from ssm_segtools.ssm.model import (DeformParams, ShapeModel,
	backprop_points, clamp_beta, deform, project, synthesize)
from ssm_segtools.train.config import FitConfig
from ssm_segtools.train.optim import Adam

logger = logging.getLogger(__name__)

# Point fits stop once an iteration improves the RMSE by less than this.
POINT_FIT_TOLERANCE = 1e-12

#-------------------------------------------------------------------------------
# class: FitResult
#
# Public properties:
#	theta, beta - the fitted parameters; beta lies inside the clamp box
#	points - synthesize(model, theta, beta)
#	loss_trace - list of (iteration, point_loss, mask_loss, total)
#	dice - hard-render Dice against the target mask (mask fits only)
#
#-------------------------------------------------------------------------------
@dataclass(frozen=True)
class FitResult:
	theta: AffineParams
	beta: DeformParams
	points: PointCloud
	loss_trace: List[Tuple[int, float, float, float]] = field(default_factory=list)
	dice: float | None = None


def render_dice(pc, faces: FaceList, target: BinaryMask) -> float:
	return dice(rasterize_hard(pc, faces, target.width, target.height, target.spacing_mm), target)

def _checkPair(model: ShapeModel, faces: FaceList, source: str) -> None:
	if faces.T != model.T:
		raise ConfigError('faces built for T=%d, model has T=%d' % (faces.T, model.T), source)
	return

#-------------------------------------------------------------------------------
# function: initial_placement(model, faces, mask, rotations=24)
#
# Description:
# Places the mean shape on the mask's bounding box: for each of `rotations`
# evenly spaced angles the rotated mean is scaled by the square root of the
# bounding box area ratio and centred on the mask box. The candidate whose hard
# render overlaps the mask best wins; ties keep the smaller angle.
#
#-------------------------------------------------------------------------------
def initial_placement(model: ShapeModel, faces: FaceList, mask, rotations: int = 24) -> AffineParams:
	target = as_binary(mask)
	if target.is_empty():
		raise DataError('empty target mask', 'initial_placement')
	x0, y0, x1, y1 = target.bbox()
	box_center = np.array([0.5 * (x0 + x1), 0.5 * (y0 + y1)])
	box_area = (x1 - x0) * (y1 - y0)
	mean = model.mean.points
	best = None
	for k in range(int(rotations)):
		angle = 2.0 * math.pi * k / rotations
		c, s = math.cos(angle), math.sin(angle)
		rot = np.array([[c, -s], [s, c]])
		turned = mean @ rot.T
		lo, hi = turned.min(axis=0), turned.max(axis=0)
		extent = max(float(np.prod(hi - lo)), 1e-12)
		scale = math.sqrt(box_area / extent)
		t = box_center - scale * 0.5 * (lo + hi)
		theta = AffineParams.from_parts(scale * rot, t)
		score = render_dice(theta.apply(mean), faces, target)
		if best is None or score > best[0]:
			best = (score, theta)
	logger.debug('initial_placement(): dice %.4f', best[0])
	return best[1]

def _parameterScales(model: ShapeModel, theta: AffineParams):
	'''
	Per-parameter units in which a step of 1 moves the synthesized points by
	about one pixel.
	'''
	radius = max(model.mean.rms_radius(), 1e-12)
	scale = math.sqrt(max(abs(theta.determinant), 1e-12))
	d_theta = np.array([1.0 / radius, 1.0 / radius, 1.0, 1.0 / radius, 1.0 / radius, 1.0])
	d_beta = np.full(model.beta_dim, math.sqrt(model.T) / scale)
	return d_theta, d_beta

#-------------------------------------------------------------------------------
# function: fit_single(model, faces, target_mask, init=None, cfg=FitConfig())
#
# Description:
# Adam on (theta, beta) against a target mask. The objective is
# delta * (1 - softDice) plus theta_reg * |theta - theta_init|^2. The soft
# render temperature anneals from cfg.tau_start to cfg.fit_tau; beta is
# projected into the clamp box after every step. Once the temperature is
# halfway down, every iterate is scored by the hard render Dice and the best
# one is returned (lower objective on ties), or the initialization when that
# renders a better hard Dice.
#
# Params:
#	init - optional (AffineParams, beta); initial_placement() and beta = 0
#		when omitted
#
#-------------------------------------------------------------------------------
def fit_single(model: ShapeModel, faces: FaceList, target_mask, init=None, cfg: FitConfig | None = None) -> FitResult:
	cfg = cfg or FitConfig()
	_checkPair(model, faces, 'fit_single')
	if cfg.delta <= 0:
		raise ConfigError('mask fitting needs delta > 0', 'fit_single')
	target = as_binary(target_mask)
	if target.is_empty():
		raise DataError('empty target mask', 'fit_single')

	if init is None:
		theta0 = initial_placement(model, faces, target, cfg.init_rotations)
		beta0 = np.zeros(model.beta_dim)
	else:
		theta0 = init[0]
		beta0 = clamp_beta(model, init[1]).beta
	anchor = theta0.theta.copy()
	d_theta, d_beta = _parameterScales(model, theta0)
	params = {'theta': np.zeros(6), 'beta': beta0 / d_beta}
	adam = Adam(cfg.fit_lr)

	trace = []
	best = None
	score_from = cfg.tau_schedule_length // 2
	for it in range(cfg.max_iters + 1):
		tau = cfg.tau_at(it)
		theta = AffineParams(anchor + params['theta'] * d_theta)
		beta = DeformParams(params['beta'] * d_beta)
		pts = synthesize(model, theta, beta)
		raster = RasterConfig(target.width, target.height, target.spacing_mm, tau)
		loss = total_loss(pts, None, target, faces, raster, cfg.delta)
		offset = theta.theta - anchor
		total = loss.value + cfg.theta_reg * float(offset @ offset)
		trace.append((it, 0.0, loss.terms['mask'], total))
		if it >= score_from:
			score = (render_dice(pts, faces, target), -total)
			if best is None or score > best[0]:
				best = (score, theta, beta)
		if it == cfg.max_iters:
			break
		g_theta, g_beta = backprop_points(model, theta, beta, loss.grad)
		g_theta = g_theta + 2.0 * cfg.theta_reg * offset
		adam.step(params, {'theta': g_theta * d_theta, 'beta': g_beta * d_beta})
		params['beta'] = clamp_beta(model, params['beta'] * d_beta).beta / d_beta
		if it % 50 == 0:
			logger.debug('fit_single(): iter %d tau %.3f mask %.5f', it, tau, loss.terms['mask'])

	_, theta, beta = best
	fitted = synthesize(model, theta, beta)
	fitted_dice = render_dice(fitted, faces, target)
	start = synthesize(model, theta0, beta0)
	start_dice = render_dice(start, faces, target)
	if start_dice > fitted_dice:
		logger.info('fit_single(): keeping initialization (dice %.4f > %.4f)', start_dice, fitted_dice)
		theta, beta, fitted, fitted_dice = theta0, DeformParams(beta0), start, start_dice
	logger.debug('fit_single(): dice %.4f after %d iterations', fitted_dice, cfg.max_iters)
	return FitResult(theta, beta, fitted, trace, fitted_dice)

#-------------------------------------------------------------------------------
# function: fit_to_points(model, target_points, cfg=FitConfig())
#
# Description:
# Minimises the point RMSE over (theta, beta). Starting from the template
# similarity and the projected beta, alternates the two linear least squares
# problems: theta for fixed shape, then beta for fixed theta (clamped).
#
#-------------------------------------------------------------------------------
def fit_to_points(model: ShapeModel, target_points, cfg: FitConfig | None = None) -> FitResult:
	cfg = cfg or FitConfig()
	target = as_points(target_points)
	if target.shape[0] != model.T:
		raise DataError('target has %d points, model has %d' % (target.shape[0], model.T), 'fit_to_points')
	normalized, sim = normalize_to_template(PointCloud(target), model.mean)
	theta = similarity_to_affine(sim)
	beta = clamp_beta(model, project(model, normalized)).beta
	modes = model.components.reshape(model.beta_dim, model.T, 2)
	mean = model.mean.points
	design = np.hstack([np.zeros((model.T, 2)), np.ones((model.T, 1))])

	trace = []
	previous = math.inf
	best = None
	for it in range(cfg.max_iters):
		loss = point_loss(synthesize(model, theta, beta), target).value
		trace.append((it, loss, 0.0, loss))
		if best is None or loss < best[0]:
			best = (loss, theta, beta)
		if previous - loss < POINT_FIT_TOLERANCE:
			break
		previous = loss

		design[:, :2] = deform(model, beta).points
		coef = np.linalg.lstsq(design, target, rcond=None)[0]
		theta = AffineParams.from_parts(coef[:2].T, coef[2])

		lin = theta.linear
		columns = np.einsum('ij,btj->tib', lin, modes).reshape(2 * model.T, model.beta_dim)
		rhs = (target - theta.translation - mean @ lin.T).reshape(-1)
		beta = clamp_beta(model, np.linalg.lstsq(columns, rhs, rcond=None)[0]).beta

	loss, theta, beta = best
	logger.debug('fit_to_points(): rmse %.3g after %d iterations', loss, len(trace))
	return FitResult(theta, DeformParams(beta), synthesize(model, theta, beta), trace)
