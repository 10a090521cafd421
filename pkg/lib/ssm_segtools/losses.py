#!/usr/bin/env python
'''
File			:	losses.py
Package			:	ssm_segtools
Brief			:	Training objectives with analytic gradients: RMSE between point
					clouds, soft Dice between masks, and their weighted sum
					chained through the soft rasterizer.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ssm_segtools.errors import ConfigError, DataError
from ssm_segtools.geometry.pointcloud import as_points
from ssm_segtools.masks import as_binary
from ssm_segtools.raster.faces import FaceList
from ssm_segtools.raster.soft import RasterConfig, SoftRasterizer

logger = logging.getLogger(__name__)

# Smoothing term of the soft Dice, in pixels.
DICE_EPS = 1.0

# Weight of the mask term in the total loss.
DEFAULT_DELTA = 0.5

#-------------------------------------------------------------------------------
# class: LossValue
#
# Public properties:
#	value - float; the loss
#	grad - array or None; gradient with respect to the prediction (T x 2
#		points for point/total losses, H x W pixels for the mask loss)
#	terms - dict of named components, e.g. {'point': ..., 'mask': ...}
#	mask - the soft render behind a total loss, when one was made
#
#-------------------------------------------------------------------------------
@dataclass(frozen=True)
class LossValue:
	value: float
	grad: np.ndarray | None = None
	terms: dict = field(default_factory=dict)
	mask: object = None

	def __post_init__(self):
		if not math.isfinite(self.value):
			raise DataError('non-finite loss value', 'LossValue')
		if self.grad is not None and not np.all(np.isfinite(self.grad)):
			raise DataError('non-finite loss gradient', 'LossValue')


def point_loss(pred, gt) -> LossValue:
	'''
	sqrt(mean_t |pred_t - gt_t|^2), gradient (pred - gt) / (T L), 0 at L = 0.
	'''
	p = as_points(pred)
	g = as_points(gt)
	if p.shape != g.shape:
		raise DataError('point count mismatch: %d vs %d' % (p.shape[0], g.shape[0]), 'point_loss')
	diff = p - g
	count = p.shape[0]
	value = math.sqrt(float(np.sum(diff * diff)) / count)
	grad = np.zeros_like(diff) if value == 0.0 else diff / (count * value)
	return LossValue(value, grad, {'point': value})

def mask_loss(pred_mask, gt_mask) -> LossValue:
	'''
	1 - (2 sum(p g) + eps) / (sum p + sum g + eps), with its pixel gradient.
	'''
	pred = np.asarray(getattr(pred_mask, 'data', pred_mask), dtype=float)
	gt = as_binary(gt_mask).data.astype(float)
	if pred.shape != gt.shape:
		raise DataError('dimension mismatch: %s vs %s' % (pred.shape, gt.shape), 'mask_loss')
	inter = float(np.sum(pred * gt))
	denom = float(pred.sum() + gt.sum()) + DICE_EPS
	numer = 2.0 * inter + DICE_EPS
	value = 1.0 - numer / denom
	grad = -(2.0 * gt * denom - numer) / (denom * denom)
	return LossValue(value, grad, {'mask': value})

#-------------------------------------------------------------------------------
# function: total_loss(pred_points, gt_points, gt_mask, faces, raster_cfg, delta=0.5)
#
# Description:
# point_loss + delta * mask_loss(rasterize_soft(pred_points)). The mask pixel
# gradient is pulled back to the vertices through the rasterizer. gt_points
# may be None for mask-only supervision; delta = 0 skips the render.
#
#-------------------------------------------------------------------------------
def total_loss(pred_points, gt_points, gt_mask, faces: FaceList, raster_cfg: RasterConfig, delta: float = DEFAULT_DELTA) -> LossValue:
	if not (math.isfinite(delta) and delta >= 0):
		raise ConfigError('delta must be >= 0, got %r' % (delta,), 'total_loss')
	pts = as_points(pred_points)
	if gt_points is not None:
		point = point_loss(pts, gt_points)
	else:
		point = LossValue(0.0, np.zeros_like(pts), {'point': 0.0})
	if delta == 0.0 or gt_mask is None:
		return LossValue(point.value, point.grad, {'point': point.value, 'mask': 0.0})

	render = SoftRasterizer(pts, faces, raster_cfg.width, raster_cfg.height, raster_cfg.spacing_mm, raster_cfg.tau)
	mask = mask_loss(render.mask, gt_mask)
	grad = point.grad + delta * render.backward(mask.grad)
	value = point.value + delta * mask.value
	return LossValue(value, grad, {'point': point.value, 'mask': mask.value}, render.mask)
