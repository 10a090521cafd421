#!/usr/bin/env python
'''
File			:	regressor.py
Package			:	ssm_segtools.train
Brief			:	Amortized parameter regressor: a ReLU multilayer perceptron from
					a pooled image to (theta, beta), trained in two stages, point
					loss first and then point plus rendered mask loss.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ssm_segtools.alignment.procrustes import normalize_to_template
from ssm_segtools.base import ArtifactBase
from ssm_segtools.errors import ConfigError, DataError, FormatError
from ssm_segtools.geometry.affine import AffineParams, similarity_to_affine
from ssm_segtools.geometry.pointcloud import PointCloud
from ssm_segtools.losses import total_loss
from ssm_segtools.masks import as_binary
from ssm_segtools.raster.faces import FaceList
from ssm_segtools.raster.soft import RasterConfig
from ssm_segtools.ssm.model import (DeformParams, ShapeModel, backprop_points,
	clamp_beta, synthesize)
from ssm_segtools.train.augment import draw_augmentation, warp_image, warp_mask, warp_points
from ssm_segtools.train.config import AugmentConfig, FitConfig
from ssm_segtools.train.fitting import render_dice
from ssm_segtools.train.optim import Adam
from ssm_segtools.utility import body_lines, format_numbers, ordered_map, parse_numbers

logger = logging.getLogger(__name__)

REGRESSOR_MAGIC = 'REG1'

# Output scale of modes with zero variance.
MIN_BETA_SCALE = 1e-6


def encode_image(image, downsample: int) -> np.ndarray:
	'''
	Block-mean pooling by downsample (the image is cropped to a multiple of
	it), centred on 0 and flattened.
	'''
	arr = np.asarray(image, dtype=float)
	k = int(downsample)
	h, w = (arr.shape[0] // k) * k, (arr.shape[1] // k) * k
	pooled = arr[:h, :w].reshape(h // k, k, w // k, k).mean(axis=(1, 3))
	return pooled.reshape(-1) - 0.5

#-------------------------------------------------------------------------------
# class: RegressorModel
# inherits: ssm_segtools.base.ArtifactBase
#
# Public properties:
#	sizes - layer widths, input first, 6 + beta_dim last
#	image_shape - (height, width) of the images the input layer expects
#	downsample - pooling block size
#	scale - (6 + beta_dim,) output scale; the head emits scale * (W h + b)
#	params - dict of the weight ('W0', ...) and bias ('b0', ...) arrays
#
# Public methods:
#	forward(x) - (outputs, cache) for a (B, input) batch
#	backward(cache, grad_out) - parameter gradients for a (B, output) batch
#	predict_raw(image) - the (6 + beta_dim,) head output for one image
#
#	The .reg body: `REG1 sizes...`, `downsample height width`, the scale line,
#	then per layer its weight rows and its bias line.
#
#-------------------------------------------------------------------------------
class RegressorModel(ArtifactBase):

	EXTENSION = '.reg'

	def __init__(self, sizes: Sequence[int], image_shape, downsample: int, scale, params: Dict[str, np.ndarray]):
		self.__sizes = tuple(int(s) for s in sizes)
		self.__image_shape = (int(image_shape[0]), int(image_shape[1]))
		self.__downsample = int(downsample)
		self.__scale = np.array(scale, dtype=float).reshape(-1)
		if len(self.__sizes) < 2 or min(self.__sizes) < 1:
			raise DataError('regressor needs at least two positive layer sizes', 'RegressorModel')
		expected_in = (self.__image_shape[0] // self.__downsample) * (self.__image_shape[1] // self.__downsample)
		if self.__sizes[0] != expected_in:
			raise DataError('input size %d does not match %s pooled by %d' % (self.__sizes[0], self.__image_shape, self.__downsample), 'RegressorModel')
		if self.__scale.size != self.__sizes[-1]:
			raise DataError('output scale has %d entries, head has %d' % (self.__scale.size, self.__sizes[-1]), 'RegressorModel')
		self.__params = {}
		for layer in range(len(self.__sizes) - 1):
			shape_w = (self.__sizes[layer], self.__sizes[layer + 1])
			w = np.array(params['W%d' % layer], dtype=float)
			b = np.array(params['b%d' % layer], dtype=float).reshape(-1)
			if w.shape != shape_w or b.size != shape_w[1]:
				raise DataError('layer %d has shape %s, expected %s' % (layer, w.shape, shape_w), 'RegressorModel')
			self.__params['W%d' % layer] = w
			self.__params['b%d' % layer] = b
		return

	def __repr__(self):
		return 'RegressorModel(sizes=%s)' % (self.__sizes,)

	@classmethod
	def initialise(cls, image_shape, model: ShapeModel, base_theta: AffineParams, cfg: FitConfig, rng: np.random.Generator) -> 'RegressorModel':
		'''
		He-normal hidden layers and a zero output layer whose bias reproduces
		base_theta with beta = 0, so the untrained prediction is the mean shape
		at the dataset's mean placement.
		'''
		height, width = int(image_shape[0]), int(image_shape[1])
		k = cfg.downsample
		if height < k or width < k:
			raise ConfigError('downsample %d exceeds image size %dx%d' % (k, width, height), 'RegressorModel.initialise')
		sizes = [(height // k) * (width // k)] + list(cfg.hidden) + [6 + model.beta_dim]
		placement = math.sqrt(max(abs(base_theta.determinant), 1e-12))
		lin = cfg.head_linear * placement
		scale = np.concatenate([
			[lin, lin, cfg.head_translation * width, lin, lin, cfg.head_translation * height],
			np.maximum(cfg.head_beta * np.sqrt(model.eigenvalues), MIN_BETA_SCALE),
		])
		params = {}
		last = len(sizes) - 2
		for layer in range(last + 1):
			fan_in, fan_out = sizes[layer], sizes[layer + 1]
			if layer == last:
				params['W%d' % layer] = np.zeros((fan_in, fan_out))
				params['b%d' % layer] = np.concatenate([base_theta.theta, np.zeros(model.beta_dim)]) / scale
			else:
				params['W%d' % layer] = rng.normal(0.0, math.sqrt(2.0 / fan_in), (fan_in, fan_out))
				params['b%d' % layer] = np.zeros(fan_out)
		return cls(sizes, (height, width), k, scale, params)

	@property
	def sizes(self) -> Tuple[int, ...]:
		return self.__sizes

	@property
	def image_shape(self) -> Tuple[int, int]:
		return self.__image_shape

	@property
	def downsample(self) -> int:
		return self.__downsample

	@property
	def scale(self) -> np.ndarray:
		return self.__scale

	@property
	def params(self) -> Dict[str, np.ndarray]:
		return self.__params

	@property
	def layer_count(self) -> int:
		return len(self.__sizes) - 1

	def copy(self) -> 'RegressorModel':
		return RegressorModel(self.__sizes, self.__image_shape, self.__downsample, self.__scale,
			dict((k, v.copy()) for k, v in self.__params.items()))

	def encode(self, image) -> np.ndarray:
		arr = np.asarray(image, dtype=float)
		if arr.shape != self.__image_shape:
			raise DataError('image is %s, regressor expects %s' % (arr.shape, self.__image_shape), 'RegressorModel.encode')
		return encode_image(arr, self.__downsample)

	def forward(self, x: np.ndarray):
		acts = [np.atleast_2d(x)]
		pre = []
		for layer in range(self.layer_count):
			z = acts[-1] @ self.__params['W%d' % layer] + self.__params['b%d' % layer]
			pre.append(z)
			if layer < self.layer_count - 1:
				acts.append(np.maximum(z, 0.0))
		return pre[-1] * self.__scale, (acts, pre)

	def backward(self, cache, grad_out: np.ndarray) -> Dict[str, np.ndarray]:
		acts, pre = cache
		grads = {}
		g = np.atleast_2d(grad_out) * self.__scale
		for layer in range(self.layer_count - 1, -1, -1):
			grads['W%d' % layer] = acts[layer].T @ g
			grads['b%d' % layer] = g.sum(axis=0)
			if layer > 0:
				g = (g @ self.__params['W%d' % layer].T) * (pre[layer - 1] > 0)
		return grads

	def predict_raw(self, image) -> np.ndarray:
		return self.forward(self.encode(image))[0][0]

	def _constructText(self) -> str:
		lines = ['%s %s' % (REGRESSOR_MAGIC, ' '.join(str(s) for s in self.__sizes))]
		lines.append('%d %d %d' % (self.__downsample, self.__image_shape[0], self.__image_shape[1]))
		lines.append(format_numbers(self.__scale))
		for layer in range(self.layer_count):
			lines.extend(format_numbers(row) for row in self.__params['W%d' % layer])
			lines.append(format_numbers(self.__params['b%d' % layer]))
		return '\n'.join(lines) + '\n'

	@classmethod
	def _parseText(cls, text: str, source: str) -> 'RegressorModel':
		lines = body_lines(text)
		header = lines[0].split() if lines else []
		if len(header) < 3 or header[0] != REGRESSOR_MAGIC:
			raise FormatError('not a %s regressor file' % REGRESSOR_MAGIC, source)
		try:
			sizes = [int(tok) for tok in header[1:]]
			k, height, width = (int(tok) for tok in lines[1].split())
		except (ValueError, IndexError):
			raise FormatError('bad regressor header', source)
		expected = 3 + sum(sizes[i] + 1 for i in range(len(sizes) - 1))
		if len(lines) != expected:
			raise FormatError('expected %d lines, found %d' % (expected, len(lines)), source)
		scale = parse_numbers(lines[2], sizes[-1], source)
		params = {}
		pos = 3
		for layer in range(len(sizes) - 1):
			fan_in, fan_out = sizes[layer], sizes[layer + 1]
			params['W%d' % layer] = np.array([parse_numbers(line, fan_out, source) for line in lines[pos:pos + fan_in]])
			params['b%d' % layer] = parse_numbers(lines[pos + fan_in], fan_out, source)
			pos += fan_in + 1
		return cls(sizes, (height, width), k, scale, params)

	pass


def split_output(model: ShapeModel, raw: np.ndarray) -> Tuple[AffineParams, DeformParams]:
	'''
	Head output to (theta, beta), beta clamped into the box.
	'''
	return AffineParams(raw[:6]), clamp_beta(model, raw[6:6 + model.beta_dim])

def predict(regressor: RegressorModel, model: ShapeModel, image) -> Tuple[AffineParams, DeformParams, PointCloud]:
	theta, beta = split_output(model, regressor.predict_raw(image))
	return theta, beta, synthesize(model, theta, beta)

#-------------------------------------------------------------------------------
# class: TrainingReport
#
# Public properties:
#	records - list of (epoch, stage, train_point, val_point, val_dice)
#	stage_switch - first epoch of stage 2, or None
#	best_val_dice - validation Dice of the returned weights
#
# Public methods:
#	to_tsv() - header, a `# stage 2 from epoch N` marker, one row per epoch
#
#-------------------------------------------------------------------------------
@dataclass
class TrainingReport:
	records: List[Tuple[int, int, float, float, float]] = field(default_factory=list)
	stage_switch: int | None = None
	best_val_dice: float = 0.0
	val_ids: List[int] = field(default_factory=list)

	def to_tsv(self) -> str:
		lines = ['epoch\tstage\ttrain_point\tval_point\tval_dice']
		for epoch, stage, train_point, val_point, val_dice in self.records:
			if epoch == self.stage_switch:
				lines.append('# stage 2 from epoch %d' % epoch)
			lines.append('%d\t%d\t%.9g\t%.9g\t%.9g' % (epoch, stage, train_point, val_point, val_dice))
		return '\n'.join(lines) + '\n'

	@classmethod
	def from_tsv(cls, text: str) -> 'TrainingReport':
		report = cls()
		for line in body_lines(text)[1:]:
			fields = line.split()
			record = (int(fields[0]), int(fields[1]), float(fields[2]), float(fields[3]), float(fields[4]))
			if record[1] == 2 and report.stage_switch is None:
				report.stage_switch = record[0]
			report.records.append(record)
		return report


def mean_placement(model: ShapeModel, clouds: Sequence[PointCloud]) -> AffineParams:
	'''
	Average of the similarities that carry the model mean onto each cloud.
	'''
	thetas = [similarity_to_affine(normalize_to_template(pc, model.mean)[1]).theta for pc in clouds]
	return AffineParams(np.mean(thetas, axis=0))

def _sampleGradient(args):
	# loss and head-output gradient of one sample
	model, faces, raw, points, mask, raster, delta = args
	theta, beta = split_output(model, raw)
	pred = synthesize(model, theta, beta)
	loss = total_loss(pred, points, mask, faces, raster, delta)
	g_theta, g_beta = backprop_points(model, theta, beta, loss.grad)
	return loss.terms['point'], np.concatenate([g_theta, g_beta])

def _checkDataset(dataset: Sequence, model: ShapeModel, faces: FaceList):
	if not dataset:
		raise DataError('empty training dataset', 'train_regressor')
	if faces.T != model.T:
		raise ConfigError('faces built for T=%d, model has T=%d' % (faces.T, model.T), 'train_regressor')
	shape = np.asarray(dataset[0][0]).shape
	for image, points, mask in dataset:
		if np.asarray(image).shape != shape or as_binary(mask).shape != shape:
			raise DataError('inconsistent image sizes', 'train_regressor')
		if points.T != model.T:
			raise DataError('sample has T=%d, model has T=%d' % (points.T, model.T), 'train_regressor')
	return shape

def _validate(reg: RegressorModel, model: ShapeModel, faces: FaceList, samples):
	points_err = []
	dices = []
	for image, points, mask in samples:
		_, _, pred = predict(reg, model, image)
		diff = pred.points - points.points
		points_err.append(math.sqrt(float(np.mean(np.sum(diff * diff, axis=1)))))
		dices.append(render_dice(pred, faces, as_binary(mask)))
	return float(np.mean(points_err)), float(np.mean(dices))

#-------------------------------------------------------------------------------
# function: train_regressor(dataset, model, faces, cfg=FitConfig(), augment=AugmentConfig(), stage1_only=False)
#
# Description:
# Seeded validation split, then mini-batch Adam in two stages. Stage 1 trains
# on the point loss alone until the validation point error has not improved
# for cfg.patience epochs (or stage1_max_epochs) and keeps its best weights.
# Stage 2 adds delta * mask loss for cfg.stage2_epochs and is skipped when
# delta is 0 or stage1_only is set; it continues from the best stage 1
# weights with the optimizer state saved alongside them. The returned
# weights are those with the best validation Dice among the stage 1 result
# and every stage 2 epoch.
#
# Params:
#	dataset - sequence of (image, gt_points, gt_mask), all images one size
#
# Returns:
#	(RegressorModel, TrainingReport)
#
#-------------------------------------------------------------------------------
def train_regressor(dataset: Sequence, model: ShapeModel, faces: FaceList, cfg: FitConfig | None = None,
		augment: AugmentConfig | None = None, stage1_only: bool = False):
	cfg = cfg or FitConfig()
	augment = augment or AugmentConfig()
	shape = _checkDataset(dataset, model, faces)
	height, width = shape
	spacing = as_binary(dataset[0][2]).spacing_mm
	rng = np.random.default_rng(cfg.seed)

	order = rng.permutation(len(dataset))
	val_count = min(len(dataset) - 1, max(1, int(round(cfg.val_fraction * len(dataset)))))
	val_ids = sorted(int(i) for i in order[:val_count])
	train_ids = sorted(int(i) for i in order[val_count:])
	val_samples = [dataset[i] for i in val_ids] or [dataset[i] for i in train_ids]

	base = mean_placement(model, [dataset[i][1] for i in train_ids])
	reg = RegressorModel.initialise(shape, model, base, cfg, rng)
	adam = Adam(cfg.lr)
	raster = RasterConfig(width, height, spacing, cfg.tau)
	report = TrainingReport(val_ids=val_ids)

	def run_epoch(epoch: int, stage: int, delta: float) -> None:
		perm = [train_ids[i] for i in rng.permutation(len(train_ids))]
		losses = []
		for start in range(0, len(perm), cfg.batch_size):
			batch = []
			for idx in perm[start:start + cfg.batch_size]:
				image, points, mask = dataset[idx]
				warp = draw_augmentation(rng, augment, width, height).affine(width, height)
				batch.append((warp_image(image, warp), warp_points(points, warp), warp_mask(mask, warp)))
			x = np.stack([encode_image(b[0], cfg.downsample) for b in batch])
			out, cache = reg.forward(x)
			jobs = [(model, faces, out[i], b[1], b[2], raster, delta) for i, b in enumerate(batch)]
			results = ordered_map(_sampleGradient, jobs, cfg.threads)
			grad_out = np.stack([r[1] for r in results]) / len(batch)
			adam.step(reg.params, reg.backward(cache, grad_out))
			losses.extend(r[0] for r in results)
		val_point, val_dice = _validate(reg, model, faces, val_samples)
		report.records.append((epoch, stage, float(np.mean(losses)), val_point, val_dice))
		logger.info('train_regressor(): epoch %d stage %d train %.4f val %.4f dice %.4f',
			epoch, stage, report.records[-1][2], val_point, val_dice)
		return

	epoch = 0
	best_point = math.inf
	best_reg, best_adam = reg.copy(), adam.copy()
	stale = 0
	while epoch < cfg.stage1_max_epochs and stale < cfg.patience:
		epoch += 1
		run_epoch(epoch, 1, 0.0)
		val_point = report.records[-1][3]
		if val_point < best_point:
			best_point, best_reg, best_adam, stale = val_point, reg.copy(), adam.copy(), 0
		else:
			stale += 1

	# stage 2 resumes from the best stage 1 weights and their moment estimates
	reg, adam = best_reg, best_adam
	best_dice = _validate(reg, model, faces, val_samples)[1]
	best_reg = reg.copy()
	if not stage1_only and cfg.delta > 0 and cfg.stage2_epochs > 0:
		report.stage_switch = epoch + 1
		logger.info('train_regressor(): stage 2 from epoch %d, delta %.3g', epoch + 1, cfg.delta)
		for _ in range(cfg.stage2_epochs):
			epoch += 1
			run_epoch(epoch, 2, cfg.delta)
			if report.records[-1][4] > best_dice:
				best_dice, best_reg = report.records[-1][4], reg.copy()
	report.best_val_dice = best_dice
	return best_reg, report
