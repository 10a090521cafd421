#!/usr/bin/env python
'''
File			:	config.py
Package			:	ssm_segtools.train
Brief			:	Hyper-parameter containers for fitting, regressor training and
					augmentation.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

from ssm_segtools.errors import ConfigError
from ssm_segtools.losses import DEFAULT_DELTA
from ssm_segtools.raster.soft import TRAIN_TAU

# Per-image fits end on a sharper render than regressor training uses.
FIT_TAU = 0.1


def _require(ok: bool, message: str, source: str) -> None:
	if not ok:
		raise ConfigError(message, source)
	return

#-------------------------------------------------------------------------------
# class: FitConfig
#
# Public properties:
#	lr - Adam step of the regressor weights
#	delta - weight of the mask term in the total loss
#	tau - soft rasterizer temperature (pixels) of regressor training
#	max_iters - per-image fitting iterations
#	seed - seeds data splits, weight init and augmentation draws
#	batch_size - regressor mini-batch size
#	fit_lr - per-image Adam step, in parameter units that move points by
#		about one pixel
#	tau_start - temperature at the first fitting iteration; annealed
#		geometrically down to fit_tau over the first two thirds of the
#		iterations
#	fit_tau - temperature at the end of per-image fitting
#	theta_reg - weight of |theta - theta_init|^2 in mask-only fitting
#	patience - stage 1 ends after this many epochs without a validation gain
#	stage1_max_epochs, stage2_epochs - epoch caps of the two stages
#	val_fraction - share of the dataset held out for validation
#	hidden - hidden layer widths of the regressor
#	downsample - block size of the regressor's input pooling
#	head_translation, head_linear, head_beta - output head scales, as
#		fractions of image size, of the mean placement scale, and of sqrt(lambda)
#	init_rotations - rotation candidates tried by the default fit placement
#	threads - worker count; results never depend on it
#
#-------------------------------------------------------------------------------
@dataclass(frozen=True)
class FitConfig:
	lr: float = 0.001
	delta: float = DEFAULT_DELTA
	tau: float = TRAIN_TAU
	max_iters: int = 300
	seed: int = 0
	batch_size: int = 32
	fit_lr: float = 0.2
	tau_start: float = 2.0
	fit_tau: float = FIT_TAU
	theta_reg: float = 1e-6
	patience: int = 10
	stage1_max_epochs: int = 60
	stage2_epochs: int = 40
	val_fraction: float = 0.2
	hidden: Tuple[int, ...] = (256, 64)
	downsample: int = 2
	head_translation: float = 0.25
	head_linear: float = 0.25
	head_beta: float = 1.0
	init_rotations: int = 24
	threads: int = 1

	def __post_init__(self):
		src = 'FitConfig'
		object.__setattr__(self, 'hidden', tuple(int(h) for h in self.hidden))
		_require(math.isfinite(self.lr) and self.lr > 0, 'lr must be positive', src)
		_require(math.isfinite(self.fit_lr) and self.fit_lr > 0, 'fit_lr must be positive', src)
		_require(math.isfinite(self.delta) and self.delta >= 0, 'delta must be >= 0', src)
		_require(math.isfinite(self.tau) and self.tau > 0, 'tau must be positive', src)
		_require(math.isfinite(self.fit_tau) and self.fit_tau > 0, 'fit_tau must be positive', src)
		_require(math.isfinite(self.tau_start) and self.tau_start >= self.fit_tau, 'tau_start must be >= fit_tau', src)
		_require(self.theta_reg >= 0, 'theta_reg must be >= 0', src)
		_require(self.max_iters > 0, 'max_iters must be positive', src)
		_require(self.batch_size > 0, 'batch_size must be positive', src)
		_require(self.patience > 0, 'patience must be positive', src)
		_require(self.stage1_max_epochs > 0, 'stage1_max_epochs must be positive', src)
		_require(self.stage2_epochs >= 0, 'stage2_epochs must be >= 0', src)
		_require(0.0 < self.val_fraction < 1.0, 'val_fraction must lie in (0, 1)', src)
		_require(all(h > 0 for h in self.hidden), 'hidden widths must be positive', src)
		_require(self.downsample >= 1, 'downsample must be >= 1', src)
		_require(min(self.head_translation, self.head_linear, self.head_beta) > 0, 'head scales must be positive', src)
		_require(self.init_rotations >= 1, 'init_rotations must be >= 1', src)
		_require(self.threads >= 1, 'threads must be >= 1', src)

	@property
	def tau_schedule_length(self) -> int:
		return max(1, 2 * self.max_iters // 3)

	def tau_at(self, iteration: int) -> float:
		'''
		Geometric annealing from tau_start to fit_tau over the first two thirds
		of the iterations, constant afterwards.
		'''
		frac = min(1.0, iteration / float(self.tau_schedule_length))
		return self.tau_start * (self.fit_tau / self.tau_start) ** frac

#-------------------------------------------------------------------------------
# class: AugmentConfig
#
# Ranges of the random flips, rotation (degrees, about the image center) and
# translation (fraction of image size) applied to training samples.
#
#-------------------------------------------------------------------------------
@dataclass(frozen=True)
class AugmentConfig:
	enabled: bool = True
	rotation_deg: float = 30.0
	translation_frac: float = 0.1
	flip_lr: float = 0.5
	flip_ud: float = 0.5

	def __post_init__(self):
		src = 'AugmentConfig'
		_require(0.0 <= self.rotation_deg <= 180.0, 'rotation_deg must lie in [0, 180]', src)
		_require(0.0 <= self.translation_frac <= 0.5, 'translation_frac must lie in [0, 0.5]', src)
		_require(0.0 <= self.flip_lr <= 1.0 and 0.0 <= self.flip_ud <= 1.0, 'flip probabilities must lie in [0, 1]', src)
