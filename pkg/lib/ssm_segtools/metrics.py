#!/usr/bin/env python
'''
File			:	metrics.py
Package			:	ssm_segtools
Brief			:	Segmentation metrics: Dice overlap, boundary Hausdorff distance
					in millimetres and the 8-connected component count, plus the
					per-sample/aggregate evaluation report.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from ssm_segtools.errors import DataError
from ssm_segtools.masks import BinaryMask, as_binary

logger = logging.getLogger(__name__)

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


def _pair(a, b, source):
	ma = as_binary(a)
	mb = as_binary(b)
	if ma.shape != mb.shape:
		raise DataError('dimension mismatch: %s vs %s' % (ma.shape, mb.shape), source)
	return ma, mb

def dice(a, b) -> float:
	'''
	2|A n B| / (|A| + |B|); 1 when both masks are empty.
	'''
	ma, mb = _pair(a, b, 'dice')
	da = ma.data.astype(bool)
	db = mb.data.astype(bool)
	total = int(da.sum()) + int(db.sum())
	if total == 0:
		return 1.0
	return 2.0 * int(np.logical_and(da, db).sum()) / total

def boundary_pixels(mask) -> np.ndarray:
	'''
	(N, 2) pixel-center coordinates of foreground pixels with at least one
	4-neighbour in the background; the grid border counts as background.
	'''
	fg = as_binary(mask).data.astype(bool)
	padded = np.pad(fg, 1, constant_values=False)
	interior = ndimage.binary_erosion(padded, structure=FOUR_CONNECTED, border_value=0)[1:-1, 1:-1]
	rows, cols = np.nonzero(fg & ~interior)
	return np.stack([cols + 0.5, rows + 0.5], axis=1).astype(float)

#-------------------------------------------------------------------------------
# function: hausdorff_mm(a, b, spacing_mm=None)
#
# Description:
# Symmetric max-min Euclidean distance between the boundary pixel centers of
# the two masks, scaled to millimetres by spacing_mm (taken from mask a when
# not given).
#
#-------------------------------------------------------------------------------
def hausdorff_mm(a, b, spacing_mm: float | None = None) -> float:
	ma, mb = _pair(a, b, 'hausdorff_mm')
	if ma.is_empty() or mb.is_empty():
		raise DataError('undefined HD', 'hausdorff_mm')
	spacing = ma.spacing_mm if spacing_mm is None else float(spacing_mm)
	pa = boundary_pixels(ma)
	pb = boundary_pixels(mb)
	d_ab = cKDTree(pb).query(pa)[0].max()
	d_ba = cKDTree(pa).query(pb)[0].max()
	return float(max(d_ab, d_ba)) * spacing

def connected_components(mask, level: float = 0.5) -> int:
	'''
	Number of 8-connected foreground components after thresholding at level.
	'''
	fg = as_binary(mask, level).data.astype(bool)
	_, count = ndimage.label(fg, structure=EIGHT_CONNECTED)
	return int(count)

def largest_component(mask, level: float = 0.5) -> BinaryMask:
	'''
	The largest 8-connected foreground component of mask thresholded at
	level; ties go to the lowest label. An empty mask comes back empty.
	'''
	binary = as_binary(mask, level)
	labels, count = ndimage.label(binary.data.astype(bool), structure=EIGHT_CONNECTED)
	if count == 0:
		return binary
	sizes = np.bincount(labels.ravel())[1:]
	keep = int(np.argmax(sizes)) + 1
	return BinaryMask(labels == keep, binary.spacing_mm)

def count_holes(mask) -> int:
	'''
	Background regions (4-connected) that do not reach the grid border.
	'''
	fg = as_binary(mask).data.astype(bool)
	padded = np.pad(~fg, 1, constant_values=True)
	_, count = ndimage.label(padded, structure=FOUR_CONNECTED)
	return int(count) - 1 if padded.any() else 0

def is_simply_connected(mask) -> bool:
	return connected_components(mask) == 1 and count_holes(mask) == 0

#-------------------------------------------------------------------------------
# class: SampleMetrics / EvalReport
#
# Public properties (EvalReport):
#	samples - list of SampleMetrics (id, dice, hd_mm, cc)
#	mean / sd - dicts keyed by 'dice', 'hd_mm', 'cc'
#
#	Aggregates are recomputed from the per-sample list. The standard deviation
#	uses n - 1 and is 0 for a single sample. Samples whose HD is undefined
#	carry NaN and are left out of the HD aggregates.
#
# Public methods:
#	to_tsv() - per-sample rows followed by `metric mean sd` summary rows
#
#-------------------------------------------------------------------------------
@dataclass(frozen=True)
class SampleMetrics:
	sample_id: str
	dice: float
	hd_mm: float
	cc: int


@dataclass
class EvalReport:
	samples: List[SampleMetrics] = field(default_factory=list)

	METRICS = ('dice', 'hd_mm', 'cc')

	def column(self, name: str) -> np.ndarray:
		return np.array([getattr(s, name) for s in self.samples], dtype=float)

	def _aggregate(self, name: str):
		values = self.column(name)
		values = values[np.isfinite(values)]
		if values.size == 0:
			return math.nan, math.nan
		sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
		return float(np.mean(values)), sd

	@property
	def mean(self) -> dict:
		return dict((name, self._aggregate(name)[0]) for name in self.METRICS)

	@property
	def sd(self) -> dict:
		return dict((name, self._aggregate(name)[1]) for name in self.METRICS)

	def to_tsv(self) -> str:
		lines = ['id\tdice\thd_mm\tcc']
		for s in self.samples:
			lines.append('%s\t%.6f\t%.6f\t%d' % (s.sample_id, s.dice, s.hd_mm, s.cc))
		lines.append('metric\tmean\tsd')
		for name in self.METRICS:
			mean, sd = self._aggregate(name)
			lines.append('%s\t%.6f\t%.6f' % (name, mean, sd))
		return '\n'.join(lines) + '\n'

	pass


def evaluate(pred: Sequence, gt: Sequence, spacing: float | None = None, ids: Sequence[str] | None = None) -> EvalReport:
	'''
	Per-sample Dice, HD (mm) and CC of each prediction against its ground
	truth. Soft predictions are thresholded at 0.5.
	'''
	if len(pred) != len(gt):
		raise DataError('prediction and ground truth lists differ in length: %d vs %d' % (len(pred), len(gt)), 'evaluate')
	if ids is None:
		ids = ['%04d' % i for i in range(len(pred))]
	report = EvalReport()
	for sample_id, p, g in zip(ids, pred, gt):
		pm, gm = _pair(p, g, 'evaluate')
		try:
			hd = hausdorff_mm(pm, gm, spacing if spacing is not None else gm.spacing_mm)
		except DataError:
			logger.warning('evaluate(): HD undefined for sample %s (empty mask)', sample_id)
			hd = math.nan
		report.samples.append(SampleMetrics(str(sample_id), dice(pm, gm), hd, connected_components(pm)))
	logger.info('evaluate(): %d samples, mean dice %.4f', len(report.samples), report.mean['dice'] if report.samples else math.nan)
	return report
