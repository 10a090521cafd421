#!/usr/bin/env python
'''
File			:	quadruples.py
Package			:	ssm_segtools.alignment
Brief			:	Point cloud generation workflow: turns (image, mask, landmarks)
					samples into image/mask/point-cloud quadruples sharing one
					canonical mean shape.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, List, Sequence, Tuple

from ssm_segtools.alignment.contour import extract_contour, split_and_resample
from ssm_segtools.alignment.procrustes import gpa
from ssm_segtools.errors import ConfigError, DataError
from ssm_segtools.geometry.affine import SimilarityParams
from ssm_segtools.geometry.pointcloud import PointCloud
from ssm_segtools.masks import BinaryMask, as_binary
from ssm_segtools.metrics import dice
from ssm_segtools.raster.faces import build_faces
from ssm_segtools.raster.hard import rasterize_hard
from ssm_segtools.utility import ordered_map

logger = logging.getLogger(__name__)

# Resampled clouds whose hard render overlaps their mask less than this are
# dropped from the training set.
MIN_SAMPLE_DICE = 0.90


@dataclass(frozen=True)
class CorrespondenceQuadruple:
	image_id: str
	image: Any
	mask: BinaryMask
	p_image: PointCloud
	p_canonical: PointCloud
	to_canonical: SimilarityParams

	def __post_init__(self):
		if self.p_image.T != self.p_canonical.T:
			raise DataError('image and canonical clouds differ in T', 'CorrespondenceQuadruple')


@dataclass
class QuadrupleSet:
	'''
	Surviving quadruples, their canonical mean, and (image_id, reason) for
	every excluded sample.
	'''
	quadruples: List[CorrespondenceQuadruple]
	mean: PointCloud
	excluded: List[Tuple[str, str]] = field(default_factory=list)

	def __len__(self):
		return len(self.quadruples)

	def __iter__(self):
		return iter(self.quadruples)


def _resampleSample(args):
	sample_id, mask, landmarks, T, faces, min_dice = args
	try:
		binary = as_binary(mask)
		contour = extract_contour(binary)
		pc = split_and_resample(contour, landmarks, T)
	except DataError as ex:
		return sample_id, None, ex.description
	score = dice(rasterize_hard(pc, faces, binary.width, binary.height), binary)
	if score < min_dice:
		return sample_id, None, 'resampled cloud dice %.4f < %.2f' % (score, min_dice)
	return sample_id, pc, None

#-------------------------------------------------------------------------------
# function: build_quadruples(samples, T, ids=None, min_dice=MIN_SAMPLE_DICE, threads=1)
#
# Description:
# Contour extraction and resampling per sample (on the worker pool), the Dice
# exclusion rule, then GPA over the survivors. Exclusions are decided per
# sample from its own data only, so they do not depend on order or threads.
#
# Params:
#	samples - sequence of (image, mask, landmarks)
#	T - even point count
#	ids - optional sample identifiers, '0000', '0001', ... by default
#
# Returns:
#	QuadrupleSet
#
#-------------------------------------------------------------------------------
def build_quadruples(samples: Sequence, T: int, ids: Sequence[str] | None = None,
		min_dice: float = MIN_SAMPLE_DICE, threads: int = 1) -> QuadrupleSet:
	if not 0.0 <= min_dice <= 1.0:
		raise ConfigError('min_dice must lie in [0, 1], got %r' % (min_dice,), 'build_quadruples')
	faces = build_faces(T)
	if ids is None:
		ids = ['%04d' % i for i in range(len(samples))]
	if len(ids) != len(samples):
		raise DataError('%d ids for %d samples' % (len(ids), len(samples)), 'build_quadruples')
	jobs = [(str(sid), mask, lmk, T, faces, min_dice) for sid, (_, mask, lmk) in zip(ids, samples)]
	results = ordered_map(_resampleSample, jobs, threads)

	kept = []
	excluded = []
	for (sample_id, pc, reason), (image, mask, _) in zip(results, samples):
		if pc is None:
			logger.warning('build_quadruples(): excluding %s: %s', sample_id, reason)
			excluded.append((sample_id, reason))
		else:
			kept.append((sample_id, image, as_binary(mask), pc))
	if len(kept) < 2:
		raise DataError('insufficient data', 'build_quadruples')

	mean, aligned, transforms = gpa([k[3] for k in kept])
	quads = [CorrespondenceQuadruple(sid, image, mask, pc, canon, sim)
		for (sid, image, mask, pc), canon, sim in zip(kept, aligned, transforms)]
	logger.info('build_quadruples(): %d quadruples, %d excluded', len(quads), len(excluded))
	return QuadrupleSet(quads, mean, excluded)
