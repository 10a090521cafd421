#!/usr/bin/env python
'''
File			:	procrustes.py
Package			:	ssm_segtools.alignment
Brief			:	Generalized Procrustes analysis of corresponding point clouds,
					and normalization of one cloud against a template.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import logging
import math
from typing import List, Sequence, Tuple

import numpy as np

from ssm_segtools.errors import DataError, NumericalError
from ssm_segtools.geometry.affine import (SimilarityParams, apply_affine,
	estimate_similarity, invert_affine, similarity_to_affine)
from ssm_segtools.geometry.pointcloud import PointCloud, as_points

logger = logging.getLogger(__name__)

GPA_TOLERANCE = 1e-8
GPA_MAX_ITERS = 100


def _normalized(pts: np.ndarray) -> np.ndarray:
	centered = pts - pts.mean(axis=0)
	rms = math.sqrt(float(np.mean(np.sum(centered * centered, axis=1))))
	extent = max(1.0, float(np.max(np.abs(pts))))
	if rms <= 1e-12 * extent:
		raise NumericalError('degenerate configuration', 'gpa')
	return centered / rms

def _reference(pts: np.ndarray) -> np.ndarray:
	'''
	Centred, unit RMS copy of pts rotated so its basal_a direction (from the
	centroid to the first wall end) points along +x.
	'''
	ref = _normalized(pts)
	half = ref.shape[0] // 2
	basal = 0.5 * (ref[0] + ref[half])
	angle = math.atan2(basal[1], basal[0])
	c, s = math.cos(-angle), math.sin(-angle)
	return ref @ np.array([[c, -s], [s, c]]).T

def _alignTo(pts: np.ndarray, mean: np.ndarray) -> Tuple[np.ndarray, SimilarityParams]:
	'''
	Similarity fit of pts onto mean, then the rescale that puts the result in
	the tangent space of mean (<x, mean> = |mean|^2).
	'''
	sim = estimate_similarity(pts, mean)
	aligned = similarity_to_affine(sim).apply(pts)
	# mean is centred, so rescaling about the origin keeps the fit a similarity
	k = float(np.sum(mean * mean)) / float(np.sum(aligned * mean))
	tangent = SimilarityParams(sim.scale * k, sim.rotation, (sim.translation[0] * k, sim.translation[1] * k))
	return aligned * k, tangent

#-------------------------------------------------------------------------------
# function: gpa(shapes)
#
# Description:
# Iterative GPA. The mean starts as the first shape, centred, scaled to unit
# RMS radius and turned so its basal_a direction is +x. Every round aligns each
# shape to the mean, projects it into the mean's tangent space, averages, and
# brings the average back onto the reference pose. Stops when no mean
# coordinate moves by GPA_TOLERANCE or after GPA_MAX_ITERS rounds.
#
# Params:
#	shapes - sequence of PointCloud with identical T, at least 2
#
# Returns:
#	(mean, aligned, transforms); transforms[i] maps shapes[i] onto aligned[i]
#	and mean is the plain average of aligned
#
#-------------------------------------------------------------------------------
def gpa(shapes: Sequence[PointCloud]) -> Tuple[PointCloud, List[PointCloud], List[SimilarityParams]]:
	if len(shapes) < 2:
		raise DataError('gpa needs at least 2 shapes, got %d' % len(shapes), 'gpa')
	arrays = [as_points(s) for s in shapes]
	counts = set(a.shape[0] for a in arrays)
	if len(counts) != 1:
		raise DataError('shapes differ in point count: %s' % sorted(counts), 'gpa')

	reference = _reference(arrays[0])
	mean = reference
	for iteration in range(1, GPA_MAX_ITERS + 1):
		aligned = [_alignTo(a, mean)[0] for a in arrays]
		avg = np.mean(aligned, axis=0)
		new_mean = _normalized(similarity_to_affine(estimate_similarity(avg, reference)).apply(avg))
		movement = float(np.max(np.abs(new_mean - mean)))
		mean = new_mean
		if movement < GPA_TOLERANCE:
			break
	logger.debug('gpa(): %d shapes, %d iterations, last movement %.3g', len(arrays), iteration, movement)

	results = [_alignTo(a, mean) for a in arrays]
	aligned = [PointCloud(r[0]) for r in results]
	transforms = [r[1] for r in results]
	mean_out = PointCloud(np.mean([r[0] for r in results], axis=0))
	return mean_out, aligned, transforms

def normalize_to_template(pc: PointCloud, template: PointCloud) -> Tuple[PointCloud, SimilarityParams]:
	'''
	Carries an image-domain cloud into the template's frame. Returns the
	normalized cloud and S, the similarity mapping template onto pc.
	'''
	sim = estimate_similarity(template, pc)
	return apply_affine(invert_affine(similarity_to_affine(sim)), pc), sim
