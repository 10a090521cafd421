#!/usr/bin/env python
'''
File			:	contour.py
Package			:	ssm_segtools.alignment
Brief			:	Boundary extraction from binary masks, the landmark triple, and
					the split of a ring contour into corresponding inner/outer
					chains resampled to T points.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import logging
import math
from typing import List, Sequence, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter1d

from ssm_segtools.base import ArtifactBase
from ssm_segtools.errors import ConfigError, DataError, FormatError
from ssm_segtools.geometry.pointcloud import MIN_POINTS, PointCloud
from ssm_segtools.masks import as_binary
from ssm_segtools.metrics import count_holes, connected_components
from ssm_segtools.utility import NUMBER_FORMAT, body_lines, parse_numbers

logger = logging.getLogger(__name__)

# Basal landmarks must sit this close to the mask boundary (pixels).
LANDMARK_TOLERANCE = 2.0

# Gaussian smoothing of the pixel-edge contour before arc-length measurements.
CONTOUR_SMOOTHING = 1.0

# A wall end is recognised as half of its right-angle turn.
CORNER_TURN = math.pi / 4

# Wall ends are searched within this fraction of each arc from its basal end.
CORNER_SEARCH = 0.25

#-------------------------------------------------------------------------------
# class: LandmarkTriple
# inherits: ssm_segtools.base.ArtifactBase
#
# Public properties:
#	apex - (2,) array; the apex point on the outer boundary
#	basal_a, basal_b - (2,) arrays; the two wall ends
#
#	The .lmk body is three `x y` lines in the order apex, basal_a, basal_b.
#
#-------------------------------------------------------------------------------
class LandmarkTriple(ArtifactBase):

	EXTENSION = '.lmk'

	def __init__(self, apex, basal_a, basal_b):
		pts = np.array([apex, basal_a, basal_b], dtype=float)
		if pts.shape != (3, 2) or not np.all(np.isfinite(pts)):
			raise DataError('landmarks must be three finite 2D points', 'LandmarkTriple')
		for i in range(3):
			for j in range(i + 1, 3):
				if np.allclose(pts[i], pts[j]):
					raise DataError('landmarks must be three distinct points', 'LandmarkTriple')
		pts.setflags(write=False)
		self.__pts = pts
		return

	def __repr__(self):
		return 'LandmarkTriple(apex=%s, basal_a=%s, basal_b=%s)' % tuple(tuple(np.round(p, 3)) for p in self.__pts)

	@property
	def apex(self) -> np.ndarray:
		return self.__pts[0]

	@property
	def basal_a(self) -> np.ndarray:
		return self.__pts[1]

	@property
	def basal_b(self) -> np.ndarray:
		return self.__pts[2]

	@property
	def points(self) -> np.ndarray:
		return self.__pts

	def swapped(self) -> 'LandmarkTriple':
		return LandmarkTriple(self.apex, self.basal_b, self.basal_a)

	def transformed(self, theta) -> 'LandmarkTriple':
		return LandmarkTriple(*theta.apply(self.__pts))

	@classmethod
	def from_cloud(cls, pc: PointCloud) -> 'LandmarkTriple':
		'''
		Apex at the arc-length midpoint of the outer chain, basal points midway
		between the corresponding chain ends.
		'''
		basal_a, basal_b = pc.basal_points()
		return cls(resample_polyline(pc.outer, 3)[1], basal_a, basal_b)

	def _constructText(self) -> str:
		fmt = NUMBER_FORMAT + ' ' + NUMBER_FORMAT
		return '\n'.join(fmt % (x, y) for x, y in self.__pts) + '\n'

	@classmethod
	def _parseText(cls, text: str, source: str) -> 'LandmarkTriple':
		lines = body_lines(text)
		if len(lines) != 3:
			raise FormatError('landmark file needs 3 lines, found %d' % len(lines), source)
		return cls(*(parse_numbers(line, 2, source) for line in lines))

	pass

#-------------------------------------------------------------------------------
# function: extract_contour(mask)
#
# Description:
# Traces the pixel-edge boundary of a simply connected mask. Pixel (r, c)
# covers [c, c+1] x [r, r+1]; the trace walks unit edges with the foreground
# on its left, which gives a positive shoelace area in (x, y) coordinates
# (counter-clockwise). Where two foreground pixels touch only at a corner the
# trace turns right, joining them as 8-connectivity requires.
#
# Returns:
#	(V, 2) float array of lattice vertices, the closing vertex not repeated
#
#-------------------------------------------------------------------------------
def extract_contour(mask) -> np.ndarray:
	fg = as_binary(mask).data.astype(bool)
	if connected_components(fg) != 1 or count_holes(fg) != 0:
		raise DataError('mask not simply connected', 'extract_contour')
	padded = np.pad(fg, 1, constant_values=False)
	core = padded[1:-1, 1:-1]
	rows, cols = np.nonzero(core)
	starts = []
	steps = []
	# (neighbour offset, start corner, step) for the top, right, bottom, left sides
	sides = (
		((-1, 0), (0, 0), (1, 0)),
		((0, 1), (1, 0), (0, 1)),
		((1, 0), (1, 1), (-1, 0)),
		((0, -1), (0, 1), (0, -1)),
	)
	for (dr, dc), (ox, oy), step in sides:
		open_side = ~padded[rows + 1 + dr, cols + 1 + dc]
		for r, c in zip(rows[open_side], cols[open_side]):
			starts.append((int(c) + ox, int(r) + oy))
			steps.append(step)

	outgoing = {}
	for idx, start in enumerate(starts):
		outgoing.setdefault(start, []).append(idx)

	first = min(range(len(starts)), key=lambda i: (starts[i][1], starts[i][0], steps[i][1], -steps[i][0]))
	used = np.zeros(len(starts), dtype=bool)
	order = []
	edge = first
	while not used[edge]:
		used[edge] = True
		order.append(edge)
		sx, sy = starts[edge]
		dx, dy = steps[edge]
		candidates = [i for i in outgoing[(sx + dx, sy + dy)] if not used[i] or i == first]
		if not candidates:
			break
		if len(candidates) > 1:
			# the sharpest right turn keeps diagonal neighbours together
			candidates.sort(key=lambda i: dx * steps[i][1] - dy * steps[i][0])
		edge = candidates[0]
	if edge != first or not used.all():
		raise DataError('mask not simply connected', 'extract_contour')
	return np.array([starts[i] for i in order], dtype=float)


def polyline_lengths(pts: np.ndarray, closed: bool = False) -> np.ndarray:
	'''
	Cumulative arc length at every vertex (and at the closing vertex when
	closed).
	'''
	path = np.vstack([pts, pts[:1]]) if closed else pts
	seg = np.hypot(*np.diff(path, axis=0).T)
	return np.concatenate([[0.0], np.cumsum(seg)])

def resample_polyline(pts: np.ndarray, count: int) -> np.ndarray:
	'''
	count points spaced uniformly by arc length along an open polyline, both
	ends included.
	'''
	cum = polyline_lengths(pts)
	targets = np.linspace(0.0, cum[-1], count)
	return np.stack([np.interp(targets, cum, pts[:, 0]), np.interp(targets, cum, pts[:, 1])], axis=1)

def _edgeMidpoints(contour: np.ndarray) -> np.ndarray:
	return 0.5 * (contour + np.roll(contour, -1, axis=0))

def _smoothContour(contour: np.ndarray, sigma_px: float) -> np.ndarray:
	# Edge midpoints drop the lattice corners; the wrap-around Gaussian removes
	# the remaining staircase.
	mids = _edgeMidpoints(contour)
	if sigma_px <= 0 or mids.shape[0] < 8:
		return mids
	spacing = float(np.mean(np.hypot(*np.diff(np.vstack([mids, mids[:1]]), axis=0).T)))
	return gaussian_filter1d(mids, sigma_px / max(spacing, 1e-12), axis=0, mode='wrap')

def _project(pts: np.ndarray, cum: np.ndarray, q: np.ndarray) -> Tuple[float, float]:
	'''
	Arc parameter of the point of a closed polyline nearest to q, and the
	distance to it.
	'''
	a = pts
	b = np.roll(pts, -1, axis=0)
	e = b - a
	len2 = np.maximum(np.sum(e * e, axis=1), 1e-300)
	t = np.clip(np.sum((q - a) * e, axis=1) / len2, 0.0, 1.0)
	near = a + t[:, None] * e
	dist = np.hypot(*(q - near).T)
	k = int(np.argmin(dist))
	seg_len = cum[k + 1] - cum[k]
	return float(cum[k] + t[k] * seg_len), float(dist[k])

def _arc(pts: np.ndarray, cum: np.ndarray, start: float, length: float) -> np.ndarray:
	'''
	The stretch of a closed polyline from arc parameter start, forward for
	length, as an open polyline with interpolated ends.
	'''
	total = cum[-1]
	path = np.vstack([pts, pts, pts[:1]])
	path_cum = np.concatenate([cum[:-1], cum + total])
	start = start % total
	stop = start + length
	inside = (path_cum > start) & (path_cum < stop)
	head = np.array([np.interp(start, path_cum, path[:, 0]), np.interp(start, path_cum, path[:, 1])])
	tail = np.array([np.interp(stop, path_cum, path[:, 0]), np.interp(stop, path_cum, path[:, 1])])
	return np.vstack([head, path[inside], tail])

def _cornerOffset(arc: np.ndarray) -> float:
	'''
	Arc length from the start of arc to its first wall corner: the point where
	the accumulated turning reaches CORNER_TURN. 0 when no corner is found
	within the search window.
	'''
	seg = np.diff(arc, axis=0)
	seg_len = np.hypot(seg[:, 0], seg[:, 1])
	keep = seg_len > 1e-9
	seg = seg[keep]
	seg_len = seg_len[keep]
	if seg.shape[0] < 3:
		return 0.0
	heading = np.arctan2(seg[:, 1], seg[:, 0])
	turn = np.angle(np.exp(1j * np.diff(heading)))
	turned = np.abs(np.cumsum(turn))
	vertex_pos = np.cumsum(seg_len)[:-1]
	limit = CORNER_SEARCH * seg_len.sum()
	hits = np.flatnonzero((turned >= CORNER_TURN) & (vertex_pos <= limit))
	if hits.size == 0:
		return 0.0
	k = int(hits[0])
	before = turned[k - 1] if k > 0 else 0.0
	prev_pos = vertex_pos[k - 1] if k > 0 else 0.0
	frac = (CORNER_TURN - before) / max(turned[k] - before, 1e-12)
	return float(prev_pos + frac * (vertex_pos[k] - prev_pos))

def _smoothOpen(arc: np.ndarray, sigma_px: float) -> np.ndarray:
	'''
	Gaussian smoothing of an open polyline. Both ends are padded by point
	reflection, so the end points stay where they are.
	'''
	n = arc.shape[0]
	if sigma_px <= 0 or n < 4:
		return arc
	spacing = float(np.mean(np.hypot(*np.diff(arc, axis=0).T)))
	sigma = sigma_px / max(spacing, 1e-12)
	pad = min(n - 1, int(math.ceil(4.0 * sigma)))
	head = 2.0 * arc[0] - arc[pad:0:-1]
	tail = 2.0 * arc[-1] - arc[-2:-pad - 2:-1]
	smooth = gaussian_filter1d(np.vstack([head, arc, tail]), sigma, axis=0, mode='nearest')
	return smooth[pad:pad + n]

def _trimArc(arc: np.ndarray, traced: np.ndarray) -> np.ndarray:
	'''
	Cuts the wall-end turns off both ends of arc. Corners are found on the
	smoothed arc; the cut itself is taken from traced, the unsmoothed arc with
	the same vertex layout, so the new ends lie on the mask boundary.
	'''
	cum = polyline_lengths(arc)
	total = cum[-1]
	head = _cornerOffset(arc)
	tail = _cornerOffset(arc[::-1])
	if head + tail >= 0.9 * total:
		head = tail = 0.0
	keep = (cum > head) & (cum < total - tail)
	start = np.array([np.interp(head, cum, traced[:, 0]), np.interp(head, cum, traced[:, 1])])
	stop = np.array([np.interp(total - tail, cum, traced[:, 0]), np.interp(total - tail, cum, traced[:, 1])])
	return np.vstack([start, traced[keep], stop])

#-------------------------------------------------------------------------------
# function: split_and_resample(contour, landmarks, T, smoothing=CONTOUR_SMOOTHING)
#
# Description:
# Splits a ring contour at the projections of the two basal landmarks. The
# arc that does not contain the apex projection is the inner (concave) side.
# Each arc loses the half wall-end segments around its basal points, is
# oriented basal_a -> basal_b and is resampled to T/2 arc-length-uniform
# points, ends included. Chain ends are cut from the traced boundary and kept
# fixed while the rest of the chain is smoothed.
#
# Params:
#	contour - (V, 2) closed polyline, e.g. from extract_contour()
#	landmarks - LandmarkTriple
#	T - even point count >= 6
#	smoothing - Gaussian sigma in pixels applied to the contour first
#
# Returns:
#	PointCloud, inner chain first, index 0 at the basal_a end
#
#-------------------------------------------------------------------------------
def split_and_resample(contour, landmarks: LandmarkTriple, T: int, smoothing: float = CONTOUR_SMOOTHING) -> PointCloud:
	if int(T) != T or T < MIN_POINTS or T % 2:
		raise ConfigError('T must be an even integer >= %d, got %r' % (MIN_POINTS, T), 'split_and_resample')
	raw = np.asarray(contour, dtype=float)
	if raw.ndim != 2 or raw.shape[1] != 2 or raw.shape[0] < 4:
		raise DataError('contour must be a closed (V, 2) polyline with V >= 4', 'split_and_resample')
	raw_cum = polyline_lengths(raw, closed=True)
	for name, q in (('basal_a', landmarks.basal_a), ('basal_b', landmarks.basal_b)):
		_, off = _project(raw, raw_cum, q)
		if off > LANDMARK_TOLERANCE:
			raise DataError('%s lies %.2f px from the mask boundary' % (name, off), 'split_and_resample')

	mids = _edgeMidpoints(raw)
	pts = _smoothContour(raw, smoothing)
	cum = polyline_lengths(pts, closed=True)
	total = cum[-1]
	s_a, _ = _project(pts, cum, landmarks.basal_a)
	s_b, _ = _project(pts, cum, landmarks.basal_b)
	s_p, _ = _project(pts, cum, landmarks.apex)
	forward = (s_b - s_a) % total
	if min(forward, total - forward) < 1.0:
		raise DataError('degenerate split', 'split_and_resample')

	apex_on_forward = ((s_p - s_a) % total) < forward
	# smoothed and traced arcs share one parametrisation
	arc_ab = (_arc(pts, cum, s_a, forward), _arc(mids, cum, s_a, forward))
	arc_ba = tuple(a[::-1] for a in (_arc(pts, cum, s_b, total - forward), _arc(mids, cum, s_b, total - forward)))
	if apex_on_forward:
		inner, outer = arc_ba, arc_ab
	else:
		inner, outer = arc_ab, arc_ba

	half = int(T) // 2
	inner_pts = resample_polyline(_smoothOpen(_trimArc(*inner), smoothing), half)
	outer_pts = resample_polyline(_smoothOpen(_trimArc(*outer), smoothing), half)
	return PointCloud(np.vstack([inner_pts, outer_pts]))

#-------------------------------------------------------------------------------
# function: sweep_point_count(samples, counts)
#
# Description:
# For each candidate T, resamples every (mask, landmarks) sample and compares
# the hard render of the cloud with the mask. Shows how the choice of T trades
# mask coverage against model size.
#
# Returns:
#	list of (T, mean Dice, min Dice)
#
#-------------------------------------------------------------------------------
def sweep_point_count(samples: Sequence, counts: Sequence[int]) -> List[Tuple[int, float, float]]:
	from ssm_segtools.metrics import dice
	from ssm_segtools.raster.faces import build_faces
	from ssm_segtools.raster.hard import rasterize_hard

	rows = []
	contours = [(extract_contour(mask), mask, lmk) for mask, lmk in samples]
	for count in counts:
		faces = build_faces(count)
		scores = []
		for contour, mask, lmk in contours:
			binary = as_binary(mask)
			pc = split_and_resample(contour, lmk, count)
			scores.append(dice(rasterize_hard(pc, faces, binary.width, binary.height), binary))
		rows.append((int(count), float(np.mean(scores)), float(np.min(scores))))
		logger.info('sweep_point_count(): T=%d mean dice %.4f', count, rows[-1][1])
	return rows
