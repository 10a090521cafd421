#!/usr/bin/env python
'''
File			:	pointcloud.py
Package			:	ssm_segtools.geometry
Brief			:	Provides the ordered two-chain point cloud that every shape in
					the package is expressed as.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import numpy as np

from ssm_segtools.base import ArtifactBase
from ssm_segtools.errors import DataError, FormatError
from ssm_segtools.utility import NUMBER_FORMAT, body_lines, parse_numbers

MIN_POINTS = 6

#-------------------------------------------------------------------------------
# class: PointCloud
# inherits: ssm_segtools.base.ArtifactBase
#
# Public properties:
#	points - read-only (T, 2) float array of (x, y) pixel coordinates
#	T - integer; number of points, even and >= 6
#	inner_count - integer; T / 2
#	inner - (T/2, 2) view; the inner (concave side) chain, indices 0..T/2-1
#	outer - (T/2, 2) view; the outer chain, indices T/2..T-1
#
#	Inner point i and outer point i + T/2 sit at the same arc parameter of
#	their chains, across the wall from each other. Index 0 is the inner point
#	at the basal_a end.
#
# Public methods:
#	as_vector()
#		Interleaved shape vector [x0, y0, x1, y1, ...] of length 2T.
#
#	from_vector(vec) (classmethod)
#		Inverse of as_vector().
#
#	reversed_chains()
#		The same outline with each chain traversed from the other basal end.
#
#-------------------------------------------------------------------------------
class PointCloud(ArtifactBase):

	EXTENSION = '.pts'

	def __init__(self, points, inner_count: int | None = None):
		values = np.array(points, dtype=float)
		if values.ndim != 2 or values.shape[1] != 2:
			raise DataError('invalid point cloud: expected (T, 2) coordinates, got shape %s' % (values.shape,), 'PointCloud')
		count = values.shape[0]
		if count < MIN_POINTS or count % 2:
			raise DataError('invalid point cloud: T must be even and >= %d, got %d' % (MIN_POINTS, count), 'PointCloud')
		if inner_count is not None and int(inner_count) != count // 2:
			raise DataError('invalid point cloud: inner_count %d != T/2' % int(inner_count), 'PointCloud')
		if not np.all(np.isfinite(values)):
			raise DataError('invalid point cloud: non-finite coordinate', 'PointCloud')
		values.setflags(write=False)
		self.__points = values
		return

	def __len__(self):
		return self.__points.shape[0]

	def __repr__(self):
		return 'PointCloud(T=%d)' % self.T

	@property
	def points(self) -> np.ndarray:
		return self.__points

	@property
	def T(self) -> int:
		return int(self.__points.shape[0])

	@property
	def inner_count(self) -> int:
		return self.T // 2

	@property
	def inner(self) -> np.ndarray:
		return self.__points[:self.inner_count]

	@property
	def outer(self) -> np.ndarray:
		return self.__points[self.inner_count:]

	def as_vector(self) -> np.ndarray:
		return self.__points.reshape(-1).copy()

	@classmethod
	def from_vector(cls, vec) -> 'PointCloud':
		return cls(np.asarray(vec, dtype=float).reshape(-1, 2))

	def centroid(self) -> np.ndarray:
		return self.__points.mean(axis=0)

	def rms_radius(self) -> float:
		centered = self.__points - self.centroid()
		return float(np.sqrt(np.mean(np.sum(centered * centered, axis=1))))

	def basal_points(self):
		'''
		Midpoints of the two wall ends: (basal_a, basal_b).
		'''
		half = self.inner_count
		pts = self.__points
		return 0.5 * (pts[0] + pts[half]), 0.5 * (pts[half - 1] + pts[-1])

	def reversed_chains(self) -> 'PointCloud':
		return PointCloud(np.concatenate([self.inner[::-1], self.outer[::-1]]))

	#
	# Protected Methods
	#

	def _constructText(self) -> str:
		lines = ['%d %d' % (self.T, self.inner_count)]
		for x, y in self.__points:
			lines.append((NUMBER_FORMAT + ' ' + NUMBER_FORMAT) % (x, y))
		return '\n'.join(lines) + '\n'

	@classmethod
	def _parseText(cls, text: str, source: str) -> 'PointCloud':
		lines = body_lines(text)
		if not lines:
			raise FormatError('empty point cloud file', source)
		header = lines[0].split()
		if len(header) != 2:
			raise FormatError('header must be "T inner_count"', source)
		try:
			count, inner = int(header[0]), int(header[1])
		except ValueError:
			raise FormatError('header must be "T inner_count"', source)
		if len(lines) - 1 != count:
			raise FormatError('expected %d point lines, found %d' % (count, len(lines) - 1), source)
		pts = np.array([parse_numbers(line, 2, source) for line in lines[1:]])
		return cls(pts, inner)

	pass


def as_points(obj) -> np.ndarray:
	'''
	Coordinates of a PointCloud or of any (N, 2) array-like, as a float array.
	'''
	if isinstance(obj, PointCloud):
		return obj.points
	values = np.asarray(obj, dtype=float)
	if values.ndim != 2 or values.shape[1] != 2:
		raise DataError('expected (N, 2) coordinates, got shape %s' % (values.shape,), 'as_points')
	return values
