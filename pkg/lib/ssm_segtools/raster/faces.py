#!/usr/bin/env python
'''
File			:	faces.py
Package			:	ssm_segtools.raster
Brief			:	Triangulation of the two-chain ring into T - 2 faces.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import numpy as np

from ssm_segtools.errors import ConfigError
from ssm_segtools.geometry.pointcloud import MIN_POINTS

#-------------------------------------------------------------------------------
# class: FaceList
#
# Public properties:
#	faces - (T - 2, 3) read-only integer array of vertex indices
#	T - integer; point count of the clouds the faces index into
#
#-------------------------------------------------------------------------------
class FaceList(object):

	def __init__(self, faces, T: int):
		values = np.array(faces, dtype=np.int64).reshape(-1, 3)
		if values.size and (values.min() < 0 or values.max() >= T):
			raise ConfigError('face index out of range [0, %d)' % T, 'FaceList')
		values.setflags(write=False)
		self.__faces = values
		self.__T = int(T)
		return

	def __len__(self):
		return self.__faces.shape[0]

	def __iter__(self):
		return iter(tuple(int(v) for v in row) for row in self.__faces)

	def __repr__(self):
		return 'FaceList(T=%d, faces=%d)' % (self.__T, len(self))

	@property
	def faces(self) -> np.ndarray:
		return self.__faces

	@property
	def T(self) -> int:
		return self.__T

	pass


def build_faces(T: int) -> FaceList:
	'''
	Strip 1 joins inner edge (i, i+1) to outer point T/2+i; strip 2 joins outer
	edge (T/2+i, T/2+i+1) to inner point i+1. Together they tile every quad
	between the chains with T - 2 triangles.
	'''
	if int(T) != T or T < MIN_POINTS or T % 2:
		raise ConfigError('T must be an even integer >= %d, got %r' % (MIN_POINTS, T), 'build_faces')
	T = int(T)
	half = T // 2
	idx = np.arange(half - 1)
	strip1 = np.stack([idx, idx + 1, half + idx], axis=1)
	strip2 = np.stack([half + idx, half + idx + 1, idx + 1], axis=1)
	return FaceList(np.concatenate([strip1, strip2]), T)
