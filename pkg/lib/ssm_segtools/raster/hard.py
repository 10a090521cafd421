#!/usr/bin/env python
'''
File			:	hard.py
Package			:	ssm_segtools.raster
Brief			:	Exact polygon rasterizer: a pixel is foreground when its center
					lies inside any face. Serves as the oracle for the soft
					rasterizer and renders every evaluation mask.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import numpy as np

from ssm_segtools.errors import DataError
from ssm_segtools.geometry.pointcloud import as_points
from ssm_segtools.masks import RasterMask
from ssm_segtools.raster.faces import FaceList

# Twice-area below this marks a face as degenerate.
AREA_EPS = 1e-12


def oriented_face(pts: np.ndarray, face) -> tuple:
	'''
	Vertex indices of a face reordered to positive signed area, and the twice
	area itself. Degenerate faces return None.
	'''
	i, j, k = (int(v) for v in face)
	a, b, c = pts[i], pts[j], pts[k]
	area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
	if abs(area2) <= AREA_EPS:
		return None
	if area2 < 0:
		return (i, k, j), -area2
	return (i, j, k), area2

def pixel_window(corners: np.ndarray, margin: float, width: int, height: int):
	'''
	Column and row ranges whose pixel centers fall within margin of the
	bounding box of corners; None when the window misses the grid.
	'''
	lo = corners.min(axis=0) - margin
	hi = corners.max(axis=0) + margin
	c0 = max(0, int(np.ceil(lo[0] - 0.5)))
	c1 = min(width - 1, int(np.floor(hi[0] - 0.5)))
	r0 = max(0, int(np.ceil(lo[1] - 0.5)))
	r1 = min(height - 1, int(np.floor(hi[1] - 0.5)))
	if c0 > c1 or r0 > r1:
		return None
	return c0, c1, r0, r1

def _onEdgeIncluded(dx: float, dy: float) -> bool:
	# Exactly one of the two triangles sharing an edge owns its pixel centers.
	return dy > 0 or (dy == 0 and dx < 0)

def check_inputs(pc, faces: FaceList, source: str) -> np.ndarray:
	pts = as_points(pc)
	if pts.shape[0] != faces.T:
		raise DataError('point count %d does not match faces built for T=%d' % (pts.shape[0], faces.T), source)
	if not np.all(np.isfinite(pts)):
		raise DataError('invalid point cloud', source)
	return pts

#-------------------------------------------------------------------------------
# function: rasterize_hard(pc, faces, width, height, spacing=1.0)
#
# Description:
# Edge-function test at every pixel center of each face's bounding box. Centers
# exactly on an edge follow a fixed ownership rule so shared edges are neither
# dropped nor claimed twice. Zero-area faces cover nothing.
#
# Returns:
#	RasterMask of 0/1 values
#
#-------------------------------------------------------------------------------
def rasterize_hard(pc, faces: FaceList, width: int, height: int, spacing: float = 1.0) -> RasterMask:
	pts = check_inputs(pc, faces, 'rasterize_hard')
	covered = np.zeros((int(height), int(width)), dtype=bool)
	for face in faces.faces:
		oriented = oriented_face(pts, face)
		if oriented is None:
			continue
		idx, _ = oriented
		corners = pts[list(idx)]
		window = pixel_window(corners, 0.0, covered.shape[1], covered.shape[0])
		if window is None:
			continue
		c0, c1, r0, r1 = window
		px, py = np.meshgrid(np.arange(c0, c1 + 1) + 0.5, np.arange(r0, r1 + 1) + 0.5)
		inside = np.ones(px.shape, dtype=bool)
		for k in range(3):
			a = corners[k]
			b = corners[(k + 1) % 3]
			dx, dy = b[0] - a[0], b[1] - a[1]
			edge = dx * (py - a[1]) - dy * (px - a[0])
			if _onEdgeIncluded(dx, dy):
				inside &= edge >= 0
			else:
				inside &= edge > 0
		covered[r0:r1 + 1, c0:c1 + 1] |= inside
	return RasterMask(covered.astype(float), spacing)
