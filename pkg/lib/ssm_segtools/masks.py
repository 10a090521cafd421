#!/usr/bin/env python
'''
File			:	masks.py
Package			:	ssm_segtools
Brief			:	Pixel masks: the binary masks the pipeline is supervised with,
					the soft masks the rasterizer produces, and PGM image I/O.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import logging

import numpy as np
from PIL import Image

from ssm_segtools.base import GridBase, read_grid_header
from ssm_segtools.errors import DataError, FormatError
from ssm_segtools.utility import body_lines, format_numbers, parse_numbers

logger = logging.getLogger(__name__)

#-------------------------------------------------------------------------------
# function: write_pgm(path, values)
#
# Description:
# Writes a 2D array of values in [0, 1] as an 8-bit binary PGM (P5), 255 being
# full intensity. Values are rounded to the nearest level.
#
#-------------------------------------------------------------------------------
def write_pgm(path: str, values) -> None:
	arr = np.clip(np.asarray(values, dtype=float), 0.0, 1.0)
	levels = np.rint(arr * 255.0).astype(np.uint8)
	Image.fromarray(levels).save(path, format='PPM')
	return

def read_pgm(path: str) -> np.ndarray:
	'''
	Reads a PGM (or any grayscale image Pillow understands) as floats in [0, 1].
	'''
	try:
		with Image.open(path) as img:
			levels = np.asarray(img.convert('L'), dtype=float)
	except (OSError, ValueError) as ex:
		raise FormatError('cannot read image (%s)' % ex, path)
	return levels / 255.0

#-------------------------------------------------------------------------------
# class: BinaryMask
# inherits: ssm_segtools.base.GridBase
#
# Public properties:
#	data - (height, width) uint8 array of 0/1 values
#	foreground_count - integer; number of foreground pixels
#
# Public methods:
#	bbox() - (x0, y0, x1, y1) pixel-edge bounds of the foreground
#	save(path) / load(path, spacing_mm) - PGM P5, 255 = foreground
#
#-------------------------------------------------------------------------------
class BinaryMask(GridBase):

	EXTENSION = '.mask.pgm'

	def __init__(self, data, spacing_mm: float = 1.0):
		values = np.asarray(data)
		if values.dtype == bool:
			values = values.astype(np.uint8)
		elif values.size and not np.all((values == 0) | (values == 1)):
			raise DataError('binary mask values must be 0 or 1', 'BinaryMask')
		GridBase.__init__(self, values, spacing_mm, dtype=np.uint8)
		return

	def __repr__(self):
		return 'BinaryMask(%dx%d, fg=%d)' % (self.width, self.height, self.foreground_count)

	@property
	def foreground_count(self) -> int:
		return int(self.data.sum())

	def is_empty(self) -> bool:
		return self.foreground_count == 0

	def bbox(self):
		rows = np.flatnonzero(self.data.any(axis=1))
		cols = np.flatnonzero(self.data.any(axis=0))
		if rows.size == 0:
			raise DataError('empty mask has no bounding box', 'BinaryMask.bbox')
		return float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1)

	def save(self, path: str) -> None:
		write_pgm(path, self.data)
		return

	@classmethod
	def load(cls, path: str, spacing_mm: float = 1.0) -> 'BinaryMask':
		return cls(read_pgm(path) >= 0.5, spacing_mm)

	pass

#-------------------------------------------------------------------------------
# class: RasterMask
# inherits: ssm_segtools.base.GridBase
#
# Coverage values in [0, 1] as produced by the rasterizers. Near-binary after
# rendering: only pixels within a few temperatures of a face edge are mixed.
#
# Public methods:
#	threshold(level=0.5) - BinaryMask of pixels >= level
#	save(path) - .fmask text body (exact values)
#	save_pgm(path) - rounded 8-bit PGM
#
#-------------------------------------------------------------------------------
class RasterMask(GridBase):

	EXTENSION = '.fmask'

	def __init__(self, data, spacing_mm: float = 1.0):
		values = np.asarray(data, dtype=float)
		if values.size and (not np.all(np.isfinite(values)) or values.min() < -1e-12 or values.max() > 1 + 1e-12):
			raise DataError('raster mask values must lie in [0, 1]', 'RasterMask')
		GridBase.__init__(self, np.clip(values, 0.0, 1.0), spacing_mm)
		return

	def __repr__(self):
		return 'RasterMask(%dx%d)' % (self.width, self.height)

	def threshold(self, level: float = 0.5) -> BinaryMask:
		return BinaryMask(self.data >= level, self.spacing_mm)

	def save_pgm(self, path: str) -> None:
		write_pgm(path, self.data)
		return

	def _constructText(self) -> str:
		lines = ['%d %d %r' % (self.width, self.height, self.spacing_mm)]
		lines.extend(format_numbers(row) for row in self.data)
		return '\n'.join(lines) + '\n'

	@classmethod
	def _parseText(cls, text: str, source: str) -> 'RasterMask':
		lines = body_lines(text)
		width, height, spacing = read_grid_header(lines, source)
		if len(lines) - 1 != height:
			raise FormatError('expected %d rows, found %d' % (height, len(lines) - 1), source)
		rows = [parse_numbers(line, width, source) for line in lines[1:]]
		return cls(np.array(rows), spacing)

	pass


def as_binary(mask, level: float = 0.5) -> BinaryMask:
	'''
	BinaryMask view of a BinaryMask, a RasterMask (thresholded at level) or a
	plain 2D array.
	'''
	if isinstance(mask, BinaryMask):
		return mask
	if isinstance(mask, RasterMask):
		return mask.threshold(level)
	values = np.asarray(mask)
	if values.dtype == bool:
		return BinaryMask(values)
	return BinaryMask(np.asarray(values, dtype=float) >= level)
