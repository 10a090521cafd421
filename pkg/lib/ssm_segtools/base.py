#!/usr/bin/env python
'''
File			:	base.py
Package			:	ssm_segtools
Brief			:	Base classes used for implementing the artifact model shared by
					point clouds, landmark files, shape models, regressors and
					pixel grids: an object renders itself to a text body and can
					be rebuilt from one.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import logging

import numpy as np

from ssm_segtools.errors import DataError, FormatError

logger = logging.getLogger(__name__)

#-------------------------------------------------------------------------------
# class: ArtifactBase
#
# Description:
# Base artifact class. Every object in the ssm_segtools package that is written
# to disk derives from this class, implementing _constructText() and
# _parseText().
#
# Public properties:
#
#	text - string; the file body, built by _constructText()
#
#	EXTENSION - string; the file extension used by the command line (static)
#
# Public methods:
#
#	save(path)
#		Writes the text body to path.
#
#	load(path) (classmethod)
#		Reads path and rebuilds the object through _parseText().
#
#	from_text(text) (classmethod)
#		Rebuilds the object from an in-memory body.
#
# Protected methods:
#
#	_constructText()
#		Renders the object as a text body. Each artifact exposes different
#		data, so this base interface is left abstract.
#
#	_parseText(text, source) (classmethod)
#		Parses a text body, returning a new instance. Raises FormatError when
#		the body is malformed.
#
#-------------------------------------------------------------------------------
class ArtifactBase(object):

	EXTENSION = ''

	@property
	def text(self) -> str:
		'''Returns the artifact as a text body, constructing it from the
		properties of the instance.'''
		return self._constructText()

	def save(self, path: str) -> None:
		with open(path, 'w') as handle:
			handle.write(self.text)
		logger.debug('%s.save(): wrote %s', type(self).__name__, path)
		return

	@classmethod
	def load(cls, path: str):
		try:
			with open(path, 'r') as handle:
				text = handle.read()
		except OSError as ex:
			raise DataError('cannot read %s (%s)' % (path, ex.strerror), '%s.load' % cls.__name__)
		return cls._parseText(text, path)

	@classmethod
	def from_text(cls, text: str):
		return cls._parseText(text, '<text>')

	def _constructText(self) -> str:
		raise NotImplementedError('%s does not implement _constructText()' % type(self).__name__)

	@classmethod
	def _parseText(cls, text: str, source: str):
		raise NotImplementedError('%s does not implement _parseText()' % cls.__name__)

	pass

#-------------------------------------------------------------------------------
# class: GridBase
# inherits: ssm_segtools.base.ArtifactBase
#
# Description:
# A height x width grid of pixel values with an isotropic pixel spacing. The
# pixel in row r and column c covers [c, c+1] x [r, r+1] in point coordinates,
# so its center sits at (c + 0.5, r + 0.5).
#
# Public properties:
#
#	data - read-only numpy array of shape (height, width)
#
#	width, height - integers
#
#	shape - (height, width)
#
#	spacing_mm - float; millimetres per pixel
#
#-------------------------------------------------------------------------------
class GridBase(ArtifactBase):

	def __init__(self, data, spacing_mm: float = 1.0, dtype=float):
		values = np.array(data, dtype=dtype)
		if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
			raise DataError('grid must be a non-empty 2D array, got shape %s' % (values.shape,), type(self).__name__)
		spacing_mm = float(spacing_mm)
		if not np.isfinite(spacing_mm) or spacing_mm <= 0:
			raise DataError('spacing_mm must be positive, got %r' % spacing_mm, type(self).__name__)
		values.setflags(write=False)
		self.__data = values
		self.__spacing_mm = spacing_mm
		return

	@property
	def data(self) -> np.ndarray:
		return self.__data

	@property
	def width(self) -> int:
		return int(self.__data.shape[1])

	@property
	def height(self) -> int:
		return int(self.__data.shape[0])

	@property
	def shape(self):
		return self.__data.shape

	@property
	def spacing_mm(self) -> float:
		return self.__spacing_mm

	def _checkSameShape(self, other: 'GridBase', source: str) -> None:
		if self.shape != other.shape:
			raise DataError('dimension mismatch: %s vs %s' % (self.shape, other.shape), source)
		return

	pass


def read_grid_header(lines, source: str):
	'''
	Parses the `width height [spacing]` header line shared by grid artifacts.
	'''
	if not lines:
		raise FormatError('empty grid body', source)
	tokens = lines[0].split()
	if len(tokens) not in (2, 3):
		raise FormatError('grid header must be "width height [spacing]"', source)
	try:
		width, height = int(tokens[0]), int(tokens[1])
		spacing = float(tokens[2]) if len(tokens) == 3 else 1.0
	except ValueError:
		raise FormatError('grid header must be "width height [spacing]"', source)
	return width, height, spacing
