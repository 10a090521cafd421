#!/usr/bin/env python
'''
File			:	errors.py
Package			:	ssm_segtools
Brief			:	Exposes the error classes raised by the shape model pipeline.
					Each error knows the exit code the command line reports for it.
--------------------------------------------------------------------------------
'''

#-------------------------------------------------------------------------------
# class: SegToolsError
# inherits: Exception
#
# Description:
#	Embodies an error raised somewhere in the pipeline, exposing to the user
#	the description, error number, and source function where the error took
#	place. The number doubles as the process exit code of the command line.
#
# Public properties:
#
#	description - string; what went wrong, e.g. "invalid point cloud"
#
#	number - integer; the exit code reported by the command line
#
#	source - string; the function that raised the error
#
#-------------------------------------------------------------------------------
class SegToolsError(Exception):
	'''
	Base class for every error raised by ssm_segtools, allowing access to the
	error number, source, and description.
	'''

	NUMBER = 1

	def __init__(self, description, source=''):
		Exception.__init__(self, description)
		self.__description = str(description)
		self.__source = str(source)
		return

	def __str__(self):
		if self.__source:
			return '%s(): %s' % (self.__source, self.__description)
		return self.__description

	def report(self):
		'''
		Nice multi-line representation of the error, useful for displaying
		to end user or logging.
		'''
		return '''%s:
	Number		: %d
	Source		: %s
	Description	: %s
''' % (type(self).__name__, self.number, self.__source or '-', self.__description)

	#
	# Properties
	#

	@property
	def description(self):
		return self.__description

	@property
	def number(self):
		return self.NUMBER

	@property
	def source(self):
		return self.__source

	pass


class ConfigError(SegToolsError):
	'''Usage or configuration problem: bad flag, out-of-range hyper-parameter.'''
	NUMBER = 2
	pass


class DataError(SegToolsError):
	'''The inputs violate a precondition: invalid clouds, masks, datasets.'''
	NUMBER = 3
	pass


class FormatError(DataError):
	'''A file on disk could not be parsed.'''
	pass


class NumericalError(SegToolsError):
	'''Degenerate geometry or a non-finite quantity during optimization.'''
	NUMBER = 4
	pass
