#!/usr/bin/env python
'''
File			:	utility.py
Package			:	ssm_segtools
Brief			:	Utility functions used throughout the ssm_segtools package:
					number formatting for the text artifacts, token parsing,
					content hashing and the ordered worker pool.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import hashlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

import numpy as np

from ssm_segtools.errors import ConfigError, FormatError

logger = logging.getLogger(__name__)

# Environment variable holding the default worker count.
THREADS_ENV = 'SSM_SEGTOOLS_THREADS'

# Enough digits to read back the exact double.
NUMBER_FORMAT = '%.17g'

T = TypeVar('T')
R = TypeVar('R')

#-------------------------------------------------------------------------------
# function: format_numbers(values)
#
# Description:
# Renders a flat sequence of numbers as one space separated line. Used when
# writing the .pts, .ssm, .reg and .fmask bodies.
#
#-------------------------------------------------------------------------------
def format_numbers(values: Sequence[float] | np.ndarray) -> str:
	return ' '.join(NUMBER_FORMAT % v for v in np.asarray(values, dtype=float).ravel())

#-------------------------------------------------------------------------------
# function: parse_numbers(line, count=None, source='')
#
# Description:
# Parses a whitespace separated line of numbers, optionally checking how many
# were found. Raises FormatError rather than ValueError so that callers see
# which artifact was broken.
#
#-------------------------------------------------------------------------------
def parse_numbers(line: str, count: int | None = None, source: str = '') -> np.ndarray:
	try:
		values = np.array([float(tok) for tok in line.split()], dtype=float)
	except ValueError as ex:
		raise FormatError('unparseable number in %r (%s)' % (line[:40], ex), source)
	if count is not None and values.size != count:
		raise FormatError('expected %d numbers, found %d' % (count, values.size), source)
	if not np.all(np.isfinite(values)):
		raise FormatError('non-finite number in %r' % line[:40], source)
	return values

def body_lines(text: str) -> List[str]:
	'''
	Splits an artifact body into its non-empty lines, dropping # comments.
	'''
	lines = []
	for raw in text.splitlines():
		line = raw.split('#', 1)[0].strip()
		if line:
			lines.append(line)
	return lines

def content_hash(path: str) -> str:
	'''
	Returns the sha256 hex digest of a file, used by the run manifests.
	'''
	digest = hashlib.sha256()
	with open(path, 'rb') as handle:
		for chunk in iter(lambda: handle.read(1 << 16), b''):
			digest.update(chunk)
	return digest.hexdigest()

def default_thread_count() -> int:
	'''
	Worker count from the environment, 1 when unset.
	'''
	raw = os.environ.get(THREADS_ENV, '').strip()
	if not raw:
		return 1
	try:
		count = int(raw)
	except ValueError:
		raise ConfigError('%s must be an integer, got %r' % (THREADS_ENV, raw), 'default_thread_count')
	if count < 1:
		raise ConfigError('%s must be >= 1, got %d' % (THREADS_ENV, count), 'default_thread_count')
	return count

#-------------------------------------------------------------------------------
# function: ordered_map(func, items, threads=1)
#
# Description:
# Applies func to every item, possibly on a thread pool, and returns the
# results in input order. Callers reduce the returned list themselves, so the
# outcome never depends on the worker count.
#
#-------------------------------------------------------------------------------
def ordered_map(func: Callable[[T], R], items: Sequence[T], threads: int = 1) -> List[R]:
	if threads <= 1 or len(items) <= 1:
		return [func(item) for item in items]
	with ThreadPoolExecutor(max_workers=threads) as pool:
		return list(pool.map(func, items))

def read_config_file(path: str) -> dict:
	'''
	Reads `key = value` lines (# comments allowed) into a dict of strings.
	Dashes in keys are folded to underscores so flag names can be used.
	'''
	try:
		with open(path, 'r') as handle:
			text = handle.read()
	except OSError as ex:
		raise ConfigError('cannot read config file %s (%s)' % (path, ex.strerror), 'read_config_file')
	values = {}
	for number, line in enumerate(text.splitlines(), start=1):
		line = line.split('#', 1)[0].strip()
		if not line:
			continue
		key, sep, value = line.partition('=')
		if not sep or not key.strip():
			raise ConfigError('%s:%d: expected "key = value"' % (path, number), 'read_config_file')
		values[key.strip().lstrip('-').replace('-', '_')] = value.strip()
	return values
