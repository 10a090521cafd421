#!/usr/bin/env python
'''
File			:	dataset.py
Package			:	ssm_segtools
Brief			:	Dataset directories: NNNN.pgm images, NNNN.mask.pgm masks,
					NNNN.pts clouds and NNNN.lmk landmarks listed by a
					manifest.tsv.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import glob
import logging
import os
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from ssm_segtools.alignment.contour import LandmarkTriple, extract_contour, split_and_resample
from ssm_segtools.errors import DataError, FormatError
from ssm_segtools.geometry.pointcloud import PointCloud
from ssm_segtools.masks import BinaryMask, read_pgm, write_pgm
from ssm_segtools.utility import NUMBER_FORMAT

logger = logging.getLogger(__name__)

MANIFEST_TSV = 'manifest.tsv'
MANIFEST_COLUMNS = ('id', 'seed', 'theta_gt', 'beta_gt', 'spacing')


def _numbers(values) -> str:
	if values is None:
		return '-'
	return ','.join(NUMBER_FORMAT % v for v in np.asarray(values, dtype=float).ravel())

def _parseNumbers(field: str, source: str):
	if field == '-':
		return None
	try:
		return np.array([float(v) for v in field.split(',')])
	except ValueError:
		raise FormatError('bad number list %r' % field, source)

#-------------------------------------------------------------------------------
# class: DatasetEntry
#
# One sample of a dataset directory. points and landmarks are None when the
# files are absent; theta_gt and beta_gt come from the manifest when present.
#
#-------------------------------------------------------------------------------
@dataclass
class DatasetEntry:
	sample_id: str
	image: np.ndarray | None
	mask: BinaryMask | None
	points: PointCloud | None = None
	landmarks: LandmarkTriple | None = None
	theta_gt: np.ndarray | None = None
	beta_gt: np.ndarray | None = None
	spacing_mm: float = 1.0

	def paths(self, root: str) -> List[str]:
		stem = os.path.join(root, self.sample_id)
		return [stem + ext for ext in ('.pgm', BinaryMask.EXTENSION, PointCloud.EXTENSION, LandmarkTriple.EXTENSION)]


def write_dataset(samples: Sequence, root: str) -> List[str]:
	'''
	Writes synthetic samples and their manifest.tsv; returns every written
	path.
	'''
	os.makedirs(root, exist_ok=True)
	written = []
	rows = ['\t'.join(MANIFEST_COLUMNS)]
	for s in samples:
		stem = os.path.join(root, s.sample_id)
		write_pgm(stem + '.pgm', s.image)
		s.mask.save(stem + BinaryMask.EXTENSION)
		s.points.save(stem + PointCloud.EXTENSION)
		s.landmarks.save(stem + LandmarkTriple.EXTENSION)
		written.extend([stem + '.pgm', stem + BinaryMask.EXTENSION, stem + PointCloud.EXTENSION, stem + LandmarkTriple.EXTENSION])
		beta = None if s.beta_gt is None else s.beta_gt.beta
		rows.append('\t'.join([s.sample_id, '%d,%d' % tuple(s.seed), _numbers(s.theta_gt.theta), _numbers(beta), repr(s.mask.spacing_mm)]))
	manifest = os.path.join(root, MANIFEST_TSV)
	with open(manifest, 'w') as handle:
		handle.write('\n'.join(rows) + '\n')
	written.append(manifest)
	logger.info('write_dataset(): %d samples to %s', len(samples), root)
	return written

def _manifestRows(root: str):
	path = os.path.join(root, MANIFEST_TSV)
	if not os.path.isfile(path):
		return None
	with open(path, 'r') as handle:
		lines = [line.rstrip('\n') for line in handle if line.strip()]
	if not lines or tuple(lines[0].split('\t')) != MANIFEST_COLUMNS:
		raise FormatError('manifest header must be %s' % '\t'.join(MANIFEST_COLUMNS), path)
	rows = []
	for line in lines[1:]:
		fields = line.split('\t')
		if len(fields) != len(MANIFEST_COLUMNS):
			raise FormatError('manifest row has %d fields' % len(fields), path)
		rows.append(dict(zip(MANIFEST_COLUMNS, fields)))
	return rows

def _optional(path: str, loader):
	return loader(path) if os.path.isfile(path) else None

def read_dataset(root: str, spacing_mm: float | None = None, require_images: bool = False) -> List[DatasetEntry]:
	'''
	Loads every sample of a dataset directory. Ids come from manifest.tsv
	when present, otherwise from the *.mask.pgm (or *.pgm) files.
	'''
	if not os.path.isdir(root):
		raise DataError('no such dataset directory', root)
	rows = _manifestRows(root)
	if rows is None:
		masks = sorted(glob.glob(os.path.join(root, '*' + BinaryMask.EXTENSION)))
		if masks:
			ids = [os.path.basename(p)[:-len(BinaryMask.EXTENSION)] for p in masks]
		else:
			ids = [os.path.basename(p)[:-4] for p in sorted(glob.glob(os.path.join(root, '*.pgm')))]
		rows = [{'id': i, 'seed': '-', 'theta_gt': '-', 'beta_gt': '-', 'spacing': '-'} for i in ids]
	if not rows:
		raise DataError('dataset directory is empty', root)
	entries = []
	for row in rows:
		stem = os.path.join(root, row['id'])
		spacing = spacing_mm if spacing_mm is not None else (float(row['spacing']) if row['spacing'] != '-' else 1.0)
		image = _optional(stem + '.pgm', read_pgm)
		if require_images and image is None:
			raise DataError('missing image for sample %s' % row['id'], root)
		entries.append(DatasetEntry(
			row['id'],
			image,
			_optional(stem + BinaryMask.EXTENSION, lambda p: BinaryMask.load(p, spacing)),
			_optional(stem + PointCloud.EXTENSION, PointCloud.load),
			_optional(stem + LandmarkTriple.EXTENSION, LandmarkTriple.load),
			_parseNumbers(row['theta_gt'], root),
			_parseNumbers(row['beta_gt'], root),
			spacing,
		))
	logger.debug('read_dataset(): %d entries from %s', len(entries), root)
	return entries

def entry_points(entry: DatasetEntry, T: int) -> PointCloud:
	'''
	The sample's cloud: its .pts file when it has T points, otherwise the
	mask contour resampled at its landmarks.
	'''
	if entry.points is not None and entry.points.T == T:
		return entry.points
	if entry.mask is None or entry.landmarks is None:
		raise DataError('sample %s has neither a %d-point cloud nor mask and landmarks' % (entry.sample_id, T), 'entry_points')
	return split_and_resample(extract_contour(entry.mask), entry.landmarks, T)

def write_prediction(root: str, sample_id: str, points: PointCloud, mask: BinaryMask) -> List[str]:
	stem = os.path.join(root, sample_id)
	points.save(stem + PointCloud.EXTENSION)
	mask.save(stem + BinaryMask.EXTENSION)
	return [stem + PointCloud.EXTENSION, stem + BinaryMask.EXTENSION]
