'''
Error types, artifact plumbing and the shared helpers.
'''

import os

import numpy as np
import pytest

from ssm_segtools.errors import ConfigError, DataError, FormatError, NumericalError, SegToolsError
from ssm_segtools.geometry import PointCloud
from ssm_segtools.manifest import RunManifest, manifest_path
from ssm_segtools.masks import BinaryMask, RasterMask, read_pgm, write_pgm
from ssm_segtools.utility import (THREADS_ENV, body_lines, content_hash, default_thread_count,
	format_numbers, ordered_map, parse_numbers, read_config_file)


def test_error_numbers():
	assert ConfigError('x').number == 2
	assert DataError('x').number == 3
	assert FormatError('x').number == 3
	assert NumericalError('x').number == 4
	assert isinstance(FormatError('x'), DataError)

def test_error_renders_source_and_description():
	err = DataError('invalid point cloud', 'apply_affine')
	assert str(err) == 'apply_affine(): invalid point cloud'
	assert err.description == 'invalid point cloud'
	assert 'Number\t\t: 3' in err.report()
	assert isinstance(err, SegToolsError)

def test_numbers_round_trip_exactly():
	values = np.array([0.1, 1.0 / 3.0, -2.5e-17, 12345.678901234567])
	assert np.array_equal(parse_numbers(format_numbers(values), 4), values)

def test_parse_numbers_rejects_bad_input():
	with pytest.raises(FormatError):
		parse_numbers('1 2 x')
	with pytest.raises(FormatError):
		parse_numbers('1 2', 3)
	with pytest.raises(FormatError):
		parse_numbers('1 nan')

def test_body_lines_drops_comments_and_blanks():
	assert body_lines('# head\n1 2\n\n3 4 # tail\n') == ['1 2', '3 4']

def test_ordered_map_keeps_order_across_thread_counts():
	items = list(range(20))
	assert ordered_map(lambda v: v * v, items, 1) == ordered_map(lambda v: v * v, items, 4)

def test_default_thread_count(monkeypatch):
	monkeypatch.delenv(THREADS_ENV, raising=False)
	assert default_thread_count() == 1
	monkeypatch.setenv(THREADS_ENV, '3')
	assert default_thread_count() == 3
	monkeypatch.setenv(THREADS_ENV, 'many')
	with pytest.raises(ConfigError):
		default_thread_count()

def test_read_config_file(tmp_path):
	path = tmp_path / 'run.cfg'
	path.write_text('# defaults\nbatch-size = 8\nlr=0.01  # faster\n')
	assert read_config_file(str(path)) == {'batch_size': '8', 'lr': '0.01'}
	path.write_text('no separator here\n')
	with pytest.raises(ConfigError):
		read_config_file(str(path))
	with pytest.raises(ConfigError):
		read_config_file(str(tmp_path / 'missing.cfg'))

def test_point_cloud_file_round_trip(tmp_path, ring):
	path = str(tmp_path / 'ring.pts')
	ring.save(path)
	loaded = PointCloud.load(path)
	assert np.array_equal(loaded.points, ring.points)
	assert loaded.inner_count == ring.T // 2

def test_point_cloud_load_errors(tmp_path):
	path = tmp_path / 'bad.pts'
	path.write_text('6 3\n0 0\n1 1\n')
	with pytest.raises(FormatError):
		PointCloud.load(str(path))
	with pytest.raises(DataError):
		PointCloud.load(str(tmp_path / 'absent.pts'))

def test_pgm_round_trip(tmp_path):
	values = np.array([[0.0, 1.0, 0.5], [1.0, 0.0, 0.25]])
	path = str(tmp_path / 'img.pgm')
	write_pgm(path, values)
	back = read_pgm(path)
	assert back.shape == (2, 3)
	assert np.allclose(back, np.rint(values * 255) / 255)

def test_binary_mask_pgm_and_bbox(tmp_path):
	data = np.zeros((5, 6), dtype=bool)
	data[1:3, 2:5] = True
	mask = BinaryMask(data, 0.5)
	path = str(tmp_path / 'm.mask.pgm')
	mask.save(path)
	loaded = BinaryMask.load(path, 0.5)
	assert np.array_equal(loaded.data, mask.data)
	assert loaded.spacing_mm == 0.5
	assert mask.bbox() == (2, 1, 5, 3)
	assert mask.foreground_count == 6
	with pytest.raises(DataError):
		BinaryMask(np.full((2, 2), 0.5))

def test_raster_mask_text_round_trip(tmp_path):
	mask = RasterMask(np.array([[0.1, 0.9], [0.5, 0.0]]), 2.0)
	path = str(tmp_path / 'soft.fmask')
	mask.save(path)
	loaded = RasterMask.load(path)
	assert np.array_equal(loaded.data, mask.data)
	assert loaded.spacing_mm == 2.0
	assert np.array_equal(mask.threshold().data, [[0, 1], [1, 0]])

def test_run_manifest_records_hashes(tmp_path):
	out = tmp_path / 'out'
	out.mkdir()
	artifact = out / 'a.txt'
	artifact.write_text('payload')
	manifest = RunManifest(['ssm-segtools', 'synth'], {'n': 1}, 7, '0.1')
	manifest.add_outputs([str(artifact), str(out / 'not-there')])
	manifest.finish()
	path = manifest_path(str(out))
	assert path == os.path.join(str(out), 'run_manifest.json')
	manifest.save(path)
	loaded = RunManifest.load(path)
	assert loaded.outputs == {str(artifact): content_hash(str(artifact))}
	assert loaded.seed == 7
	assert loaded.config == {'n': 1}
	assert manifest_path(str(artifact)) == str(artifact) + '.manifest.json'
