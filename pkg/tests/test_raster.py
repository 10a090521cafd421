'''
Triangulation, the hard oracle and the soft rasterizer with its gradients.
'''

import numpy as np
import pytest

from ssm_segtools.errors import ConfigError, DataError
from ssm_segtools.geometry import PointCloud
from ssm_segtools.losses import mask_loss
from ssm_segtools.metrics import dice
from ssm_segtools.raster import (EVAL_TAU, RasterConfig, SoftRasterizer, build_faces,
	rasterize_hard, rasterize_soft)
from ssm_segtools.synthgen import GenConfig, generate


def _rectangleRing():
	inner = [(2.0, 2.0), (5.0, 2.0), (8.0, 2.0)]
	outer = [(2.0, 6.0), (5.0, 6.0), (8.0, 6.0)]
	return PointCloud(inner + outer)

def _singleTriangle():
	# only face (0, 1, 3) has area; the other three collapse onto lines
	return PointCloud([(0.0, 0.0), (4.0, 0.0), (4.0, 0.0), (0.0, 4.0), (2.0, 2.0), (3.0, 1.0)])

def test_faces_for_eight_points():
	faces = build_faces(8)
	assert len(faces) == 6
	assert faces.faces.tolist() == [
		[0, 1, 4], [1, 2, 5], [2, 3, 6],
		[4, 5, 1], [5, 6, 2], [6, 7, 3],
	]

@pytest.mark.parametrize('T', [6, 8, 20, 88])
def test_faces_pattern(T):
	faces = build_faces(T)
	half = T // 2
	assert len(faces) == T - 2
	seen = set()
	for i, j, k in faces:
		seen.add((i, j, k))
		if i < half:
			assert (j, k) == (i + 1, half + i)
		else:
			assert (j, k) == (i + 1, i - half + 1)
	assert len(seen) == T - 2

@pytest.mark.parametrize('T', [4, 7, 0])
def test_faces_reject_bad_counts(T):
	with pytest.raises(ConfigError):
		build_faces(T)

def test_hard_render_of_rectangle():
	mask = rasterize_hard(_rectangleRing(), build_faces(6), 10, 8)
	expected = np.zeros((8, 10))
	expected[2:6, 2:8] = 1.0
	assert np.array_equal(mask.data, expected)

def test_hard_render_is_order_independent(ring):
	faces = build_faces(ring.T)
	a = rasterize_hard(ring, faces, 32, 32)
	b = rasterize_hard(ring.reversed_chains(), faces, 32, 32)
	assert np.array_equal(a.data, b.data)

def test_hard_render_clips_to_grid(ring):
	moved = PointCloud(ring.points + [20.0, 0.0])
	mask = rasterize_hard(moved, build_faces(ring.T), 32, 32)
	assert mask.data.shape == (32, 32)
	assert 0 < mask.data.sum() < rasterize_hard(ring, build_faces(ring.T), 32, 32).data.sum()

def test_render_rejects_mismatched_faces(ring):
	with pytest.raises(DataError):
		rasterize_hard(ring, build_faces(8), 32, 32)

def test_soft_render_values_and_interior(ring):
	mask = rasterize_soft(ring, build_faces(ring.T), 32, 32, tau=0.5)
	assert mask.data.min() >= 0.0 and mask.data.max() <= 1.0
	# well inside the wall and far outside the ring
	assert mask.data[20, 16] > 0.5
	assert mask.data[0, 0] < 1e-3

def test_soft_render_matches_oracle_at_small_tau(faces):
	for sample in generate(GenConfig(seed=11), 100, threads=4):
		soft = rasterize_soft(sample.points, faces, sample.mask.width, sample.mask.height, tau=EVAL_TAU)
		assert dice(soft.threshold(), sample.mask) >= 0.99

def test_tau_must_be_positive(ring):
	with pytest.raises(ConfigError):
		rasterize_soft(ring, build_faces(ring.T), 32, 32, tau=0.0)
	with pytest.raises(ConfigError):
		RasterConfig(32, 32, tau=-1.0)

def test_backward_matches_finite_differences(ring):
	faces = build_faces(ring.T)
	target = rasterize_hard(PointCloud(ring.points + [0.7, -0.4]), faces, 32, 32).threshold()

	def loss(pts):
		return mask_loss(rasterize_soft(pts, faces, 32, 32, tau=0.5), target).value

	render = SoftRasterizer(ring, faces, 32, 32, tau=0.5)
	analytic = render.backward(mask_loss(render.mask, target).grad)
	h = 1e-3
	numeric = np.zeros_like(analytic)
	for idx in np.ndindex(*ring.points.shape):
		plus = ring.points.copy()
		minus = ring.points.copy()
		plus[idx] += h
		minus[idx] -= h
		numeric[idx] = (loss(plus) - loss(minus)) / (2 * h)
	significant = np.abs(numeric) > 1e-6
	rel = np.abs(analytic - numeric)[significant] / np.abs(numeric)[significant]
	assert significant.sum() > 0
	assert np.mean(rel < 1e-2) >= 0.95

def test_backward_checks_upstream_shape(ring):
	render = SoftRasterizer(ring, build_faces(ring.T), 32, 32)
	with pytest.raises(DataError):
		render.backward(np.zeros((31, 32)))

def test_hard_render_of_single_triangle():
	mask = rasterize_hard(_singleTriangle(), build_faces(6), 6, 6)
	xs, ys = np.meshgrid(np.arange(6) + 0.5, np.arange(6) + 0.5)
	# centers on the hypotenuse belong to the face by the ownership rule
	expected = (xs + ys <= 4.0).astype(float)
	assert np.array_equal(mask.data, expected)
	assert mask.data.sum() == 10

def test_soft_render_on_an_edge_and_deep_inside():
	mask = rasterize_soft(_singleTriangle(), build_faces(6), 6, 6, tau=0.05)
	# (1.5, 2.5) lies on the hypotenuse; (0.5, 0.5) is 0.5 px deep
	assert mask.data[2, 1] == pytest.approx(0.5, abs=1e-6)
	assert mask.data[0, 0] > 0.999
	assert mask.data[5, 5] == 0.0

def test_soft_render_is_continuous_at_the_cutoff():
	# pixel (2, 2) sits 0.5 px inside the first face of the rectangle ring
	depth = 0.5
	below = rasterize_soft(_rectangleRing(), build_faces(6), 10, 8, tau=depth / (6.0 - 1e-4)).data[2, 2]
	above = rasterize_soft(_rectangleRing(), build_faces(6), 10, 8, tau=depth / (6.0 + 1e-4)).data[2, 2]
	assert below == pytest.approx(1.0 / (1.0 + np.exp(-6.0)), abs=1e-4)
	assert abs(above - below) < 1e-5

def test_zero_upstream_gives_zero_gradient(ring):
	render = SoftRasterizer(ring, build_faces(ring.T), 32, 32, tau=0.5)
	assert np.array_equal(render.backward(np.zeros((32, 32))), np.zeros((ring.T, 2)))

def test_outward_vertex_motion_grows_coverage():
	pc = _singleTriangle()
	render = SoftRasterizer(pc, build_faces(6), 6, 6, tau=0.5)
	grad = render.backward(np.ones((6, 6)))
	outward = np.array([-1.0, -1.0]) / np.sqrt(2.0)
	assert grad[0] @ outward > 0
	h = 1e-3
	moved = pc.points.copy()
	moved[0] += h * outward
	grown = rasterize_soft(moved, build_faces(6), 6, 6, tau=0.5).data.sum()
	assert grown >= render.mask.data.sum()

def test_no_gradient_beyond_the_cutoff():
	tau = 0.05
	upstream = np.zeros((6, 6))
	# 0.5 px deep inside and far outside, both beyond 6 tau of any edge
	upstream[0, 0] = 1.0
	upstream[5, 5] = 1.0
	render = SoftRasterizer(_singleTriangle(), build_faces(6), 6, 6, tau=tau)
	assert np.array_equal(render.backward(upstream), np.zeros((6, 2)))
	upstream[2, 1] = 1.0
	assert np.any(render.backward(upstream) != 0.0)

def test_integer_translation_shifts_the_raster(ring):
	faces = build_faces(ring.T)
	moved = PointCloud(ring.points + [3.0, 2.0])
	hard = rasterize_hard(ring, faces, 32, 32).data
	hard_moved = rasterize_hard(moved, faces, 32, 32).data
	assert np.array_equal(hard_moved[2:, 3:], hard[:-2, :-3])
	soft = rasterize_soft(ring, faces, 32, 32, tau=0.5).data
	soft_moved = rasterize_soft(moved, faces, 32, 32, tau=0.5).data
	assert np.allclose(soft_moved[2:, 3:], soft[:-2, :-3], atol=1e-9)

def test_soft_render_sharpens_as_tau_falls(samples, faces):
	means = []
	for tau in (0.5, 0.2, EVAL_TAU):
		scores = [dice(rasterize_soft(s.points, faces, 64, 64, tau=tau).threshold(), s.mask) for s in samples[:6]]
		means.append(np.mean(scores))
	assert means[0] <= means[1] <= means[2]
	assert means[2] >= 0.99
