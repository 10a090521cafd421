'''
Contour tracing, landmark split and resampling, GPA and quadruple building.
'''

import math

import numpy as np
import pytest

from conftest import half_annulus_mask
from ssm_segtools.alignment import (LandmarkTriple, build_quadruples, extract_contour, gpa,
	normalize_to_template, resample_polyline, split_and_resample, sweep_point_count)
from ssm_segtools.errors import ConfigError, DataError, FormatError, NumericalError
from ssm_segtools.geometry import SimilarityParams, apply_affine, similarity_to_affine
from ssm_segtools.masks import BinaryMask
from ssm_segtools.synthgen import GenConfig, generate


def _shoelace(pts):
	x, y = pts[:, 0], pts[:, 1]
	return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

def _grid(rows, cols, cells):
	data = np.zeros((rows, cols), dtype=bool)
	for r, c in cells:
		data[r, c] = True
	return BinaryMask(data)

def test_contour_of_single_pixel():
	contour = extract_contour(_grid(3, 3, [(1, 1)]))
	assert contour.shape == (4, 2)
	assert _shoelace(contour) == pytest.approx(1.0)

def test_contour_of_rectangle():
	data = np.zeros((8, 14), dtype=bool)
	data[2:6, 2:12] = True
	contour = extract_contour(BinaryMask(data))
	assert contour.shape == (28, 2)
	assert _shoelace(contour) == pytest.approx(40.0)

def test_contour_joins_diagonal_neighbours():
	contour = extract_contour(_grid(4, 4, [(1, 1), (2, 2)]))
	assert contour.shape == (8, 2)
	assert _shoelace(contour) == pytest.approx(2.0)

def test_contour_rejects_holes_and_pieces():
	ring = np.ones((5, 5), dtype=bool)
	ring[2, 2] = False
	with pytest.raises(DataError) as info:
		extract_contour(BinaryMask(ring))
	assert info.value.description == 'mask not simply connected'
	with pytest.raises(DataError):
		extract_contour(_grid(5, 5, [(0, 0), (3, 3)]))
	with pytest.raises(DataError):
		extract_contour(BinaryMask(np.zeros((4, 4), dtype=bool)))

def test_resample_polyline_is_uniform():
	line = np.array([[0.0, 0.0], [1.0, 0.0], [4.0, 0.0]])
	assert np.allclose(resample_polyline(line, 5), [[0, 0], [1, 0], [2, 0], [3, 0], [4, 0]])

def test_landmark_file_round_trip(tmp_path):
	lmk = LandmarkTriple((48.0, 70.0), (23.0, 40.0), (73.0, 40.0))
	path = str(tmp_path / 'a.lmk')
	lmk.save(path)
	assert np.array_equal(LandmarkTriple.load(path).points, lmk.points)
	(tmp_path / 'b.lmk').write_text('1 2\n3 4\n')
	with pytest.raises(FormatError):
		LandmarkTriple.load(str(tmp_path / 'b.lmk'))
	with pytest.raises(DataError):
		LandmarkTriple((0, 0), (0, 0), (1, 1))

def test_half_annulus_split():
	mask = half_annulus_mask()
	lmk = LandmarkTriple((48.0, 70.0), (23.0, 40.0), (73.0, 40.0))
	pc = split_and_resample(extract_contour(mask), lmk, 8)
	center = np.array([48.0, 40.0])
	inner_r = np.hypot(*(pc.inner - center).T)
	outer_r = np.hypot(*(pc.outer - center).T)
	assert np.all(np.abs(inner_r - 20.0) < 0.75)
	assert np.all(np.abs(outer_r - 30.0) < 0.75)
	# index 0 sits at the basal_a (left) end, chains run through the bottom
	assert np.allclose(pc.inner[0], [28.0, 40.0], atol=1.0)
	assert np.allclose(pc.inner[-1], [68.0, 40.0], atol=1.0)
	assert np.allclose(pc.outer[0], [18.0, 40.0], atol=1.0)
	phi = np.arctan2(pc.inner[:, 1] - 40.0, pc.inner[:, 0] - 48.0) % (2 * math.pi)
	assert np.allclose(phi[1:3], [2 * math.pi / 3, math.pi / 3], atol=0.1)

def test_chain_ends_lie_on_the_traced_boundary():
	mask = half_annulus_mask()
	lmk = LandmarkTriple((48.0, 70.0), (23.0, 40.0), (73.0, 40.0))
	contour = extract_contour(mask)
	for T in (8, 20, 88):
		pc = split_and_resample(contour, lmk, T)
		ends = np.array([pc.inner[0], pc.inner[-1], pc.outer[0], pc.outer[-1]])
		for end in ends:
			assert np.min(np.hypot(*(contour - end).T)) <= 0.75
		radii = np.hypot(*(ends - [48.0, 40.0]).T)
		assert np.allclose(radii, [20.0, 20.0, 30.0, 30.0], atol=0.5)

def test_swapped_landmarks_reverse_the_chains():
	mask = half_annulus_mask()
	lmk = LandmarkTriple((48.0, 70.0), (23.0, 40.0), (73.0, 40.0))
	contour = extract_contour(mask)
	pc = split_and_resample(contour, lmk, 20)
	swapped = split_and_resample(contour, lmk.swapped(), 20)
	assert np.allclose(swapped.points, pc.reversed_chains().points, atol=1e-6)

def test_split_errors():
	contour = extract_contour(half_annulus_mask())
	lmk = LandmarkTriple((48.0, 70.0), (23.0, 40.0), (73.0, 40.0))
	with pytest.raises(ConfigError):
		split_and_resample(contour, lmk, 7)
	far = LandmarkTriple((48.0, 70.0), (23.0, 30.0), (73.0, 40.0))
	with pytest.raises(DataError):
		split_and_resample(contour, far, 8)
	same = LandmarkTriple((48.0, 70.0), (23.0, 40.0), (23.2, 40.0))
	with pytest.raises(DataError) as info:
		split_and_resample(contour, same, 8)
	assert info.value.description == 'degenerate split'

def test_generated_samples_are_recovered_from_their_masks(samples):
	for sample in samples[:4]:
		pc = split_and_resample(extract_contour(sample.mask), sample.landmarks, sample.points.T)
		diff = pc.points - sample.points.points
		assert math.sqrt(float(np.mean(np.sum(diff * diff, axis=1)))) < 0.75

def test_sweep_point_count(samples):
	rows = sweep_point_count([(s.mask, s.landmarks) for s in samples[:3]], [20, 88])
	assert [r[0] for r in rows] == [20, 88]
	for _, mean_dice, min_dice in rows:
		assert 0.0 < min_dice <= mean_dice <= 1.0

def test_gpa_is_similarity_invariant(samples):
	shapes = [s.points for s in samples]
	moved = similarity_to_affine(SimilarityParams(1.7, 0.9, (12.0, -30.0)))
	mean_a, aligned_a, _ = gpa(shapes)
	mean_b, aligned_b, _ = gpa([apply_affine(moved, s) for s in shapes])
	for a, b in zip(aligned_a, aligned_b):
		assert np.sqrt(np.mean((a.points - b.points) ** 2)) < 1e-6
	assert np.allclose(mean_a.points, mean_b.points, atol=1e-6)

def test_gpa_transforms_and_frame(samples):
	shapes = [s.points for s in samples]
	mean, aligned, transforms = gpa(shapes)
	assert np.allclose(mean.centroid(), 0.0, atol=1e-9)
	assert np.allclose(mean.points, np.mean([a.points for a in aligned], axis=0))
	for shape, canon, sim in zip(shapes, aligned, transforms):
		assert np.allclose(similarity_to_affine(sim).apply(shape.points), canon.points, atol=1e-9)
	# the basal_a direction of the mean points along +x
	basal_a = mean.basal_points()[0]
	assert abs(math.atan2(basal_a[1], basal_a[0])) < 0.3

def test_gpa_of_similar_copies_collapses_onto_one_shape(samples):
	rng = np.random.default_rng(4)
	shape = samples[0].points
	copies = [apply_affine(similarity_to_affine(SimilarityParams(rng.uniform(0.5, 2.0), rng.uniform(-math.pi, math.pi),
		tuple(rng.uniform(-20.0, 20.0, 2)))), shape) for _ in range(5)]
	mean, aligned, _ = gpa(copies)
	for canon in aligned:
		assert np.max(np.abs(canon.points - mean.points)) < 1e-9
	assert np.sqrt(np.mean(np.sum(mean.points ** 2, axis=1))) == pytest.approx(1.0, abs=1e-6)

def test_gpa_needs_two_shapes(samples):
	with pytest.raises(DataError):
		gpa([samples[0].points])

def test_gpa_rejects_a_collapsed_first_shape(samples):
	collapsed = np.full((samples[0].points.T, 2), 7.0)
	with pytest.raises(NumericalError) as info:
		gpa([collapsed, samples[0].points])
	assert info.value.description == 'degenerate configuration'

def test_normalize_to_template_inverts_a_similarity(shape_model):
	sim = SimilarityParams(14.0, -0.4, (30.0, 25.0))
	placed = apply_affine(similarity_to_affine(sim), shape_model.mean)
	normalized, found = normalize_to_template(placed, shape_model.mean)
	assert np.allclose(normalized.points, shape_model.mean.points, atol=1e-9)
	assert found.scale == pytest.approx(14.0)
	assert found.rotation == pytest.approx(-0.4)

def test_build_quadruples(samples):
	triples = [(s.image, s.mask, s.landmarks) for s in samples[:5]]
	quads = build_quadruples(triples, 88, min_dice=0.0)
	assert len(quads) == 5
	assert quads.excluded == []
	assert [q.image_id for q in quads] == ['0000', '0001', '0002', '0003', '0004']
	for q in quads:
		assert q.p_image.T == 88
		assert np.allclose(similarity_to_affine(q.to_canonical).apply(q.p_image.points), q.p_canonical.points, atol=1e-9)

def test_build_quadruples_excludes_corrupt_masks(samples):
	broken = np.array(samples[0].mask.data, dtype=bool)
	broken[0:2, 0:2] = True
	triples = [(s.image, s.mask, s.landmarks) for s in samples[1:4]]
	triples.append((samples[0].image, BinaryMask(broken), samples[0].landmarks))
	quads = build_quadruples(triples, 88, ids=['a', 'b', 'c', 'bad'], min_dice=0.0)
	assert len(quads) == 3
	assert quads.excluded == [('bad', 'mask not simply connected')]
	with pytest.raises(DataError) as info:
		build_quadruples(triples[-2:], 88, min_dice=0.0)
	assert info.value.description == 'insufficient data'

def test_build_quadruples_keeps_clean_generator_output():
	drawn = generate(GenConfig(seed=5), 50, threads=4)
	quads = build_quadruples([(s.image, s.mask, s.landmarks) for s in drawn], 88, threads=4)
	assert len(quads) == 50
	assert quads.excluded == []

def test_build_quadruples_needs_two_survivors(samples):
	triples = [(s.image, s.mask, s.landmarks) for s in samples[:2]]
	assert len(build_quadruples(triples, 88, min_dice=0.0)) == 2
	with pytest.raises(DataError) as info:
		build_quadruples(triples[:1], 88, min_dice=0.0)
	assert info.value.description == 'insufficient data'

def test_resampled_clouds_render_back_to_their_masks(samples):
	rows = sweep_point_count([(s.mask, s.landmarks) for s in samples], [88])
	assert rows[0][0] == 88
	assert rows[0][1] >= 0.98

def test_build_quadruples_is_thread_independent(samples):
	triples = [(s.image, s.mask, s.landmarks) for s in samples[:4]]
	a = build_quadruples(triples, 88, min_dice=0.0, threads=1)
	b = build_quadruples(triples, 88, min_dice=0.0, threads=3)
	assert np.array_equal(a.mean.points, b.mean.points)
