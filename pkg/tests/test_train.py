'''
Optimizer, augmentation, per-image fitting and the amortized regressor.
'''

import math

import numpy as np
import pytest

from ssm_segtools.errors import ConfigError, DataError, NumericalError
from ssm_segtools.geometry import AffineParams, PointCloud, SimilarityParams, similarity_to_affine
from ssm_segtools.losses import total_loss
from ssm_segtools.metrics import connected_components, dice
from ssm_segtools.raster import RasterConfig, build_faces, rasterize_hard
from ssm_segtools.ssm import DeformParams, synthesize
from ssm_segtools.synthgen import GenConfig, generate_from_model
from ssm_segtools.train import (Adam, AugmentConfig, AugmentDraw, FitConfig, RegressorModel,
	TrainingReport, augment_sample, encode_image, fit_single, fit_to_points, initial_placement,
	mean_placement, predict, render_dice, split_output, train_regressor, warp_image, warp_mask,
	warp_points)
from ssm_segtools.train.regressor import _sampleGradient


def test_fit_config_validation():
	with pytest.raises(ConfigError):
		FitConfig(lr=0.0)
	with pytest.raises(ConfigError):
		FitConfig(delta=-0.1)
	with pytest.raises(ConfigError):
		FitConfig(fit_tau=1.0, tau_start=0.5)
	with pytest.raises(ConfigError):
		FitConfig(fit_tau=0.0)
	with pytest.raises(ConfigError):
		FitConfig(val_fraction=1.0)
	with pytest.raises(ConfigError):
		AugmentConfig(flip_lr=1.5)
	assert FitConfig(hidden=[8, 4]).hidden == (8, 4)

def test_tau_schedule():
	cfg = FitConfig(max_iters=90, fit_tau=0.5, tau_start=2.0)
	assert cfg.tau_schedule_length == 60
	assert cfg.tau_at(0) == pytest.approx(2.0)
	assert cfg.tau_at(30) == pytest.approx(1.0)
	assert cfg.tau_at(60) == pytest.approx(0.5)
	assert cfg.tau_at(85) == pytest.approx(0.5)
	assert FitConfig().tau_at(FitConfig().max_iters) == pytest.approx(0.1)

def test_adam_first_step_and_convergence():
	params = {'x': np.array([1.0, -2.0])}
	adam = Adam(lr=0.1)
	adam.step(params, {'x': np.array([0.5, -3.0])})
	assert np.allclose(params['x'], [0.9, -1.9], atol=1e-6)
	for _ in range(2000):
		adam.step(params, {'x': 2.0 * params['x']})
	assert np.all(np.abs(params['x']) < 0.1)
	assert set(adam.state()) == {'m:x', 'v:x'}

def test_adam_rejects_non_finite_gradients():
	params = {'x': np.array([1.0])}
	adam = Adam()
	with pytest.raises(NumericalError):
		adam.step(params, {'x': np.array([np.inf])})
	assert params['x'][0] == 1.0
	assert adam.t == 0

def test_adam_copy_is_independent():
	params = {'x': np.array([1.0, -2.0])}
	adam = Adam(lr=0.1)
	adam.step(params, {'x': np.array([0.5, -3.0])})
	other = adam.copy()
	saved = other.state()
	adam.step(params, {'x': np.array([1.0, 1.0])})
	assert other.t == 1
	for name, value in other.state().items():
		assert np.array_equal(value, saved[name])
	# the copy takes the same next step the original would have taken
	moved = {'x': np.array([1.0, -2.0])}
	other.step(moved, {'x': np.array([1.0, 1.0])})
	fresh = {'x': np.array([1.0, -2.0])}
	Adam(lr=0.1).step(fresh, {'x': np.array([1.0, 1.0])})
	assert not np.allclose(moved['x'], fresh['x'])
	for name, value in other.state().items():
		assert np.allclose(value, adam.state()[name])

def test_identity_augmentation_changes_nothing(samples):
	sample = samples[0]
	theta = AugmentDraw().affine(64, 64)
	assert np.allclose(theta.theta, AffineParams.identity().theta)
	assert np.allclose(warp_image(sample.image, theta), sample.image)
	assert np.array_equal(warp_mask(sample.mask, theta).data.astype(bool), sample.mask.data.astype(bool))

def test_flip_mirrors_image_and_reverses_chains(samples):
	sample = samples[1]
	theta = AugmentDraw(flip_lr=True).affine(64, 64)
	assert np.allclose(warp_image(sample.image, theta), sample.image[:, ::-1])
	flipped = warp_points(sample.points, theta)
	mirrored = sample.points.points * [-1.0, 1.0] + [64.0, 0.0]
	assert np.allclose(flipped.points, PointCloud(mirrored).reversed_chains().points)

def test_double_flip_restores_the_cloud(samples):
	theta = AugmentDraw(flip_lr=True).affine(64, 64)
	twice = warp_points(warp_points(samples[1].points, theta), theta)
	assert np.allclose(twice.points, samples[1].points.points, rtol=0.0, atol=1e-9)

def test_translation_moves_image_mask_and_points_together(samples):
	sample = samples[5]
	theta = AugmentDraw(translation=(5.0, 0.0)).affine(64, 64)
	image = warp_image(sample.image, theta)
	assert np.allclose(image[:, 5:], sample.image[:, :-5])
	assert np.allclose(image[:, :5], 0.0)
	mask = warp_mask(sample.mask, theta).data.astype(bool)
	assert np.array_equal(mask[:, 5:], sample.mask.data.astype(bool)[:, :-5])
	assert np.allclose(warp_points(sample.points, theta).points, sample.points.points + [5.0, 0.0])

def test_augmented_points_follow_the_image(samples, faces):
	sample = samples[2]
	rng = np.random.default_rng(9)
	image, points = augment_sample(sample.image, sample.points, rng, AugmentConfig(translation_frac=0.0, rotation_deg=10.0))
	assert image.shape == sample.image.shape
	assert points.T == sample.points.T
	# the rendered cloud lands on the bright foreground of the warped image
	mask = rasterize_hard(points, faces, 64, 64).threshold()
	inside = image[mask.data.astype(bool)].mean()
	outside = image[~mask.data.astype(bool)].mean()
	assert inside > outside

def test_disabled_augmentation_is_identity(samples):
	sample = samples[0]
	image, points = augment_sample(sample.image, sample.points, np.random.default_rng(0), AugmentConfig(enabled=False))
	assert np.allclose(image, sample.image)
	assert np.allclose(points.points, sample.points.points)

def test_initial_placement_overlaps_target(shape_model, samples, faces):
	sample = samples[3]
	theta = initial_placement(shape_model, faces, sample.mask)
	placed = synthesize(shape_model, theta, DeformParams.zeros(shape_model.beta_dim))
	assert render_dice(placed, faces, sample.mask) > 0.3

def test_fit_single_improves_on_its_start(shape_model, samples, faces):
	sample = samples[4]
	cfg = FitConfig(max_iters=60)
	theta0 = initial_placement(shape_model, faces, sample.mask)
	start = render_dice(synthesize(shape_model, theta0, np.zeros(shape_model.beta_dim)), faces, sample.mask)
	result = fit_single(shape_model, faces, sample.mask, cfg=cfg)
	assert result.dice >= start
	assert result.dice == pytest.approx(render_dice(result.points, faces, sample.mask))
	assert len(result.loss_trace) == cfg.max_iters + 1
	assert np.all(np.abs(result.beta.beta) <= shape_model.clamp_limits() + 1e-12)

def test_fit_single_trace_falls_window_by_window(shape_model, faces):
	target = generate_from_model(shape_model, faces, GenConfig(seed=13, T=shape_model.T), 1)[0]
	result = fit_single(shape_model, faces, target.mask, cfg=FitConfig(max_iters=120))
	totals = [row[3] for row in result.loss_trace]
	minima = [min(totals[i:i + 20]) for i in range(0, len(totals) - 1, 20)]
	assert len(minima) == 6
	for earlier, later in zip(minima, minima[1:]):
		assert later <= earlier + 5e-3
	assert connected_components(rasterize_hard(result.points, faces, 64, 64).threshold()) == 1

def test_fit_single_errors(shape_model, samples, faces):
	empty = np.zeros((64, 64), dtype=bool)
	with pytest.raises(DataError) as info:
		fit_single(shape_model, faces, empty)
	assert info.value.description == 'empty target mask'
	with pytest.raises(ConfigError):
		fit_single(shape_model, faces, samples[0].mask, cfg=FitConfig(delta=0.0))

def test_fit_to_points_recovers_model_shapes(shape_model):
	theta = similarity_to_affine(SimilarityParams(12.0, 0.7, (30.0, 33.0)))
	beta = 1.5 * np.sqrt(shape_model.eigenvalues) * np.array([1.0, -1.0, 0.5, 0.0, -0.5])
	target = synthesize(shape_model, theta, beta)
	result = fit_to_points(shape_model, target)
	diff = result.points.points - target.points
	assert math.sqrt(float(np.mean(np.sum(diff * diff, axis=1)))) < 0.1
	assert result.loss_trace[-1][1] <= result.loss_trace[0][1]

def test_encode_image_pools_blocks():
	image = np.arange(16, dtype=float).reshape(4, 4) / 16.0
	x = encode_image(image, 2)
	assert x.shape == (4,)
	assert x[0] == pytest.approx((0 + 1 + 4 + 5) / 64.0 - 0.5)

def test_untrained_regressor_predicts_mean_placement(shape_model, samples):
	base = mean_placement(shape_model, [s.points for s in samples])
	cfg = FitConfig(hidden=(16,), downsample=4)
	reg = RegressorModel.initialise((64, 64), shape_model, base, cfg, np.random.default_rng(0))
	assert reg.sizes == (256, 16, 6 + shape_model.beta_dim)
	for sample in samples[:3]:
		theta, beta, points = predict(reg, shape_model, sample.image)
		assert np.allclose(theta.theta, base.theta)
		assert np.allclose(beta.beta, 0.0)
		assert np.allclose(points.points, synthesize(shape_model, base, beta).points)

def test_regressor_file_round_trip(tmp_path, shape_model, samples):
	base = mean_placement(shape_model, [s.points for s in samples])
	reg = RegressorModel.initialise((64, 64), shape_model, base, FitConfig(hidden=(8,), downsample=8), np.random.default_rng(1))
	reg.params['W1'][:] = np.random.default_rng(2).normal(0.0, 0.01, reg.params['W1'].shape)
	path = str(tmp_path / 'r.reg')
	reg.save(path)
	loaded = RegressorModel.load(path)
	assert loaded.sizes == reg.sizes
	assert np.array_equal(loaded.predict_raw(samples[0].image), reg.predict_raw(samples[0].image))
	with pytest.raises(DataError):
		loaded.predict_raw(np.zeros((32, 32)))

def test_regressor_backward_matches_finite_differences(shape_model, samples):
	base = mean_placement(shape_model, [s.points for s in samples])
	reg = RegressorModel.initialise((16, 16), shape_model, base, FitConfig(hidden=(6,), downsample=4), np.random.default_rng(3))
	rng = np.random.default_rng(4)
	for name in reg.params:
		reg.params[name][...] = rng.normal(0.0, 0.3, reg.params[name].shape)
	x = rng.uniform(-0.5, 0.5, (3, 16))
	weights = rng.normal(size=(3, reg.sizes[-1]))

	def objective():
		return float(np.sum(reg.forward(x)[0] * weights))

	out, cache = reg.forward(x)
	grads = reg.backward(cache, weights)
	h = 1e-6
	for name, idx in [('W0', (2, 1)), ('b0', (3,)), ('W1', (4, 2)), ('b1', (0,))]:
		old = reg.params[name][idx]
		reg.params[name][idx] = old + h
		plus = objective()
		reg.params[name][idx] = old - h
		minus = objective()
		reg.params[name][idx] = old
		assert (plus - minus) / (2 * h) == pytest.approx(grads[name][idx], rel=1e-5, abs=1e-7)

def test_training_gradient_matches_finite_differences(shape_model, samples, faces):
	base = mean_placement(shape_model, [s.points for s in samples])
	reg = RegressorModel.initialise((64, 64), shape_model, base, FitConfig(hidden=(6,), downsample=8), np.random.default_rng(6))
	rng = np.random.default_rng(7)
	reg.params['W1'][...] = rng.normal(0.0, 0.3, reg.params['W1'].shape)
	batch = samples[:2]
	raster = RasterConfig(64, 64, batch[0].mask.spacing_mm, 0.5)
	x = np.stack([encode_image(s.image, reg.downsample) for s in batch])

	def objective():
		out = reg.forward(x)[0]
		values = []
		for raw, sample in zip(out, batch):
			theta, beta = split_output(shape_model, raw)
			pred = synthesize(shape_model, theta, beta)
			values.append(total_loss(pred, sample.points, sample.mask, faces, raster, 0.5).value)
		return float(np.mean(values))

	out, cache = reg.forward(x)
	# inside the clamp box the clamp is the identity
	for raw in out:
		assert np.all(np.abs(raw[6:]) < shape_model.clamp_limits())
	jobs = [(shape_model, faces, out[i], s.points, s.mask, raster, 0.5) for i, s in enumerate(batch)]
	grad_out = np.stack([_sampleGradient(job)[1] for job in jobs]) / len(batch)
	grads = reg.backward(cache, grad_out)
	picks = ['W0'] * 10 + ['b0'] * 2 + ['W1'] * 6 + ['b1'] * 2
	h = 1e-6
	for name in picks:
		idx = tuple(int(rng.integers(0, n)) for n in reg.params[name].shape)
		old = reg.params[name][idx]
		reg.params[name][idx] = old + h
		plus = objective()
		reg.params[name][idx] = old - h
		minus = objective()
		reg.params[name][idx] = old
		assert (plus - minus) / (2 * h) == pytest.approx(grads[name][idx], rel=1e-2, abs=1e-6)

def test_training_report_round_trip():
	report = TrainingReport([(1, 1, 2.0, 1.5, 0.6), (2, 1, 1.5, 1.2, 0.7), (3, 2, 1.4, 1.1, 0.8)], 3, 0.8, [0])
	text = report.to_tsv()
	assert '# stage 2 from epoch 3' in text.splitlines()
	back = TrainingReport.from_tsv(text)
	assert back.stage_switch == 3
	assert back.records == report.records

def _trainingSet(shape_model, count=10):
	cfg = GenConfig(seed=11, T=shape_model.T)
	faces = build_faces(shape_model.T)
	gen = generate_from_model(shape_model, faces, cfg, count)
	return [(s.image, s.points, s.mask) for s in gen], faces

def test_train_regressor_short_run(shape_model):
	dataset, faces = _trainingSet(shape_model)
	cfg = FitConfig(hidden=(16,), downsample=4, batch_size=4, stage1_max_epochs=2, stage2_epochs=1, patience=2, seed=5)
	reg, report = train_regressor(dataset, shape_model, faces, cfg)
	assert [r[1] for r in report.records] == [1, 1, 2]
	assert report.stage_switch == 3
	assert report.best_val_dice >= report.records[-1][4]
	assert len(report.val_ids) == 2
	assert reg.sizes[-1] == 6 + shape_model.beta_dim

def test_train_regressor_is_deterministic(shape_model):
	dataset, faces = _trainingSet(shape_model, 6)
	cfg = FitConfig(hidden=(8,), downsample=8, batch_size=3, stage1_max_epochs=1, stage2_epochs=1, seed=2)
	a, ra = train_regressor(dataset, shape_model, faces, cfg)
	b, rb = train_regressor(dataset, shape_model, faces, cfg, stage1_only=False)
	assert ra.records == rb.records
	for name in a.params:
		assert np.array_equal(a.params[name], b.params[name])

def test_stage1_only_skips_mask_stage(shape_model):
	dataset, faces = _trainingSet(shape_model, 6)
	cfg = FitConfig(hidden=(8,), downsample=8, batch_size=3, stage1_max_epochs=1, stage2_epochs=2, seed=2)
	_, report = train_regressor(dataset, shape_model, faces, cfg, stage1_only=True)
	assert report.stage_switch is None
	assert all(r[1] == 1 for r in report.records)
	_, zero = train_regressor(dataset, shape_model, faces, FitConfig(hidden=(8,), downsample=8, batch_size=3, stage1_max_epochs=1, seed=2, delta=0.0))
	assert zero.records == report.records

def test_mask_stage_resumes_the_stage1_optimizer(shape_model):
	dataset, faces = _trainingSet(shape_model, 6)
	base = dict(hidden=(8,), downsample=8, batch_size=2, stage1_max_epochs=1, seed=2)
	_, resumed = train_regressor(dataset, shape_model, faces, FitConfig(stage2_epochs=1, delta=1e-12, **base))
	_, longer = train_regressor(dataset, shape_model, faces, FitConfig(**dict(base, stage1_max_epochs=2)), stage1_only=True)
	assert resumed.stage_switch == 2
	assert resumed.records[0] == longer.records[0]
	# with a negligible mask weight the second stage carries on where the first stopped
	assert resumed.records[1][2:4] == pytest.approx(longer.records[1][2:4], rel=1e-6)

def test_train_regressor_checks_its_data(shape_model):
	dataset, faces = _trainingSet(shape_model, 3)
	image, points, mask = dataset[0]
	bad = dataset[1:] + [(image[:32], points, mask)]
	with pytest.raises(DataError):
		train_regressor(bad, shape_model, faces, FitConfig(hidden=(4,), downsample=8))
	with pytest.raises(DataError):
		train_regressor([], shape_model, faces)

@pytest.mark.slow
def test_fit_recovers_model_samples(shape_model):
	faces = build_faces(shape_model.T)
	gen = generate_from_model(shape_model, faces, GenConfig(seed=21, T=shape_model.T), 50)
	for sample in gen:
		result = fit_single(shape_model, faces, sample.mask)
		assert result.dice >= 0.97
		assert connected_components(rasterize_hard(result.points, faces, 64, 64).threshold()) == 1
		fitted = fit_to_points(shape_model, sample.points)
		diff = fitted.points.points - sample.points.points
		assert math.sqrt(float(np.mean(np.sum(diff * diff, axis=1)))) < 0.1

@pytest.mark.slow
def test_mask_stage_beats_point_only_training(shape_model):
	faces = build_faces(shape_model.T)
	gen = generate_from_model(shape_model, faces, GenConfig(seed=31, T=shape_model.T), 500)
	dataset = [(s.image, s.points, s.mask) for s in gen]
	cfg = FitConfig(seed=1)
	_, point_only = train_regressor(dataset, shape_model, faces, cfg, stage1_only=True)
	reg, full = train_regressor(dataset, shape_model, faces, cfg)
	assert full.best_val_dice >= point_only.best_val_dice + 0.02
	assert full.best_val_dice >= 0.80
	val = [gen[i] for i in full.val_ids]
	scores = [dice(rasterize_hard(predict(reg, shape_model, s.image)[2], faces, 64, 64), s.mask) for s in val]
	assert np.mean(scores) == pytest.approx(full.best_val_dice)
