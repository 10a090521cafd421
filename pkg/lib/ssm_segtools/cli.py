#!/usr/bin/env python
'''
File			:	cli.py
Package			:	ssm_segtools
Brief			:	Command-line entry point: synth, build-model, train, fit,
					predict and eval subcommands, each writing a run manifest
					next to its outputs.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Dict, List, Sequence

import numpy as np

from ssm_segtools import __version__
from ssm_segtools.alignment import build_quadruples, sweep_point_count
from ssm_segtools.dataset import entry_points, read_dataset, write_dataset, write_prediction
from ssm_segtools.errors import ConfigError, DataError, SegToolsError
from ssm_segtools.manifest import RunManifest, manifest_path
from ssm_segtools.masks import BinaryMask
from ssm_segtools.metrics import evaluate, largest_component
from ssm_segtools.raster import build_faces, rasterize_hard
from ssm_segtools.ssm import ShapeModel, fit_pdm
from ssm_segtools.synthgen import GenConfig, generate, generate_from_model, generate_sequence
from ssm_segtools.train import (AugmentConfig, FitConfig, RegressorModel, TrainingReport,
	fit_single, predict, train_regressor)
from ssm_segtools.utility import default_thread_count, ordered_map, read_config_file

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(name)s %(levelname)s: %(message)s'

EXIT_OK = 0
EXIT_UNEXPECTED = 4

#-------------------------------------------------------------------------------
# argparse value types; a bad value exits 2 with a message naming the flag
#-------------------------------------------------------------------------------
def positive_int(text: str) -> int:
	try:
		value = int(text)
	except ValueError:
		raise argparse.ArgumentTypeError('expected an integer, got %r' % text)
	if value < 1:
		raise argparse.ArgumentTypeError('must be >= 1, got %d' % value)
	return value

def nonnegative_int(text: str) -> int:
	try:
		value = int(text)
	except ValueError:
		raise argparse.ArgumentTypeError('expected an integer, got %r' % text)
	if value < 0:
		raise argparse.ArgumentTypeError('must be >= 0, got %d' % value)
	return value

def positive_float(text: str) -> float:
	try:
		value = float(text)
	except ValueError:
		raise argparse.ArgumentTypeError('expected a number, got %r' % text)
	if not value > 0:
		raise argparse.ArgumentTypeError('must be > 0, got %r' % text)
	return value

def nonnegative_float(text: str) -> float:
	try:
		value = float(text)
	except ValueError:
		raise argparse.ArgumentTypeError('expected a number, got %r' % text)
	if not value >= 0:
		raise argparse.ArgumentTypeError('must be >= 0, got %r' % text)
	return value

def int_list(text: str) -> List[int]:
	try:
		return [positive_int(v) for v in text.split(',') if v.strip()]
	except argparse.ArgumentTypeError as ex:
		raise argparse.ArgumentTypeError('bad integer list %r (%s)' % (text, ex))

def _flag(text) -> bool:
	if isinstance(text, bool):
		return text
	value = str(text).strip().lower()
	if value in ('1', 'true', 'yes', 'on'):
		return True
	if value in ('0', 'false', 'no', 'off'):
		return False
	raise ConfigError('expected a boolean, got %r' % text, 'config')

#-------------------------------------------------------------------------------
# helpers shared by the commands
#-------------------------------------------------------------------------------
def _requireFile(path: str, flag: str) -> str:
	if not os.path.isfile(path):
		raise ConfigError('%s: no such file %s' % (flag, path), 'cli')
	return path

def _requireDir(path: str, flag: str) -> str:
	if not os.path.isdir(path):
		raise ConfigError('%s: no such directory %s' % (flag, path), 'cli')
	return path

def _startManifest(args: argparse.Namespace, argv: Sequence[str]) -> RunManifest:
	config = dict((k, v) for k, v in vars(args).items() if k not in ('handler', 'config_values'))
	return RunManifest(['ssm-segtools'] + list(argv), config, getattr(args, 'seed', None), __version__)

def _finishManifest(manifest: RunManifest, output: str, outputs: Sequence[str]) -> str:
	manifest.add_outputs(outputs)
	manifest.finish()
	path = manifest_path(output)
	manifest.save(path)
	logger.info('manifest written to %s', path)
	return path

def _fitConfig(args: argparse.Namespace, **overrides) -> FitConfig:
	'''
	FitConfig from whichever hyper-parameter flags the subcommand defines.
	'''
	names = {
		'lr': 'lr', 'delta': 'delta', 'tau': 'tau', 'seed': 'seed', 'batch_size': 'batch_size',
		'epochs1': 'stage1_max_epochs', 'epochs2': 'stage2_epochs', 'patience': 'patience',
		'hidden': 'hidden', 'downsample': 'downsample', 'val_fraction': 'val_fraction',
		'iters': 'max_iters', 'fit_lr': 'fit_lr', 'fit_tau': 'fit_tau', 'threads': 'threads',
	}
	values = dict((field, getattr(args, flag)) for flag, field in names.items() if getattr(args, flag, None) is not None)
	values.update(overrides)
	return FitConfig(**values)

def _hardMask(pc, faces, reference: BinaryMask) -> BinaryMask:
	return rasterize_hard(pc, faces, reference.width, reference.height, reference.spacing_mm).threshold()

#-------------------------------------------------------------------------------
# commands
#-------------------------------------------------------------------------------
def cmd_synth(args: argparse.Namespace, manifest: RunManifest) -> int:
	if args.sequence and not args.from_model:
		raise ConfigError('--sequence needs --from-model', 'cmd_synth')
	if args.from_model:
		model = ShapeModel.load(_requireFile(args.from_model, '--from-model'))
		manifest.add_inputs([args.from_model])
		cfg = GenConfig(width=args.width, height=args.height, T=model.T, seed=args.seed, spacing_mm=args.spacing)
		faces = build_faces(model.T)
		if args.sequence:
			samples = generate_sequence(model, faces, cfg, args.sequence, args.mode, args.amplitude)
		else:
			samples = generate_from_model(model, faces, cfg, args.n, args.threads)
	else:
		cfg = GenConfig(width=args.width, height=args.height, T=args.T, seed=args.seed, spacing_mm=args.spacing)
		samples = generate(cfg, args.n, args.threads)
	written = write_dataset(samples, args.out)
	print('wrote %d samples to %s' % (len(samples), args.out))
	_finishManifest(manifest, args.out, written)
	return EXIT_OK

def cmd_build_model(args: argparse.Namespace, manifest: RunManifest) -> int:
	entries = read_dataset(_requireDir(args.data, '--data'))
	usable = []
	skipped = []
	for entry in entries:
		if entry.mask is None or entry.landmarks is None:
			skipped.append((entry.sample_id, 'missing mask or landmarks'))
		else:
			usable.append(entry)
	for entry in usable:
		manifest.add_inputs(entry.paths(args.data))

	if args.point_counts:
		sweep = sweep_point_count([(e.mask, e.landmarks) for e in usable], args.point_counts)
		print('T\tmean_dice\tmin_dice')
		for T, mean_dice, min_dice in sweep:
			print('%d\t%.4f\t%.4f' % (T, mean_dice, min_dice))

	quads = build_quadruples([(e.image, e.mask, e.landmarks) for e in usable], args.T,
		ids=[e.sample_id for e in usable], min_dice=args.min_dice, threads=args.threads)
	model = fit_pdm([q.p_canonical for q in quads], args.beta_dim)
	model.save(args.out)

	print('model: T=%d beta_dim=%d from %d samples' % (model.T, model.beta_dim, len(quads)))
	print('retained variance: %.4f' % model.retained_fraction)
	excluded = skipped + list(quads.excluded)
	print('excluded: %d' % len(excluded))
	for sample_id, reason in excluded:
		print('  %s\t%s' % (sample_id, reason))
	_finishManifest(manifest, args.out, [args.out])
	return EXIT_OK

def cmd_train(args: argparse.Namespace, manifest: RunManifest) -> int:
	model = ShapeModel.load(_requireFile(args.model, '--model'))
	entries = read_dataset(_requireDir(args.data, '--data'), require_images=True)
	manifest.add_inputs([args.model])
	dataset = []
	for entry in entries:
		if entry.mask is None:
			raise DataError('sample %s has no mask' % entry.sample_id, 'cmd_train')
		dataset.append((entry.image, entry_points(entry, model.T), entry.mask))
		manifest.add_inputs(entry.paths(args.data))

	cfg = _fitConfig(args)
	augment = AugmentConfig(enabled=not args.no_augment)
	reg, report = train_regressor(dataset, model, build_faces(model.T), cfg, augment, args.stage1_only)
	reg.save(args.out)
	report_path = args.report or args.out + '.report.tsv'
	with open(report_path, 'w') as handle:
		handle.write(report.to_tsv())
	print('best validation dice: %.4f' % report.best_val_dice)
	if report.stage_switch is not None:
		print('stage 2 from epoch %d' % report.stage_switch)
	_finishManifest(manifest, args.out, [args.out, report_path])
	return EXIT_OK

def _fitOne(job):
	model, faces, cfg, entry = job
	result = fit_single(model, faces, entry.mask, cfg=cfg)
	return entry, result

def cmd_fit(args: argparse.Namespace, manifest: RunManifest) -> int:
	model = ShapeModel.load(_requireFile(args.model, '--model'))
	source = _requireDir(args.data or args.masks, '--data' if args.data else '--masks')
	entries = [e for e in read_dataset(source) if e.mask is not None]
	if not entries:
		raise DataError('no masks found', 'cmd_fit')
	manifest.add_inputs([args.model] + [p for e in entries for p in e.paths(source)])
	faces = build_faces(model.T)
	cfg = _fitConfig(args, threads=1)

	os.makedirs(args.out, exist_ok=True)
	written = []
	for entry, result in ordered_map(_fitOne, [(model, faces, cfg, e) for e in entries], args.threads):
		written.extend(write_prediction(args.out, entry.sample_id, result.points, _hardMask(result.points, faces, entry.mask)))
		print('%s\tdice %.4f' % (entry.sample_id, result.dice))
	_finishManifest(manifest, args.out, written)
	return EXIT_OK

def _predictOne(job):
	model, reg, faces, cfg, entry, threshold = job
	theta, beta, points = predict(reg, model, entry.image)
	reference = BinaryMask(np.zeros(entry.image.shape, dtype=bool), entry.spacing_mm)
	if cfg is not None:
		target = largest_component(entry.image, threshold)
		if target.is_empty():
			logger.warning('cmd_predict(): %s has no pixel above %.3g, refinement skipped', entry.sample_id, threshold)
		else:
			points = fit_single(model, faces, target, init=(theta, beta), cfg=cfg).points
	return entry, points, _hardMask(points, faces, reference)

def cmd_predict(args: argparse.Namespace, manifest: RunManifest) -> int:
	model = ShapeModel.load(_requireFile(args.model, '--model'))
	reg = RegressorModel.load(_requireFile(args.regressor, '--regressor'))
	entries = read_dataset(_requireDir(args.images, '--images'), require_images=True)
	manifest.add_inputs([args.model, args.regressor] + [os.path.join(args.images, e.sample_id + '.pgm') for e in entries])
	faces = build_faces(model.T)
	cfg = _fitConfig(args, max_iters=args.refine_iters, threads=1) if args.refine_iters else None

	os.makedirs(args.out, exist_ok=True)
	written = []
	jobs = [(model, reg, faces, cfg, e, args.refine_threshold) for e in entries]
	for entry, points, mask in ordered_map(_predictOne, jobs, args.threads):
		written.extend(write_prediction(args.out, entry.sample_id, points, mask))
	print('wrote %d predictions to %s' % (len(entries), args.out))
	_finishManifest(manifest, args.out, written)
	return EXIT_OK

def _metricCurves(report) -> str:
	# per metric, sorted values against their rank fraction
	lines = ['metric\trank\tfraction\tvalue']
	for name in report.METRICS:
		values = np.sort(report.column(name)[np.isfinite(report.column(name))])
		for rank, value in enumerate(values, start=1):
			lines.append('%s\t%d\t%.6f\t%.6f' % (name, rank, rank / float(values.size), value))
	return '\n'.join(lines) + '\n'

def cmd_eval(args: argparse.Namespace, manifest: RunManifest) -> int:
	pred = dict((e.sample_id, e) for e in read_dataset(_requireDir(args.pred, '--pred'), args.spacing) if e.mask is not None)
	gt = [e for e in read_dataset(_requireDir(args.gt, '--gt'), args.spacing) if e.mask is not None]
	missing = [e.sample_id for e in gt if e.sample_id not in pred]
	if missing:
		raise DataError('no prediction for %d samples (first: %s)' % (len(missing), missing[0]), 'cmd_eval')
	ids = [e.sample_id for e in gt]
	manifest.add_inputs([os.path.join(d, i + BinaryMask.EXTENSION) for d in (args.pred, args.gt) for i in ids])

	report = evaluate([pred[i].mask for i in ids], [e.mask for e in gt], args.spacing, ids)
	text = report.to_tsv()
	written = []
	if args.out:
		with open(args.out, 'w') as handle:
			handle.write(text)
		written.append(args.out)
	else:
		sys.stdout.write(text)
	means, sds = report.mean, report.sd
	print('dice %.3f +- %.3f  hd_mm %.3f +- %.3f  cc %.3f' % (means['dice'], sds['dice'], means['hd_mm'], sds['hd_mm'], means['cc']))

	if args.plot_data:
		os.makedirs(args.plot_data, exist_ok=True)
		curves = os.path.join(args.plot_data, 'metric_curves.tsv')
		with open(curves, 'w') as handle:
			handle.write(_metricCurves(report))
		written.append(curves)
		if args.train_report:
			with open(_requireFile(args.train_report, '--train-report'), 'r') as handle:
				training = TrainingReport.from_tsv(handle.read())
			manifest.add_inputs([args.train_report])
			path = os.path.join(args.plot_data, 'training_curves.tsv')
			with open(path, 'w') as handle:
				handle.write(training.to_tsv())
			written.append(path)
	if args.out:
		_finishManifest(manifest, args.out, written)
	elif args.plot_data:
		_finishManifest(manifest, args.plot_data, written)
	return EXIT_OK

#-------------------------------------------------------------------------------
# parser
#-------------------------------------------------------------------------------
def _commonFlags() -> argparse.ArgumentParser:
	common = argparse.ArgumentParser(add_help=False)
	common.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
	common.add_argument('-v', '--verbose', action='store_true', help='shorthand for --log-level DEBUG')
	common.add_argument('--threads', type=positive_int, default=None,
		help='worker count (default: $SSM_SEGTOOLS_THREADS or 1)')
	common.add_argument('--config', default=None, help='file of "key = value" defaults for this command')
	return common

def build_parser():
	'''
	Returns the top-level parser and a dict of its subcommand parsers.
	'''
	common = _commonFlags()
	parser = argparse.ArgumentParser(prog='ssm-segtools', description='Deep statistical shape model segmentation tools.')
	parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
	sub = parser.add_subparsers(dest='command', metavar='command')
	sub.required = True
	commands: Dict[str, argparse.ArgumentParser] = {}

	p = sub.add_parser('synth', parents=[common], help='generate a synthetic dataset')
	p.add_argument('--n', type=nonnegative_int, default=100)
	p.add_argument('--seed', type=nonnegative_int, default=0)
	p.add_argument('--width', type=positive_int, default=64)
	p.add_argument('--height', type=positive_int, default=64)
	p.add_argument('--T', type=positive_int, default=88)
	p.add_argument('--spacing', type=positive_float, default=1.0)
	p.add_argument('--from-model', default=None, help='draw shapes from a .ssm model')
	p.add_argument('--sequence', type=positive_int, default=None, help='frames of a periodic sequence (with --from-model)')
	p.add_argument('--mode', type=nonnegative_int, default=0)
	p.add_argument('--amplitude', type=float, default=2.0)
	p.add_argument('--out', required=True)
	p.set_defaults(handler=cmd_synth)
	commands['synth'] = p

	p = sub.add_parser('build-model', parents=[common], help='align a dataset and fit the shape model')
	p.add_argument('--data', required=True)
	p.add_argument('--T', type=positive_int, default=88)
	p.add_argument('--beta-dim', type=positive_int, default=None)
	p.add_argument('--min-dice', type=float, default=0.90)
	p.add_argument('--point-counts', type=int_list, default=None, help='comma separated T values to sweep')
	p.add_argument('--out', required=True)
	p.set_defaults(handler=cmd_build_model)
	commands['build-model'] = p

	defaults = FitConfig()
	p = sub.add_parser('train', parents=[common], help='train the parameter regressor')
	p.add_argument('--data', required=True)
	p.add_argument('--model', required=True)
	p.add_argument('--out', required=True)
	p.add_argument('--report', default=None, help='training report TSV (default: OUT.report.tsv)')
	p.add_argument('--lr', type=positive_float, default=defaults.lr)
	p.add_argument('--delta', type=nonnegative_float, default=defaults.delta)
	p.add_argument('--tau', type=positive_float, default=defaults.tau)
	p.add_argument('--seed', type=nonnegative_int, default=defaults.seed)
	p.add_argument('--batch-size', type=positive_int, default=defaults.batch_size)
	p.add_argument('--epochs1', type=positive_int, default=defaults.stage1_max_epochs)
	p.add_argument('--epochs2', type=nonnegative_int, default=defaults.stage2_epochs)
	p.add_argument('--patience', type=positive_int, default=defaults.patience)
	p.add_argument('--hidden', type=int_list, default=list(defaults.hidden))
	p.add_argument('--downsample', type=positive_int, default=defaults.downsample)
	p.add_argument('--val-fraction', type=positive_float, default=defaults.val_fraction)
	p.add_argument('--stage1-only', action='store_true')
	p.add_argument('--no-augment', action='store_true')
	p.set_defaults(handler=cmd_train)
	commands['train'] = p

	p = sub.add_parser('fit', parents=[common], help='fit the shape model to masks')
	p.add_argument('--model', required=True)
	group = p.add_mutually_exclusive_group(required=True)
	group.add_argument('--data', default=None, help='dataset directory')
	group.add_argument('--masks', default=None, help='directory of *.mask.pgm files')
	p.add_argument('--iters', type=positive_int, default=defaults.max_iters)
	p.add_argument('--fit-lr', type=positive_float, default=defaults.fit_lr)
	p.add_argument('--delta', type=positive_float, default=defaults.delta)
	p.add_argument('--fit-tau', type=positive_float, default=defaults.fit_tau)
	p.add_argument('--out', required=True)
	p.set_defaults(handler=cmd_fit)
	commands['fit'] = p

	p = sub.add_parser('predict', parents=[common], help='run the regressor on images')
	p.add_argument('--model', required=True)
	p.add_argument('--regressor', required=True)
	p.add_argument('--images', required=True)
	p.add_argument('--refine-iters', type=nonnegative_int, default=0)
	p.add_argument('--refine-threshold', type=float, default=0.5)
	p.add_argument('--fit-lr', type=positive_float, default=defaults.fit_lr)
	p.add_argument('--out', required=True)
	p.set_defaults(handler=cmd_predict)
	commands['predict'] = p

	p = sub.add_parser('eval', parents=[common], help='score predicted masks against ground truth')
	p.add_argument('--pred', required=True)
	p.add_argument('--gt', required=True)
	p.add_argument('--spacing', type=positive_float, default=None, help='pixel spacing in mm (default: from the dataset)')
	p.add_argument('--out', default=None, help='metrics TSV (default: stdout)')
	p.add_argument('--train-report', default=None)
	p.add_argument('--plot-data', default=None, help='directory for plot-ready TSV curves')
	p.set_defaults(handler=cmd_eval)
	commands['eval'] = p
	return parser, commands

def _applyConfig(parser: argparse.ArgumentParser, path: str) -> None:
	values = read_config_file(path)
	actions = dict((a.dest, a) for a in parser._actions)
	for key, value in values.items():
		action = actions.get(key)
		if action is None or key in ('config', 'help'):
			raise ConfigError('%s: unknown option %r' % (path, key), 'config')
		if action.nargs == 0:
			values[key] = _flag(value)
	# string defaults go through each action's type on the reparse
	parser.set_defaults(**values)
	return

def _configureLogging(args: argparse.Namespace) -> None:
	level = logging.DEBUG if args.verbose else getattr(logging, args.log_level)
	root = logging.getLogger()
	if not any(getattr(h, '_ssm_segtools', False) for h in root.handlers):
		handler = logging.StreamHandler(sys.stderr)
		handler.setFormatter(logging.Formatter(LOG_FORMAT))
		handler._ssm_segtools = True
		root.addHandler(handler)
	root.setLevel(level)
	return

def main(argv: Sequence[str] | None = None) -> int:
	argv = list(sys.argv[1:] if argv is None else argv)
	parser, commands = build_parser()
	try:
		args = parser.parse_args(argv)
		_configureLogging(args)
		if args.config:
			_applyConfig(commands[args.command], _requireFile(args.config, '--config'))
			args = parser.parse_args(argv)
		if args.threads is None:
			args.threads = default_thread_count()
		manifest = _startManifest(args, argv)
		if args.config:
			manifest.add_inputs([args.config])
		return args.handler(args, manifest)
	except SystemExit as ex:
		return ex.code if isinstance(ex.code, int) else 2
	except SegToolsError as ex:
		logger.error('%s', ex)
		return ex.number
	except Exception:
		logger.exception('main(): unexpected failure')
		return EXIT_UNEXPECTED

if __name__ == '__main__':
	sys.exit(main())
