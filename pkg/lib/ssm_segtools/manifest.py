#!/usr/bin/env python
'''
File			:	manifest.py
Package			:	ssm_segtools
Brief			:	Run manifests: the command line, configuration, seed, input and
					output hashes and timings of one artifact-producing command.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import json
import logging
import os
import time
from typing import Dict, Iterable, List

from ssm_segtools.base import ArtifactBase
from ssm_segtools.errors import FormatError
from ssm_segtools.utility import content_hash

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'run_manifest.json'


def manifest_path(output: str) -> str:
	'''
	run_manifest.json inside an output directory, <file>.manifest.json next
	to an output file.
	'''
	if os.path.isdir(output):
		return os.path.join(output, MANIFEST_NAME)
	return output + '.manifest.json'

def _hashes(paths: Iterable[str]) -> Dict[str, str]:
	out = {}
	for path in sorted(set(paths)):
		if os.path.isfile(path):
			out[path] = content_hash(path)
	return out

#-------------------------------------------------------------------------------
# class: RunManifest
# inherits: ssm_segtools.base.ArtifactBase
#
# Public properties:
#	command - argv list
#	config - dict of resolved option values
#	seed - integer or None
#	inputs, outputs - dicts path -> sha256
#	version - tool version string
#	started, elapsed_s - wall clock start (epoch seconds) and duration
#
# Public methods:
#	add_inputs(paths) / add_outputs(paths) - hash and record files
#	finish() - stamps the elapsed time
#
#-------------------------------------------------------------------------------
class RunManifest(ArtifactBase):

	EXTENSION = '.json'

	def __init__(self, command: List[str], config: dict, seed=None, version: str = '', started: float | None = None):
		self.command = list(command)
		self.config = dict(config)
		self.seed = seed
		self.version = version
		self.inputs: Dict[str, str] = {}
		self.outputs: Dict[str, str] = {}
		self.started = time.time() if started is None else float(started)
		self.elapsed_s = 0.0
		return

	def add_inputs(self, paths: Iterable[str]) -> None:
		self.inputs.update(_hashes(paths))
		return

	def add_outputs(self, paths: Iterable[str]) -> None:
		self.outputs.update(_hashes(paths))
		return

	def finish(self) -> None:
		self.elapsed_s = time.time() - self.started
		return

	def _constructText(self) -> str:
		payload = {
			'command': self.command,
			'config': self.config,
			'seed': self.seed,
			'version': self.version,
			'inputs': self.inputs,
			'outputs': self.outputs,
			'started': self.started,
			'elapsed_s': self.elapsed_s,
		}
		return json.dumps(payload, indent=2, sort_keys=True, default=str) + '\n'

	@classmethod
	def _parseText(cls, text: str, source: str) -> 'RunManifest':
		try:
			payload = json.loads(text)
		except ValueError as ex:
			raise FormatError('bad manifest json (%s)' % ex, source)
		manifest = cls(payload.get('command', []), payload.get('config', {}), payload.get('seed'),
			payload.get('version', ''), payload.get('started'))
		manifest.inputs = dict(payload.get('inputs', {}))
		manifest.outputs = dict(payload.get('outputs', {}))
		manifest.elapsed_s = float(payload.get('elapsed_s', 0.0))
		return manifest

	pass
