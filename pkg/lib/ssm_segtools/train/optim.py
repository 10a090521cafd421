#!/usr/bin/env python
'''
File			:	optim.py
Package			:	ssm_segtools.train
Brief			:	Adam over a dictionary of named numpy parameters.
--------------------------------------------------------------------------------
'''

from __future__ import annotations

import logging
from typing import Dict

import numpy as np

from ssm_segtools.errors import ConfigError, NumericalError

logger = logging.getLogger(__name__)

#-------------------------------------------------------------------------------
# class: Adam
#
# Public properties:
#	lr, beta1, beta2, epsilon - the usual Adam constants
#	t - number of steps taken
#
# Public methods:
#	step(params, grads)
#		Updates every params[name] in place from grads[name]. Moment buffers
#		are created on first sight of a name. A non-finite gradient raises
#		NumericalError before anything is modified.
#	copy() - independent copy, moment buffers included
#
#-------------------------------------------------------------------------------
class Adam(object):

	def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
		if not lr > 0:
			raise ConfigError('lr must be positive, got %r' % (lr,), 'Adam')
		if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
			raise ConfigError('beta1 and beta2 must lie in [0, 1)', 'Adam')
		self.lr = float(lr)
		self.beta1 = float(beta1)
		self.beta2 = float(beta2)
		self.epsilon = float(epsilon)
		self.t = 0
		self.__m: Dict[str, np.ndarray] = {}
		self.__v: Dict[str, np.ndarray] = {}
		return

	def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
		for name in params:
			if not np.all(np.isfinite(grads[name])):
				logger.warning('Adam.step(): non-finite gradient for %s at step %d', name, self.t + 1)
				raise NumericalError('non-finite gradient for %s' % name, 'Adam.step')
		self.t += 1
		bc1 = 1.0 - self.beta1 ** self.t
		bc2 = 1.0 - self.beta2 ** self.t
		step_size = self.lr / bc1
		for name in params:
			g = grads[name]
			if name not in self.__m:
				self.__m[name] = np.zeros_like(params[name])
				self.__v[name] = np.zeros_like(params[name])
			m = self.__m[name]
			v = self.__v[name]
			m *= self.beta1
			m += (1.0 - self.beta1) * g
			v *= self.beta2
			v += (1.0 - self.beta2) * (g * g)
			params[name] -= step_size * m / (np.sqrt(v / bc2) + self.epsilon)
		return

	def state(self) -> Dict[str, np.ndarray]:
		'''
		Copies of the moment buffers, keyed 'm:<name>' and 'v:<name>'.
		'''
		out = {}
		for name in self.__m:
			out['m:' + name] = self.__m[name].copy()
			out['v:' + name] = self.__v[name].copy()
		return out

	def copy(self) -> 'Adam':
		other = Adam(self.lr, self.beta1, self.beta2, self.epsilon)
		other.t = self.t
		other.__m = dict((k, v.copy()) for k, v in self.__m.items())
		other.__v = dict((k, v.copy()) for k, v in self.__v.items())
		return other

	pass
