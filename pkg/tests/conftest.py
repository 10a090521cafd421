'''
Shared fixtures: a small generated dataset and a shape model fitted on its
ground-truth clouds.
'''

import math

import numpy as np
import pytest

from ssm_segtools.alignment import gpa
from ssm_segtools.geometry import PointCloud
from ssm_segtools.masks import BinaryMask
from ssm_segtools.raster import build_faces
from ssm_segtools.ssm import fit_pdm
from ssm_segtools.synthgen import GenConfig, generate


def half_annulus_cloud(T=20, center=(16.0, 12.0), r_in=6.0, r_out=10.0):
	'''
	Lower half annulus as a cloud: both chains run from the left wall end
	through the bottom to the right wall end.
	'''
	half = T // 2
	phi = np.linspace(math.pi, 0.0, half)
	cx, cy = center
	inner = np.stack([cx + r_in * np.cos(phi), cy + r_in * np.sin(phi)], axis=1)
	outer = np.stack([cx + r_out * np.cos(phi), cy + r_out * np.sin(phi)], axis=1)
	return PointCloud(np.vstack([inner, outer]))

def half_annulus_mask(width=96, height=96, center=(48, 40), r_in=20, r_out=30):
	xs, ys = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)
	dist = np.hypot(xs - center[0], ys - center[1])
	return BinaryMask((dist >= r_in) & (dist <= r_out) & (ys >= center[1]))


@pytest.fixture(scope='session')
def gen_config():
	return GenConfig(seed=3)

@pytest.fixture(scope='session')
def samples(gen_config):
	return generate(gen_config, 12)

@pytest.fixture(scope='session')
def faces(gen_config):
	return build_faces(gen_config.T)

@pytest.fixture(scope='session')
def shape_model(samples):
	_, aligned, _ = gpa([s.points for s in samples])
	return fit_pdm(aligned, 5)

@pytest.fixture
def ring():
	return half_annulus_cloud()
