'''
Ring triangulation and the hard/soft rasterizers that turn point clouds into
masks.
'''

from ssm_segtools.masks import RasterMask
from ssm_segtools.raster.faces import FaceList, build_faces
from ssm_segtools.raster.hard import rasterize_hard
from ssm_segtools.raster.soft import (
	CUTOFF,
	EVAL_TAU,
	TRAIN_TAU,
	RasterConfig,
	SoftRasterizer,
	rasterize_soft,
	rasterize_soft_backward,
)

__all__ = [
	'CUTOFF',
	'EVAL_TAU',
	'TRAIN_TAU',
	'FaceList',
	'RasterConfig',
	'RasterMask',
	'SoftRasterizer',
	'build_faces',
	'rasterize_hard',
	'rasterize_soft',
	'rasterize_soft_backward',
]
