'''
Point clouds and the affine/similarity warps applied to them.
'''

from ssm_segtools.geometry.pointcloud import PointCloud, as_points
from ssm_segtools.geometry.affine import (
	AffineParams,
	SimilarityParams,
	apply_affine,
	compose_affine,
	estimate_similarity,
	invert_affine,
	similarity_to_affine,
)

__all__ = [
	'AffineParams',
	'PointCloud',
	'SimilarityParams',
	'apply_affine',
	'as_points',
	'compose_affine',
	'estimate_similarity',
	'invert_affine',
	'similarity_to_affine',
]
