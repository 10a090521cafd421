'''
The point distribution model and shape synthesis.
'''

from ssm_segtools.ssm.model import (
	CLAMP_SIGMAS,
	DEFAULT_BETA_DIM,
	DeformParams,
	ShapeModel,
	as_beta,
	backprop_points,
	clamp_beta,
	default_beta_dim,
	deform,
	fit_pdm,
	project,
	project_with_residual,
	synthesize,
	synthesize_jacobians,
)

__all__ = [
	'CLAMP_SIGMAS',
	'DEFAULT_BETA_DIM',
	'DeformParams',
	'ShapeModel',
	'as_beta',
	'backprop_points',
	'clamp_beta',
	'default_beta_dim',
	'deform',
	'fit_pdm',
	'project',
	'project_with_residual',
	'synthesize',
	'synthesize_jacobians',
]
