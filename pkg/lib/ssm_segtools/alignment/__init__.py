'''
Data preparation: masks to corresponding point clouds in a canonical frame.
'''

from ssm_segtools.alignment.contour import (LandmarkTriple, extract_contour,
	resample_polyline, split_and_resample, sweep_point_count)
from ssm_segtools.alignment.procrustes import gpa, normalize_to_template
from ssm_segtools.alignment.quadruples import (MIN_SAMPLE_DICE,
	CorrespondenceQuadruple, QuadrupleSet, build_quadruples)
from ssm_segtools.masks import BinaryMask, RasterMask
