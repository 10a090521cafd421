'''
Parameter inference: per-image fitting and the amortized regressor.
'''

from ssm_segtools.train.augment import (AugmentDraw, augment_sample,
	draw_augmentation, warp_image, warp_mask, warp_points)
from ssm_segtools.train.config import AugmentConfig, FitConfig
from ssm_segtools.train.fitting import (FitResult, fit_single, fit_to_points,
	initial_placement, render_dice)
from ssm_segtools.train.optim import Adam
from ssm_segtools.train.regressor import (RegressorModel, TrainingReport,
	encode_image, mean_placement, predict, split_output, train_regressor)
