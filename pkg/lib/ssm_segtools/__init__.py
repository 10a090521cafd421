'''
Deep statistical shape model segmentation: point-distribution shape models,
differentiable polygon rasterization, fitting and an amortized parameter
regressor, with a synthetic data generator to exercise them.
'''

__version__ = '0.1'
