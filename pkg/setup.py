#!/usr/bin/env python

from setuptools import setup

setup(
    name='ssm_segtools',
    version='0.1',
    description='Deep statistical shape model segmentation with differentiable rasterization.',
    url='',
    package_dir={ '': 'lib' },
    packages=[
        'ssm_segtools',
        'ssm_segtools.alignment',
        'ssm_segtools.geometry',
        'ssm_segtools.raster',
        'ssm_segtools.ssm',
        'ssm_segtools.train',
    ],
    python_requires='>=3.8',
    install_requires=[ 'numpy', 'scipy', 'Pillow' ],
    extras_require={ 'test': [ 'pytest', 'hypothesis' ] },
    entry_points={ 'console_scripts': [ 'ssm-segtools = ssm_segtools.cli:main' ] },
)
