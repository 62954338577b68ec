# -*- coding: utf-8 -*-
try:
    from setuptools import setup, find_packages
except ImportError:
    from ez_setup import use_setuptools
    use_setuptools()
    from setuptools import setup, find_packages

setup(
    name='retivid',
    version='0.1',
    description=(
        'Zero-shot Retinex enhancement of low-light and underwater video '
        'with temporal feedback'
    ),
    author='retivid developers',
    license='MIT',
    python_requires='>=3.7',
    install_requires=[
        'numpy>=1.17',
        'scipy',
        'torch>=1.13',
        'opencv-python-headless',
        'scikit-image',
        'gevent>=20.9',
        'pyyaml>=4.2b1',
        'jinja2>=3.0',
        'munch',
        'pytest',
        'pytest-logger',
    ],
    entry_points={
        'console_scripts': [
            'retivid=retivid.run_retivid:main',
        ],
    },
    zip_safe=False,
    include_package_data=True,
    package_data={
        'retivid': [
            'framework/conf/*.yaml',
            'templates/*/*.j2',
        ],
    },
    packages=find_packages(exclude=['ez_setup', 'tests', 'tests.*']),
)
