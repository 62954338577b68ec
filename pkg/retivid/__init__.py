"""
Zero-shot Retinex video enhancement.

PYTEST_DONT_REWRITE - avoid pytest to rewrite, keep this msg here please!
"""
__version__ = '0.1'
