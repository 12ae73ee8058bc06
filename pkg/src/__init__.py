"""
Joint Image-Mask Diffusion Lab - Source Package
"""
__version__ = "1.0.0"
