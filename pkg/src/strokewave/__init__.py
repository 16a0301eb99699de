"""Wavelet subband features and a compact MLP for stroke-image classification.

Subpackages and modules
-----------------------
imageio   loading, resizing, masking and augmentation of grayscale images
dwt       orthonormal 1D/2D discrete wavelet transforms (haar, db4)
features  128-dimensional subband feature extraction and normalization
mlp       the 128-128-64-3 classifier with batch norm, dropout and Adam
pipeline  dataset scanning, stratified splits, training and evaluation
synth     seeded three-class phantom generator for dataset-free testing
cli       command-line entry point
"""

__version__ = "0.1.0"
