"""Band-wise information analysis over PCA, Fourier and wavelet subspaces."""

__version__ = "0.1.0"
