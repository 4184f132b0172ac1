"""Offline converter: VGG-16/19 HDF5 weight files to NTL1 named-tensor files.

Only convolution parameters are converted; dense-layer shapes depend on the
source training resolution and the training toolkit always re-initializes
them. Kernels are transposed from the source (kh, kw, in, out) layout to the
consumer's (out, in, kh, kw) here, so the consumer never needs to know the
source layout.
"""

from .convert import ConversionError, ConvertSummary, convert, name_map

__version__ = "0.1.0"
