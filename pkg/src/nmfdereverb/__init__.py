"""Single-channel blind speech dereverberation with NMF-family models of the magnitude spectrogram."""

__version__ = "0.1.0"
