"""calocodec: lossless physics-aware range coding of calorimeter events,
with achieved codelength as a two-sample fidelity diagnostic."""

__version__ = "0.1.0"
