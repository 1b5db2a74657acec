# src/headmask/core/__init__.py

# Model, decoding, training, scoring and analysis
