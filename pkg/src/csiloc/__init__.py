"""WiFi CSI fingerprinting toolkit.

Converts channel state information captures into amplitude feature-map
images, expands the fingerprint database with a per-reference-point
adversarially trained image generator, and evaluates indoor localization
accuracy through image classification and top-4 geometric-center
positioning.

Subpackages and modules:

ingest      CSI capture parsing (binary and canonical text), sample grouping
featuremap  amplitude feature-map rendering and fingerprint databases
synth       position-dependent synthetic CSI for end-to-end testing
nn          dense-tensor reverse-mode autodiff, layers, RMSProp, checkpoints
gan         generator/critic pair and the clipped-critic training loop
locate      CNN classifier, top-4 centroid positioning, error reports
kernels     hot numeric kernels (compiled fast path + numpy fallback)
cli         pipeline command-line front end
"""

__version__ = "0.1.0"
