"""Speech deepfake detection with a multi-task transformer.

Subpackages cover the DSP frontend, pitch/formant annotation, a minimal
autodiff engine, the detector network, training, metrics, and the
attention-based explainability reports.
"""

__version__ = "0.1.0"
