"""CSI-free precoding for STAR-RIS aided mmWave broadcasting.

Simulates Rician channels and uplink pilot sounding, labels channels with a
full-CSI block-coordinate optimiser, and learns a pilot-to-precoder mapping
with Saab features, relevant-feature selection and boosted trees.
"""

from .config import RunConfig, load_config

__version__ = "0.1.0"

__all__ = ["RunConfig", "load_config", "__version__"]
