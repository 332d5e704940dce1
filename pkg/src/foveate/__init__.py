"""foveate: cost-aware sequential fixation classification.

A cloud-side policy repeatedly requests small high-acuity patches from an
edge device that has only transmitted a coarse thumbnail, and stops when a
classifier built on the progressively sharpened image is confident.  The
package covers the synthetic dataset, the numeric substrate, the training
loop, baseline policies, the edge/cloud wire protocol, and a CLI.
"""

__version__ = "0.1.0"
