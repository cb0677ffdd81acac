"""netad: KDD Cup 99 network-traffic anomaly detection.

From-scratch deep (autoencoder, GAN, CNN+LSTM) and shallow (KNN, random
forest) detectors, a three-layer conflict-routing ensemble, and the
evaluation machinery to reproduce the published results at desk scale.
"""

__version__ = "0.1.0"
