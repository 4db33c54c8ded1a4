"""Online multi-object tracking with similarity-scaled Kalman prediction and
GRU-based data association."""

__version__ = "0.1.0"
