"""Dense 3D offset regression for hand pose: target encoding, vote aggregation, training."""

__version__ = "0.1.0"
