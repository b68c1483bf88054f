"""Proprioceptive diffusion control with contact-keypoint memory.

A 2D blind-navigation testbed: a position-controlled end-effector among
rigid obstacles, sensed only through its own pose and an emulated planar
torque reading.  A conditional diffusion policy generates action plans in
a receding-horizon loop, with a bounded memory of past contacts
("keypoints") appended to the conditioning.
"""

__version__ = "0.1.0"
