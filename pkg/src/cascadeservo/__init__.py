"""Cascaded visual-servoing control toolkit: camera models, D-H kinematics,
Youla-parameterized inner/outer loops, tool manipulation with visibility
switching, and image averaging."""

__version__ = "0.1.0"
