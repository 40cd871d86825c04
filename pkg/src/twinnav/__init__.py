"""Digital-twin TD3 navigation at desk scale.

Pretraining in a 2D lidar arena, deployment through a physical/virtual twin
pair over a line-delimited wire protocol, a 1 m proximity risk gate, and
on-the-fly retraining with keyboard teleoperation injected into the first
steps of each retraining episode.
"""

__version__ = "0.1.0"
