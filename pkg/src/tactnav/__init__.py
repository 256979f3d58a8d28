"""tactnav: vision-to-vibration hand guidance toolkit.

Subsystems: image geometry (`geometry`), synthetic scene + perception
stream (`scene`), multi-object tracking (`tracking`), navigation logic
(`guidance`), bracelet wire protocol (`wire`), trial harness and metrics
(`layouts`, `agent`, `harness`, `metrics`), live session service
(`service`), and the command line (`cli`).
"""

__version__ = "0.1.0"
