"""Full-centroidal NMPC for a six-legged telescopic-wheeled robot."""

__version__ = "0.1.0"
