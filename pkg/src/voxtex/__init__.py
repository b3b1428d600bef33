"""Out-of-core voxel texture segmentation."""
__version__ = "0.1.0"
