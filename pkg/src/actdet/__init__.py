"""Activity detection in untrimmed surveillance video: tracking, background filtering, part-attention and motion-clip classification, temporal NMS and nAUDC scoring."""

__version__ = "0.1.0"
