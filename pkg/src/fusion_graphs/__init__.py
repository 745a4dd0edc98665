"""fusion_graphs package"""
__version__ = "0.1.0"
