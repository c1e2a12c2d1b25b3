"""Precoder design for joint-transmission CoMP with limited feedback and limited backhaul."""
__version__ = "0.1.0"
