"""Sliding rescaled-range derivative features and a classical VPN-detection pipeline."""
