"""Novikov-Veselov hierarchy and O(N) sigma model verification toolkit."""
