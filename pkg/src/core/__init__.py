"""Numerical building blocks: regimes, grid, model and integrator"""
