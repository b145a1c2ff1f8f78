"""Acceptance evaluation module for the DBPL corridor simulator"""
from .acceptance_bench import AcceptanceEvaluator
__all__ = ['AcceptanceEvaluator']
