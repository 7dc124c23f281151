"""Pareto-improving counterfactual explanations across multiple regression models."""
__version__ = "0.1.0"
