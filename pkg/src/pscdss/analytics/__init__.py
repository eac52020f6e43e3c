"""Closed-form and semi-analytic link and consensus reliability."""
