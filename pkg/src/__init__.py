"""Korn Lab - discrete exterior calculus and Korn-type inequalities on cubical grids."""
