"""
Ordinal classifier on a small reverse-mode autodiff core.

Trained with grid dropout and a masking-label auxiliary loss; inspected
with gradient-weighted class activation maps.
"""
