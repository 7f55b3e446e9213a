"""Backdoor detection with statistical certification.

Smoothing-based detection statistics, adjustable conformal alarms,
closed-form detection guarantees, false-positive-rate bounds, and a small
classifier zoo with a backdoor attack simulator for end-to-end runs.
"""

__version__ = "0.1.0"
