"""Burst-overlap channel model."""

from __future__ import annotations

from stflood.core import DEFAULT_CONFIG, InterferencePattern, ValidationError


def burst_overlap(pattern: InterferencePattern, airtime_ms: float = DEFAULT_CONFIG.airtime_ms) -> float:
    """Probability that a packet of ``airtime_ms`` starting at a random phase touches a burst."""
    if pattern.kind == "none" or pattern.burst_ms == 0:
        return 0.0
    return min(1.0, (pattern.burst_ms + airtime_ms) / pattern.period_ms)


def link_loss_prob(
    base_loss: float,
    pattern: InterferencePattern,
    exposure: float = 1.0,
    airtime_ms: float = DEFAULT_CONFIG.airtime_ms,
) -> float:
    if not 0.0 <= base_loss < 1.0:
        raise ValidationError(f"base_loss must be in [0, 1), got {base_loss}")
    if not 0.0 <= exposure <= 1.0:
        raise ValidationError(f"exposure must be in [0, 1], got {exposure}")
    if airtime_ms < 0:
        raise ValidationError("airtime_ms must be non-negative")
    if pattern.kind == "none":
        return base_loss
    jam = exposure * burst_overlap(pattern, airtime_ms)
    return 1.0 - (1.0 - base_loss) * (1.0 - jam)
