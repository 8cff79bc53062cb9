"""Physical constants (SI). Fixed rather than configurable: a configurable
hbar invites silent unit bugs."""

HBAR = 1.054571817e-34  # J s
SPEED_OF_LIGHT = 299792458.0  # m/s
