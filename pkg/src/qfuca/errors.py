"""Exception types shared across the package."""


class LayoutSpecError(ValueError):
    """Array-layout parameters violate a structural constraint."""


class InfeasibleGeometry(ValueError):
    """No element placement realizes the requested sharing pattern."""


class SizeGuardError(ValueError):
    """An exhaustive computation would exceed its safety bound."""


class ConfigError(ValueError):
    """CLI configuration could not be parsed or validated."""
