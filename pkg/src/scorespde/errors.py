"""Exception types shared across the toolkit."""


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class NumericalAbort(RuntimeError):
    """Mid-run numerical failure: CFL violation, non-finite values,
    negative-mass blowup, or diverging training (CLI exit code 3)."""
