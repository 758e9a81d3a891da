"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid scenario, controller or experiment configuration."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""
