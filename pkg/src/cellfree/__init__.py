from .config import ScenarioConfig, SCHEMES  # noqa: F401
