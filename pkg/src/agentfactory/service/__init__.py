from .app import create_app


def app_factory():
    """Build the app from AF_* environment variables and agentfactory.toml.

    For serving a shared runtime: `uvicorn --factory agentfactory.service:app_factory`.
    """
    from ..config import build_config

    return create_app(build_config())


__all__ = ["create_app", "app_factory"]
