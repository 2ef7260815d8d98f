from .app import create_app
from .auth import ApiSession, TokenStore
from .config import ServiceConfig, load_config

__all__ = ["ApiSession", "ServiceConfig", "TokenStore", "create_app", "load_config"]
