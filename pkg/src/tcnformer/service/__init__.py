"""HTTP service wrapping the forecasting package.

`create_app()` builds a FastAPI application exposing the five operations
(fetch, train, evaluate, forecast, ablate) plus a health probe; the CLI is
a thin client of this app.
"""

from .app import create_app

__all__ = ["create_app"]
