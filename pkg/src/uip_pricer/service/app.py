"""FastAPI service wrapping the experiment runners.

One POST endpoint per experiment command; requests carry the same sections a
config file does, responses return the summary plus all CSV/JSON artifacts
inline.  Config problems map to 400, numerical failures (stability, blow-up,
singular covariance) to 422; a failed verification is a normal 200 response
with ``ok=false``.
"""

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import ConfigError, PricingError
from ..experiments import RUNNERS, PRESET_NAMES, load_preset, parse_config_text
from .schemas import (ArtifactModel, ExperimentRequest, HealthResponse,
                      PresetResponse, RunResponse)


def execute(command: str, sections: dict) -> RunResponse:
    """Run one experiment command on parsed sections (shared with the CLI)."""
    runner = RUNNERS.get(command)
    if runner is None:
        raise ConfigError(f"unknown command '{command}'")
    result = runner(sections)
    return RunResponse(
        summary=result.summary,
        artifacts=[ArtifactModel(name=a.name, content=a.content)
                   for a in result.artifacts],
        config_hash=result.config_hash,
        version=__version__,
        wall_time_s=result.wall_time_s,
        ok=result.ok,
    )


def create_app() -> FastAPI:
    app = FastAPI(
        title="uip-pricer",
        description="Utility-indifference pricing service for energy structured contracts",
        version=__version__,
    )

    def _run(command, request: ExperimentRequest) -> RunResponse:
        try:
            return execute(command, request.sections())
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except PricingError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.get("/presets", response_model=list)
    def presets():
        return list(PRESET_NAMES)

    @app.get("/presets/{name}", response_model=PresetResponse)
    def preset(name: str):
        try:
            text = load_preset(name)
        except ConfigError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return PresetResponse(name=name, config_text=text,
                              sections=parse_config_text(text))

    @app.post("/v1/price", response_model=RunResponse)
    def price(request: ExperimentRequest):
        return _run("price", request)

    @app.post("/v1/compare-classical", response_model=RunResponse)
    def compare_classical(request: ExperimentRequest):
        return _run("compare-classical", request)

    @app.post("/v1/strategy", response_model=RunResponse)
    def strategy(request: ExperimentRequest):
        return _run("strategy", request)

    @app.post("/v1/verify", response_model=RunResponse)
    def verify(request: ExperimentRequest):
        return _run("verify", request)

    @app.post("/v1/audit", response_model=RunResponse)
    def audit(request: ExperimentRequest):
        return _run("audit", request)

    return app


app = create_app()
