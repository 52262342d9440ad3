import logging
from typing import Any

from fastapi import FastAPI

from detector import __version__
from detector._shared.config import log_level, served_model_paths
from detector._shared.contracts import CONTRACTS, contract_summaries
from detector._shared.errors import make_error
from detector.engine.monitor import router as monitor_router
from detector.metrics import router as metrics_router
from detector.sensor import router as sensor_router

logging.basicConfig(level=log_level().upper(), format="%(asctime)s %(levelname)s %(name)s %(message)s")
logger = logging.getLogger("detector.api")

SERVER_NAME = "energy-trace-detector"
TOOL_ORDER = ["rapl_zones", "synth_trace", "detect_trace", "evaluate_predictions"]

_unregistered = sorted(set(TOOL_ORDER) - set(CONTRACTS))
if _unregistered:
    raise RuntimeError(f"Tools without a contract: {', '.join(_unregistered)}")

app = FastAPI(title="Energy Trace Attack Detector", version=__version__)
for _router in (sensor_router, monitor_router, metrics_router):
    app.include_router(_router)


def _manifest_entry(name: str) -> dict[str, Any]:
    contract = CONTRACTS[name]
    return {
        "name": name,
        "path": contract["path"],
        "version": contract["version"],
        "description": contract["description"],
        "error_codes": [entry["code"] for entry in contract["errors"]["codes"]],
        "contract_url": f"/contracts/{name}",
    }


@app.get("/")
def home():
    ad_model, ar_model = served_model_paths()
    return {
        "status": "ok",
        "server": SERVER_NAME,
        "version": __version__,
        "models": {"ad": ad_model or None, "ar": ar_model or None},
        "tool_manifest": "/tools",
        "openapi": "/openapi.json",
    }


@app.get("/tools")
def tool_manifest():
    names = TOOL_ORDER + sorted(set(CONTRACTS) - set(TOOL_ORDER))
    return {"tools": [_manifest_entry(name) for name in names], "contracts": "/contracts"}


@app.get("/contracts")
def list_contracts():
    return {"contracts": contract_summaries()}


@app.get("/contracts/{name}")
@app.get("/tools/{name}/contract")
def get_contract(name: str):
    if name in CONTRACTS:
        return CONTRACTS[name]
    logger.info("api contract_not_found name=%s", name)
    return make_error("CONTRACT_NOT_FOUND", "Contract not found.", status_code=404)
