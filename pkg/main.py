import logging
import os
from typing import Dict, List, Optional

import pydantic
from fastapi import Depends, FastAPI, HTTPException, Security, status
from fastapi.security import HTTPAuthorizationCredentials, HTTPBearer
from fastmcp import FastMCP

from classifiers import TrainedClassifier, load_model
from corpus import Label
from errors import EmoForgeError
from textprep import prepare_text

# Configuration
MODEL_PATH = os.getenv("EMOFORGE_MODEL_PATH", "model.json")
API_KEY = os.getenv("EMOFORGE_API_KEY")
MAX_BATCH = int(os.getenv("EMOFORGE_MAX_BATCH", "1000"))

# Initialize FastMCP Server
mcp = FastMCP("EmoForge")

# Setup Logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger("EmoForge")

# --- Security & Authentication ---

security = HTTPBearer()


async def verify_api_key(credentials: HTTPAuthorizationCredentials = Security(security)):
    """
    Verifies the Bearer token against the EMOFORGE_API_KEY environment variable.
    """
    if not API_KEY:
        # Fail safe: no key configured means nobody gets in.
        logger.error("EMOFORGE_API_KEY not set! Rejecting all requests.")
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail="Server configuration error: EMOFORGE_API_KEY not set"
        )

    if credentials.credentials != API_KEY:
        raise HTTPException(
            status_code=status.HTTP_401_UNAUTHORIZED,
            detail="Invalid API Key",
            headers={"WWW-Authenticate": "Bearer"},
        )
    return credentials.credentials


# --- Model loading ---

_cache: Dict[str, TrainedClassifier] = {}


def get_classifier() -> TrainedClassifier:
    """Loads the model at MODEL_PATH once per path; 503 when it cannot be loaded."""
    if MODEL_PATH not in _cache:
        try:
            _cache[MODEL_PATH] = load_model(MODEL_PATH)
            logger.info(f"Loaded {_cache[MODEL_PATH].kind.value} model from {MODEL_PATH}")
        except (EmoForgeError, OSError) as e:
            logger.error(f"Model load failed for {MODEL_PATH}: {e}")
            raise HTTPException(
                status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
                detail=f"Model unavailable: {e}",
            )
    return _cache[MODEL_PATH]


def classify(classifier: TrainedClassifier, texts: List[str]) -> List[Dict]:
    labels = classifier.predict_texts(texts)
    probabilities: Optional[List[List[float]]] = None
    if classifier.has_probabilities:
        probabilities = classifier.predict_proba_tokens([prepare_text(t) for t in texts]).tolist()
    results = []
    for i, (text, label) in enumerate(zip(texts, labels)):
        item = {"text": text, "label": label.text}
        if probabilities is not None:
            item["probabilities"] = {c.text: p for c, p in zip(Label, probabilities[i])}
        results.append(item)
    return results


# --- Tool Definitions ---

@mcp.tool()
async def classify_emotion(text: str) -> Dict:
    """Classify a tweet-sized text as positive, negative or neutral."""
    try:
        return classify(get_classifier(), [text])[0]
    except HTTPException as e:
        return {"error": e.detail}


@mcp.tool()
async def describe_model() -> Dict:
    """Describe the model currently being served."""
    try:
        return get_classifier().describe()
    except HTTPException as e:
        return {"error": e.detail}


# --- API Endpoints & Server Integration ---

app = FastAPI(title="EmoForge Emotion Classifier")


@app.get("/health")
async def health_check():
    return {
        "status": "EmoForge classifier",
        "model_path": MODEL_PATH,
        "model_loaded": MODEL_PATH in _cache,
        "mcp_endpoint": "/mcp/sse",
    }


class PredictRequest(pydantic.BaseModel):
    texts: List[str] = pydantic.Field(min_length=1)


@app.get("/model", dependencies=[Depends(verify_api_key)])
async def model_info():
    return get_classifier().describe()


@app.post("/predict", dependencies=[Depends(verify_api_key)])
async def predict(req: PredictRequest):
    if len(req.texts) > MAX_BATCH:
        raise HTTPException(status_code=400, detail=f"At most {MAX_BATCH} texts per request")
    classifier = get_classifier()
    try:
        return {"kind": classifier.kind.value, "results": classify(classifier, req.texts)}
    except EmoForgeError as e:
        raise HTTPException(status_code=400, detail=str(e))


# Mount FastMCP server
# This exposes the MCP tools at /mcp/sse and /mcp/messages
try:
    # The MCP sub-app gets the same bearer-token dependency as the REST routes.
    mcp_api_wrapper = FastAPI(dependencies=[Depends(verify_api_key)])

    mcp_app = mcp.http_app(transport="sse")
    mcp_api_wrapper.mount("/", mcp_app)

    app.mount("/mcp", mcp_api_wrapper)
    logger.info("Mounted FastMCP (SSE) at /mcp [Secured with API Key]")
except Exception as e:
    logger.error(f"Failed to mount FastMCP: {e}")


if __name__ == "__main__":
    import uvicorn
    print("Starting EmoForge classifier service (FastAPI + FastMCP)...")
    uvicorn.run(app, host="0.0.0.0", port=8000)
